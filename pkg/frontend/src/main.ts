import { ApiClient } from "./api";
import { AnnotatorApp } from "./app";
import "./styles.css";

const params = new URLSearchParams(window.location.search);
const annotator = params.get("annotator") ?? "";
const root = document.getElementById("app") as HTMLElement;

if (annotator === "") {
  // a plain GET form, so submitting reloads the page with ?annotator=...
  root.innerHTML = `
    <header><h1>caption endings</h1></header>
    <form class="who" method="get">
      <label>annotator id <input name="annotator" autofocus required></label>
      <button>start</button>
    </form>`;
} else {
  const app = new AnnotatorApp(root, new ApiClient(""), {
    annotatorId: annotator,
    instructions: params.get("instructions") ?? undefined,
  });
  void app.start();
}
