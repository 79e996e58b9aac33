// One task at a time: claim, label, pick, submit, repeat. The service owns
// all state; the app keeps nothing but the in-progress draft and session
// counters, and it never sees or shows where an ending came from.

import { NetworkError, type Api } from "./api";
import { Draft } from "./draft";
import type { Label, Metrics, Progress, Task } from "./types";

export interface AppOptions {
  annotatorId: string;
  instructions?: string;
}

const DEFAULT_INSTRUCTIONS =
  "You will see the start of a caption for a short video, cut off after the " +
  "first word of its second sentence. Six possible endings follow. First " +
  "classify every ending: likely (could well happen next), unlikely (on " +
  "topic but improbable), or gibberish (not sensible language). Then mark " +
  "the best ending and the second best. Neither pick may be one you marked " +
  "gibberish.";

const LABEL_KEYS: Record<string, Label> = { l: "likely", u: "unlikely", g: "gibberish" };

type Screen = "loading" | "task" | "done" | "error";

function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export class AnnotatorApp {
  private draft: Draft | null = null;
  private screen: Screen = "loading";
  private fieldErrors: Record<string, string> = {};
  private notice = "";
  private errorDetail = "";
  private offerResubmit = false;
  private inflight = false;
  private pending: Promise<void> = Promise.resolve();
  private progress: Progress | null = null;
  private metrics: Metrics | null = null;
  private readonly stats = { answered: 0, conflicts: 0, startedAt: Date.now() };
  private readonly onKey = (ev: KeyboardEvent) => this.handleKey(ev);

  constructor(
    private readonly root: HTMLElement,
    private readonly api: Api,
    private readonly opts: AppOptions,
  ) {
    root.addEventListener("click", (ev) => this.handleClick(ev));
  }

  start(): Promise<void> {
    this.root.ownerDocument.addEventListener("keydown", this.onKey);
    this.pending = this.next();
    return this.pending;
  }

  stop() {
    this.root.ownerDocument.removeEventListener("keydown", this.onKey);
  }

  // Settles when the fetch/submit chain kicked off so far has finished.
  whenIdle(): Promise<void> {
    return this.pending;
  }

  private async refreshStatus() {
    try {
      this.progress = await this.api.progress();
      this.metrics = await this.api.metrics();
    } catch {
      // the status line is best effort; annotating works without it
    }
  }

  private async next(): Promise<void> {
    this.screen = "loading";
    this.draft = null;
    this.fieldErrors = {};
    this.offerResubmit = false;
    this.render();
    await this.refreshStatus();
    let task: Task | null;
    try {
      task = await this.api.fetchNext(this.opts.annotatorId);
    } catch (err) {
      this.screen = "error";
      this.errorDetail = err instanceof NetworkError ? err.message : String(err);
      this.render();
      return;
    }
    if (task === null) {
      this.screen = "done";
      this.render();
      return;
    }
    this.draft = new Draft(task);
    this.screen = "task";
    this.render();
  }

  private async submitFlow(): Promise<void> {
    const draft = this.draft;
    if (draft === null || this.inflight) return;
    const problems = draft.problems();
    if (Object.keys(problems).length > 0) {
      // blocked client side, nothing is sent
      this.fieldErrors = problems;
      this.render();
      return;
    }
    this.inflight = true;
    this.render();
    const result = await this.api.submit(draft.task.task_id, draft.body(this.opts.annotatorId));
    this.inflight = false;
    switch (result.kind) {
      case "ok":
        this.stats.answered += 1;
        this.notice = "";
        await this.next();
        return;
      case "invalid":
        // the draft is untouched; show the server's field messages
        this.fieldErrors = result.errors;
        this.render();
        return;
      case "conflict":
        this.stats.conflicts += 1;
        this.notice = "that task went to someone else; here is the next one";
        await this.next();
        return;
      case "network":
        this.offerResubmit = true;
        this.notice = "connection lost; your answers are kept, resubmit when ready";
        this.render();
        return;
      case "error":
        this.notice = `the service rejected the request (${result.detail}); fetching the next task`;
        await this.next();
        return;
    }
  }

  private handleKey(ev: KeyboardEvent) {
    const target = ev.target as HTMLElement | null;
    if (target && (target.tagName === "INPUT" || target.tagName === "TEXTAREA")) return;
    if (this.screen !== "task" || this.draft === null) return;
    const draft = this.draft;
    const key = ev.key.toLowerCase();
    if (ev.key >= "1" && ev.key <= "9") {
      draft.setCursor(Number(ev.key) - 1);
    } else if (key in LABEL_KEYS) {
      this.fieldErrors = {};
      draft.label(draft.cursorId(), LABEL_KEYS[key]);
      this.advanceCursor(draft);
    } else if (key === "b") {
      this.fieldErrors = {};
      draft.best = draft.cursorId();
    } else if (key === "s") {
      this.fieldErrors = {};
      draft.secondBest = draft.cursorId();
    } else if (ev.key === "Enter") {
      this.pending = this.submitFlow();
      ev.preventDefault();
      return;
    } else {
      return;
    }
    this.render();
    ev.preventDefault();
  }

  // After labeling, jump to the next ending that still has no label.
  private advanceCursor(draft: Draft) {
    const n = draft.task.endings.length;
    for (let step = 1; step <= n; step++) {
      const idx = (draft.cursor + step) % n;
      if (!draft.labels.has(draft.task.endings[idx].ending_id)) {
        draft.cursor = idx;
        return;
      }
    }
  }

  private handleClick(ev: MouseEvent) {
    const el = (ev.target as HTMLElement | null)?.closest<HTMLElement>("[data-action]");
    if (!el) return;
    const action = el.dataset.action ?? "";
    if (action === "submit" || action === "resubmit") {
      this.pending = this.submitFlow();
      return;
    }
    if (action === "retry") {
      this.pending = this.next();
      return;
    }
    const draft = this.draft;
    if (draft === null) return;
    const id = el.dataset.ending ?? "";
    const index = draft.ids().indexOf(id);
    if (index < 0) return;
    draft.setCursor(index);
    this.fieldErrors = {};
    if (action === "label") draft.label(id, el.dataset.label as Label);
    else if (action === "best") draft.best = id;
    else if (action === "second") draft.secondBest = id;
    this.render();
  }

  private render() {
    switch (this.screen) {
      case "loading":
        this.root.innerHTML = `${this.header()}<p class="loading">fetching the next task ...</p>`;
        return;
      case "error":
        this.root.innerHTML = `${this.header()}
          <div class="error-screen">
            <p>could not reach the service: ${esc(this.errorDetail)}</p>
            <button data-action="retry">retry</button>
          </div>`;
        return;
      case "done":
        this.root.innerHTML = `${this.header()}${this.doneScreen()}`;
        return;
      case "task":
        this.root.innerHTML = `${this.header()}${this.taskScreen()}`;
        return;
    }
  }

  private header(): string {
    const parts = [`${this.stats.answered} answered this session`];
    if (this.progress !== null) {
      parts.push(`queue: ${this.progress.open} open, ${this.progress.done} done of ${this.progress.total}`);
    }
    const me = this.metrics?.annotators?.[this.opts.annotatorId];
    if (me) parts.push(`standing: ${me.status}`);
    return `<header><h1>caption endings</h1><p class="status">${esc(parts.join("  |  "))}</p></header>`;
  }

  private doneScreen(): string {
    const minutes = ((Date.now() - this.stats.startedAt) / 60000).toFixed(1);
    const skipped = this.stats.conflicts > 0 ? `, ${this.stats.conflicts} went to someone else` : "";
    const queue =
      this.progress !== null
        ? `<p>queue: ${this.progress.done} of ${this.progress.total} tasks done, ${this.progress.responses} responses recorded</p>`
        : "";
    return `<div class="done">
      <h2>no more tasks</h2>
      <p>you answered ${this.stats.answered} task(s) in ${minutes} min${esc(skipped)}</p>
      ${queue}
    </div>`;
  }

  private taskScreen(): string {
    const draft = this.draft!;
    const task = draft.task;
    const shown: Record<string, string> = { ...draft.conflicts(), ...this.fieldErrors };
    const rows = task.endings.map((ending, i) => {
      const id = ending.ending_id;
      const classes = ["ending"];
      if (i === draft.cursor) classes.push("selected");
      if (this.rowHasError(shown, id)) classes.push("err");
      const labelButtons = (["likely", "unlikely", "gibberish"] as Label[])
        .map((lab) => {
          const on = draft.labels.get(id) === lab;
          return `<button data-action="label" data-ending="${esc(id)}" data-label="${lab}"
                          class="${on ? "on" : ""}" aria-pressed="${on}">${lab}</button>`;
        })
        .join("");
      return `<li class="${classes.join(" ")}" data-id="${esc(id)}">
        <span class="key">${i + 1}</span>
        <span class="text">${esc(ending.text)}</span>
        <span class="labels">${labelButtons}</span>
        <span class="picks">
          <button data-action="best" data-ending="${esc(id)}"
                  class="${draft.best === id ? "on" : ""}" aria-pressed="${draft.best === id}">best</button>
          <button data-action="second" data-ending="${esc(id)}"
                  class="${draft.secondBest === id ? "on" : ""}" aria-pressed="${draft.secondBest === id}">second</button>
        </span>
      </li>`;
    });
    const errors = Object.entries(shown)
      .map(([field, msg]) => `<p class="field-error" data-field="${esc(field)}">${esc(msg)}</p>`)
      .join("");
    const canGo = draft.canSubmit() && !this.inflight;
    return `
      <details class="instructions" open><summary>instructions</summary>
        <p>${esc(this.opts.instructions ?? DEFAULT_INSTRUCTIONS)}</p>
      </details>
      ${this.notice !== "" ? `<p class="notice">${esc(this.notice)}</p>` : ""}
      <p class="context">${esc(task.context.s)} <strong class="stem">${esc(task.context.n)} ...</strong></p>
      <ol class="endings">${rows.join("")}</ol>
      <div class="errors">${errors}</div>
      <footer>
        <button class="submit" data-action="${this.offerResubmit ? "resubmit" : "submit"}"
                ${canGo ? "" : "disabled"}>${this.offerResubmit ? "resubmit" : "submit"}</button>
        <p class="hint">keys: 1-6 select, L likely, U unlikely, G gibberish, B best, S second best, Enter submit</p>
      </footer>`;
  }

  private rowHasError(shown: Record<string, string>, id: string): boolean {
    const draft = this.draft!;
    if ("best" in shown && draft.best === id) return true;
    if ("second_best" in shown && draft.secondBest === id) return true;
    if ("labels" in shown && !draft.labels.has(id)) return true;
    return false;
  }
}
