// Selection state for one task. The validity rules mirror the server's, so
// the submit control only fires requests the service would accept.

import type { Label, ResponseBody, Task } from "./types";

export class Draft {
  readonly labels = new Map<string, Label>();
  best: string | null = null;
  secondBest: string | null = null;
  cursor = 0;

  constructor(readonly task: Task) {}

  ids(): string[] {
    return this.task.endings.map((e) => e.ending_id);
  }

  cursorId(): string {
    return this.task.endings[this.cursor].ending_id;
  }

  setCursor(index: number) {
    if (index >= 0 && index < this.task.endings.length) this.cursor = index;
  }

  label(id: string, label: Label) {
    this.labels.set(id, label);
  }

  // Rules already violated by explicit choices. Shown live in the UI.
  conflicts(): Record<string, string> {
    const out: Record<string, string> = {};
    if (this.best !== null && this.best === this.secondBest) {
      out.second_best = "best and second best must differ";
    }
    if (this.best !== null && this.labels.get(this.best) === "gibberish") {
      out.best = "best cannot be labeled gibberish";
    }
    if (
      this.secondBest !== null &&
      this.secondBest !== this.best &&
      this.labels.get(this.secondBest) === "gibberish"
    ) {
      out.second_best = "second best cannot be labeled gibberish";
    }
    return out;
  }

  // Everything that still blocks submission, keyed like the server's 422
  // bodies: labels / best / second_best.
  problems(): Record<string, string> {
    const out: Record<string, string> = {};
    const missing = this.ids().filter((id) => !this.labels.has(id));
    if (missing.length > 0) out.labels = `${missing.length} ending(s) still need a label`;
    if (this.best === null) out.best = "mark one ending as best";
    if (this.secondBest === null) out.second_best = "mark one ending as second best";
    return { ...out, ...this.conflicts() };
  }

  canSubmit(): boolean {
    return Object.keys(this.problems()).length === 0;
  }

  body(annotatorId: string): ResponseBody {
    const labels: Record<string, Label> = {};
    for (const [id, label] of this.labels) labels[id] = label;
    return {
      annotator_id: annotatorId,
      labels,
      best: this.best ?? "",
      second_best: this.secondBest ?? "",
    };
  }
}
