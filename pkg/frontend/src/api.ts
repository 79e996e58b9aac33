// Typed client for the annotation service. Nothing but the documented JSON
// endpoints is used; status codes are mapped to values the app can act on.

import type { Metrics, Progress, ResponseBody, SubmitResult, Task } from "./types";

export class NetworkError extends Error {}

export interface Api {
  fetchNext(annotator: string): Promise<Task | null>;
  submit(taskId: string, body: ResponseBody): Promise<SubmitResult>;
  progress(): Promise<Progress>;
  metrics(): Promise<Metrics>;
}

export class ApiClient implements Api {
  constructor(readonly base: string = "") {}

  // Claims the next open task for this annotator; null when the queue is
  // drained (204). Network and unexpected statuses throw NetworkError so the
  // caller can show a retry screen.
  async fetchNext(annotator: string): Promise<Task | null> {
    let res: Response;
    try {
      res = await fetch(`${this.base}/api/tasks/next?annotator=${encodeURIComponent(annotator)}`);
    } catch (err) {
      throw new NetworkError(String(err));
    }
    if (res.status === 204) return null;
    if (!res.ok) throw new NetworkError(`claim failed with status ${res.status}`);
    return (await res.json()) as Task;
  }

  async submit(taskId: string, body: ResponseBody): Promise<SubmitResult> {
    let res: Response;
    try {
      res = await fetch(`${this.base}/api/tasks/${encodeURIComponent(taskId)}/response`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(body),
      });
    } catch (err) {
      return { kind: "network", detail: String(err) };
    }
    if (res.ok) return { kind: "ok" };
    if (res.status === 422) {
      const data = await res.json().catch(() => ({}));
      return { kind: "invalid", errors: data.errors ?? {} };
    }
    if (res.status === 409) {
      const data = await res.json().catch(() => ({}));
      return { kind: "conflict", detail: data.detail ?? "task already taken" };
    }
    const text = await res.text().catch(() => "");
    return { kind: "error", detail: `status ${res.status}: ${text}` };
  }

  async progress(): Promise<Progress> {
    const res = await fetch(`${this.base}/api/progress`);
    if (!res.ok) throw new NetworkError(`progress failed with status ${res.status}`);
    return (await res.json()) as Progress;
  }

  async metrics(): Promise<Metrics> {
    const res = await fetch(`${this.base}/api/metrics`);
    if (!res.ok) throw new NetworkError(`metrics failed with status ${res.status}`);
    return (await res.json()) as Metrics;
  }
}
