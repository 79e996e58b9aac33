// Wire types for the annotation service JSON API.

export type Label = "likely" | "unlikely" | "gibberish";

export const LABELS: Label[] = ["likely", "unlikely", "gibberish"];

export interface Ending {
  ending_id: string;
  text: string;
}

export interface Task {
  task_id: string;
  context: { s: string; n: string };
  endings: Ending[];
}

export interface ResponseBody {
  annotator_id: string;
  labels: Record<string, Label>;
  best: string;
  second_best: string;
}

export interface Progress {
  open: number;
  claimed: number;
  done: number;
  reannotate: number;
  total: number;
  responses: number;
}

export interface AnnotatorStanding {
  status: string;
  accuracy: number | null;
  count: number;
}

export interface Metrics {
  alpha: number | null;
  ppa: number | null;
  annotators: Record<string, AnnotatorStanding>;
}

export type SubmitResult =
  | { kind: "ok" }
  | { kind: "invalid"; errors: Record<string, string> }
  | { kind: "conflict"; detail: string }
  | { kind: "network"; detail: string }
  | { kind: "error"; detail: string };
