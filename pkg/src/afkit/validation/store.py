"""Durable state for the annotation service.

Three append-only JSONL logs (tasks, responses, claim/lifecycle events) are
the source of truth; in-memory state is rebuilt by replay on open. Every
write is flushed and fsynced before the caller gets an acknowledgment, and
all mutation happens under one lock, so task claim/submit are linearizable.
"""

from __future__ import annotations

import json
import os
import threading
import time
from pathlib import Path
from typing import Optional

from .agreement import annotator_quality, krippendorff_alpha, pairwise_percent_agreement
from .tasks import AnnotationResponse, AnnotationTask, validate_response

DEFAULT_LEASE_SECONDS = 30 * 60


class ValidationError(Exception):
    """Invalid response payload; carries field-keyed messages."""

    def __init__(self, errors: dict):
        super().__init__("; ".join(f"{k}: {v}" for k, v in sorted(errors.items())))
        self.errors = errors


class StoreConflict(Exception):
    """Claim or submission raced with another client or an expired lease."""


class ValidationStore:
    def __init__(self, root, lease_seconds: float = DEFAULT_LEASE_SECONDS, clock=time.time):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.lease_seconds = lease_seconds
        self._clock = clock
        self._lock = threading.RLock()
        self._tasks: dict = {}
        self._responses: dict = {}
        self._claims: dict = {}  # task_id -> (annotator_id, expires_at)
        self._last_event: dict = {}  # task_id -> event name
        self._replay()

    # ----------------------------------------------------------------- files

    @property
    def tasks_path(self) -> Path:
        return self.root / "tasks.jsonl"

    @property
    def responses_path(self) -> Path:
        return self.root / "responses.jsonl"

    @property
    def claims_path(self) -> Path:
        return self.root / "claims.jsonl"

    def _append(self, path: Path, record: dict) -> None:
        with open(path, "a", encoding="utf-8") as f:
            f.write(json.dumps(record, sort_keys=True) + "\n")
            f.flush()
            os.fsync(f.fileno())

    @staticmethod
    def _read(path: Path):
        if not path.exists():
            return
        with open(path, encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    yield json.loads(line)

    def _replay(self) -> None:
        for rec in self._read(self.tasks_path):
            task = AnnotationTask.from_record(rec)
            task.status = "open"
            self._tasks[task.task_id] = task
        for rec in self._read(self.responses_path):
            resp = AnnotationResponse.from_record(rec)
            self._responses.setdefault(resp.task_id, []).append(resp)
        for rec in self._read(self.claims_path):
            tid = rec["task_id"]
            self._last_event[tid] = rec["event"]
            if rec["event"] == "claim":
                self._claims[tid] = (rec["annotator_id"], rec["expires_at"])
            else:
                self._claims.pop(tid, None)
        for task in self._tasks.values():
            task.status = self._derive_status(task)

    def _derive_status(self, task: AnnotationTask) -> str:
        tid = task.task_id
        if self._last_event.get(tid) == "reannotate":
            return "reannotate"
        if len(self._responses.get(tid, ())) >= task.n_required:
            return "done"
        claim = self._claims.get(tid)
        if claim and claim[1] > self._clock():
            return "claimed"
        return "open"

    # ------------------------------------------------------------ operations

    def add_task(self, task: AnnotationTask) -> None:
        with self._lock:
            if task.task_id in self._tasks:
                raise ValueError(f"duplicate task id {task.task_id}")
            self._append(self.tasks_path, task.to_record())
            task.status = "open"
            self._tasks[task.task_id] = task

    def get_task(self, task_id: str) -> AnnotationTask:
        with self._lock:
            return self._tasks[task_id]

    def claim_next(self, annotator_id: str) -> Optional[AnnotationTask]:
        """Claim the oldest open task this annotator has not already answered."""
        now = self._clock()
        with self._lock:
            for task in self._tasks.values():
                if task.status == "reannotate":
                    continue
                if len(self._responses.get(task.task_id, ())) >= task.n_required:
                    continue
                claim = self._claims.get(task.task_id)
                if claim and claim[1] > now:
                    continue
                if any(
                    r.annotator_id == annotator_id
                    for r in self._responses.get(task.task_id, ())
                ):
                    continue
                expires = now + self.lease_seconds
                self._append(self.claims_path, {
                    "event": "claim",
                    "task_id": task.task_id,
                    "annotator_id": annotator_id,
                    "expires_at": expires,
                })
                self._claims[task.task_id] = (annotator_id, expires)
                self._last_event[task.task_id] = "claim"
                task.status = "claimed"
                return task
            return None

    def submit_response(self, task_id: str, payload: dict) -> AnnotationResponse:
        now = self._clock()
        with self._lock:
            task = self._tasks.get(task_id)
            if task is None:
                raise KeyError(task_id)
            if task.status == "done":
                raise StoreConflict(f"task {task_id} is already done")
            if task.status == "reannotate":
                raise StoreConflict(f"task {task_id} was routed to reannotation")
            claim = self._claims.get(task_id)
            if claim is None or claim[1] <= now:
                raise StoreConflict(f"task {task_id} is not claimed")
            if claim[0] != payload.get("annotator_id"):
                raise StoreConflict(f"task {task_id} is claimed by another annotator")

            errors = validate_response(task, payload)
            if errors:
                raise ValidationError(errors)  # the claim stays in place

            resp = AnnotationResponse(
                task_id=task_id,
                annotator_id=payload["annotator_id"],
                labels=dict(payload["labels"]),
                best=payload["best"],
                second_best=payload["second_best"],
                timestamp=now,
            )
            self._append(self.responses_path, resp.to_record())
            self._responses.setdefault(task_id, []).append(resp)
            done = len(self._responses[task_id]) >= task.n_required
            event = "done" if done else "release"
            self._append(self.claims_path, {"event": event, "task_id": task_id})
            self._claims.pop(task_id, None)
            self._last_event[task_id] = event
            task.status = "done" if done else "open"
            return resp

    def mark_reannotate(self, task_id: str, flagged) -> None:
        with self._lock:
            task = self._tasks[task_id]
            self._append(self.claims_path, {
                "event": "reannotate",
                "task_id": task_id,
                "flagged": sorted(flagged),
            })
            self._claims.pop(task_id, None)
            self._last_event[task_id] = "reannotate"
            task.status = "reannotate"

    # --------------------------------------------------------------- queries

    def responses_for(self, task_id: str) -> list:
        with self._lock:
            return list(self._responses.get(task_id, ()))

    def all_tasks(self) -> list:
        with self._lock:
            return list(self._tasks.values())

    def progress(self) -> dict:
        now = self._clock()
        with self._lock:
            counts = {s: 0 for s in ("open", "claimed", "done", "reannotate")}
            for task in self._tasks.values():
                status = task.status
                if status == "claimed":
                    claim = self._claims.get(task.task_id)
                    if claim is None or claim[1] <= now:
                        status = "open"
                counts[status] += 1
            counts["total"] = len(self._tasks)
            counts["responses"] = sum(len(v) for v in self._responses.values())
            return counts

    def metrics(self) -> dict:
        with self._lock:
            items: dict = {}
            for tid, resps in self._responses.items():
                if len(resps) < 2:
                    continue
                task = self._tasks[tid]
                for eid in task.ending_ids():
                    items[(tid, eid)] = {r.annotator_id: r.labels[eid] for r in resps}
            alpha = ppa = None
            if items:
                alpha = krippendorff_alpha(items)
                ppa = pairwise_percent_agreement(items)

            history: dict = {}
            for tid, resps in self._responses.items():
                found = self._tasks[tid].found_ending_id()
                for r in resps:
                    hit = found in (r.best, r.second_best)
                    history.setdefault(r.annotator_id, []).append(hit)
            annotators = {}
            for aid in sorted(history):
                status, acc = annotator_quality(history[aid])
                annotators[aid] = {
                    "status": status,
                    "accuracy": acc,
                    "count": len(history[aid]),
                }
            return {"alpha": alpha, "ppa": ppa, "annotators": annotators}
