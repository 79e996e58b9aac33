"""Annotation task construction, response validation, and reannotation.

A task shows one found ending plus five generated endings drawn uniformly
from the context's current assignment, in a seeded-shuffled display order.
Provenance (which ending is the found one, and each generation's pool index)
stays server-side and is stripped from the client view.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

from ..seeds import rng_for

LABELS = ("likely", "unlikely", "gibberish")
STATUSES = ("open", "claimed", "done", "reannotate")
ENDINGS_PER_TASK = 6
GENERATED_PER_TASK = 5


@dataclass
class AnnotationTask:
    task_id: str
    context_id: str
    s: list
    n: list
    fold: int
    endings: list  # display order: [{"ending_id": str, "tokens": [...]}] x 6
    provenance: dict  # ending_id -> {"kind": "found"} | {"kind": "generated", ...}
    status: str = "open"
    round: int = 0
    n_required: int = 1
    shown_pool_indices: list = field(default_factory=list)

    def found_ending_id(self) -> str:
        for eid, p in self.provenance.items():
            if p["kind"] == "found":
                return eid
        raise ValueError(f"task {self.task_id} has no found ending")

    def ending_ids(self) -> list:
        return [e["ending_id"] for e in self.endings]

    def tokens_of(self, ending_id: str) -> list:
        for e in self.endings:
            if e["ending_id"] == ending_id:
                return e["tokens"]
        raise KeyError(ending_id)

    def client_view(self) -> dict:
        """What the annotator sees: no provenance, no fold, no pool indices."""
        return {
            "task_id": self.task_id,
            "context": {
                "s": " ".join(self.s),
                "n": " ".join(self.n),
            },
            "endings": [
                {"ending_id": e["ending_id"], "text": " ".join(e["tokens"])}
                for e in self.endings
            ],
        }

    def to_record(self) -> dict:
        return {
            "task_id": self.task_id,
            "context_id": self.context_id,
            "s": self.s,
            "n": self.n,
            "fold": self.fold,
            "endings": self.endings,
            "provenance": self.provenance,
            "status": self.status,
            "round": self.round,
            "n_required": self.n_required,
            "shown_pool_indices": self.shown_pool_indices,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "AnnotationTask":
        return cls(**rec)


@dataclass
class AnnotationResponse:
    task_id: str
    annotator_id: str
    labels: dict  # ending_id -> label
    best: str
    second_best: str
    timestamp: float = 0.0

    def to_record(self) -> dict:
        return {
            "task_id": self.task_id,
            "annotator_id": self.annotator_id,
            "labels": self.labels,
            "best": self.best,
            "second_best": self.second_best,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "AnnotationResponse":
        return cls(**rec)


def validate_response(task: AnnotationTask, payload: dict) -> dict:
    """Field-keyed error messages for an incoming response; empty means valid."""
    errors: dict = {}
    annotator = payload.get("annotator_id")
    if not isinstance(annotator, str) or not annotator:
        errors["annotator_id"] = "annotator_id must be a non-empty string"

    ids = set(task.ending_ids())
    labels = payload.get("labels")
    if not isinstance(labels, dict):
        errors["labels"] = "labels must map every ending_id to a label"
        labels = {}
    else:
        missing = sorted(ids - set(labels))
        extra = sorted(set(labels) - ids)
        if missing:
            errors["labels"] = f"missing labels for endings: {', '.join(missing)}"
        elif extra:
            errors["labels"] = f"unknown ending ids: {', '.join(extra)}"
        else:
            bad = sorted(e for e, lab in labels.items() if lab not in LABELS)
            if bad:
                errors["labels"] = (
                    f"labels must be one of {'/'.join(LABELS)}; bad: {', '.join(bad)}"
                )

    best = payload.get("best")
    second = payload.get("second_best")
    if best not in ids:
        errors["best"] = "best must be one of the task's ending ids"
    if second not in ids:
        errors["second_best"] = "second_best must be one of the task's ending ids"
    if "best" not in errors and "second_best" not in errors:
        if best == second:
            errors["second_best"] = "best and second_best must differ"
        else:
            if labels.get(best) == "gibberish":
                errors["best"] = "best cannot be labeled gibberish"
            if labels.get(second) == "gibberish":
                errors["second_best"] = "second_best cannot be labeled gibberish"
    return errors


def _build_task(
    context,
    pool,
    chosen: Sequence[int],
    seed,
    round: int,
    n_required: int,
    prior_shown: Sequence[int],
) -> AnnotationTask:
    rng = rng_for(seed, "shuffle", context.context_id, round)
    entries = [("found", list(context.v_found), None, None)]
    for j in chosen:
        cand = pool.candidates[j]
        entries.append(("generated", list(cand.tokens), int(j), float(cand.gen_logprob)))
    order = rng.permutation(len(entries))

    endings = []
    provenance = {}
    for pos, idx in enumerate(order):
        kind, tokens, pool_index, lp = entries[idx]
        eid = f"e{pos}"
        endings.append({"ending_id": eid, "tokens": tokens})
        if kind == "found":
            provenance[eid] = {"kind": "found"}
        else:
            provenance[eid] = {
                "kind": "generated",
                "pool_index": pool_index,
                "gen_logprob": lp,
            }
    shown = sorted(set(prior_shown) | {int(j) for j in chosen})
    return AnnotationTask(
        task_id=f"{context.context_id}-r{round}",
        context_id=context.context_id,
        s=list(context.s),
        n=list(context.n),
        fold=context.fold,
        endings=endings,
        provenance=provenance,
        round=round,
        n_required=n_required,
        shown_pool_indices=shown,
    )


def make_task(context, pool, a_i: Sequence[int], seed, n_required: int = 1) -> AnnotationTask:
    """Sample 5 of the assignment's k candidates and shuffle them with the found ending."""
    if len(a_i) < GENERATED_PER_TASK:
        raise ValueError(f"assignment of size {len(a_i)} < {GENERATED_PER_TASK}")
    if len(set(a_i)) != len(a_i):
        raise ValueError("assignment indices must be distinct")
    rng = rng_for(seed, "task", context.context_id)
    chosen = rng.choice(sorted(a_i), size=GENERATED_PER_TASK, replace=False)
    return _build_task(context, pool, [int(j) for j in chosen], seed, 0, n_required, ())


def make_reannotation_task(
    task: AnnotationTask,
    flagged: Sequence[str],
    context,
    pool,
    a_i: Sequence[int],
    seed,
) -> Optional[AnnotationTask]:
    """Replace the flagged generated endings with unseen assignment candidates.

    Only generated endings are replaceable (the found ending is the ground
    truth and always stays). Returns None when the assignment has too few
    unseen candidates left, which callers surface as a rejection.
    """
    flagged_gen = [
        eid for eid in flagged
        if eid in task.provenance and task.provenance[eid]["kind"] == "generated"
    ]
    keep = [
        p["pool_index"]
        for eid, p in task.provenance.items()
        if p["kind"] == "generated" and eid not in flagged_gen
    ]
    unseen = sorted(set(int(j) for j in a_i) - set(task.shown_pool_indices))
    need = GENERATED_PER_TASK - len(keep)
    if len(unseen) < need:
        return None
    rng = rng_for(seed, "reannotate", task.context_id, task.round + 1)
    fresh = rng.choice(unseen, size=need, replace=False)
    chosen = sorted(keep) + [int(j) for j in fresh]
    return _build_task(
        context, pool, chosen, seed, task.round + 1,
        task.n_required, task.shown_pool_indices,
    )
