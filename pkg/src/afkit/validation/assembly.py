"""Turn annotated tasks into four-way multiple choice questions.

The rules mirror the data-collection recipe: a found ending ranked in the
annotator's top two becomes a gold with three generated distractors; a
generated best over a found second-best additionally yields a second,
generated-gold question on training folds; too much gibberish or an
outranked found ending routes the task back to reannotation.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

from ..seeds import rng_for
from .tasks import AnnotationResponse, AnnotationTask

# distractor pruning keeps the most unlikely endings first
_LABEL_RANK = {"unlikely": 0, "likely": 1}


@dataclass
class AssembledQuestion:
    question_id: str
    s: list
    n: list
    endings: list  # 4 token lists in shuffled order
    gold_index: int
    origin: str  # "found_gold" | "generated_gold"
    fold: int
    provenance: list  # 4 tags aligned with endings: "found" | "generated:<pool index>"
    fourth_distractor: Optional[list] = None


@dataclass
class Reannotate:
    task_id: str
    flagged: list  # ending ids to replace


@dataclass
class Reject:
    task_id: str
    reason: str


def adjudicate(task: AnnotationTask, responses: Sequence[AnnotationResponse]):
    """Collapse one or more responses into labels plus best/second-best picks.

    Per-ending labels take the majority; ties go to the earliest response
    holding a tied label. Best and second-best always come from the earliest
    response (the designated adjudicator).
    """
    if not responses:
        raise ValueError(f"task {task.task_id} has no responses to adjudicate")
    labels = {}
    for eid in task.ending_ids():
        counts = Counter(r.labels[eid] for r in responses)
        top = max(counts.values())
        tied = {lab for lab, c in counts.items() if c == top}
        for r in responses:
            if r.labels[eid] in tied:
                labels[eid] = r.labels[eid]
                break
    first = responses[0]
    return labels, first.best, first.second_best


def _most_unlikely(task: AnnotationTask, labels: dict, eids: Sequence[str]) -> list:
    """Sort ending ids most-unlikely first; break label ties by generation log-prob."""
    return sorted(
        eids,
        key=lambda e: (
            _LABEL_RANK[labels[e]],
            task.provenance[e]["gen_logprob"],
            e,
        ),
    )


def _question(
    task: AnnotationTask,
    qid: str,
    origin: str,
    gold_eid: str,
    distractor_eids: Sequence[str],
    fourth_eid: Optional[str],
    seed,
) -> AssembledQuestion:
    members = [gold_eid] + list(distractor_eids)
    tags = []
    for eid in members:
        p = task.provenance[eid]
        tags.append("found" if p["kind"] == "found" else f"generated:{p['pool_index']}")
    order = rng_for(seed, "assemble", qid).permutation(len(members))
    endings = [task.tokens_of(members[i]) for i in order]
    provenance = [tags[i] for i in order]
    gold_index = int(next(pos for pos, i in enumerate(order) if i == 0))
    return AssembledQuestion(
        question_id=qid,
        s=list(task.s),
        n=list(task.n),
        endings=endings,
        gold_index=gold_index,
        origin=origin,
        fold=task.fold,
        provenance=provenance,
        fourth_distractor=task.tokens_of(fourth_eid) if fourth_eid else None,
    )


def assemble(
    task: AnnotationTask,
    responses: Sequence[AnnotationResponse],
    seed,
    eval_folds: Sequence[int] = (),
    available_unseen: Optional[int] = None,
):
    """Apply the assembly rules to one annotated task.

    Returns a list of AssembledQuestion (one, or two on training folds when a
    generation beat the found ending into first place), or a Reannotate
    routing, or a Reject when reannotation is known to be impossible
    (available_unseen counts the assignment candidates never yet shown).
    """
    labels, best, second = adjudicate(task, responses)
    found = task.found_ending_id()
    gib = [eid for eid in task.ending_ids() if labels[eid] == "gibberish"]
    found_in_top2 = found in (best, second)

    flagged = []
    if len(task.endings) - len(gib) <= 3:
        flagged.extend(gib)
    if not found_in_top2:
        flagged.extend(eid for eid in (best, second) if eid not in flagged)
    if flagged:
        return _route(task, sorted(flagged), available_unseen)

    gen_ids = [eid for eid in task.ending_ids() if eid != found]
    eligible = [eid for eid in gen_ids if eid != best and labels[eid] != "gibberish"]
    if len(eligible) < 3:
        return _route(task, sorted(gib), available_unseen)

    ranked = _most_unlikely(task, labels, eligible)
    fourth = ranked[3] if len(ranked) > 3 else None
    questions = [
        _question(task, f"{task.task_id}-found", "found_gold",
                  found, ranked[:3], fourth, seed)
    ]

    # a generation the annotators liked better than the found ending becomes
    # its own gold on training folds; its distractors are the same eligible
    # set (the remaining generations, gibberish excluded)
    if best != found and second == found and task.fold not in set(eval_folds):
        questions.append(
            _question(task, f"{task.task_id}-gen", "generated_gold",
                      best, ranked[:3], fourth, seed)
        )
    return questions


def _route(task: AnnotationTask, flagged: list, available_unseen: Optional[int]):
    replace_count = sum(
        1 for eid in flagged if task.provenance[eid]["kind"] == "generated"
    )
    if available_unseen is not None and replace_count > available_unseen:
        return Reject(task.task_id, "assignment has no unseen candidates left")
    return Reannotate(task.task_id, flagged)


# ------------------------------------------------------------------ JSONL IO


def write_assembled_jsonl(questions: Sequence[AssembledQuestion], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for q in sorted(questions, key=lambda x: x.question_id):
            rec = {
                "question_id": q.question_id,
                "s": q.s,
                "n": q.n,
                "endings": q.endings,
                "gold_index": q.gold_index,
                "origin": q.origin,
                "fold": q.fold,
                "provenance": q.provenance,
                "fourth_distractor": q.fourth_distractor,
            }
            f.write(json.dumps(rec, sort_keys=True) + "\n")


def read_assembled_jsonl(path) -> list:
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            rec = json.loads(line)
            out.append(AssembledQuestion(**rec))
    return out
