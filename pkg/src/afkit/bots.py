"""Scripted annotators for driving the validation queue without humans.

A bot answers from the same client view a browser would get, plus an oracle
lookup of each context's true ending text. The oracle stands in for a
human's ability to recognize what actually happened; the profile rates say
how often that recognition wins out, mirroring observed annotator behavior
at an adjustable fidelity.
"""

from __future__ import annotations

from dataclasses import dataclass

from .seeds import rng_for


@dataclass(frozen=True)
class BotProfile:
    p_found_best: float = 0.75
    p_found_second: float = 0.15
    p_gibberish: float = 0.08
    p_generated_likely: float = 0.25

    def __post_init__(self):
        probs = (self.p_found_best, self.p_found_second, self.p_gibberish,
                 self.p_generated_likely)
        if any(not (0.0 <= p <= 1.0) for p in probs):
            raise ValueError("profile probabilities must be in [0, 1]")
        if self.p_found_best + self.p_found_second > 1.0:
            raise ValueError("p_found_best + p_found_second must not exceed 1")


def context_id_of(task_id: str) -> str:
    """Task ids are "<context_id>" or "<context_id>-r<round>"."""
    head, sep, tail = task_id.rpartition("-r")
    if sep and tail.isdigit():
        return head
    return task_id


class ScriptedAnnotator:
    """Deterministic annotator: one seeded draw per (annotator, task).

    The response always satisfies the submission invariants: every ending
    labeled, best != second_best, neither pick labeled gibberish.
    """

    def __init__(self, annotator_id: str, found_text_by_context: dict,
                 profile: BotProfile = BotProfile(), seed=0):
        self.annotator_id = annotator_id
        self.found_text_by_context = found_text_by_context
        self.profile = profile
        self.seed = seed

    def respond(self, view: dict) -> dict:
        task_id = view["task_id"]
        found_text = self.found_text_by_context[context_id_of(task_id)]
        rng = rng_for(self.seed, "bot", self.annotator_id, task_id)
        prof = self.profile

        found_id = None
        generated = []
        for e in view["endings"]:
            if e["text"] == found_text and found_id is None:
                found_id = e["ending_id"]
            else:
                generated.append(e["ending_id"])
        if found_id is None:
            raise ValueError(f"task {task_id}: no ending matches the found text")

        labels = {}
        for eid in generated:
            if rng.random() < prof.p_gibberish:
                labels[eid] = "gibberish"
            elif rng.random() < prof.p_generated_likely:
                labels[eid] = "likely"
            else:
                labels[eid] = "unlikely"

        u = rng.random()
        if u < prof.p_found_best:
            mode = "best"
        elif u < prof.p_found_best + prof.p_found_second:
            mode = "second"
        else:
            mode = "neither"
        labels[found_id] = "likely" if mode != "neither" else "unlikely"

        def pick_generated(exclude=()):
            # prefer an ending already considered plausible; fall back to
            # relabeling an arbitrary one so the picks stay non-gibberish
            eligible = [e for e in generated
                        if labels[e] != "gibberish" and e not in exclude]
            if not eligible:
                eligible = [e for e in generated if e not in exclude]
            choice = eligible[int(rng.integers(len(eligible)))]
            if labels[choice] == "gibberish":
                labels[choice] = "unlikely"
            return choice

        if mode == "best":
            best = found_id
            second = pick_generated()
        elif mode == "second":
            best = pick_generated()
            labels[best] = "likely"
            second = found_id
        else:
            best = pick_generated()
            labels[best] = "likely"
            second = pick_generated(exclude=(best,))

        return {
            "annotator_id": self.annotator_id,
            "labels": labels,
            "best": best,
            "second_best": second,
        }
