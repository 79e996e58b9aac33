"""Scripted annotator behavior: validity, determinism, calibrated rates."""

import pytest

from afkit.bots import BotProfile, ScriptedAnnotator, context_id_of
from afkit.validation.tasks import AnnotationTask, validate_response


def make_view(context_id="c1", task_id=None, found_text="someone walks to the door"):
    texts = [found_text] + [f"someone gen {i} text" for i in range(5)]
    return {
        "task_id": task_id or f"{context_id}-r0",
        "context": {"s": "a scene .", "n": "someone"},
        "endings": [
            {"ending_id": f"e{i}", "text": t} for i, t in enumerate(texts)
        ],
    }


def task_for_view(view):
    return AnnotationTask(
        task_id=view["task_id"],
        context_id=context_id_of(view["task_id"]),
        s=view["context"]["s"].split(),
        n=view["context"]["n"].split(),
        fold=0,
        endings=[
            {"ending_id": e["ending_id"], "tokens": e["text"].split()}
            for e in view["endings"]
        ],
        provenance={e["ending_id"]: {"kind": "generated"} for e in view["endings"]},
    )


FOUND = {"c1": "someone walks to the door"}


def test_context_id_of():
    assert context_id_of("s0001-r2") == "s0001"
    assert context_id_of("s0001-r0") == "s0001"
    assert context_id_of("s0001") == "s0001"
    assert context_id_of("a-rx") == "a-rx"  # not a round suffix


def test_profile_validation():
    with pytest.raises(ValueError):
        BotProfile(p_found_best=0.9, p_found_second=0.2)
    with pytest.raises(ValueError):
        BotProfile(p_gibberish=-0.1)


def test_response_is_deterministic_per_annotator_and_task():
    bot = ScriptedAnnotator("a1", FOUND, seed=3)
    other = ScriptedAnnotator("a2", FOUND, seed=3)
    view = make_view()
    assert bot.respond(view) == bot.respond(view)
    # across many tasks two annotators cannot agree everywhere
    diffs = sum(
        bot.respond(make_view(task_id=f"c1-r{i}"))
        != other.respond(make_view(task_id=f"c1-r{i}"))
        for i in range(20)
    )
    assert diffs > 0


def test_unknown_found_text_raises():
    bot = ScriptedAnnotator("a1", {"c1": "no such ending"}, seed=0)
    with pytest.raises(ValueError):
        bot.respond(make_view())


def test_every_response_is_valid_under_all_profiles():
    profiles = [
        BotProfile(),
        BotProfile(p_gibberish=1.0),  # forces pick relabeling
        BotProfile(p_found_best=0.0, p_found_second=0.0),  # always neither
        BotProfile(p_found_best=0.0, p_found_second=1.0),
        BotProfile(p_generated_likely=1.0),
    ]
    for p_idx, profile in enumerate(profiles):
        bot = ScriptedAnnotator("a1", FOUND, profile, seed=p_idx)
        for i in range(100):
            view = make_view(task_id=f"c1-r{i}")
            payload = bot.respond(view)
            errors = validate_response(task_for_view(view), payload)
            assert errors == {}, (p_idx, i, errors)


def test_mode_rates_track_profile():
    profile = BotProfile(p_found_best=0.75, p_found_second=0.15)
    bot = ScriptedAnnotator("a1", FOUND, profile, seed=9)
    best = second = 0
    n = 800
    for i in range(n):
        view = make_view(task_id=f"c1-r{i}")
        payload = bot.respond(view)
        found_id = "e0"
        best += payload["best"] == found_id
        second += payload["second_best"] == found_id
    # 3 sigma for binomial(800, .75) is about .046; for .15 about .038
    assert abs(best / n - 0.75) < 0.05
    assert abs(second / n - 0.15) < 0.045


def test_gibberish_rate_on_generated_endings():
    bot = ScriptedAnnotator("a1", FOUND, BotProfile(p_gibberish=0.2), seed=4)
    gib = total = 0
    for i in range(400):
        payload = bot.respond(make_view(task_id=f"c1-r{i}"))
        for eid, label in payload["labels"].items():
            if eid != "e0":
                gib += label == "gibberish"
                total += 1
    # picks get relabeled away from gibberish, so the observed rate sits a
    # little under the raw draw rate
    assert 0.1 < gib / total <= 0.2
