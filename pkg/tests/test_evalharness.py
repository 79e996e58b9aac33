"""Baseline correctness: oracles, planted signals, and permutation nulls."""

from __future__ import annotations

import json

import numpy as np
import pytest

from afkit.evalharness import (
    bag_ngram_unary,
    dual_bow_bilinear,
    dual_bow_loss_grad,
    evaluate,
    format_report,
    hash_ngrams,
    length_baseline,
    questions_from_assignment,
    random_baseline,
    stats_report,
    write_report,
)
from afkit.seeds import rng_for
from afkit.validation.assembly import AssembledQuestion


def make_q(qid, endings, gold, s=("the", "dog"), n=("it",), origin="found_gold", fold=0):
    return AssembledQuestion(
        question_id=qid,
        s=list(s),
        n=list(n),
        endings=[list(e) for e in endings],
        gold_index=gold,
        origin=origin,
        fold=fold,
        provenance=["found" if i == gold else f"generated:{i}" for i in range(len(endings))],
    )


def random_questions(n, rng, vocab=("u", "v", "w", "x", "y"), min_len=2, max_len=6):
    qs = []
    for i in range(n):
        endings = [
            [vocab[rng.integers(len(vocab))] for _ in range(rng.integers(min_len, max_len))]
            for _ in range(4)
        ]
        qs.append(make_q(f"q{i}", endings, int(rng.integers(4))))
    return qs


# ------------------------------------------------------------------- random


def test_random_baseline_chance_and_determinism():
    rng = rng_for("rb")
    qs = random_questions(10000, rng)
    acc = random_baseline(qs, seed=3)
    sigma = (0.25 * 0.75 / len(qs)) ** 0.5
    assert abs(acc - 0.25) < 3 * sigma
    assert random_baseline(qs, seed=3) == acc
    assert random_baseline(qs, seed=4) != acc


def test_random_baseline_degenerate_single_ending():
    qs = [make_q(f"q{i}", [["a"]], 0) for i in range(10)]
    assert random_baseline(qs, seed=0) == 1.0


# ------------------------------------------------------------------- length


def test_length_baseline_gold_shortest():
    qs = [make_q(f"q{i}", [["a"], ["b", "b"], ["c", "c"], ["d", "d", "d"]], 0)
          for i in range(5)]
    assert length_baseline(qs) == 1.0


def test_length_baseline_tie_picks_lowest_index():
    q0 = make_q("q0", [["a", "a"], ["b", "b"], ["c", "c"], ["d", "d"]], 0)
    q1 = make_q("q1", [["a", "a"], ["b", "b"], ["c", "c"], ["d", "d"]], 2)
    assert length_baseline([q0]) == 1.0
    assert length_baseline([q1]) == 0.0
    # a strictly shorter ending beats an equally short earlier one
    q2 = make_q("q2", [["a", "a"], ["b"], ["c", "c"], ["d"]], 1)
    assert length_baseline([q2]) == 1.0


# --------------------------------------------------------------- bag n-gram


def test_hash_ngrams_counts():
    counts = hash_ngrams(["a", "b", "a"], ngram_max=2)
    # 3 unigrams (one repeated) + 2 bigrams
    assert sum(counts.values()) == 5
    assert counts[list(hash_ngrams(["a"]).keys())[0]] == 2
    assert hash_ngrams(["a", "b"]) == hash_ngrams(["a", "b"])  # stable buckets


def test_bag_ngram_learns_planted_token():
    rng = rng_for("bag-planted")
    def build(n, tag):
        qs = []
        for i in range(n):
            gold = int(rng.integers(4))
            endings = []
            for j in range(4):
                e = [f"f{rng.integers(30)}" for _ in range(4)]
                if j == gold:
                    e[rng.integers(4)] = "zzmark"
                endings.append(e)
            qs.append(make_q(f"{tag}{i}", endings, gold))
        return qs
    train, eval_set = build(300, "t"), build(200, "e")
    acc = bag_ngram_unary(train, eval_set, epochs=3, seed=0)
    assert acc >= 0.95


def test_bag_ngram_permutation_null():
    rng = rng_for("bag-null")
    train = random_questions(300, rng)
    eval_set = random_questions(400, rng)
    acc = bag_ngram_unary(train, eval_set, epochs=3, seed=0)
    sigma = (0.25 * 0.75 / len(eval_set)) ** 0.5
    assert abs(acc - 0.25) < 3 * sigma
    assert bag_ngram_unary(train, eval_set, epochs=3, seed=0) == acc  # deterministic


# ----------------------------------------------------------------- dual BoW


def test_dual_bow_zero_epochs_is_uniform():
    rng = rng_for("db0")
    qs = random_questions(400, rng)
    # W stays zero: scores are uniform, argmax falls to index 0
    acc = dual_bow_bilinear(qs, qs, epochs=0, seed=0)
    expected = sum(q.gold_index == 0 for q in qs) / len(qs)
    assert acc == pytest.approx(expected, abs=1e-12)


def test_dual_bow_gradient_matches_finite_differences():
    rng = rng_for("db-fd")
    dim = 8
    W = rng.normal(size=(dim, dim))
    c = rng.normal(size=dim)
    V = rng.normal(size=(4, dim))
    _, grad = dual_bow_loss_grad(W, c, V, gold=2)
    step = 1e-5
    checked = 0
    for i in range(dim):
        for j in range(dim):
            Wp, Wm = W.copy(), W.copy()
            Wp[i, j] += step
            Wm[i, j] -= step
            lp, _ = dual_bow_loss_grad(Wp, c, V, 2)
            lm, _ = dual_bow_loss_grad(Wm, c, V, 2)
            fd = (lp - lm) / (2 * step)
            denom = max(abs(fd), abs(grad[i, j]), 1e-8)
            assert abs(fd - grad[i, j]) / denom <= 1e-3
            checked += 1
    assert checked >= 50


def test_dual_bow_learns_planted_cooccurrence():
    rng = rng_for("db-planted")
    topics = [f"topic{i}" for i in range(4)]
    def build(n, tag):
        qs = []
        for i in range(n):
            t = int(rng.integers(4))
            gold = int(rng.integers(4))
            endings = []
            others = [x for x in range(4) if x != t]
            for j in range(4):
                tok = topics[t] if j == gold else topics[others[rng.integers(3)]]
                endings.append([tok, f"f{rng.integers(10)}"])
            qs.append(make_q(f"{tag}{i}", endings, gold,
                             s=(topics[t], "scene"), n=("someone",)))
        return qs
    train, eval_set = build(400, "t"), build(200, "e")
    acc = dual_bow_bilinear(train, eval_set, embed_dim=16, epochs=15, lr=0.5, seed=1)
    assert acc >= 0.9


# -------------------------------------------------------------------- stats


def test_stats_report_empty_and_shared_context():
    empty = stats_report([])
    assert all(v == 0 for v in empty.values())
    q1 = make_q("a", [["x"], ["y"], ["z"], ["w"]], 0, s=("same",), n=("ctx",))
    q2 = make_q("b", [["x"], ["y"], ["z"], ["q"]], 1, s=("same",), n=("ctx",),
                origin="generated_gold")
    st = stats_report([q1, q2])
    assert st["unique_contexts"] == 1
    assert st["total_questions"] == 2
    assert st["found_gold"] == 1 and st["generated_gold"] == 1


def test_stats_report_matches_independent_recount():
    rng = rng_for("stats-fuzz")
    qs = random_questions(50, rng)
    st = stats_report(qs)
    contexts, endings, vocab = set(), set(), set()
    for q in qs:
        contexts.add((tuple(q.s), tuple(q.n)))
        vocab |= set(q.s) | set(q.n)
        for e in q.endings:
            endings.add(tuple(e))
            vocab |= set(e)
    assert st["unique_contexts"] == len(contexts)
    assert st["unique_endings"] == len(endings)
    assert st["vocab_size"] == len(vocab)
    assert st["total_questions"] == 50


# ------------------------------------------------------------------- report


def test_evaluate_and_report_files(tmp_path):
    rng = rng_for("report")
    train = random_questions(40, rng)
    val = random_questions(20, rng)
    report = evaluate(train, {"val": val}, seed=0, bag_epochs=1, dual_epochs=1)
    assert set(report["baselines"]["val"]) == {"random", "length", "bag_ngram", "dual_bow"}
    for entry in report["baselines"]["val"].values():
        assert 0.0 <= entry["accuracy"] <= 1.0
        assert entry["n_questions"] == 20
    text = format_report(report)
    assert "val" in text and "bag_ngram" in text

    jp, tp, cp = tmp_path / "r.json", tmp_path / "r.txt", tmp_path / "r.csv"
    write_report(report, jp, tp, cp)
    assert json.loads(jp.read_text())["stats"]["total_questions"] == 60
    assert tp.read_text() == text
    lines = cp.read_text().strip().splitlines()
    assert lines[0] == "baseline,epoch,train_loss"
    assert len(lines) == 3  # one epoch each for two traced baselines


def test_questions_from_assignment_mechanical():
    from afkit.corpus import Context
    from afkit.lm import Candidate, CandidatePool

    contexts = [
        Context(f"c{i}", ["s", "tok"], ["n"], ["found", f"v{i}"], fold=i % 3)
        for i in range(6)
    ]
    pools = [
        CandidatePool(f"c{i}", [Candidate(["g", f"{i}-{j}"], -float(j)) for j in range(8)])
        for i in range(6)
    ]
    assignment = {f"c{i}": [0, 2, 4, 6] for i in range(6)}
    qs = questions_from_assignment(contexts, pools, assignment, seed=5)
    assert len(qs) == 6
    again = questions_from_assignment(contexts, pools, assignment, seed=5)
    assert qs == again
    for q, ctx in zip(qs, contexts):
        assert len(q.endings) == 4
        assert q.endings[q.gold_index] == ctx.v_found
        assert q.provenance[q.gold_index] == "found"
        for i, tag in enumerate(q.provenance):
            if i != q.gold_index:
                assert int(tag.split(":")[1]) in assignment[ctx.context_id]
        assert q.fold == ctx.fold
