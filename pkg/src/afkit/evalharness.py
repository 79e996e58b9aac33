"""Shallow baselines that measure residual stylistic signal in a dataset.

If a dataset is well constructed, none of these models should beat chance by
much: a random picker, a shortest-ending picker, a unary bag-of-n-grams
classifier over ending tokens only (hashing trick), and a bilinear
context-ending model over frozen random embeddings.
"""

from __future__ import annotations

import json
from collections import Counter
from typing import Dict, Optional, Sequence

import numpy as np

from .seeds import rng_for
from .validation.assembly import AssembledQuestion

N_BUCKETS = 2 ** 18
_FNV_OFFSET = 14695981039346656037
_FNV_PRIME = 1099511628211
_MASK64 = (1 << 64) - 1


def _fnv1a(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def hash_ngrams(tokens: Sequence[str], ngram_max: int = 2, n_buckets: int = N_BUCKETS) -> Counter:
    """Bucketed counts of all 1..ngram_max grams of a token sequence."""
    counts: Counter = Counter()
    for n in range(1, ngram_max + 1):
        for i in range(len(tokens) - n + 1):
            key = "\x1f".join(tokens[i : i + n]).encode("utf-8")
            counts[_fnv1a(key) % n_buckets] += 1
    return counts


def _argmax_first(scores) -> int:
    return int(np.argmax(np.asarray(scores)))


# ------------------------------------------------------------ cheap pickers


def random_baseline(questions: Sequence[AssembledQuestion], seed) -> float:
    if not questions:
        raise ValueError("no questions to evaluate")
    rng = rng_for(seed, "random-baseline")
    hits = sum(
        int(rng.integers(len(q.endings))) == q.gold_index for q in questions
    )
    return hits / len(questions)


def length_baseline(questions: Sequence[AssembledQuestion]) -> float:
    """Always choose the shortest ending; ties go to the lowest index."""
    if not questions:
        raise ValueError("no questions to evaluate")
    hits = 0
    for q in questions:
        pick = min(range(len(q.endings)), key=lambda i: (len(q.endings[i]), i))
        hits += pick == q.gold_index
    return hits / len(questions)


# ------------------------------------------------- unary bag-of-n-grams model


def bag_ngram_unary(
    train: Sequence[AssembledQuestion],
    eval_set: Sequence[AssembledQuestion],
    ngram_max: int = 2,
    epochs: int = 5,
    lr: float = 0.1,
    seed=0,
    n_buckets: int = N_BUCKETS,
    loss_trace: Optional[list] = None,
) -> float:
    """Logistic regression over hashed ending n-grams, one binary example per ending.

    Evaluation picks the ending with the highest positive probability, which
    is the same as the highest linear score.
    """
    if not eval_set:
        raise ValueError("no questions to evaluate")
    examples = []
    for q in train:
        for i, e in enumerate(q.endings):
            examples.append((hash_ngrams(e, ngram_max, n_buckets),
                             1.0 if i == q.gold_index else 0.0))
    w = np.zeros(n_buckets)
    b = 0.0
    rng = rng_for(seed, "bag-ngram")
    for epoch in range(epochs):
        total = 0.0
        for idx in rng.permutation(len(examples)):
            x, y = examples[idx]
            z = b + sum(w[k] * v for k, v in x.items())
            p = 1.0 / (1.0 + np.exp(-z))
            total += -(y * np.log(max(p, 1e-12)) + (1 - y) * np.log(max(1 - p, 1e-12)))
            g = p - y
            for k, v in x.items():
                w[k] -= lr * g * v
            b -= lr * g
        if loss_trace is not None:
            loss_trace.append(total / max(len(examples), 1))

    hits = 0
    for q in eval_set:
        scores = [
            b + sum(w[k] * v for k, v in hash_ngrams(e, ngram_max, n_buckets).items())
            for e in q.endings
        ]
        hits += _argmax_first(scores) == q.gold_index
    return hits / len(eval_set)


# ------------------------------------------------------ bilinear DualBoW model


def _token_embedding(token: str, dim: int, seed) -> np.ndarray:
    return rng_for(seed, "emb", token).normal(0.0, 1.0 / np.sqrt(dim), size=dim)


def _mean_embedding(tokens: Sequence[str], dim: int, seed, cache: dict) -> np.ndarray:
    if not tokens:
        return np.zeros(dim)
    rows = []
    for t in tokens:
        e = cache.get(t)
        if e is None:
            e = _token_embedding(t, dim, seed)
            cache[t] = e
        rows.append(e)
    return np.mean(rows, axis=0)


def dual_bow_loss_grad(W: np.ndarray, c: np.ndarray, V: np.ndarray, gold: int):
    """Softmax cross-entropy of scores c W V_i^T for one question.

    Returns (loss, dL/dW); the embeddings stay frozen so W is the only
    trainable tensor.
    """
    z = V @ (W.T @ c)
    z = z - z.max()
    p = np.exp(z)
    p /= p.sum()
    loss = -float(np.log(max(p[gold], 1e-300)))
    d = p.copy()
    d[gold] -= 1.0
    grad = np.outer(c, d @ V)
    return loss, grad


def dual_bow_bilinear(
    train: Sequence[AssembledQuestion],
    eval_set: Sequence[AssembledQuestion],
    embed_dim: int = 16,
    epochs: int = 10,
    lr: float = 0.5,
    seed=0,
    loss_trace: Optional[list] = None,
) -> float:
    if not eval_set:
        raise ValueError("no questions to evaluate")
    cache: dict = {}

    def encode(q: AssembledQuestion):
        c = _mean_embedding(list(q.s) + list(q.n), embed_dim, seed, cache)
        V = np.stack([
            _mean_embedding(e, embed_dim, seed, cache) for e in q.endings
        ])
        return c, V

    encoded = [(*encode(q), q.gold_index) for q in train]
    W = np.zeros((embed_dim, embed_dim))
    rng = rng_for(seed, "dual-bow")
    for epoch in range(epochs):
        total = 0.0
        for idx in rng.permutation(len(encoded)):
            c, V, gold = encoded[idx]
            loss, grad = dual_bow_loss_grad(W, c, V, gold)
            total += loss
            W -= lr * grad
        if loss_trace is not None:
            loss_trace.append(total / max(len(encoded), 1))

    hits = 0
    for q in eval_set:
        c, V = encode(q)
        hits += _argmax_first(V @ (W.T @ c)) == q.gold_index
    return hits / len(eval_set)


# ----------------------------------------------------------- stats and report


def stats_report(questions: Sequence[AssembledQuestion]) -> dict:
    contexts = set()
    endings = set()
    vocab = set()
    origins = Counter()
    for q in questions:
        contexts.add((tuple(q.s), tuple(q.n)))
        vocab.update(q.s)
        vocab.update(q.n)
        for e in q.endings:
            endings.add(tuple(e))
            vocab.update(e)
        origins[q.origin] += 1
    return {
        "total_questions": len(questions),
        "found_gold": origins.get("found_gold", 0),
        "generated_gold": origins.get("generated_gold", 0),
        "unique_contexts": len(contexts),
        "unique_endings": len(endings),
        "vocab_size": len(vocab),
    }


def evaluate(
    train: Sequence[AssembledQuestion],
    splits: Dict[str, Sequence[AssembledQuestion]],
    seed=0,
    bag_epochs: int = 5,
    dual_epochs: int = 10,
    embed_dim: int = 16,
) -> dict:
    """Run every baseline on every split and collect the loss traces."""
    traces: dict = {"bag_ngram": [], "dual_bow": []}
    report = {"stats": stats_report(list(train) + [q for s in splits.values() for q in s]),
              "baselines": {}}
    first = True
    for name, qs in splits.items():
        report["baselines"][name] = {
            "random": {"accuracy": random_baseline(qs, seed), "n_questions": len(qs)},
            "length": {"accuracy": length_baseline(qs), "n_questions": len(qs)},
            "bag_ngram": {
                "accuracy": bag_ngram_unary(
                    train, qs, epochs=bag_epochs, seed=seed,
                    loss_trace=traces["bag_ngram"] if first else None),
                "n_questions": len(qs),
            },
            "dual_bow": {
                "accuracy": dual_bow_bilinear(
                    train, qs, embed_dim=embed_dim, epochs=dual_epochs, seed=seed,
                    loss_trace=traces["dual_bow"] if first else None),
                "n_questions": len(qs),
            },
        }
        first = False
    report["loss_traces"] = traces
    return report


def format_report(report: dict) -> str:
    """Aligned plain-text table of the report."""
    lines = []
    stats = report["stats"]
    lines.append("dataset statistics")
    width = max(len(k) for k in stats)
    for k, v in stats.items():
        lines.append(f"  {k:<{width}}  {v}")
    lines.append("")
    lines.append("baseline accuracy")
    names = ["random", "length", "bag_ngram", "dual_bow"]
    split_names = list(report["baselines"])
    head = f"  {'split':<12}" + "".join(f"{n:>12}" for n in names) + f"{'n':>8}"
    lines.append(head)
    for s in split_names:
        row = report["baselines"][s]
        cells = "".join(f"{row[n]['accuracy']:>12.4f}" for n in names)
        lines.append(f"  {s:<12}" + cells + f"{row['random']['n_questions']:>8}")
    return "\n".join(lines) + "\n"


def write_report(report: dict, json_path, text_path=None, csv_path=None) -> None:
    with open(json_path, "w", encoding="utf-8") as f:
        json.dump(report, f, sort_keys=True, indent=2)
        f.write("\n")
    if text_path is not None:
        with open(text_path, "w", encoding="utf-8") as f:
            f.write(format_report(report))
    if csv_path is not None:
        with open(csv_path, "w", encoding="utf-8") as f:
            f.write("baseline,epoch,train_loss\n")
            for name, losses in report.get("loss_traces", {}).items():
                for i, loss in enumerate(losses):
                    f.write(f"{name},{i},{loss}\n")


def questions_from_assignment(contexts, pools, assignment, seed) -> list:
    """Mechanical 4-way questions straight from an assignment, no annotation.

    The found ending is the gold; 3 distractors are drawn uniformly from the
    context's assigned negatives. Used to contrast datasets built from the
    initial (random) assignment against the adversarially filtered one.
    """
    pool_by_id = {p.context_id: p for p in pools}
    out = []
    for ctx in contexts:
        a_i = assignment[ctx.context_id]
        rng = rng_for(seed, "mech", ctx.context_id)
        picked = rng.choice(sorted(a_i), size=3, replace=False)
        members = [list(ctx.v_found)] + [
            list(pool_by_id[ctx.context_id].candidates[int(j)].tokens) for j in picked
        ]
        tags = ["found"] + [f"generated:{int(j)}" for j in picked]
        order = rng.permutation(4)
        out.append(AssembledQuestion(
            question_id=f"{ctx.context_id}-mech",
            s=list(ctx.s),
            n=list(ctx.n),
            endings=[members[i] for i in order],
            gold_index=int(next(p for p, i in enumerate(order) if i == 0)),
            origin="found_gold",
            fold=ctx.fold,
            provenance=[tags[i] for i in order],
        ))
    return out
