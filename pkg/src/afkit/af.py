"""Adversarial filtering: iteratively swap easy negatives for harder ones.

Each iteration re-splits the contexts 80/20, trains a fresh committee on the
train portion's assigned candidate sets, measures test accuracy under the
current assignment, and replaces up to n_easy easy negatives per test
context (lowest-scoring easy out, highest-scoring qualifying candidate in).
The loop stops when the trailing-window mean accuracy reaches chance + tol.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace as dc_replace
from typing import Callable, Sequence

import numpy as np

from .committee import CommitteeConfig, TrainInstance, init_params, score_batch, train
from .features import apply_stats, feature_stats
from .seeds import derive_seed, rng_for


@dataclass(frozen=True)
class AFConfig:
    k: int = 9
    n_easy: int = 2
    train_fraction: float = 0.8
    mlp_only_iterations: int = 100
    max_iterations: int = 150
    window: int = 20
    tolerance: float = 0.02
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.train_fraction < 1.0):
            raise ValueError("train_fraction must be in (0, 1)")
        if self.n_easy > self.k:
            raise ValueError("n_easy cannot exceed k")
        if self.k < 1 or self.window < 1 or self.max_iterations < 1:
            raise ValueError("k, window, max_iterations must be positive")

    @property
    def chance(self) -> float:
        return 1.0 / (self.k + 1)


@dataclass
class AFContext:
    """One context's precomputed candidate features."""

    context_id: str
    pos_x: np.ndarray  # (7,) raw LM features of the found ending
    pos_second: list
    pos_common: list
    pool_x: np.ndarray  # (n_pool, 7)
    pool_second: list
    pool_common: list


@dataclass
class AFDataset:
    contexts: list
    n_word_ids: int
    n_common_ids: int


@dataclass
class AFIterationResult:
    assignment: dict
    accuracy: float
    loss: float
    replacements: list  # (context_id, j_out, m_in, score_out, score_in)
    active_members: tuple
    test_ids: list = field(default_factory=list)


def init_assignment(dataset: AFDataset, k: int, seed: int) -> dict[str, list[int]]:
    """Uniform random k-subset of each context's pool, keyed by context id."""
    out = {}
    for ctx in dataset.contexts:
        n = len(ctx.pool_x)
        if n < k:
            raise ValueError(f"context {ctx.context_id}: pool size {n} < k={k}")
        rng = rng_for(seed, "init_assignment", ctx.context_id)
        out[ctx.context_id] = sorted(int(j) for j in rng.choice(n, size=k, replace=False))
    return out


def reassign(
    a_i: Sequence[int], pos_score: float, pool_scores: np.ndarray, n_easy: int
) -> tuple[list[int], list[tuple]]:
    """Replacement rule for one context; returns new A_i and (j, m, s_j, s_m) records.

    Easy negatives (strictly below the positive) leave lowest-score-first; they
    are replaced by the highest-scoring out-of-assignment candidates that
    strictly beat them. Ties break by candidate index.
    """
    a_set = set(int(j) for j in a_i)
    easy = sorted((j for j in a_set if pos_score > pool_scores[j]),
                  key=lambda j: (pool_scores[j], j))
    outs = sorted((m for m in range(len(pool_scores)) if m not in a_set),
                  key=lambda m: (-pool_scores[m], m))
    new = set(a_set)
    records = []
    for rank, j in enumerate(easy[:n_easy]):
        if rank >= len(outs):
            break
        m = outs[rank]
        if pool_scores[m] > pool_scores[j]:
            new.discard(j)
            new.add(m)
            records.append((j, m, float(pool_scores[j]), float(pool_scores[m])))
        else:
            break  # outs are sorted descending: nothing later can qualify either
    return sorted(new), records


def af_iteration(
    dataset: AFDataset,
    assignment: dict,
    af_cfg: AFConfig,
    com_cfg: CommitteeConfig,
    iteration: int,
    scorer: Callable | None = None,
) -> AFIterationResult:
    """One split/train/score/replace pass; accuracy uses pre-replacement scores.

    `scorer(x_std, second_ids, common_ids) -> scores` bypasses committee
    training; it exists for tests with fixed or degenerate scorers.
    """
    contexts = dataset.contexts
    n = len(contexts)
    if n < 2 and scorer is None:
        raise ValueError("committee training needs at least 2 contexts")
    order = rng_for(af_cfg.seed, "split", iteration).permutation(n)
    n_train = min(max(int(round(af_cfg.train_fraction * n)), 1), n - 1)
    train_idx = order[:n_train]
    test_idx = order[n_train:]

    active = ("mlp",) if iteration < af_cfg.mlp_only_iterations else com_cfg.active_members
    cfg_it = dc_replace(com_cfg, active_members=active)

    # standardization statistics come from the train split only; with an
    # injected scorer and no train contexts, fall back to identity stats
    if len(train_idx):
        stat_rows = [contexts[i].pos_x[None, :] for i in train_idx]
        for i in train_idx:
            a = assignment[contexts[i].context_id]
            stat_rows.append(contexts[i].pool_x[a])
        mu, sd = feature_stats(np.concatenate(stat_rows, axis=0))
    else:
        dim = contexts[0].pos_x.shape[0]
        mu, sd = np.zeros(dim), np.ones(dim)

    loss = float("nan")
    if scorer is None:
        instances = []
        for i in train_idx:
            ctx = contexts[i]
            a = assignment[ctx.context_id]
            x = np.concatenate([ctx.pos_x[None, :], ctx.pool_x[a]], axis=0)
            instances.append(
                TrainInstance(
                    x_ppl=apply_stats(x, mu, sd),
                    second_ids=[ctx.pos_second] + [ctx.pool_second[j] for j in a],
                    common_ids=[ctx.pos_common] + [ctx.pool_common[j] for j in a],
                    pos=0,
                )
            )
        params = init_params(
            cfg_it, dataset.n_word_ids, dataset.n_common_ids,
            seed=derive_seed(af_cfg.seed, "committee", iteration),
        )
        params, loss = train(params, instances, cfg_it, rng_for(af_cfg.seed, "train", iteration))
        score_fn = lambda x, s, c: score_batch(params, cfg_it, x, s, c)
    else:
        score_fn = scorer

    # score positive + full pool for every test context in one batch
    xs, sids, cids, spans = [], [], [], []
    offset = 0
    for i in test_idx:
        ctx = contexts[i]
        xs.append(ctx.pos_x[None, :])
        xs.append(ctx.pool_x)
        sids.append(ctx.pos_second)
        sids.extend(ctx.pool_second)
        cids.append(ctx.pos_common)
        cids.extend(ctx.pool_common)
        spans.append((offset, 1 + len(ctx.pool_x)))
        offset += 1 + len(ctx.pool_x)
    scores = score_fn(apply_stats(np.concatenate(xs, axis=0), mu, sd), sids, cids)

    new_assignment = dict(assignment)
    correct = 0
    records = []
    test_ids = []
    for (start, width), i in zip(spans, test_idx):
        ctx = contexts[i]
        s_pos = float(scores[start])
        s_pool = scores[start + 1 : start + width]
        a = assignment[ctx.context_id]
        if s_pos > s_pool[a].max():
            correct += 1
        new_a, recs = reassign(a, s_pos, s_pool, af_cfg.n_easy)
        for j, m, s_j, s_m in recs:
            assert s_m > s_j, "replacement must strictly improve the negative"
            records.append((ctx.context_id, j, m, s_j, s_m))
        new_assignment[ctx.context_id] = new_a
        test_ids.append(ctx.context_id)

    return AFIterationResult(
        assignment=new_assignment,
        accuracy=correct / len(test_idx),
        loss=loss,
        replacements=records,
        active_members=active,
        test_ids=test_ids,
    )


def run_af(
    dataset: AFDataset,
    af_cfg: AFConfig,
    com_cfg: CommitteeConfig,
    assignment: dict | None = None,
    trace: list | None = None,
    on_iteration: Callable | None = None,
    scorer: Callable | None = None,
) -> tuple[dict, list]:
    """Run Algorithm-style filtering to convergence or max_iterations.

    Pass a previously saved (assignment, trace) pair to resume; iteration
    seeds are derived from the iteration index, so a resumed run is
    bit-identical to an uninterrupted one.
    """
    if assignment is None:
        assignment = init_assignment(dataset, af_cfg.k, af_cfg.seed)
    trace = list(trace or [])
    for it in range(len(trace), af_cfg.max_iterations):
        res = af_iteration(dataset, assignment, af_cfg, com_cfg, it, scorer=scorer)
        assignment = res.assignment
        row = {
            "iteration": it,
            "accuracy": res.accuracy,
            "loss": res.loss,
            "replacements": len(res.replacements),
            "active_members": "+".join(res.active_members),
        }
        trace.append(row)
        if on_iteration is not None:
            on_iteration(it, assignment, row, res)
        tail = [r["accuracy"] for r in trace[-af_cfg.window :]]
        if len(trace) >= af_cfg.window and float(np.mean(tail)) <= af_cfg.chance + af_cfg.tolerance:
            break
    return assignment, trace


# ----------------------------------------------------------------- artifacts


def save_assignment_jsonl(assignment: dict, iteration: int, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for cid in sorted(assignment):
            rec = {"context_id": cid, "iteration": iteration, "indices": list(assignment[cid])}
            f.write(json.dumps(rec, sort_keys=True) + "\n")


def load_assignment_jsonl(path) -> tuple[dict, int]:
    assignment: dict = {}
    iteration = 0
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            assignment[rec["context_id"]] = [int(i) for i in rec["indices"]]
            iteration = int(rec["iteration"])
    return assignment, iteration


TRACE_FIELDS = ["iteration", "accuracy", "loss", "replacements", "active_members"]


def save_trace_csv(trace: list, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.DictWriter(f, fieldnames=TRACE_FIELDS)
        w.writeheader()
        for row in trace:
            w.writerow({k: row[k] for k in TRACE_FIELDS})


def load_trace_csv(path) -> list:
    out = []
    with open(path, encoding="utf-8", newline="") as f:
        for row in csv.DictReader(f):
            out.append(
                {
                    "iteration": int(row["iteration"]),
                    "accuracy": float(row["accuracy"]),
                    "loss": float(row["loss"]),
                    "replacements": int(row["replacements"]),
                    "active_members": row["active_members"],
                }
            )
    return out
