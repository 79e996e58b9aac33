"""Interpolated Kneser-Ney n-gram language model with fixed discount.

The model predicts over V_pred = training vocab + EOS + UNK (never BOS).
Highest order uses raw counts, lower orders use continuation counts, and the
base distribution is uniform over V_pred, so every conditional distribution
sums to one by construction.

A backward model is just this class trained on reversed sequences and
queried with reversed token lists; only the fit tables are direction-aware
(train_lm does the reversal and tags the model).
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .seeds import rng_for

UNK_ID = 0
EOS_ID = 1
BOS_ID = -1  # only ever appears inside histories, never predicted

UNK = "<unk>"
EOS = "<eos>"


class NGramLM:
    def __init__(self, order: int = 3, discount: float = 0.75, direction: str = "forward"):
        if order < 1:
            raise ValueError(f"order must be >= 1, got {order}")
        if not (0.0 < discount < 1.0):
            raise ValueError(f"discount must be in (0, 1), got {discount}")
        if direction not in ("forward", "backward"):
            raise ValueError(f"direction must be forward or backward, got {direction}")
        self.order = order
        self.discount = discount
        self.direction = direction
        self.trained_folds: tuple = ()
        self._tok2id: dict[str, int] = {}
        self._id2tok: list[str] = [UNK, EOS]
        # _tables[lvl] maps history tuple -> {token_id: count}. Level `order`
        # holds raw counts; levels 1..order-1 hold continuation counts.
        self._tables: dict[int, dict[tuple, dict[int, int]]] = {}
        self._totals: dict[int, dict[tuple, tuple[int, int]]] = {}  # (total, n_distinct)
        self._dist_cache: dict[tuple, np.ndarray] = {}
        self._cum_cache: dict[tuple, np.ndarray] = {}
        self._cache_cap = 20000

    # ------------------------------------------------------------------ fit

    def fit(self, sequences: Iterable[Sequence[str]]) -> "NGramLM":
        seqs = [list(s) for s in sequences]
        vocab = sorted({t for s in seqs for t in s})
        self._tok2id = {t: i + 2 for i, t in enumerate(vocab)}
        self._id2tok = [UNK, EOS] + vocab

        order = self.order
        tables: dict[int, dict[tuple, dict[int, int]]]
        if order == 1:
            # degenerate case: no bigrams to take types from, use raw unigrams
            uni: dict[int, int] = defaultdict(int)
            for seq in seqs:
                for t in seq:
                    uni[self._tok2id[t]] += 1
                uni[EOS_ID] += 1
            tables = {1: {(): dict(uni)}}
        else:
            raw: dict[int, dict[tuple, dict[int, int]]] = {
                lvl: defaultdict(lambda: defaultdict(int)) for lvl in range(2, order + 1)
            }
            for seq in seqs:
                padded = [BOS_ID] * (order - 1) + [self._tok2id[t] for t in seq] + [EOS_ID]
                for j in range(order - 1, len(padded)):
                    w = padded[j]
                    for lvl in range(2, order + 1):
                        hist = tuple(padded[j - lvl + 1 : j])
                        raw[lvl][hist][w] += 1
            tables = {order: {h: dict(d) for h, d in raw[order].items()}}
            for lvl in range(1, order):
                cont: dict[tuple, dict[int, int]] = defaultdict(lambda: defaultdict(int))
                for hist, nexts in raw[lvl + 1].items():
                    h = hist[1:]
                    for w in nexts:
                        cont[h][w] += 1
                tables[lvl] = {h: dict(d) for h, d in cont.items()}

        self._tables = tables
        self._totals = {
            lvl: {h: (sum(d.values()), len(d)) for h, d in tbl.items()} for lvl, tbl in tables.items()
        }
        self._dist_cache.clear()
        self._cum_cache.clear()
        return self

    # ------------------------------------------------------- encode/decode

    @property
    def vocab_size(self) -> int:
        """Size of the prediction vocabulary (training tokens + EOS + UNK)."""
        return len(self._id2tok)

    def _token_id(self, t: str) -> int:
        if t == EOS:
            return EOS_ID
        return self._tok2id.get(t, UNK_ID)

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self._token_id(t) for t in tokens]

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self._id2tok[i] for i in ids]

    def _hist_ids(self, history: Sequence[str]) -> tuple:
        keep = self.order - 1
        if keep == 0:
            return ()
        ids = [BOS_ID] * keep + self.encode(history)
        return tuple(ids[-keep:])

    # -------------------------------------------------------- probabilities

    def _prob_scalar(self, w: int, hist: tuple, lvl: int) -> float:
        if lvl == 0:
            return 1.0 / self.vocab_size
        tot = self._totals[lvl].get(hist)
        lower = self._prob_scalar(w, hist[1:] if hist else (), lvl - 1)
        if tot is None or tot[0] == 0:
            return lower
        total, ndist = tot
        c = self._tables[lvl][hist].get(w, 0)
        d = self.discount
        return max(c - d, 0.0) / total + d * ndist / total * lower

    def prob(self, token: str, history: Sequence[str]) -> float:
        """P(token | history); history is implicitly BOS-padded on the left."""
        return self._prob_scalar(self._token_id(token), self._hist_ids(history), self.order)

    def _dist_level(self, hist: tuple, lvl: int) -> np.ndarray:
        if lvl == 0:
            return np.full(self.vocab_size, 1.0 / self.vocab_size)
        lower = self._dist_level(hist[1:] if hist else (), lvl - 1)
        tot = self._totals[lvl].get(hist)
        if tot is None or tot[0] == 0:
            return lower
        total, ndist = tot
        tbl = self._tables[lvl][hist]
        d = self.discount
        p = (d * ndist / total) * lower
        ids = np.fromiter(tbl.keys(), dtype=np.int64, count=len(tbl))
        cnts = np.fromiter(tbl.values(), dtype=np.float64, count=len(tbl))
        np.add.at(p, ids, np.maximum(cnts - d, 0.0) / total)
        return p

    def dist(self, history: Sequence[str]) -> np.ndarray:
        """Full next-token distribution over V_pred, index-aligned with decode()."""
        hist = self._hist_ids(history)
        cached = self._dist_cache.get(hist)
        if cached is None:
            cached = self._dist_level(hist, self.order)
            if len(self._dist_cache) >= self._cache_cap:
                self._dist_cache.pop(next(iter(self._dist_cache)))
            self._dist_cache[hist] = cached
        return cached

    def logprob(self, tokens: Sequence[str], history: Sequence[str] = (), include_eos: bool = False) -> float:
        """Natural-log probability of tokens continuing the (BOS-padded) history."""
        hist = list(history)
        total = 0.0
        for t in tokens:
            total += float(np.log(self.prob(t, hist)))
            hist.append(t)
        if include_eos:
            total += float(np.log(self._prob_scalar(EOS_ID, self._hist_ids(hist), self.order)))
        return total

    def log_ppl(self, tokens: Sequence[str], history: Sequence[str] = ()) -> float:
        """Per-token negative log likelihood (natural log)."""
        if not tokens:
            raise ValueError("log_ppl of an empty token sequence is undefined")
        return -self.logprob(tokens, history) / len(tokens)

    def perplexity(self, tokens: Sequence[str], history: Sequence[str] = ()) -> float:
        return float(np.exp(self.log_ppl(tokens, history)))

    # -------------------------------------------------------------- sampling

    def _cum_for(self, hist: tuple, temperature: float) -> np.ndarray:
        key = (hist, temperature)
        cum = self._cum_cache.get(key)
        if cum is not None:
            return cum
        p = self._dist_level(hist, self.order).copy()
        p[UNK_ID] = 0.0  # never emit the unknown token
        if temperature != 1.0:
            p = np.power(p, 1.0 / temperature)
        p /= p.sum()
        cum = np.cumsum(p)
        if len(self._cum_cache) >= self._cache_cap:
            self._cum_cache.pop(next(iter(self._cum_cache)))
        self._cum_cache[key] = cum
        return cum

    def sample(
        self,
        history: Sequence[str],
        rng: np.random.Generator,
        max_len: int = 25,
        temperature: float = 1.0,
    ) -> list[str]:
        """Ancestral sample of a continuation; EOS terminates and is not emitted."""
        keep = self.order - 1
        hist = self._hist_ids(history)
        out: list[int] = []
        for _ in range(max_len):
            cum = self._cum_for(hist, temperature)
            w = int(np.searchsorted(cum, rng.random(), side="right"))
            if w == EOS_ID:
                break
            out.append(w)
            hist = (hist + (w,))[-keep:] if keep > 0 else ()
        return self.decode(out)

    def generate_unique(
        self,
        history: Sequence[str],
        n: int,
        rng: np.random.Generator,
        max_len: int = 25,
        retry_factor: int = 20,
        temperature: float = 1.0,
        exclude: Iterable[Sequence[str]] = (),
    ) -> tuple[list[list[str]], bool]:
        """Up to n distinct non-empty samples; second value flags a short pool.

        Total sampling attempts are capped at n * retry_factor, so a sparse
        model cannot loop forever; callers should surface the short-pool flag.
        """
        seen = {tuple(e) for e in exclude}
        out: list[list[str]] = []
        budget = n * retry_factor
        for _ in range(budget):
            if len(out) >= n:
                break
            s = self.sample(history, rng, max_len=max_len, temperature=temperature)
            key = tuple(s)
            if s and key not in seen:
                seen.add(key)
                out.append(s)
        return out, len(out) < n

    # --------------------------------------------------------- persistence

    def to_dict(self) -> dict:
        tables = {}
        for lvl, tbl in self._tables.items():
            rows = []
            for hist in sorted(tbl):
                d = tbl[hist]
                ws = sorted(d)
                rows.append([list(hist), ws, [d[w] for w in ws]])
            tables[str(lvl)] = rows
        return {
            "order": self.order,
            "discount": self.discount,
            "direction": self.direction,
            "trained_folds": list(self.trained_folds),
            "vocab": self._id2tok[2:],
            "tables": tables,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NGramLM":
        lm = cls(order=data["order"], discount=data["discount"],
                 direction=data.get("direction", "forward"))
        lm.trained_folds = tuple(data.get("trained_folds", ()))
        vocab = data["vocab"]
        lm._tok2id = {t: i + 2 for i, t in enumerate(vocab)}
        lm._id2tok = [UNK, EOS] + list(vocab)
        lm._tables = {
            int(lvl): {tuple(h): dict(zip(ws, cs)) for h, ws, cs in rows}
            for lvl, rows in data["tables"].items()
        }
        lm._totals = {
            lvl: {h: (sum(d.values()), len(d)) for h, d in tbl.items()}
            for lvl, tbl in lm._tables.items()
        }
        return lm

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, sort_keys=True)

    @classmethod
    def load(cls, path) -> "NGramLM":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def reverse_sequences(sequences: Iterable[Sequence[str]]) -> list[list[str]]:
    """Training data for a backward model."""
    return [list(s)[::-1] for s in sequences]


def train_lm(
    sequences: Sequence[Sequence[str]],
    folds: Optional[Sequence[int]] = None,
    order: int = 3,
    direction: str = "forward",
    discount: float = 0.75,
    exclude_fold: Optional[int] = None,
) -> NGramLM:
    """Fit a directional model, optionally holding out one fold of sequences.

    Backward models are trained on reversed sequences; callers query them
    with reversed token lists. trained_folds records which folds the counts
    came from so downstream sampling can enforce fold exclusivity.
    """
    if folds is not None and len(folds) != len(sequences):
        raise ValueError("folds must align with sequences")
    if folds is None:
        kept = list(sequences)
        fold_set: set[int] = set()
    else:
        kept = [s for s, f in zip(sequences, folds) if f != exclude_fold]
        fold_set = {f for f in folds if f != exclude_fold}
    if not kept:
        raise ValueError("no training sequences left after fold exclusion")
    if direction == "backward":
        kept = reverse_sequences(kept)
    lm = NGramLM(order=order, discount=discount, direction=direction)
    lm.fit(kept)
    lm.trained_folds = tuple(sorted(fold_set))
    return lm


# ------------------------------------------------------------- candidate pools


@dataclass
class Candidate:
    tokens: list
    gen_logprob: float


@dataclass
class CandidatePool:
    context_id: str
    candidates: list = field(default_factory=list)
    short_pool: bool = False
    generator_fold_exclusion: Optional[int] = None


def sample_endings(
    model: NGramLM,
    context_id: str,
    prefix: Sequence[str],
    found_ending: Sequence[str],
    n_samples: int,
    seed: int,
    context_fold: Optional[int] = None,
    max_len: int = 25,
    temperature: float = 1.0,
) -> CandidatePool:
    """Oversample counterfactual endings for one context.

    Each context gets its own derived stream, so pools are reproducible
    regardless of sampling order across contexts. The found ending is
    excluded, and duplicates are rejected up to a fixed retry budget.
    """
    if context_fold is not None and context_fold in model.trained_folds:
        raise ValueError(
            f"generator for {context_id} saw fold {context_fold} during training"
        )
    rng = rng_for(seed, "sample", context_id)
    endings, short = model.generate_unique(
        prefix, n_samples, rng, max_len=max_len,
        temperature=temperature, exclude=[list(found_ending)],
    )
    cands = [Candidate(tokens=e, gen_logprob=model.logprob(e, prefix)) for e in endings]
    return CandidatePool(
        context_id=context_id,
        candidates=cands,
        short_pool=short,
        generator_fold_exclusion=context_fold,
    )


def write_pools_jsonl(pools: Sequence[CandidatePool], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for p in sorted(pools, key=lambda q: q.context_id):
            rec = {
                "context_id": p.context_id,
                "candidates": [
                    {"tokens": c.tokens, "gen_logprob": c.gen_logprob}
                    for c in p.candidates
                ],
                "short_pool": p.short_pool,
                "generator_fold_exclusion": p.generator_fold_exclusion,
            }
            f.write(json.dumps(rec, sort_keys=True) + "\n")


def read_pools_jsonl(path) -> list[CandidatePool]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            rec = json.loads(line)
            out.append(CandidatePool(
                context_id=rec["context_id"],
                candidates=[Candidate(c["tokens"], c["gen_logprob"])
                            for c in rec["candidates"]],
                short_pool=rec["short_pool"],
                generator_fold_exclusion=rec.get("generator_fold_exclusion"),
            ))
    return out
