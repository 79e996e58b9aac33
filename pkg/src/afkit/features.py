"""Stylistic feature views of a candidate ending.

Three views feed the committee: a 7-vector of LM perplexity/length features,
the token-id sequence of the second sentence for the embedding members, and
a common-word encoding (top-k words kept, everything else collapsed to one
of six suffix pseudo-tags) for the recurrent member.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .seeds import rng_for

PSEUDO_TAGS = ["<ing>", "<ed>", "<s>", "<ly>", "<num>", "<other>"]


def pseudo_tag(token: str) -> str:
    """Coarse word-class bucket for a token outside the common-word list."""
    if token.endswith("ing"):
        return "<ing>"
    if token.endswith("ed"):
        return "<ed>"
    if token.endswith("s"):
        return "<s>"
    if token.endswith("ly"):
        return "<ly>"
    if any(ch.isdigit() for ch in token):
        return "<num>"
    return "<other>"


class TokenVocab:
    """Token -> id table with id 0 reserved for unknown tokens."""

    def __init__(self, tokens: Sequence[str]):
        self.id2tok = ["<unk>"] + list(tokens)
        self.tok2id = {t: i for i, t in enumerate(self.id2tok)}

    @classmethod
    def from_sequences(cls, sequences: Iterable[Sequence[str]]) -> "TokenVocab":
        return cls(sorted({t for s in sequences for t in s}))

    def __len__(self) -> int:
        return len(self.id2tok)

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.tok2id.get(t, 0) for t in tokens]

    def to_dict(self) -> dict:
        return {"tokens": self.id2tok[1:]}

    @classmethod
    def from_dict(cls, d: dict) -> "TokenVocab":
        return cls(d["tokens"])


class CommonWordEncoder:
    """Keep the top-k most frequent words; replace the rest by pseudo-tags.

    Ids 0..5 are the pseudo-tags, followed by the kept words. Frequencies
    must come from training data only.
    """

    def __init__(self, top_words: Sequence[str]):
        self.top_words = list(top_words)
        self.id2tok = list(PSEUDO_TAGS) + self.top_words
        self.tok2id = {t: i for i, t in enumerate(self.id2tok)}

    @classmethod
    def fit(cls, sequences: Iterable[Sequence[str]], top_k: int = 100) -> "CommonWordEncoder":
        counts = Counter()
        for s in sequences:
            counts.update(s)
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        return cls([t for t, _ in ranked[:top_k]])

    def __len__(self) -> int:
        return len(self.id2tok)

    def encode(self, tokens: Sequence[str]) -> list[int]:
        out = []
        for t in tokens:
            i = self.tok2id.get(t)
            out.append(i if i is not None and i >= 6 else self.tok2id[pseudo_tag(t)])
        return out

    def to_dict(self) -> dict:
        return {"top_words": self.top_words}

    @classmethod
    def from_dict(cls, d: dict) -> "CommonWordEncoder":
        return cls(d["top_words"])


def lm_features(fwd, bwd, s: Sequence[str], n: Sequence[str], v: Sequence[str]) -> np.ndarray:
    """7-vector: [ctx ppl fwd, ending|ctx ppl fwd, ctx|ending ppl bwd,
    ending ppl bwd, logP(last ending token fwd), |ctx|, |ending|].

    Perplexities are natural-log per-token negative log likelihoods.
    """
    if not v:
        raise ValueError("ending must be non-empty")
    ctx = list(s) + list(n)
    v = list(v)
    rev_ctx, rev_v = ctx[::-1], v[::-1]
    return np.array(
        [
            fwd.log_ppl(ctx),
            fwd.log_ppl(v, history=ctx),
            bwd.log_ppl(rev_ctx, history=rev_v),
            bwd.log_ppl(rev_v),
            float(np.log(fwd.prob(v[-1], ctx + v[:-1]))),
            float(len(ctx)),
            float(len(v)),
        ],
        dtype=np.float64,
    )


@dataclass
class StyleFeatures:
    """Everything the committee needs to score one candidate ending."""

    f_ppl: np.ndarray  # shape (7,), unstandardized
    second_ids: list[int]  # token ids of n || v
    common_ids: list[int]  # common-word encoding of n || v


def style_features(
    fwd, bwd, s: Sequence[str], n: Sequence[str], v: Sequence[str],
    vocab: TokenVocab, common: CommonWordEncoder,
) -> StyleFeatures:
    second = list(n) + list(v)
    return StyleFeatures(
        f_ppl=lm_features(fwd, bwd, s, n, v),
        second_ids=vocab.encode(second),
        common_ids=common.encode(second),
    )


def feature_stats(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-column mean/std for standardization; zero-variance columns get std 1."""
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    sd = np.where(sd < 1e-12, 1.0, sd)
    return mu, sd


def apply_stats(x: np.ndarray, mu: np.ndarray, sd: np.ndarray) -> np.ndarray:
    return (x - mu) / sd


def random_embedding(n_ids: int, dim: int, seed_parts: tuple, scale: float = 0.1) -> np.ndarray:
    return rng_for(*seed_parts).normal(0.0, scale, size=(n_ids, dim))


def load_text_embeddings(path) -> dict[str, np.ndarray]:
    """Plain-text embedding file: one "token v1 ... vd" per line."""
    out: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            parts = line.split()
            if len(parts) < 2:
                continue
            out[parts[0]] = np.array([float(x) for x in parts[1:]])
    return out


def embedding_from_pretrained(
    vocab: TokenVocab, pretrained: dict[str, np.ndarray], dim: int, seed_parts: tuple
) -> np.ndarray:
    """Table over the vocab; tokens missing from the file keep random vectors."""
    table = random_embedding(len(vocab), dim, seed_parts)
    for i, tok in enumerate(vocab.id2tok):
        vec = pretrained.get(tok)
        if vec is not None and len(vec) == dim:
            table[i] = vec
    return table


def save_frequency_table(counts: Counter, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(dict(counts), f, sort_keys=True)
