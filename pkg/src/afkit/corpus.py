"""Corpus ingestion: paired captions -> filtered, fold-assigned contexts.

A raw record pairs two temporally adjacent captions. The second caption is
split into a noun-phrase stub (kept as part of the context) and a verb
phrase (the "found" ending, the positive example everything downstream is
built around).
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .seeds import rng_for

TOKEN_RE = re.compile(r"[\w'-]+|[^\w\s]")

# Reject reason codes, in the order they are checked.
REASON_GAP = "gap"
REASON_MALFORMED = "malformed"
REASON_TOO_SHORT = "too_short"
REASON_RARE_TOKEN = "rare_token"
REASON_NO_VERB = "no_verb"


class NoVerbPhrase(Exception):
    """Second sentence contains no token from the verb lexicon."""


def tokenize(text: str) -> list[str]:
    """Lowercase and split on whitespace, detaching punctuation as own tokens."""
    return TOKEN_RE.findall(text.lower())


@dataclass
class CaptionPair:
    id: str
    first_sentence: list[str]
    second_sentence: list[str]
    start_gap_seconds: float | None = None
    source: str = ""
    # Pre-split records carry these; the splitter is bypassed for them.
    n: list[str] | None = None
    v: list[str] | None = None


@dataclass
class Context:
    context_id: str
    s: list[str]  # first sentence
    n: list[str]  # noun-phrase stub of the second sentence
    v_found: list[str]  # found ending (verb phrase)
    fold: int = -1

    @property
    def second_sentence(self) -> list[str]:
        return self.n + self.v_found


def ingest_pairs(
    records: Iterable[dict], max_gap_seconds: float = 25.0
) -> tuple[list[CaptionPair], list[dict]]:
    """Tokenize raw records, dropping pairs whose caption gap exceeds the limit.

    Malformed records are collected in the rejects list (with a reason code)
    instead of aborting the stream. Order of kept pairs follows input order.
    """
    pairs: list[CaptionPair] = []
    rejects: list[dict] = []
    for i, rec in enumerate(records):
        rid = str(rec.get("id", f"row{i}")) if isinstance(rec, dict) else f"row{i}"
        if not isinstance(rec, dict) or "sent1" not in rec or "sent2" not in rec:
            rejects.append({"id": rid, "reason": REASON_MALFORMED})
            continue
        try:
            first = tokenize(str(rec["sent1"]))
            second = tokenize(str(rec["sent2"]))
            gap = rec.get("gap_seconds")
            gap = float(gap) if gap is not None else None
        except (TypeError, ValueError):
            rejects.append({"id": rid, "reason": REASON_MALFORMED})
            continue
        n = tokenize(str(rec["n"])) if rec.get("n") else None
        v = tokenize(str(rec["v"])) if rec.get("v") else None
        if v:
            n = n or []
            second = n + v  # keep the n||v == second_sentence invariant
        if not first or not second:
            rejects.append({"id": rid, "reason": REASON_MALFORMED})
            continue
        if gap is not None and gap > max_gap_seconds:
            rejects.append({"id": rid, "reason": REASON_GAP})
            continue
        pairs.append(
            CaptionPair(
                id=rid,
                first_sentence=first,
                second_sentence=second,
                start_gap_seconds=gap,
                source=str(rec.get("source", "")),
                n=n,
                v=v,
            )
        )
    return pairs, rejects


def split_second_sentence(
    sentence: list[str], verb_lexicon: set[str]
) -> tuple[list[str], list[str]]:
    """Split at the first token found in the verb lexicon: (noun stub, verb phrase)."""
    if not sentence:
        raise NoVerbPhrase("empty sentence")
    for i, tok in enumerate(sentence):
        if tok in verb_lexicon:
            return sentence[:i], sentence[i:]
    raise NoVerbPhrase(" ".join(sentence))


def count_vocab(pairs: Iterable[CaptionPair]) -> Counter:
    """Token counts over the full ingested corpus (both sentences)."""
    counts: Counter = Counter()
    for p in pairs:
        counts.update(p.first_sentence)
        counts.update(p.second_sentence)
    return counts


def filter_pair(
    pair: CaptionPair,
    vocab_counts: Counter,
    verb_lexicon: set[str],
    min_count: int = 3,
    min_len: int = 5,
) -> tuple[bool, str | None]:
    """Keep/drop decision for one pair, with the reject reason when dropped.

    Drops when the second sentence is short (length <= min_len), contains a
    rare token (corpus count <= min_count), or has no verb phrase.
    """
    second = pair.second_sentence
    if len(second) <= min_len:
        return False, REASON_TOO_SHORT
    if any(vocab_counts[t] <= min_count for t in second):
        return False, REASON_RARE_TOKEN
    if pair.n is None or pair.v is None:
        try:
            split_second_sentence(second, verb_lexicon)
        except NoVerbPhrase:
            return False, REASON_NO_VERB
    elif not pair.v:
        return False, REASON_NO_VERB
    return True, None


def build_contexts(
    pairs: list[CaptionPair],
    verb_lexicon: set[str],
    min_count: int = 3,
    min_len: int = 5,
    max_ending_len: int = 25,
) -> tuple[list[Context], list[dict]]:
    """Filter pairs and split them into contexts (fold assignment is separate)."""
    vocab_counts = count_vocab(pairs)
    contexts: list[Context] = []
    rejects: list[dict] = []
    for p in pairs:
        keep, reason = filter_pair(p, vocab_counts, verb_lexicon, min_count, min_len)
        if not keep:
            rejects.append({"id": p.id, "reason": reason})
            continue
        if p.n is not None and p.v is not None:
            n, v = p.n, p.v
        else:
            n, v = split_second_sentence(p.second_sentence, verb_lexicon)
        if len(v) > max_ending_len:
            v = v[:max_ending_len]
        contexts.append(Context(context_id=p.id, s=p.first_sentence, n=n, v_found=v))
    return contexts, rejects


def fold_assign(contexts: list[Context], n_folds: int = 5, seed: int = 0) -> list[Context]:
    """Assign cross-validation folds; sizes differ by at most one; deterministic."""
    if n_folds < 2:
        raise ValueError(f"n_folds must be >= 2, got {n_folds}")
    if n_folds > len(contexts):
        raise ValueError(f"n_folds={n_folds} exceeds number of contexts ({len(contexts)})")
    order = rng_for(seed, "fold_assign").permutation(len(contexts))
    for rank, idx in enumerate(order):
        contexts[idx].fold = rank % n_folds
    return contexts


def write_contexts_jsonl(contexts: Iterable[Context], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for c in contexts:
            rec = {
                "context_id": c.context_id,
                "s": c.s,
                "n": c.n,
                "v_found": c.v_found,
                "fold": c.fold,
            }
            f.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


def read_contexts_jsonl(path) -> list[Context]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            out.append(
                Context(
                    context_id=rec["context_id"],
                    s=rec["s"],
                    n=rec["n"],
                    v_found=rec["v_found"],
                    fold=rec["fold"],
                )
            )
    return out


def write_rejects_jsonl(rejects: Iterable[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in rejects:
            f.write(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n")


def read_jsonl(path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                yield json.loads(line)
