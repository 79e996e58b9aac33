"""Templated synthetic caption corpus with planted stylistic artifacts.

Two sentence styles share a grammar skeleton but differ on purpose:

* context pairs ("s...") use lexicon verbs and short endings, 40% of which
  end in one of five topical marker tokens;
* corpus-only pairs ("l...") use off-lexicon verbs and tack on "and <verb>"
  detours, so they never survive the context filters but still dominate the
  language model's training data.

The result is a corpus whose found endings are systematically shorter and
more marker-laden than what the generator samples, i.e. measurable
annotation artifacts for the filtering loop to erase.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .seeds import rng_for

# verbs the context filter recognizes (style S)
VERB_LEXICON = [
    "walks", "runs", "jumps", "turns", "looks", "moves", "stands", "climbs",
]
# verbs only the language model ever sees (style L)
OFF_LEXICON_VERBS = [
    "marches", "drifts", "strolls", "wanders", "glides", "proceeds",
    "charges", "slides",
]
MARKERS = ["rainstorm", "festival", "harbor", "meadow", "carnival"]

PREPOSITIONS = ["to", "into", "past", "toward"]
ADJECTIVES = ["old", "big", "small", "wooden", "bright", "narrow"]
OBJECTS = ["door", "room", "street", "window", "car", "stage", "field", "table"]
SCENE_NOUNS = ["man", "woman", "crowd", "dog", "chef", "girl", "boy", "team"]
PLACES = ["kitchen", "park", "hall", "yard", "garage", "plaza"]


@dataclass(frozen=True)
class SynthConfig:
    n_contexts: int = 500
    lm_only_per_context: float = 3.0
    marker_rate: float = 0.4
    detour_continue: float = 0.55

    def __post_init__(self):
        if self.n_contexts < 1:
            raise ValueError("n_contexts must be positive")
        if not (0.0 <= self.marker_rate <= 1.0):
            raise ValueError("marker_rate must be in [0, 1]")
        if not (0.0 <= self.detour_continue < 1.0):
            raise ValueError("detour_continue must be in [0, 1)")


def _pick(rng, options):
    return options[rng.integers(len(options))]


def _first_sentence(rng) -> str:
    return (
        f"the {_pick(rng, SCENE_NOUNS)} is seen in the {_pick(rng, PLACES)} ."
    )


def _ending_core(rng, verbs) -> list:
    return [
        _pick(rng, verbs),
        _pick(rng, PREPOSITIONS),
        "the",
        _pick(rng, ADJECTIVES),
        _pick(rng, OBJECTS),
    ]


def generate_corpus(cfg: SynthConfig, seed) -> list:
    """Raw ingestible records; context pairs first, corpus-only pairs after."""
    records = []
    for i in range(cfg.n_contexts):
        rng = rng_for(seed, "synth", "s", i)
        ending = _ending_core(rng, VERB_LEXICON)
        if rng.random() < cfg.marker_rate:
            ending.append(_pick(rng, MARKERS))
        records.append({
            "id": f"s{i:04d}",
            "sent1": _first_sentence(rng),
            "sent2": "someone " + " ".join(ending),
            "gap_seconds": float(rng.uniform(1.0, 20.0)),
            "source": "synth",
        })

    n_lm_only = int(round(cfg.n_contexts * cfg.lm_only_per_context))
    for i in range(n_lm_only):
        rng = rng_for(seed, "synth", "l", i)
        ending = _ending_core(rng, OFF_LEXICON_VERBS)
        ending += ["and", _pick(rng, OFF_LEXICON_VERBS)]
        while rng.random() < cfg.detour_continue:
            ending += ["and", _pick(rng, OFF_LEXICON_VERBS)]
        records.append({
            "id": f"l{i:04d}",
            "sent1": _first_sentence(rng),
            "sent2": "someone " + " ".join(ending),
            "gap_seconds": float(rng.uniform(1.0, 20.0)),
            "source": "synth",
        })
    return records


def write_corpus_jsonl(records, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
