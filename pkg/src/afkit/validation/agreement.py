"""Inter-annotator agreement metrics and the annotator quality gate.

Krippendorff's alpha uses the standard coincidence-matrix formulation for
nominal data, including the small-sample correction in the expected
disagreement (the n*(n-1) denominator).
"""

from __future__ import annotations

from collections import Counter
from typing import Dict, Iterable, Tuple

Labels = Dict[str, Dict[str, str]]  # item -> annotator -> nominal label


def _units(items: Labels) -> list:
    """Label multisets of the units that carry at least two annotations."""
    return [list(v.values()) for v in items.values() if len(v) >= 2]


def krippendorff_alpha(items: Labels) -> float:
    units = _units(items)
    if not units:
        raise ValueError("alpha needs at least one item with >= 2 annotations")

    # coincidence counts: each unit contributes its ordered label pairs,
    # weighted by 1/(m_u - 1)
    pair_counts: Counter = Counter()
    margins: Counter = Counter()
    for labels in units:
        m = len(labels)
        w = 1.0 / (m - 1)
        for i, a in enumerate(labels):
            for j, b in enumerate(labels):
                if i == j:
                    continue
                pair_counts[(a, b)] += w
                margins[a] += w

    n = sum(margins.values())
    d_obs = sum(c for (a, b), c in pair_counts.items() if a != b) / n
    d_exp = sum(
        margins[a] * margins[b] for a in margins for b in margins if a != b
    ) / (n * (n - 1))
    if d_exp == 0.0:
        return 1.0  # a single label in use: perfect agreement by convention
    return 1.0 - d_obs / d_exp


def pairwise_percent_agreement(items: Labels) -> float:
    """Mean over (item, annotator pair) of the equal-label indicator."""
    agree = 0
    total = 0
    for v in items.values():
        labels = list(v.values())
        m = len(labels)
        for i in range(m):
            for j in range(i + 1, m):
                agree += labels[i] == labels[j]
                total += 1
    if total == 0:
        raise ValueError("ppa needs at least one item with >= 2 annotations")
    return agree / total


def annotator_quality(
    history: Iterable[bool],
    min_accuracy: float = 0.55,
    min_count: int = 10,
) -> Tuple[str, float]:
    """Dequalify an annotator who keeps missing the found ending.

    history holds one indicator per completed task: True when the found
    ending was in the annotator's top two picks. The gate only applies
    once the annotator has enough history.
    """
    hits = 0
    count = 0
    for h in history:
        hits += bool(h)
        count += 1
    accuracy = hits / count if count else 0.0
    if count >= min_count and accuracy < min_accuracy:
        return "dequalified", accuracy
    return "active", accuracy
