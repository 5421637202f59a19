"""Segmentation metric and rank statistics used by the reporting tools."""

from __future__ import annotations

import math

import numpy as np


def dice(reference, prediction, n_classes: int) -> float:
    """Mean Dice over foreground classes 1..C-1 of two label grids.

    A class absent from both maps contributes 1.0 (vacuous agreement).
    """
    ref = np.asarray(reference)
    pred = np.asarray(prediction)
    if ref.shape != pred.shape:
        raise ValueError(f"shape mismatch: {ref.shape} vs {pred.shape}")
    if n_classes < 2:
        raise ValueError("need at least one foreground class")
    total = 0.0
    for c in range(1, n_classes):
        r = ref == c
        p = pred == c
        denom = int(r.sum()) + int(p.sum())
        total += 1.0 if denom == 0 else 2.0 * int((r & p).sum()) / denom
    return total / (n_classes - 1)


def _average_ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(xs, ys) -> float | None:
    """Spearman rank correlation with average ranks for ties.

    Returns None when either input is constant (correlation undefined).
    """
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise ValueError("need two equal-length sequences of >= 2 values")
    if np.all(x == x[0]) or np.all(y == y[0]):
        return None
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    return float((rx * ry).sum() / math.sqrt((rx**2).sum() * (ry**2).sum()))


def top_fraction_correlation(pairs, fraction: float) -> float | None:
    """Spearman over the items whose first score is in the top fraction.

    Selection is keyed on the first coordinate; returns None when fewer
    than two items are selected or the correlation is undefined.
    """
    if not 0 < fraction <= 1:
        raise ValueError("fraction must be in (0, 1]")
    pts = [(float(a), float(b)) for a, b in pairs]
    n_top = math.ceil(fraction * len(pts))
    if n_top < 2:
        return None
    pts.sort(key=lambda ab: ab[0], reverse=True)
    top = pts[:n_top]
    return spearman([a for a, _ in top], [b for _, b in top])


def wilcoxon_one_sided(a_scores, b_scores) -> float:
    """One-sided Wilcoxon signed-rank p-value for the alternative a > b.

    Zero differences are dropped. Exact enumeration of all sign
    assignments for n <= 20; normal approximation with tie correction
    and continuity correction otherwise.
    """
    a = np.asarray(a_scores, dtype=np.float64)
    b = np.asarray(b_scores, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("need paired equal-length samples")
    d = a - b
    d = d[d != 0.0]
    n = len(d)
    if n == 0:
        return 1.0
    ranks = _average_ranks(np.abs(d))
    w_pos = float(ranks[d > 0].sum())
    if n <= 20:
        count = 0
        for signs in range(2**n):
            w = 0.0
            for i in range(n):
                if (signs >> i) & 1:
                    w += ranks[i]
            if w >= w_pos:
                count += 1
        return count / 2**n
    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    _, tie_counts = np.unique(np.abs(d), return_counts=True)
    var -= float(((tie_counts**3 - tie_counts) / 48.0).sum())
    z = (w_pos - mean - 0.5) / math.sqrt(var)
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def bonferroni(p: float, m: int) -> float:
    """Bonferroni-adjusted p-value: min(1, m * p)."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must be in [0, 1]")
    if m < 1:
        raise ValueError("m must be >= 1")
    return min(1.0, m * p)
