"""Statistics used by the experiment reports.

All functions are deterministic pure functions over plain sequences.
Undefined results (constant inputs and the like) return ``None`` rather
than a silent 0.
"""

from __future__ import annotations

import math
from itertools import combinations

import numpy as np
from scipy import stats as spstats


def pearson(x, y) -> tuple[float | None, float | None]:
    """Pearson r and a two-sided t-distribution p-value (n - 2 df).

    Returns ``(None, None)`` when either input is constant.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D of equal length")
    n = x.size
    if n < 3:
        raise ValueError("need at least 3 points")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = math.sqrt(float(np.sum(dx * dx)))
    sy = math.sqrt(float(np.sum(dy * dy)))
    if sx == 0.0 or sy == 0.0:
        return None, None
    r = float(np.clip(float(np.sum(dx * dy)) / (sx * sy), -1.0, 1.0))
    if abs(r) == 1.0:
        return r, 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    p = 2.0 * float(spstats.t.sf(abs(t), n - 2))
    return r, p


def _rank_with_ties(pooled: np.ndarray) -> np.ndarray:
    """Average ranks (1-based) with ties sharing their mean rank."""
    order = np.argsort(pooled, kind="stable")
    ranks = np.empty(pooled.size, dtype=np.float64)
    i = 0
    while i < pooled.size:
        j = i
        while j + 1 < pooled.size and pooled[order[j + 1]] == pooled[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def wilcoxon_rank_sum(a, b) -> float:
    """Two-sided rank-sum p-value.

    Exact enumeration over all assignments when either sample has fewer
    than 10 observations; otherwise a tie-corrected normal approximation
    (no continuity correction).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n1, n2 = a.size, b.size
    if n1 == 0 or n2 == 0:
        raise ValueError("samples must be non-empty")
    pooled = np.concatenate([a, b])
    ranks = _rank_with_ties(pooled)
    w_obs = float(ranks[:n1].sum())
    n = n1 + n2
    mu = n1 * (n + 1) / 2.0

    if min(n1, n2) < 10:
        dev_obs = abs(w_obs - mu)
        total = 0
        hits = 0
        for combo in combinations(range(n), n1):
            w = float(ranks[list(combo)].sum())
            total += 1
            if abs(w - mu) >= dev_obs - 1e-12:
                hits += 1
        return hits / total

    # tie correction on the variance
    _, counts = np.unique(pooled, return_counts=True)
    tie_term = float(np.sum(counts ** 3 - counts))
    sigma_sq = n1 * n2 / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    if sigma_sq <= 0:
        return 1.0  # all observations tied: no evidence of a shift
    z = (w_obs - mu) / math.sqrt(sigma_sq)
    return float(math.erfc(abs(z) / math.sqrt(2.0)))


def vargha_delaney_a12(a, b) -> float:
    """P(a > b) + 0.5 P(a = b) over all cross-sample pairs, in [0, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("samples must be non-empty")
    more = np.sum(a[:, None] > b[None, :])
    same = np.sum(a[:, None] == b[None, :])
    return float((more + 0.5 * same) / (a.size * b.size))


def a12_band(a12: float) -> str:
    """Magnitude band of the effect, judged on max(A12, 1 - A12)."""
    scaled = max(a12, 1.0 - a12)
    if scaled < 0.56:
        return "negligible"
    if scaled < 0.64:
        return "small"
    if scaled < 0.71:
        return "medium"
    return "large"


def cohens_kappa(r1, r2) -> float:
    """Chance-corrected agreement between two label sequences."""
    r1 = list(r1)
    r2 = list(r2)
    if len(r1) != len(r2):
        raise ValueError("rater sequences must have equal length")
    if not r1:
        raise ValueError("rater sequences must be non-empty")
    n = len(r1)
    cats = sorted(set(r1) | set(r2), key=str)
    po = sum(x == y for x, y in zip(r1, r2)) / n
    pe = sum((r1.count(c) / n) * (r2.count(c) / n) for c in cats)
    if pe == 1.0:
        return 1.0 if po == 1.0 else 0.0
    return (po - pe) / (1.0 - pe)
