"""Longitudinal process metrics: accuracy, concentration, coverage,
popularity reinforcement and personalization level.

All functions are pure.  Metrics that are undefined for an input (e.g. a
rank correlation with zero variance) return None rather than a fake zero;
the CSV layer serializes None as an empty field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class MetricRow:
    epoch: int
    rmse: float | None
    mae: float | None
    gini_consumption: float | None
    gini_recommendation: float | None
    catalog_coverage: float | None
    top_share: float | None
    popularity_lift: float | None
    personalization_level: float | None
    mean_consumption_diversity: float | None
    db_size: int
    active_users: int
    active_items: int

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "MetricRow":
        return cls(**d)


METRIC_COLUMNS = [f.name for f in fields(MetricRow)]


def rmse(pairs: list[tuple[float, float]]) -> float:
    """Root mean squared error over (predicted, actual) pairs."""
    if not pairs:
        raise ValueError("rmse of an empty list is undefined")
    arr = np.asarray(pairs, dtype=np.float64)
    return float(np.sqrt(np.mean((arr[:, 0] - arr[:, 1]) ** 2)))


def mae(pairs: list[tuple[float, float]]) -> float:
    """Mean absolute error over (predicted, actual) pairs."""
    if not pairs:
        raise ValueError("mae of an empty list is undefined")
    arr = np.asarray(pairs, dtype=np.float64)
    return float(np.mean(np.abs(arr[:, 0] - arr[:, 1])))


def gini(counts) -> float:
    """Gini concentration index over non-negative counts.

    Equals sum_ij |x_i - x_j| / (2 n^2 mean); 0 for a uniform distribution,
    approaching 1 as everything concentrates on one element.  Zero-count
    elements belong in the input: excluding them would mask coverage
    collapse.
    """
    x = np.asarray(counts, dtype=np.float64)
    if x.size == 0 or np.any(x < 0):
        raise ValueError("gini requires a non-empty list of non-negative counts")
    total = x.sum()
    if total == 0:
        raise ValueError("gini of all-zero counts is undefined")
    x = np.sort(x)
    n = x.size
    i = np.arange(1, n + 1)
    # sorted-form equivalent of the pairwise |x_i - x_j| double sum
    return float(((2.0 * i - n - 1.0) @ x) / (n * total))


def top_share(counts, fraction: float) -> float:
    """Share of total count held by the top ceil(fraction * n) elements."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0,1]: {fraction}")
    x = np.asarray(counts, dtype=np.float64)
    if x.size == 0:
        raise ValueError("top_share of an empty list is undefined")
    total = x.sum()
    if total == 0:
        raise ValueError("top_share of all-zero counts is undefined")
    k = math.ceil(fraction * x.size)
    top = np.sort(x)[::-1][:k]
    return float(top.sum() / total)


def popularity_lift(prev_popularity, rec_counts) -> float | None:
    """Spearman rank correlation between prior item popularity and current
    recommendation frequency (average-rank tie handling).

    Returns None when either ranking has zero variance: the correlation is
    undefined there and must not masquerade as 0.
    """
    x = np.asarray(prev_popularity, dtype=np.float64)
    y = np.asarray(rec_counts, dtype=np.float64)
    if x.size != y.size:
        raise ValueError(f"item universes differ: {x.size} vs {y.size}")
    if x.size < 2:
        raise ValueError("popularity_lift needs at least 2 items")
    if np.all(x == x[0]) or np.all(y == y[0]):
        return None
    rho = stats.spearmanr(x, y).statistic
    if math.isnan(rho):
        return None
    return float(rho)


def personalization_level(rec_lists: list[list[int]]) -> float | None:
    """Mean pairwise Jaccard distance between users' recommendation lists.

    0 means everyone sees the same list.  Fewer than two non-empty lists:
    undefined, returns None.
    """
    lists = [set(lst) for lst in rec_lists if lst]
    if len(lists) < 2:
        return None
    universe = sorted(set().union(*lists))
    col = {item: j for j, item in enumerate(universe)}
    m = np.zeros((len(lists), len(universe)), dtype=np.float64)
    for r, s in enumerate(lists):
        for item in s:
            m[r, col[item]] = 1.0
    inter = m @ m.T
    sizes = m.sum(axis=1)
    union = sizes[:, None] + sizes[None, :] - inter
    dist = 1.0 - inter / union
    iu = np.triu_indices(len(lists), k=1)
    return float(dist[iu].mean())


def catalog_coverage(recommended_items, active_items) -> float:
    """Fraction of the active catalog recommended at least once."""
    active = set(active_items)
    if not active:
        raise ValueError("catalog_coverage over an empty catalog is undefined")
    return len(set(recommended_items) & active) / len(active)


def mean_pairwise_distance(vectors: np.ndarray) -> float:
    """Mean pairwise cosine distance between rows (needs >= 2 rows).

    Zero vectors are treated as direction-free: their distance to anything
    is 1.  Cosine rather than Euclidean so the measure tracks content
    direction, not vector magnitude.
    """
    v = np.asarray(vectors, dtype=np.float64)
    if v.shape[0] < 2:
        raise ValueError("need at least 2 vectors")
    norms = np.linalg.norm(v, axis=1)
    unit = np.divide(v, norms[:, None], out=np.zeros_like(v), where=norms[:, None] > 0)
    n = v.shape[0]
    s = unit.sum(axis=0)
    # sum over pairs of cos(i,j) equals (|sum of units|^2 - sum |unit|^2)/2
    pair_cos = 0.5 * (float(s @ s) - float((unit * unit).sum()))
    n_pairs = n * (n - 1) / 2
    return 1.0 - pair_cos / n_pairs


def consumption_diversity(per_user_vectors: list[np.ndarray]) -> float | None:
    """Mean over users of the mean pairwise content distance within that
    user's consumed set; users with fewer than 2 consumed items are skipped."""
    vals = [mean_pairwise_distance(v) for v in per_user_vectors if v.shape[0] >= 2]
    if not vals:
        return None
    return float(np.mean(vals))


def trajectory_slope(epochs, values) -> float | None:
    """Least-squares slope of a metric series over epochs, ignoring missing
    values.  None when fewer than 2 points remain."""
    pts = [(e, v) for e, v in zip(epochs, values) if v is not None]
    if len(pts) < 2:
        return None
    x = np.asarray([p[0] for p in pts], dtype=np.float64)
    y = np.asarray([p[1] for p in pts], dtype=np.float64)
    if np.all(x == x[0]):
        return None
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)
