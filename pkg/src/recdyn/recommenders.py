"""Recommendation engines behind a uniform fit / predict / recommend /
assess contract.

Five algorithms: random scores, shrunk-popularity, user-based kNN with
Pearson similarity, matrix factorization trained by SGD, and a hybrid
that blends a personalized ranking with the popularity ranking.

Engines train on observed ratings only; true ratings and displayed
predictions never cross this boundary.
"""

from __future__ import annotations

import numpy as np

from . import kernels, metrics
from .domain import ConfigError, RatingDb


class NotFittedError(RuntimeError):
    """predict/recommend called before the first fit."""


# splitmix64 finalizer constants, used for stable per-(user, item) hashing
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _mix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        x = (x + _GOLDEN).astype(np.uint64)
        x ^= x >> np.uint64(30)
        x *= _MIX1
        x ^= x >> np.uint64(27)
        x *= _MIX2
        x ^= x >> np.uint64(31)
    return x


def _index_lookup(ids: np.ndarray) -> np.ndarray:
    """Dense id -> position table (-1 for unknown ids)."""
    table = np.full(int(ids.max()) + 1 if ids.size else 1, -1, dtype=np.int64)
    table[ids] = np.arange(ids.size)
    return table


def _lookup(table: np.ndarray, ids: np.ndarray) -> np.ndarray:
    """Positions for ids, -1 where unknown (including out-of-table ids)."""
    safe = np.minimum(ids, table.size - 1)
    return np.where(ids < table.size, table[safe], -1)


class Engine:
    """Shared contract: fit on a RatingDb, then score/rank active items."""

    name = "base"

    def __init__(self, rating_min: float, rating_max: float):
        self.rating_min = rating_min
        self.rating_max = rating_max
        self.fitted = False
        self.fitted_at_epoch: int | None = None
        self.training_db_size = 0

    # -- subclass surface ---------------------------------------------------

    def _fit(self, db: RatingDb, rng: np.random.Generator) -> None:
        raise NotImplementedError

    def _raw_score(self, user_id: int, item_ids: np.ndarray) -> np.ndarray:
        """Unclamped predicted ratings; also the default ranking score."""
        raise NotImplementedError

    # -- public contract ----------------------------------------------------

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.rating_min + self.rating_max)

    def _clamp(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.rating_min, self.rating_max)

    def fit(self, db: RatingDb, rng: np.random.Generator, epoch: int | None = None) -> None:
        self._fit(db, rng)
        self.fitted = True
        self.fitted_at_epoch = epoch
        self.training_db_size = len(db)

    def _check_fitted(self) -> None:
        if not self.fitted:
            raise NotFittedError(f"{self.name} engine used before fit()")

    def predict(self, user_id: int, item_id: int) -> float:
        self._check_fitted()
        raw = self._raw_score(user_id, np.asarray([item_id], dtype=np.int64))
        return float(self._clamp(raw)[0])

    def predict_many(self, user_id: int, item_ids: np.ndarray) -> np.ndarray:
        self._check_fitted()
        return self._clamp(self._raw_score(user_id, np.asarray(item_ids, dtype=np.int64)))

    def _ranking_score(self, user_id: int, item_ids: np.ndarray) -> np.ndarray:
        # Rank by the same value the user would be shown: the prediction
        # clamped to the rating scale.  Saturation at the scale ends is
        # deliberate — scores past the ceiling carry no extra information,
        # and the tie rule (ascending item_id) resolves the rest.
        return self._clamp(self._raw_score(user_id, item_ids))

    def recommend(
        self,
        user_id: int,
        n: int,
        exclusions: set[int],
        active_items: np.ndarray,
    ) -> list[tuple[int, float]]:
        """Top-n unconsumed active items with displayed predicted ratings.

        Ordered by ranking score descending, ties broken by ascending
        item_id.  The displayed prediction is always the (clamped)
        personalized prediction, even when the ranking score differs.
        """
        self._check_fitted()
        if n < 1:
            raise ValueError(f"recommendation list length must be >= 1: {n}")
        active = np.asarray(active_items, dtype=np.int64)
        if exclusions:
            excl = np.fromiter(exclusions, dtype=np.int64, count=len(exclusions))
            cands = active[~np.isin(active, excl)]
        else:
            cands = active
        if cands.size == 0:
            return []
        scores = self._ranking_score(user_id, cands)
        order = np.lexsort((cands, -scores))[:n]
        chosen = cands[order]
        shown = self._clamp(self._raw_score(user_id, chosen))
        return [(int(i), float(s)) for i, s in zip(chosen, shown)]

    def assess(self, holdout: list[tuple[int, int, float]]) -> tuple[float, float]:
        """(RMSE, MAE) of clamped predictions against the given truths."""
        self._check_fitted()
        if not holdout:
            raise ValueError("assess requires a non-empty holdout")
        pairs = [(self.predict(u, i), truth) for u, i, truth in holdout]
        return metrics.rmse(pairs), metrics.mae(pairs)


class RandomEngine(Engine):
    """Stable pseudo-random score per (user, item), reseeded at each fit."""

    name = "random"

    def _fit(self, db: RatingDb, rng: np.random.Generator) -> None:
        self._empty = len(db) == 0
        self._hash_seed = np.uint64(int(rng.integers(0, 2**63)))

    def _raw_score(self, user_id: int, item_ids: np.ndarray) -> np.ndarray:
        if self._empty:
            return np.full(item_ids.size, self.midpoint)
        h = _mix64(_mix64(np.uint64(user_id) ^ self._hash_seed) ^ item_ids.astype(np.uint64))
        unit = h.astype(np.float64) / float(2**64)
        return self.rating_min + unit * (self.rating_max - self.rating_min)


class MostPopularEngine(Engine):
    """Item mean rating shrunk toward the global mean with weight n/(n+s)."""

    name = "most_popular"

    def __init__(self, rating_min: float, rating_max: float, shrinkage: int = 5):
        super().__init__(rating_min, rating_max)
        if shrinkage < 0:
            raise ConfigError(f"shrinkage must be non-negative: {shrinkage}")
        self.shrinkage = shrinkage

    def _fit(self, db: RatingDb, rng: np.random.Generator) -> None:
        _, items, obs = db.to_arrays()
        self.global_mean = float(obs.mean()) if obs.size else self.midpoint
        if obs.size:
            uniq, inv = np.unique(items, return_inverse=True)
            counts = np.bincount(inv)
            sums = np.bincount(inv, weights=obs)
            shrunk = (sums + self.shrinkage * self.global_mean) / (counts + self.shrinkage)
            self._score_table = np.full(int(uniq.max()) + 1, self.global_mean)
            self._score_table[uniq] = shrunk
        else:
            self._score_table = np.full(1, self.global_mean)

    def _raw_score(self, user_id: int, item_ids: np.ndarray) -> np.ndarray:
        safe = np.minimum(item_ids, self._score_table.size - 1)
        return np.where(item_ids < self._score_table.size, self._score_table[safe], self.global_mean)


class UserKnnEngine(Engine):
    """User-based collaborative filtering with Pearson similarity.

    Similarity is computed over co-rated items and only counts when the
    overlap reaches min_overlap.  Each user's neighborhood is their top-k
    most similar users; a prediction aggregates the mean-centered ratings
    of the neighbors who rated the item.  Fallback chain: user mean, then
    item mean, then global mean.
    """

    name = "user_knn"

    def __init__(self, rating_min: float, rating_max: float, k: int = 20, min_overlap: int = 2):
        super().__init__(rating_min, rating_max)
        if k < 1:
            raise ConfigError(f"k must be >= 1: {k}")
        if min_overlap < 1:
            raise ConfigError(f"min_overlap must be >= 1: {min_overlap}")
        self.k = k
        self.min_overlap = min_overlap

    def _fit(self, db: RatingDb, rng: np.random.Generator) -> None:
        users, items, obs = db.to_arrays()
        self._empty = obs.size == 0
        if self._empty:
            self.global_mean = self.midpoint
            return
        self._uids = np.unique(users)
        self._iids = np.unique(items)
        self._urow_table = _index_lookup(self._uids)
        self._icol_table = _index_lookup(self._iids)
        nu, ni = self._uids.size, self._iids.size

        r = np.zeros((nu, ni))
        m = np.zeros((nu, ni))
        rows = self._urow_table[users]
        cols = self._icol_table[items]
        r[rows, cols] = obs
        m[rows, cols] = 1.0

        self.global_mean = float(obs.mean())
        n_rated = m.sum(axis=1)
        self._user_means = r.sum(axis=1) / n_rated
        item_n = m.sum(axis=0)
        with np.errstate(invalid="ignore"):
            self._item_means = np.where(item_n > 0, r.sum(axis=0) / np.maximum(item_n, 1), self.global_mean)

        # Pairwise Pearson on co-rated items via masked matrix products.
        x = r  # zeros where unrated, so every product below masks itself
        n_ov = m @ m.T
        sx = x @ m.T
        sxy = x @ x.T
        sxx = (x * x) @ m.T
        cov = n_ov * sxy - sx * sx.T
        var_x = n_ov * sxx - sx * sx
        denom2 = var_x * var_x.T
        with np.errstate(invalid="ignore", divide="ignore"):
            sim = cov / np.sqrt(denom2)
        valid = (n_ov >= self.min_overlap) & (denom2 > 0)
        np.fill_diagonal(valid, False)
        sim = np.clip(np.where(valid, sim, np.nan), -1.0, 1.0)

        # top-k neighborhood per user: highest similarity first, ties by
        # ascending user index (stable sort on descending keys)
        s_k = np.zeros((nu, nu))
        key = np.where(valid, sim, -np.inf)
        order = np.argsort(-key, axis=1, kind="stable")[:, : self.k]
        row_idx = np.repeat(np.arange(nu), order.shape[1])
        col_idx = order.ravel()
        keep = valid[row_idx, col_idx]
        s_k[row_idx[keep], col_idx[keep]] = sim[row_idx[keep], col_idx[keep]]

        centered = (r - self._user_means[:, None]) * m
        num = s_k @ centered
        den = np.abs(s_k) @ m
        with np.errstate(invalid="ignore", divide="ignore"):
            dev = np.where(den > 0, num / np.maximum(den, 1e-300), 0.0)
        self._pred = self._user_means[:, None] + dev

    def _raw_score(self, user_id: int, item_ids: np.ndarray) -> np.ndarray:
        if self._empty:
            return np.full(item_ids.size, self.midpoint)
        cols = _lookup(self._icol_table, item_ids)
        known = cols >= 0
        u = _lookup(self._urow_table, np.asarray([user_id], dtype=np.int64))[0]
        if u >= 0:
            return np.where(known, self._pred[u, np.maximum(cols, 0)], self._user_means[u])
        return np.where(known, self._item_means[np.maximum(cols, 0)], self.global_mean)


def mf_loss_and_grad(p, q, bu, bi, mu, users, items, ratings, reg):
    """Full-batch regularized squared loss and its analytic gradient.

    loss = sum(err^2) + reg * (|P|^2 + |Q|^2 + |bu|^2 + |bi|^2).
    Used by the finite-difference gradient check; the SGD kernel applies
    the matching per-sample half-gradient steps.
    """
    pred = mu + bu[users] + bi[items] + np.einsum("ij,ij->i", p[users], q[items])
    err = ratings - pred
    loss = float(err @ err + reg * (np.sum(p * p) + np.sum(q * q) + bu @ bu + bi @ bi))
    gp = 2.0 * reg * p
    gq = 2.0 * reg * q
    gbu = 2.0 * reg * bu
    gbi = 2.0 * reg * bi
    np.add.at(gp, users, -2.0 * err[:, None] * q[items])
    np.add.at(gq, items, -2.0 * err[:, None] * p[users])
    np.add.at(gbu, users, -2.0 * err)
    np.add.at(gbi, items, -2.0 * err)
    return loss, (gp, gq, gbu, gbi)


class FunkMfEngine(Engine):
    """Biased matrix factorization trained with per-sample SGD.

    The inner loop runs in the compiled kernel when available (see
    recdyn.kernels); both backends are arithmetic-identical.
    """

    name = "funk_mf"

    def __init__(
        self,
        rating_min: float,
        rating_max: float,
        latent_dim: int = 16,
        learning_rate: float = 0.01,
        regularization: float = 0.02,
        epochs_per_fit: int = 20,
    ):
        super().__init__(rating_min, rating_max)
        if latent_dim < 1:
            raise ConfigError(f"latent_dim must be >= 1: {latent_dim}")
        if learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive: {learning_rate}")
        if regularization < 0:
            raise ConfigError(f"regularization must be non-negative: {regularization}")
        if epochs_per_fit < 1:
            raise ConfigError(f"epochs_per_fit must be >= 1: {epochs_per_fit}")
        self.latent_dim = latent_dim
        self.learning_rate = learning_rate
        self.regularization = regularization
        self.epochs_per_fit = epochs_per_fit
        self.loss_history: list[float] = []

    def _fit(self, db: RatingDb, rng: np.random.Generator) -> None:
        users, items, obs = db.to_arrays()
        self._empty = obs.size == 0
        self.loss_history = []
        if self._empty:
            self.global_mean = self.midpoint
            return
        self._uids = np.unique(users)
        self._iids = np.unique(items)
        self._urow_table = _index_lookup(self._uids)
        self._icol_table = _index_lookup(self._iids)
        rows = self._urow_table[users]
        cols = self._icol_table[items]

        self.global_mean = float(obs.mean())
        d = self.latent_dim
        self._p = rng.normal(0.0, 0.1, (self._uids.size, d))
        self._q = rng.normal(0.0, 0.1, (self._iids.size, d))
        self._bu = np.zeros(self._uids.size)
        self._bi = np.zeros(self._iids.size)

        obs = np.ascontiguousarray(obs)
        for _ in range(self.epochs_per_fit):
            order = rng.permutation(obs.size).astype(np.int64)
            kernels.sgd_epoch(
                rows, cols, obs, order, self.global_mean,
                self._p, self._q, self._bu, self._bi,
                self.learning_rate, self.regularization,
            )
            loss, _ = mf_loss_and_grad(
                self._p, self._q, self._bu, self._bi, self.global_mean,
                rows, cols, obs, self.regularization,
            )
            self.loss_history.append(loss)

    def _raw_score(self, user_id: int, item_ids: np.ndarray) -> np.ndarray:
        if self._empty:
            return np.full(item_ids.size, self.midpoint)
        cols = _lookup(self._icol_table, item_ids)
        known = cols >= 0
        safe = np.maximum(cols, 0)
        u = _lookup(self._urow_table, np.asarray([user_id], dtype=np.int64))[0]
        out = np.full(item_ids.size, self.global_mean)
        if u >= 0:
            out += self._bu[u]
            out = np.where(known, out + self._bi[safe] + self._q[safe] @ self._p[u], out)
        else:
            out = np.where(known, out + self._bi[safe], out)
        return out


class HybridBlendEngine(Engine):
    """Blend of a personalized ranking and the popularity ranking.

    Ranking score = lam * norm(personalized) + (1 - lam) * norm(popularity),
    each min-max normalized over the candidate set.  Predictions (and the
    displayed rating) stay on the personalized engine's scale; the blend
    governs ranking only.
    """

    name = "hybrid"

    def __init__(self, rating_min: float, rating_max: float, blend_weight: float, base: Engine):
        super().__init__(rating_min, rating_max)
        if not 0.0 <= blend_weight <= 1.0:
            raise ConfigError(f"blend weight out of range [0,1]: {blend_weight}")
        self.blend_weight = blend_weight
        self.base = base
        self.popularity = MostPopularEngine(rating_min, rating_max)

    def _fit(self, db: RatingDb, rng: np.random.Generator) -> None:
        self.base.fit(db, rng)
        self.popularity.fit(db, rng)

    @staticmethod
    def _minmax(x: np.ndarray) -> np.ndarray:
        lo, hi = x.min(), x.max()
        if hi == lo:
            return np.full(x.size, 0.5)
        return (x - lo) / (hi - lo)

    def _raw_score(self, user_id: int, item_ids: np.ndarray) -> np.ndarray:
        return self.base._raw_score(user_id, item_ids)

    def _ranking_score(self, user_id: int, item_ids: np.ndarray) -> np.ndarray:
        pers = self._minmax(self._clamp(self.base._raw_score(user_id, item_ids)))
        pop = self._minmax(self._clamp(self.popularity._raw_score(user_id, item_ids)))
        return self.blend_weight * pers + (1.0 - self.blend_weight) * pop


def build_engine(config: dict, rating_min: float, rating_max: float) -> Engine:
    """Instantiate an engine from a resolved scenario engine config."""
    cfg = dict(config)
    name = cfg.pop("name")
    if name == "random":
        return RandomEngine(rating_min, rating_max)
    if name == "most_popular":
        return MostPopularEngine(rating_min, rating_max, **cfg)
    if name == "user_knn":
        return UserKnnEngine(rating_min, rating_max, **cfg)
    if name == "funk_mf":
        return FunkMfEngine(rating_min, rating_max, **cfg)
    if name == "hybrid":
        base = build_engine(cfg.pop("base"), rating_min, rating_max)
        return HybridBlendEngine(rating_min, rating_max, base=base, **cfg)
    raise ConfigError(f"unknown engine: {name!r}")
