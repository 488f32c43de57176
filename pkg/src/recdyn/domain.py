"""Core value types: users, items, ratings, and the hidden preference model.

Everything here is deterministic given explicit RNG streams.  The hidden
preference model is a latent-factor model: the true rating of user u for
item i is ``clamp(mu + p_u . q_i + b_i + noise)`` on a continuous scale.
Per-pair noise is derived from a counter-based seed so the hidden rating
matrix is fixed for a run without ever being materialized.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

# Named substream tags.  Every RNG in the simulator is derived from
# SeedSequence([root_seed, tag, *key]) so streams never collide and agent
# decisions are independent of iteration order.
STREAM_POPULATION = 1
STREAM_AGENT = 2
STREAM_ENGINE = 3
STREAM_CHURN = 4
STREAM_HOLDOUT = 5
STREAM_GT_NOISE = 6


def substream(seed: int, *key: int) -> np.random.Generator:
    """A fresh generator for the given (root seed, key) combination."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *key])))


class ConfigError(ValueError):
    """Invalid scenario or distribution parameters."""


@dataclass(frozen=True)
class DistSpec:
    """A configurable scalar distribution for per-agent parameters.

    kind is one of "const", "beta", "uniform".  Beta/uniform are restricted
    to [0, 1] because every heterogeneous agent parameter is a probability
    or a weight.
    """

    kind: str
    value: float = 0.0
    a: float = 2.0
    b: float = 2.0
    low: float = 0.0
    high: float = 1.0

    def __post_init__(self):
        if self.kind not in ("const", "beta", "uniform"):
            raise ConfigError(f"unknown distribution kind: {self.kind!r}")
        if self.kind == "const" and not 0.0 <= self.value <= 1.0:
            raise ConfigError(f"const distribution value out of [0,1]: {self.value}")
        if self.kind == "beta" and (self.a <= 0 or self.b <= 0):
            raise ConfigError(f"beta parameters must be positive: a={self.a}, b={self.b}")
        if self.kind == "uniform" and not 0.0 <= self.low <= self.high <= 1.0:
            raise ConfigError(f"uniform bounds must satisfy 0 <= low <= high <= 1: [{self.low}, {self.high}]")

    def sample(self, rng: np.random.Generator) -> float:
        if self.kind == "const":
            return self.value
        if self.kind == "beta":
            return float(rng.beta(self.a, self.b))
        return float(rng.uniform(self.low, self.high))

    def to_dict(self) -> dict:
        if self.kind == "const":
            return {"dist": "const", "value": self.value}
        if self.kind == "beta":
            return {"dist": "beta", "a": self.a, "b": self.b}
        return {"dist": "uniform", "low": self.low, "high": self.high}


@dataclass(frozen=True)
class LifespanSpec:
    """Lifespan distribution: fixed length or geometric with a floor."""

    kind: str  # "fixed" | "geometric"
    value: int = 1
    mean: float = 0.0
    floor: int = 1

    def __post_init__(self):
        if self.kind not in ("fixed", "geometric"):
            raise ConfigError(f"unknown lifespan kind: {self.kind!r}")
        if self.kind == "fixed" and self.value < 1:
            raise ConfigError(f"fixed lifespan must be >= 1: {self.value}")
        if self.kind == "geometric":
            if self.floor < 1:
                raise ConfigError(f"lifespan floor must be >= 1: {self.floor}")
            if self.mean <= self.floor:
                raise ConfigError(f"geometric lifespan mean must exceed floor: mean={self.mean}, floor={self.floor}")

    def sample(self, rng: np.random.Generator) -> int:
        if self.kind == "fixed":
            return self.value
        p = 1.0 / (self.mean - self.floor)
        return self.floor + int(rng.geometric(min(p, 1.0)))


@dataclass(frozen=True)
class ChoiceStrategy:
    """How a user picks items: follow recommendations, browse organically,
    or mix with probability w of consulting the recommendation list."""

    variant: str  # "rec_following" | "organic" | "mixed"
    w: float = 0.0

    def __post_init__(self):
        if self.variant not in ("rec_following", "organic", "mixed"):
            raise ConfigError(f"unknown choice strategy: {self.variant!r}")
        if not 0.0 <= self.w <= 1.0:
            raise ConfigError(f"choice-strategy weight w out of range [0,1]: {self.w}")

    @property
    def rec_prob(self) -> float:
        """Probability of consulting the recommendation list.

        The named variants are exact aliases: rec_following == mixed(1.0)
        and organic == mixed(0.0).
        """
        if self.variant == "rec_following":
            return 1.0
        if self.variant == "organic":
            return 0.0
        return self.w

    def to_dict(self) -> dict:
        if self.variant == "mixed":
            return {"strategy": "mixed", "w": self.w}
        return {"strategy": self.variant}


@dataclass(frozen=True)
class GroundTruth:
    """Parameters of the hidden preference model."""

    global_mean: float
    noise_std: float
    rating_min: float
    rating_max: float
    latent_dim: int

    def __post_init__(self):
        if self.noise_std < 0:
            raise ConfigError(f"noise_std must be non-negative: {self.noise_std}")
        if not self.rating_min < self.rating_max:
            raise ConfigError(f"rating scale empty: [{self.rating_min}, {self.rating_max}]")
        if self.latent_dim < 1:
            raise ConfigError(f"latent_dim must be >= 1: {self.latent_dim}")

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.rating_min + self.rating_max)

    def clamp(self, x: float) -> float:
        return min(self.rating_max, max(self.rating_min, x))


@dataclass
class UserProfile:
    user_id: int
    entry_epoch: int
    lifespan: int
    activity_prob: float
    pref_vector: np.ndarray
    choice_strategy: ChoiceStrategy
    feedback_prob: float
    anchor_weight: float

    def __post_init__(self):
        if self.entry_epoch < 0:
            raise ConfigError(f"entry_epoch must be non-negative: {self.entry_epoch}")
        if self.lifespan < 1:
            raise ConfigError(f"lifespan must be >= 1: {self.lifespan}")
        for name in ("activity_prob", "feedback_prob", "anchor_weight"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} out of range [0,1]: {v}")
        self.pref_vector = np.asarray(self.pref_vector, dtype=np.float64)
        if not np.all(np.isfinite(self.pref_vector)):
            raise ConfigError("pref_vector has non-finite entries")


@dataclass
class ItemProfile:
    item_id: int
    entry_epoch: int
    lifespan: int
    content_vector: np.ndarray
    quality_offset: float

    def __post_init__(self):
        if self.entry_epoch < 0:
            raise ConfigError(f"entry_epoch must be non-negative: {self.entry_epoch}")
        if self.lifespan < 1:
            raise ConfigError(f"lifespan must be >= 1: {self.lifespan}")
        self.content_vector = np.asarray(self.content_vector, dtype=np.float64)
        if not np.all(np.isfinite(self.content_vector)):
            raise ConfigError("content_vector has non-finite entries")


@dataclass(frozen=True)
class RatingRecord:
    """One submitted feedback rating.  true_rating is kept for metrics only
    and is never exposed to engines."""

    user_id: int
    item_id: int
    observed_rating: float
    true_rating: float
    epoch: int
    via_recommendation: bool
    shown_prediction: float | None


class RatingDb:
    """Append-only store of submitted ratings, indexed by user and item.

    This is the only preference data a recommender engine ever sees, and
    engines receive only the observed ratings (see :meth:`to_arrays`).
    """

    def __init__(self):
        self._records: list[RatingRecord] = []
        self._by_pair: dict[tuple[int, int], RatingRecord] = {}
        self._by_user: dict[int, list[RatingRecord]] = defaultdict(list)
        self._by_item: dict[int, list[RatingRecord]] = defaultdict(list)

    def add(self, record: RatingRecord) -> None:
        key = (record.user_id, record.item_id)
        if key in self._by_pair:
            raise ValueError(f"duplicate rating for (user={key[0]}, item={key[1]})")
        self._records.append(record)
        self._by_pair[key] = record
        self._by_user[record.user_id].append(record)
        self._by_item[record.item_id].append(record)

    def __len__(self) -> int:
        return len(self._records)

    def has(self, user_id: int, item_id: int) -> bool:
        return (user_id, item_id) in self._by_pair

    @property
    def records(self) -> list[RatingRecord]:
        return list(self._records)

    def user_records(self, user_id: int) -> list[RatingRecord]:
        return list(self._by_user.get(user_id, ()))

    def item_records(self, item_id: int) -> list[RatingRecord]:
        return list(self._by_item.get(item_id, ()))

    def to_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(user_ids, item_ids, observed_ratings) — the engine's view."""
        n = len(self._records)
        users = np.empty(n, dtype=np.int64)
        items = np.empty(n, dtype=np.int64)
        obs = np.empty(n, dtype=np.float64)
        for k, r in enumerate(self._records):
            users[k] = r.user_id
            items[k] = r.item_id
            obs[k] = r.observed_rating
        return users, items, obs


def true_rating(user: UserProfile, item: ItemProfile, gt: GroundTruth, noise_draw: float) -> float:
    """The user's true preference rating for the item, clamped to the scale.

    Pure in its inputs; noise sampling lives with the caller so the same
    (user, item) pair always maps to the same rating once its noise draw is
    fixed (see GroundTruthOracle).
    """
    p = user.pref_vector
    q = item.content_vector
    if p.shape != q.shape:
        raise ValueError(f"latent dimension mismatch: {p.shape} vs {q.shape}")
    raw = gt.global_mean + float(p @ q) + item.quality_offset + noise_draw
    return gt.clamp(raw)


class GroundTruthOracle:
    """Lazily materialized hidden rating matrix.

    The per-(user, item) noise draw is derived from a seed keyed by the pair
    itself, so values are independent of query order and the full |U| x |I|
    matrix never needs to exist.
    """

    def __init__(self, gt: GroundTruth, seed: int):
        self.gt = gt
        self._seed = seed
        self._noise_cache: dict[tuple[int, int], float] = {}

    def noise(self, user_id: int, item_id: int) -> float:
        key = (user_id, item_id)
        cached = self._noise_cache.get(key)
        if cached is None:
            if self.gt.noise_std > 0:
                rng = substream(self._seed, STREAM_GT_NOISE, user_id, item_id)
                cached = float(rng.normal(0.0, self.gt.noise_std))
            else:
                cached = 0.0
            self._noise_cache[key] = cached
        return cached

    def true_rating(self, user: UserProfile, item: ItemProfile) -> float:
        return true_rating(user, item, self.gt, self.noise(user.user_id, item.item_id))


@dataclass(frozen=True)
class PopulationParams:
    """Everything needed to draw users, items and the hidden model."""

    n_users: int
    n_items: int
    latent_dim: int
    factor_std: float
    bias_std: float
    global_mean: float
    noise_std: float
    rating_min: float
    rating_max: float
    activity: DistSpec
    feedback: DistSpec
    anchor: DistSpec
    choice: ChoiceStrategy
    user_lifespan: LifespanSpec
    item_lifespan: LifespanSpec

    def __post_init__(self):
        if self.n_users < 1 or self.n_items < 1:
            raise ConfigError(f"population sizes must be >= 1: users={self.n_users}, items={self.n_items}")
        if self.latent_dim < 1:
            raise ConfigError(f"latent_dim must be >= 1: {self.latent_dim}")
        if self.factor_std < 0 or self.bias_std < 0:
            raise ConfigError("factor_std and bias_std must be non-negative")


def make_user(params: PopulationParams, rng: np.random.Generator, user_id: int, entry_epoch: int) -> UserProfile:
    return UserProfile(
        user_id=user_id,
        entry_epoch=entry_epoch,
        lifespan=params.user_lifespan.sample(rng),
        activity_prob=params.activity.sample(rng),
        pref_vector=rng.normal(0.0, params.factor_std, params.latent_dim) if params.factor_std > 0
        else np.zeros(params.latent_dim),
        choice_strategy=params.choice,
        feedback_prob=params.feedback.sample(rng),
        anchor_weight=params.anchor.sample(rng),
    )


def make_item(params: PopulationParams, rng: np.random.Generator, item_id: int, entry_epoch: int) -> ItemProfile:
    return ItemProfile(
        item_id=item_id,
        entry_epoch=entry_epoch,
        lifespan=params.item_lifespan.sample(rng),
        content_vector=rng.normal(0.0, params.factor_std, params.latent_dim) if params.factor_std > 0
        else np.zeros(params.latent_dim),
        quality_offset=float(rng.normal(0.0, params.bias_std)) if params.bias_std > 0 else 0.0,
    )


def generate_population(
    params: PopulationParams, rng: np.random.Generator
) -> tuple[list[UserProfile], list[ItemProfile], GroundTruth]:
    """Draw the initial user population, item catalog and hidden model."""
    users = [make_user(params, rng, uid, 0) for uid in range(params.n_users)]
    items = [make_item(params, rng, iid, 0) for iid in range(params.n_items)]
    gt = GroundTruth(
        global_mean=params.global_mean,
        noise_std=params.noise_std,
        rating_min=params.rating_min,
        rating_max=params.rating_max,
        latent_dim=params.latent_dim,
    )
    return users, items, gt
