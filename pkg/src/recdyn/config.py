"""Scenario configuration: defaults, strict validation, JSON parsing.

Scenario files are JSON.  Parsing is strict: unknown keys are rejected by
name so sweep overrides cannot silently misconfigure a run.  The resolved
scenario (all defaults expanded) is what gets echoed into run manifests.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, replace
from pathlib import Path

from .domain import ChoiceStrategy, ConfigError, DistSpec, LifespanSpec, PopulationParams


class ScenarioError(ConfigError):
    """Invalid scenario file or scenario value."""


ENGINE_DEFAULTS: dict[str, dict] = {
    "random": {},
    "most_popular": {"shrinkage": 5},
    "user_knn": {"k": 20, "min_overlap": 2},
    "funk_mf": {"latent_dim": 16, "learning_rate": 0.01, "regularization": 0.02, "epochs_per_fit": 20},
    "hybrid": {"blend_weight": 0.5, "base": {"name": "user_knn"}},
}

_DIST_KEYS = {"const": {"value"}, "beta": {"a", "b"}, "uniform": {"low", "high"}}


def _default_dict() -> dict:
    return {
        "seed": None,
        "horizon": None,
        "n_users": None,
        "n_items": None,
        "engine": None,
        "latent_dim": 4,
        "factor_std": 0.7,
        "bias_std": 0.2,
        "noise_std": 0.2,
        "rating_min": 1.0,
        "rating_max": 5.0,
        "global_mean": 3.0,
        "round_ratings": False,
        "feedback_noise_std": 0.0,
        "activity": {"dist": "beta", "a": 2.0, "b": 2.0},
        "feedback": {"dist": "const", "value": 1.0},
        "anchor": {"dist": "const", "value": 1.0},
        "choice": {"strategy": "rec_following"},
        "rank_discount": "inverse",
        "churn": {
            "enabled": False,
            "user_lifespan_mean": 60.0,
            "item_lifespan_mean": 120.0,
            "lifespan_floor": 5,
        },
        "bootstrap_ratings_per_user": 5,
        "rec_list_size": 10,
        "retrain_every": 1,
        "holdout_size": 200,
    }


REQUIRED_KEYS = ("seed", "horizon", "n_users", "n_items", "engine")


@dataclass(frozen=True)
class ChurnConfig:
    enabled: bool
    user_lifespan_mean: float
    item_lifespan_mean: float
    lifespan_floor: int

    def to_dict(self) -> dict:
        return {
            "enabled": self.enabled,
            "user_lifespan_mean": self.user_lifespan_mean,
            "item_lifespan_mean": self.item_lifespan_mean,
            "lifespan_floor": self.lifespan_floor,
        }


@dataclass(frozen=True)
class Scenario:
    seed: int
    horizon: int
    n_users: int
    n_items: int
    engine: dict
    latent_dim: int
    factor_std: float
    bias_std: float
    noise_std: float
    rating_min: float
    rating_max: float
    global_mean: float
    round_ratings: bool
    feedback_noise_std: float
    activity: DistSpec
    feedback: DistSpec
    anchor: DistSpec
    choice: ChoiceStrategy
    rank_discount: str
    churn: ChurnConfig
    bootstrap_ratings_per_user: int
    rec_list_size: int
    retrain_every: int
    holdout_size: int

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, seed=seed)

    def population_params(self) -> PopulationParams:
        if self.churn.enabled:
            user_ls = LifespanSpec("geometric", mean=self.churn.user_lifespan_mean, floor=self.churn.lifespan_floor)
            item_ls = LifespanSpec("geometric", mean=self.churn.item_lifespan_mean, floor=self.churn.lifespan_floor)
        else:
            never = self.horizon + 1
            user_ls = LifespanSpec("fixed", value=never)
            item_ls = LifespanSpec("fixed", value=never)
        return PopulationParams(
            n_users=self.n_users,
            n_items=self.n_items,
            latent_dim=self.latent_dim,
            factor_std=self.factor_std,
            bias_std=self.bias_std,
            global_mean=self.global_mean,
            noise_std=self.noise_std,
            rating_min=self.rating_min,
            rating_max=self.rating_max,
            activity=self.activity,
            feedback=self.feedback,
            anchor=self.anchor,
            choice=self.choice,
            user_lifespan=user_ls,
            item_lifespan=item_ls,
        )

    def to_dict(self) -> dict:
        """Fully resolved scenario, suitable for manifests and round trips."""
        return {
            "seed": self.seed,
            "horizon": self.horizon,
            "n_users": self.n_users,
            "n_items": self.n_items,
            "engine": copy.deepcopy(self.engine),
            "latent_dim": self.latent_dim,
            "factor_std": self.factor_std,
            "bias_std": self.bias_std,
            "noise_std": self.noise_std,
            "rating_min": self.rating_min,
            "rating_max": self.rating_max,
            "global_mean": self.global_mean,
            "round_ratings": self.round_ratings,
            "feedback_noise_std": self.feedback_noise_std,
            "activity": self.activity.to_dict(),
            "feedback": self.feedback.to_dict(),
            "anchor": self.anchor.to_dict(),
            "choice": self.choice.to_dict(),
            "rank_discount": self.rank_discount,
            "churn": self.churn.to_dict(),
            "bootstrap_ratings_per_user": self.bootstrap_ratings_per_user,
            "rec_list_size": self.rec_list_size,
            "retrain_every": self.retrain_every,
            "holdout_size": self.holdout_size,
        }


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ScenarioError(msg)


def _check_number(d: dict, key: str, lo=None, hi=None, integer=False, strict_lo=False):
    v = d[key]
    _require(isinstance(v, (int, float)) and not isinstance(v, bool), f"key '{key}' must be a number, got {v!r}")
    if integer:
        _require(float(v).is_integer(), f"key '{key}' must be an integer, got {v!r}")
        v = int(v)
    if lo is not None:
        if strict_lo:
            _require(v > lo, f"key '{key}' out of range: {v} (must be > {lo})")
        else:
            _require(v >= lo, f"key '{key}' out of range: {v} (must be >= {lo})")
    if hi is not None:
        _require(v <= hi, f"key '{key}' out of range: {v} (must be <= {hi})")
    return v


def _parse_dist(d, context: str) -> DistSpec:
    _require(isinstance(d, dict), f"key '{context}' must be an object")
    _require("dist" in d, f"key '{context}' must name a 'dist'")
    kind = d["dist"]
    _require(kind in _DIST_KEYS, f"key '{context}.dist' unknown distribution: {kind!r}")
    allowed = _DIST_KEYS[kind] | {"dist"}
    for k in d:
        _require(k in allowed, f"unknown scenario key: '{context}.{k}'")
    for k in _DIST_KEYS[kind]:
        _require(k in d, f"missing key '{context}.{k}' for {kind} distribution")
    try:
        if kind == "const":
            return DistSpec("const", value=float(d["value"]))
        if kind == "beta":
            return DistSpec("beta", a=float(d["a"]), b=float(d["b"]))
        return DistSpec("uniform", low=float(d["low"]), high=float(d["high"]))
    except ConfigError as e:
        raise ScenarioError(f"key '{context}': {e}") from e


def _parse_choice(d) -> ChoiceStrategy:
    _require(isinstance(d, dict), "key 'choice' must be an object")
    _require("strategy" in d, "key 'choice' must name a 'strategy'")
    strategy = d["strategy"]
    _require(
        strategy in ("rec_following", "organic", "mixed"),
        f"key 'choice.strategy' unknown strategy: {strategy!r}",
    )
    if strategy == "mixed":
        for k in d:
            _require(k in ("strategy", "w"), f"unknown scenario key: 'choice.{k}'")
        _require("w" in d, "key 'choice.w' is required for the mixed strategy")
        w = _check_number(d, "w", integer=False)
        _require(0.0 <= w <= 1.0, f"key 'choice.w' out of range [0,1]: {w}")
        return ChoiceStrategy("mixed", w=float(w))
    for k in d:
        _require(k == "strategy", f"unknown scenario key: 'choice.{k}'")
    return ChoiceStrategy(strategy)


def _parse_engine(d, context: str = "engine") -> dict:
    _require(isinstance(d, dict), f"key '{context}' must be an object")
    _require("name" in d, f"key '{context}' must name an algorithm via 'name'")
    name = d["name"]
    _require(name in ENGINE_DEFAULTS, f"key '{context}.name' unknown engine: {name!r}")
    defaults = copy.deepcopy(ENGINE_DEFAULTS[name])
    for k in d:
        _require(k == "name" or k in defaults, f"unknown scenario key: '{context}.{k}'")
    resolved = {"name": name, **defaults, **{k: v for k, v in d.items() if k != "name"}}
    if name == "most_popular":
        resolved["shrinkage"] = _check_number(resolved, "shrinkage", lo=0, integer=True)
    elif name == "user_knn":
        resolved["k"] = _check_number(resolved, "k", lo=1, integer=True)
        resolved["min_overlap"] = _check_number(resolved, "min_overlap", lo=1, integer=True)
    elif name == "funk_mf":
        resolved["latent_dim"] = _check_number(resolved, "latent_dim", lo=1, integer=True)
        resolved["learning_rate"] = float(_check_number(resolved, "learning_rate", lo=0, strict_lo=True))
        resolved["regularization"] = float(_check_number(resolved, "regularization", lo=0))
        resolved["epochs_per_fit"] = _check_number(resolved, "epochs_per_fit", lo=1, integer=True)
    elif name == "hybrid":
        bw = _check_number(resolved, "blend_weight")
        _require(0.0 <= bw <= 1.0, f"key '{context}.blend_weight' out of range [0,1]: {bw}")
        resolved["blend_weight"] = float(bw)
        base = resolved["base"]
        _require(
            isinstance(base, dict) and base.get("name") in ("user_knn", "funk_mf"),
            f"key '{context}.base' must be a user_knn or funk_mf engine",
        )
        resolved["base"] = _parse_engine(base, context=f"{context}.base")
    return resolved


def scenario_from_dict(raw: dict) -> Scenario:
    """Build a validated Scenario from a (possibly partial) plain dict."""
    _require(isinstance(raw, dict), "scenario must be a JSON object")
    defaults = _default_dict()
    for k in raw:
        _require(k in defaults, f"unknown scenario key: '{k}'")
    for k in REQUIRED_KEYS:
        _require(k in raw and raw[k] is not None, f"missing required scenario key: '{k}'")

    d = {**defaults, **raw}

    seed = _check_number(d, "seed", lo=0, integer=True)
    horizon = _check_number(d, "horizon", lo=1, integer=True)
    n_users = _check_number(d, "n_users", lo=1, integer=True)
    n_items = _check_number(d, "n_items", lo=1, integer=True)
    latent_dim = _check_number(d, "latent_dim", lo=1, integer=True)
    factor_std = float(_check_number(d, "factor_std", lo=0))
    bias_std = float(_check_number(d, "bias_std", lo=0))
    noise_std = float(_check_number(d, "noise_std", lo=0))
    rating_min = float(_check_number(d, "rating_min"))
    rating_max = float(_check_number(d, "rating_max"))
    _require(rating_min < rating_max, f"key 'rating_max' must exceed rating_min: [{rating_min}, {rating_max}]")
    global_mean = float(_check_number(d, "global_mean"))
    _require(isinstance(d["round_ratings"], bool), "key 'round_ratings' must be a boolean")
    feedback_noise_std = float(_check_number(d, "feedback_noise_std", lo=0))
    _require(
        d["rank_discount"] in ("inverse", "uniform"),
        f"key 'rank_discount' must be 'inverse' or 'uniform': {d['rank_discount']!r}",
    )

    ch = d["churn"]
    _require(isinstance(ch, dict), "key 'churn' must be an object")
    ch_defaults = defaults["churn"]
    for k in ch:
        _require(k in ch_defaults, f"unknown scenario key: 'churn.{k}'")
    ch = {**ch_defaults, **ch}
    _require(isinstance(ch["enabled"], bool), "key 'churn.enabled' must be a boolean")
    floor = _check_number(ch, "lifespan_floor", lo=1, integer=True)
    u_mean = float(_check_number(ch, "user_lifespan_mean", lo=0, strict_lo=True))
    i_mean = float(_check_number(ch, "item_lifespan_mean", lo=0, strict_lo=True))
    if ch["enabled"]:
        _require(u_mean > floor, f"key 'churn.user_lifespan_mean' must exceed the floor: {u_mean} <= {floor}")
        _require(i_mean > floor, f"key 'churn.item_lifespan_mean' must exceed the floor: {i_mean} <= {floor}")
    churn_cfg = ChurnConfig(ch["enabled"], u_mean, i_mean, floor)

    return Scenario(
        seed=seed,
        horizon=horizon,
        n_users=n_users,
        n_items=n_items,
        engine=_parse_engine(d["engine"]),
        latent_dim=latent_dim,
        factor_std=factor_std,
        bias_std=bias_std,
        noise_std=noise_std,
        rating_min=rating_min,
        rating_max=rating_max,
        global_mean=global_mean,
        round_ratings=d["round_ratings"],
        feedback_noise_std=feedback_noise_std,
        activity=_parse_dist(d["activity"], "activity"),
        feedback=_parse_dist(d["feedback"], "feedback"),
        anchor=_parse_dist(d["anchor"], "anchor"),
        choice=_parse_choice(d["choice"]),
        rank_discount=d["rank_discount"],
        churn=churn_cfg,
        bootstrap_ratings_per_user=_check_number(d, "bootstrap_ratings_per_user", lo=0, integer=True),
        rec_list_size=_check_number(d, "rec_list_size", lo=1, integer=True),
        retrain_every=_check_number(d, "retrain_every", lo=1, integer=True),
        holdout_size=_check_number(d, "holdout_size", lo=0, integer=True),
    )


def parse_scenario(path: str | Path) -> Scenario:
    """Parse and validate a scenario JSON file."""
    path = Path(path)
    if not path.is_file():
        raise ScenarioError(f"scenario file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ScenarioError(f"malformed scenario file {path}: {e}") from e
    return scenario_from_dict(raw)
