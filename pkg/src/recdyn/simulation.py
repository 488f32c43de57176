"""Discrete-time scheduler: initialize, per-epoch consumption / feedback /
churn / refit / recommend / measure.

Epochs are synchronous.  Within an epoch all agent decisions draw from
per-user substreams and organic popularity weights are frozen at the epoch
start, so results do not depend on the order users are evaluated in;
commits happen in ascending user_id regardless.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import agents, metrics
from .config import Scenario
from .domain import (
    STREAM_AGENT,
    STREAM_CHURN,
    STREAM_ENGINE,
    STREAM_HOLDOUT,
    STREAM_POPULATION,
    GroundTruthOracle,
    ItemProfile,
    RatingDb,
    RatingRecord,
    UserProfile,
    generate_population,
    make_item,
    make_user,
    substream,
)
from .metrics import MetricRow
from .recommenders import Engine, build_engine


class InvariantViolation(RuntimeError):
    """An internal simulation invariant failed; the run is aborted."""


@dataclass
class EpochLog:
    epoch: int
    events: list[dict]
    churn_events: list[dict]
    metric_row: MetricRow


@dataclass
class RunResult:
    """Full record of one run: scenario echo, per-epoch metrics, event log."""

    scenario: dict
    seed: int
    metrics: list[MetricRow]
    events: list[dict]

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "metrics": [m.to_dict() for m in self.metrics],
            "events": self.events,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunResult":
        return cls(
            scenario=d["scenario"],
            seed=d["seed"],
            metrics=[MetricRow.from_dict(m) for m in d["metrics"]],
            events=d["events"],
        )


@dataclass
class SimState:
    scenario: Scenario
    epoch: int
    users: dict[int, UserProfile]
    items: dict[int, ItemProfile]
    oracle: GroundTruthOracle
    db: RatingDb
    engine: Engine
    current_recs: dict[int, list[tuple[int, float]]]
    consumed: dict[int, set[int]]
    consumption_counts: dict[int, int]
    agent_rngs: dict[int, np.random.Generator]
    churn_rng: np.random.Generator
    next_user_id: int
    next_item_id: int
    fit_count: int = 0
    prev_epoch_counts: dict[int, int] = field(default_factory=dict)
    bootstrap_events: list[dict] = field(default_factory=list)
    # incremental consumption-diversity state per user: count, sum of unit
    # content vectors, and sum of their squared norms (0 for zero vectors);
    # together these give the exact mean pairwise cosine distance
    _div_n: dict[int, int] = field(default_factory=dict)
    _div_unit_sum: dict[int, np.ndarray] = field(default_factory=dict)
    _div_unit_sq: dict[int, float] = field(default_factory=dict)

    def active_users(self, epoch: int) -> list[int]:
        return sorted(u for u, p in self.users.items() if agents.is_active(p, epoch))

    def active_items(self, epoch: int) -> np.ndarray:
        return np.asarray(sorted(i for i, p in self.items.items() if agents.is_active(p, epoch)), dtype=np.int64)

    def agent_rng(self, user_id: int) -> np.random.Generator:
        rng = self.agent_rngs.get(user_id)
        if rng is None:
            rng = substream(self.scenario.seed, STREAM_AGENT, user_id)
            self.agent_rngs[user_id] = rng
        return rng


def _record_consumption(state: SimState, user_id: int, item_id: int) -> None:
    consumed = state.consumed[user_id]
    if item_id in consumed:
        raise InvariantViolation(f"user {user_id} consumed item {item_id} twice")
    consumed.add(item_id)
    state.consumption_counts[item_id] = state.consumption_counts.get(item_id, 0) + 1
    # incremental cosine-diversity bookkeeping
    q = state.items[item_id].content_vector
    norm = float(np.linalg.norm(q))
    unit = q / norm if norm > 0 else np.zeros_like(q)
    if user_id in state._div_n:
        state._div_n[user_id] += 1
        state._div_unit_sum[user_id] = state._div_unit_sum[user_id] + unit
        state._div_unit_sq[user_id] += float(unit @ unit)
    else:
        state._div_n[user_id] = 1
        state._div_unit_sum[user_id] = unit.copy()
        state._div_unit_sq[user_id] = float(unit @ unit)


def _feedback_noise(state: SimState, rng: np.random.Generator) -> float:
    std = state.scenario.feedback_noise_std
    return float(rng.normal(0.0, std)) if std > 0 else 0.0


def _submit(state: SimState, ev: agents.ConsumptionEvent, observed: float, true_r: float) -> None:
    state.db.add(
        RatingRecord(
            user_id=ev.user_id,
            item_id=ev.item_id,
            observed_rating=observed,
            true_rating=true_r,
            epoch=ev.epoch,
            via_recommendation=ev.via_recommendation,
            shown_prediction=ev.shown_prediction,
        )
    )


def _maybe_round(state: SimState, rating: float) -> float:
    if state.scenario.round_ratings:
        return state.oracle.gt.clamp(float(round(rating)))
    return rating


def _refit(state: SimState) -> None:
    rng = substream(state.scenario.seed, STREAM_ENGINE, state.fit_count)
    state.engine.fit(state.db, rng, epoch=state.epoch)
    state.fit_count += 1


def _compute_recs(state: SimState, epoch: int) -> dict[int, list[tuple[int, float]]]:
    """Recommendation lists for every user active at `epoch`, over items
    active at `epoch`, excluding each user's consumed set."""
    active_items = state.active_items(epoch)
    recs: dict[int, list[tuple[int, float]]] = {}
    for uid in state.active_users(epoch):
        consumed = state.consumed[uid]
        lst = state.engine.recommend(uid, state.scenario.rec_list_size, consumed, active_items)
        for iid, _ in lst:
            if iid in consumed:
                raise InvariantViolation(f"consumed item {iid} recommended to user {uid}")
        recs[uid] = lst
    return recs


def _holdout_assess(state: SimState, epoch: int) -> tuple[float | None, float | None]:
    """Score the engine against hidden ground truth on a fresh sample of
    (active user, active unconsumed item) pairs."""
    size = state.scenario.holdout_size
    if size < 1:
        return None, None
    rng = substream(state.scenario.seed, STREAM_HOLDOUT, epoch)
    users = state.active_users(epoch)
    items = state.active_items(epoch)
    if not users or items.size == 0:
        return None, None
    item_set = set(int(i) for i in items)
    pairs: list[tuple[float, float]] = []
    avail_cache: dict[int, list[int]] = {}
    for _ in range(size):
        uid = users[int(rng.integers(0, len(users)))]
        avail = avail_cache.get(uid)
        if avail is None:
            avail = sorted(item_set - state.consumed[uid])
            avail_cache[uid] = avail
        if not avail:
            continue
        iid = avail[int(rng.integers(0, len(avail)))]
        truth = state.oracle.true_rating(state.users[uid], state.items[iid])
        pairs.append((state.engine.predict(uid, iid), truth))
    if not pairs:
        return None, None
    return metrics.rmse(pairs), metrics.mae(pairs)


def _metric_row(
    state: SimState,
    epoch: int,
    served: dict[int, list[tuple[int, float]]],
    epoch_counts: dict[int, int],
) -> MetricRow:
    active_items = state.active_items(epoch)
    active_users = state.active_users(epoch)
    item_list = [int(i) for i in active_items]

    cum_counts = np.asarray([state.consumption_counts.get(i, 0) for i in item_list], dtype=np.float64)
    rec_counts: dict[int, int] = {}
    for lst in served.values():
        for iid, _ in lst:
            rec_counts[iid] = rec_counts.get(iid, 0) + 1
    rec_vec = np.asarray([rec_counts.get(i, 0) for i in item_list], dtype=np.float64)
    prev_vec = np.asarray([state.prev_epoch_counts.get(i, 0) for i in item_list], dtype=np.float64)

    gini_consumption = metrics.gini(cum_counts) if cum_counts.sum() > 0 else None
    gini_recommendation = metrics.gini(rec_vec) if rec_vec.sum() > 0 else None
    share = metrics.top_share(cum_counts, 0.1) if cum_counts.sum() > 0 else None
    if item_list and rec_counts:
        lift = metrics.popularity_lift(prev_vec, rec_vec) if len(item_list) >= 2 else None
    else:
        lift = None
    coverage = metrics.catalog_coverage(rec_counts.keys(), item_list) if item_list else None
    pers = metrics.personalization_level([[iid for iid, _ in served[u]] for u in sorted(served)])

    div_vals = []
    for uid in active_users:
        n = state._div_n.get(uid, 0)
        if n >= 2:
            s = state._div_unit_sum[uid]
            pair_cos = 0.5 * (float(s @ s) - state._div_unit_sq[uid])
            div_vals.append(1.0 - pair_cos / (n * (n - 1) / 2))
    diversity = float(np.mean(div_vals)) if div_vals else None

    rmse, mae = _holdout_assess(state, epoch)

    row = MetricRow(
        epoch=epoch,
        rmse=rmse,
        mae=mae,
        gini_consumption=gini_consumption,
        gini_recommendation=gini_recommendation,
        catalog_coverage=coverage,
        top_share=share,
        popularity_lift=lift,
        personalization_level=pers,
        mean_consumption_diversity=diversity,
        db_size=len(state.db),
        active_users=len(active_users),
        active_items=len(item_list),
    )
    _check_row_ranges(row)
    return row


def _check_row_ranges(row: MetricRow) -> None:
    bounds = {
        "gini_consumption": (0.0, 1.0),
        "gini_recommendation": (0.0, 1.0),
        "catalog_coverage": (0.0, 1.0),
        "top_share": (0.0, 1.0),
        "popularity_lift": (-1.0, 1.0),
        "personalization_level": (0.0, 1.0),
    }
    eps = 1e-9
    for name, (lo, hi) in bounds.items():
        v = getattr(row, name)
        if v is not None and not (lo - eps <= v <= hi + eps):
            raise InvariantViolation(f"metric {name}={v} outside [{lo}, {hi}] at epoch {row.epoch}")


def initialize(scenario: Scenario) -> SimState:
    """Generate the population, run the organic bootstrap phase, fit the
    engine once and compute the initial recommendation lists."""
    rng_pop = substream(scenario.seed, STREAM_POPULATION)
    users, items, gt = generate_population(scenario.population_params(), rng_pop)
    state = SimState(
        scenario=scenario,
        epoch=0,
        users={u.user_id: u for u in users},
        items={i.item_id: i for i in items},
        oracle=GroundTruthOracle(gt, scenario.seed),
        db=RatingDb(),
        engine=build_engine(scenario.engine, scenario.rating_min, scenario.rating_max),
        current_recs={},
        consumed={u.user_id: set() for u in users},
        consumption_counts={},
        agent_rngs={},
        churn_rng=substream(scenario.seed, STREAM_CHURN),
        next_user_id=len(users),
        next_item_id=len(items),
    )

    # Bootstrap: organic-only consumption that seeds the rating database.
    # Feedback is forced so the initial db is trainable.
    active_items = state.active_items(0)
    counts_vec = np.zeros(state.next_item_id)
    for uid in state.active_users(0):
        user = state.users[uid]
        rng = state.agent_rng(uid)
        for _ in range(scenario.bootstrap_ratings_per_user):
            consumed = state.consumed[uid]
            if consumed:
                excl = np.fromiter(consumed, dtype=np.int64, count=len(consumed))
                avail = active_items[~np.isin(active_items, excl)]
            else:
                avail = active_items
            if avail.size == 0:
                break
            weights = 1.0 + counts_vec[avail]
            ev = agents.choose_item(
                user, [], avail, weights, 0, rng, scenario.rank_discount
            )
            if ev is None:
                break
            true_r = state.oracle.true_rating(user, state.items[ev.item_id])
            observed = _maybe_round(
                state,
                agents.observed_rating(true_r, None, user.anchor_weight, _feedback_noise(state, rng), gt),
            )
            _record_consumption(state, uid, ev.item_id)
            counts_vec[ev.item_id] += 1.0
            _submit(state, ev, observed, true_r)
            state.bootstrap_events.append(
                {
                    "type": "bootstrap_consumption",
                    "epoch": 0,
                    "user_id": uid,
                    "item_id": ev.item_id,
                    "via_recommendation": False,
                    "shown_prediction": None,
                    "true_rating": true_r,
                    "observed_rating": observed,
                    "feedback_submitted": True,
                }
            )

    state.prev_epoch_counts = dict(state.consumption_counts)
    _refit(state)
    state.current_recs = _compute_recs(state, 0)
    return state


def churn(state: SimState) -> tuple[SimState, list[dict]]:
    """Retire users/items whose lifespan ends at the next epoch and, when
    replacement is enabled, spawn one replacement per retirement."""
    next_epoch = state.epoch + 1
    events: list[dict] = []
    cfg = state.scenario.churn
    params = state.scenario.population_params()

    for uid in sorted(state.users):
        p = state.users[uid]
        if p.entry_epoch + p.lifespan == next_epoch:
            events.append({"type": "churn", "epoch": state.epoch, "kind": "user_retired", "id": uid})
            if cfg.enabled:
                new = make_user(params, state.churn_rng, state.next_user_id, next_epoch)
                state.users[new.user_id] = new
                state.consumed[new.user_id] = set()
                state.next_user_id += 1
                events.append({"type": "churn", "epoch": state.epoch, "kind": "user_spawned", "id": new.user_id})
    for iid in sorted(state.items):
        p = state.items[iid]
        if p.entry_epoch + p.lifespan == next_epoch:
            events.append({"type": "churn", "epoch": state.epoch, "kind": "item_retired", "id": iid})
            if cfg.enabled:
                new = make_item(params, state.churn_rng, state.next_item_id, next_epoch)
                state.items[new.item_id] = new
                state.next_item_id += 1
                events.append({"type": "churn", "epoch": state.epoch, "kind": "item_spawned", "id": new.item_id})
    return state, events


def step(state: SimState) -> tuple[SimState, EpochLog]:
    """One synchronous epoch: consumption, feedback, churn, refit,
    new recommendations, metrics."""
    t = state.epoch
    if t >= state.scenario.horizon:
        raise ValueError(f"epoch {t} beyond horizon {state.scenario.horizon}")
    scenario = state.scenario
    db_size_before = len(state.db)

    active_items = state.active_items(t)
    active_set = set(int(i) for i in active_items)
    # pools and weights frozen at epoch start: agent decisions are
    # order-independent
    counts_vec = np.zeros(state.next_item_id)
    for iid, c in state.consumption_counts.items():
        counts_vec[iid] = c

    # recommendation lists as actually offered this epoch (active items,
    # nothing the user has consumed by epoch start)
    served: dict[int, list[tuple[int, float]]] = {}
    for uid in state.active_users(t):
        lst = state.current_recs.get(uid, [])
        served[uid] = [(i, s) for i, s in lst if i in active_set and i not in state.consumed[uid]]

    events: list[dict] = []
    epoch_counts: dict[int, int] = {}
    staged: list[tuple[agents.ConsumptionEvent, float, float]] = []

    for uid in state.active_users(t):
        user = state.users[uid]
        rng = state.agent_rng(uid)
        if rng.random() >= user.activity_prob:
            continue
        consumed = state.consumed[uid]
        if consumed:
            excl = np.fromiter(consumed, dtype=np.int64, count=len(consumed))
            avail = active_items[~np.isin(active_items, excl)]
        else:
            avail = active_items
        weights = 1.0 + counts_vec[avail]
        ev = agents.choose_item(user, served[uid], avail, weights, t, rng, scenario.rank_discount)
        if ev is None:
            continue
        true_r = state.oracle.true_rating(user, state.items[ev.item_id])
        observed = _maybe_round(
            state,
            agents.observed_rating(
                true_r, ev.shown_prediction, user.anchor_weight, _feedback_noise(state, rng), state.oracle.gt
            ),
        )
        submitted = agents.gives_feedback(user, rng)
        _record_consumption(state, uid, ev.item_id)
        epoch_counts[ev.item_id] = epoch_counts.get(ev.item_id, 0) + 1
        if submitted:
            staged.append((ev, observed, true_r))
        events.append(
            {
                "type": "consumption",
                "epoch": t,
                "user_id": uid,
                "item_id": ev.item_id,
                "via_recommendation": ev.via_recommendation,
                "shown_prediction": ev.shown_prediction,
                "true_rating": true_r,
                "observed_rating": observed if submitted else None,
                "feedback_submitted": submitted,
            }
        )

    # canonical commit order: ascending user_id (the iteration above)
    for ev, observed, true_r in staged:
        _submit(state, ev, observed, true_r)
    if len(state.db) < db_size_before:
        raise InvariantViolation("rating database shrank")

    state, churn_events = churn(state)

    if t % scenario.retrain_every == 0:
        _refit(state)

    next_recs = _compute_recs(state, t + 1)
    row = _metric_row(state, t, served, epoch_counts)

    state.current_recs = next_recs
    state.prev_epoch_counts = epoch_counts
    state.epoch = t + 1
    return state, EpochLog(epoch=t, events=events, churn_events=churn_events, metric_row=row)


def run(scenario: Scenario) -> RunResult:
    """Initialize and advance exactly `horizon` epochs."""
    state = initialize(scenario)
    rows: list[MetricRow] = []
    events: list[dict] = list(state.bootstrap_events)
    for _ in range(scenario.horizon):
        state, log = step(state)
        rows.append(log.metric_row)
        events.extend(log.events)
        events.extend(log.churn_events)
    return RunResult(scenario=scenario.to_dict(), seed=scenario.seed, metrics=rows, events=events)
