"""Per-epoch user behavior: activity, item choice, rating formation, feedback.

All functions are pure given an explicit RNG stream.  The simulator hands
every user a dedicated substream keyed by user_id, which makes agent
decisions independent of the order users are evaluated in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import GroundTruth, ItemProfile, UserProfile


@dataclass(frozen=True)
class ConsumptionEvent:
    user_id: int
    item_id: int
    epoch: int
    via_recommendation: bool
    shown_prediction: float | None


def is_active(profile: UserProfile | ItemProfile, epoch: int) -> bool:
    """Half-open activity window: entry_epoch <= epoch < entry_epoch + lifespan."""
    if epoch < 0:
        raise ValueError(f"epoch must be non-negative: {epoch}")
    return profile.entry_epoch <= epoch < profile.entry_epoch + profile.lifespan


def _rank_weights(n: int, discount: str) -> np.ndarray:
    if discount == "uniform":
        return np.full(n, 1.0 / n)
    # position effect: weight of rank r proportional to 1/r
    w = 1.0 / np.arange(1, n + 1)
    return w / w.sum()


def choose_item(
    user: UserProfile,
    rec_list: list[tuple[int, float]],
    organic_items: np.ndarray,
    organic_weights: np.ndarray,
    epoch: int,
    rng: np.random.Generator,
    rank_discount: str = "inverse",
) -> ConsumptionEvent | None:
    """Pick at most one item for this user.

    Draw order is fixed: first the strategy draw (consult recommendations
    with probability w), then the pool draw.  An empty chosen pool falls
    back to the other; both empty means no consumption.  rec_list entries
    are (item_id, displayed_prediction) in rank order.
    """
    w = user.choice_strategy.rec_prob
    use_rec = rng.random() < w
    if use_rec and not rec_list:
        use_rec = False
    if not use_rec and len(organic_items) == 0:
        if not rec_list:
            return None
        use_rec = True

    if use_rec:
        weights = _rank_weights(len(rec_list), rank_discount)
        idx = int(rng.choice(len(rec_list), p=weights))
        item_id, shown = rec_list[idx]
        return ConsumptionEvent(user.user_id, int(item_id), epoch, True, float(shown))

    p = np.asarray(organic_weights, dtype=np.float64)
    p = p / p.sum()
    idx = int(rng.choice(len(organic_items), p=p))
    return ConsumptionEvent(user.user_id, int(organic_items[idx]), epoch, False, None)


def observed_rating(
    true_r: float,
    shown_prediction: float | None,
    anchor_weight: float,
    noise_draw: float,
    scale: GroundTruth,
) -> float:
    """The rating the user actually submits.

    With a displayed prediction the submitted value is anchored:
    clamp(alpha * true + (1 - alpha) * shown + noise); alpha = 1 is
    unbiased.  Without a displayed prediction: clamp(true + noise).
    """
    if not 0.0 <= anchor_weight <= 1.0:
        raise ValueError(f"anchor weight out of range [0,1]: {anchor_weight}")
    if shown_prediction is None:
        return scale.clamp(true_r + noise_draw)
    blended = anchor_weight * true_r + (1.0 - anchor_weight) * shown_prediction
    return scale.clamp(blended + noise_draw)


def gives_feedback(user: UserProfile, rng: np.random.Generator) -> bool:
    """Bernoulli(feedback_prob) draw from the user's stream."""
    return rng.random() < user.feedback_prob
