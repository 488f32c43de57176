"""User behavior: activity windows, item choice, rating formation, feedback."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recdyn.agents import choose_item, gives_feedback, is_active, observed_rating
from recdyn.domain import ChoiceStrategy, GroundTruth
from tests.conftest import make_item, make_user

_SCALE = GroundTruth(3.0, 0.2, 1.0, 5.0, 4)


# -- is_active ---------------------------------------------------------------


def test_is_active_half_open_window():
    profile = make_item(entry_epoch=5, lifespan=3)
    assert is_active(profile, 5)
    assert is_active(profile, 7)
    assert not is_active(profile, 8)
    assert not is_active(profile, 4)


def test_is_active_rejects_negative_epoch():
    with pytest.raises(ValueError):
        is_active(make_user(), -1)


# -- choose_item -------------------------------------------------------------


class FakeRng:
    """Plays back scripted uniform draws; choice() takes the first index."""

    def __init__(self, uniforms):
        self._uniforms = list(uniforms)

    def random(self):
        return self._uniforms.pop(0)

    def choice(self, n, p=None):
        return 0


def _organic(ids):
    items = np.asarray(ids, dtype=np.int64)
    return items, np.ones(len(ids))


def test_empty_rec_list_falls_back_to_organic():
    user = make_user(choice_strategy=ChoiceStrategy("rec_following"))
    items, weights = _organic([3])
    ev = choose_item(user, [], items, weights, 2, FakeRng([0.0]))
    assert ev is not None
    assert ev.item_id == 3 and not ev.via_recommendation and ev.shown_prediction is None
    assert ev.epoch == 2 and ev.user_id == user.user_id


def test_singleton_rec_list_is_followed():
    user = make_user(choice_strategy=ChoiceStrategy("rec_following"))
    items, weights = _organic([3, 4])
    ev = choose_item(user, [(1, 4.2)], items, weights, 0, FakeRng([0.0]))
    assert ev.item_id == 1 and ev.via_recommendation and ev.shown_prediction == 4.2


def test_strategy_draw_above_w_goes_organic():
    # draw order is strategy first, then pool: a 0.7 strategy draw with
    # w=0.5 forces the organic branch
    user = make_user(choice_strategy=ChoiceStrategy("mixed", w=0.5))
    items, weights = _organic([2])
    ev = choose_item(user, [(1, 4.0)], items, weights, 0, FakeRng([0.7]))
    assert ev.item_id == 2 and not ev.via_recommendation


def test_empty_organic_pool_falls_back_to_rec_list():
    user = make_user(choice_strategy=ChoiceStrategy("organic"))
    ev = choose_item(user, [(9, 3.5)], np.asarray([], dtype=np.int64), np.asarray([]), 0, FakeRng([0.9]))
    assert ev.item_id == 9 and ev.via_recommendation


def test_both_pools_empty_is_no_consumption():
    user = make_user(choice_strategy=ChoiceStrategy("rec_following"))
    ev = choose_item(user, [], np.asarray([], dtype=np.int64), np.asarray([]), 0, FakeRng([0.1]))
    assert ev is None


def test_rank_discount_monte_carlo():
    # rank weights 1/1 : 1/2 normalize to a 2:1 pick ratio
    user = make_user(choice_strategy=ChoiceStrategy("rec_following"))
    rng = np.random.default_rng(5)
    items, weights = _organic([7])
    n = 100_000
    picks = sum(
        choose_item(user, [(1, 4.0), (2, 4.0)], items, weights, 0, rng).item_id == 1 for _ in range(n)
    )
    share = picks / n
    assert abs(share - 2 / 3) <= 0.03 * (2 / 3)


def test_uniform_discount_monte_carlo():
    user = make_user(choice_strategy=ChoiceStrategy("rec_following"))
    rng = np.random.default_rng(6)
    items, weights = _organic([7])
    n = 50_000
    picks = sum(
        choose_item(user, [(1, 4.0), (2, 4.0)], items, weights, 0, rng, "uniform").item_id == 1
        for _ in range(n)
    )
    assert abs(picks / n - 0.5) <= 0.02


def test_organic_choice_is_popularity_proportional():
    user = make_user(choice_strategy=ChoiceStrategy("organic"))
    rng = np.random.default_rng(7)
    items = np.asarray([1, 2], dtype=np.int64)
    weights = np.asarray([3.0, 1.0])  # 1 + consumption counts {2, 0}
    n = 50_000
    picks = sum(choose_item(user, [], items, weights, 0, rng).item_id == 1 for _ in range(n))
    assert abs(picks / n - 0.75) <= 0.02


def test_named_variants_match_their_mixed_equivalents():
    rec_list = [(1, 4.0), (2, 3.5), (3, 3.0)]
    items, weights = _organic([5, 6, 7])
    for named, w in (("rec_following", 1.0), ("organic", 0.0)):
        for seed in range(20):
            ev_named = choose_item(
                make_user(choice_strategy=ChoiceStrategy(named)),
                rec_list, items, weights, 1, np.random.default_rng(seed),
            )
            ev_mixed = choose_item(
                make_user(choice_strategy=ChoiceStrategy("mixed", w=w)),
                rec_list, items, weights, 1, np.random.default_rng(seed),
            )
            assert ev_named == ev_mixed


# -- observed_rating ---------------------------------------------------------


def test_observed_rating_unbiased():
    assert observed_rating(4.0, 2.0, 1.0, 0.0, _SCALE) == 4.0


def test_observed_rating_fully_anchored():
    assert observed_rating(4.0, 2.0, 0.0, 0.0, _SCALE) == 2.0


def test_observed_rating_linear_blend():
    assert observed_rating(4.0, 2.0, 0.7, 0.0, _SCALE) == pytest.approx(3.4)


def test_observed_rating_without_shown_prediction():
    assert observed_rating(4.0, None, 0.3, 0.5, _SCALE) == 4.5
    assert observed_rating(4.9, None, 1.0, 0.5, _SCALE) == 5.0  # clamped


def test_observed_rating_rejects_bad_anchor_weight():
    with pytest.raises(ValueError):
        observed_rating(4.0, 2.0, 1.2, 0.0, _SCALE)
    with pytest.raises(ValueError):
        observed_rating(4.0, 2.0, -0.1, 0.0, _SCALE)


@given(true_r=st.floats(1.0, 5.0), shown=st.floats(1.0, 5.0))
@settings(max_examples=100, deadline=None)
def test_observed_rating_alpha_one_reproduces_truth(true_r, shown):
    assert observed_rating(true_r, shown, 1.0, 0.0, _SCALE) == true_r


@given(true_r=st.floats(1.0, 5.0), shown=st.floats(1.0, 5.0))
@settings(max_examples=100, deadline=None)
def test_anchoring_pulls_monotonically_toward_shown(true_r, shown):
    gaps = [
        abs(observed_rating(true_r, shown, a, 0.0, _SCALE) - shown)
        for a in (1.0, 0.75, 0.5, 0.25, 0.0)
    ]
    assert all(g1 >= g2 - 1e-12 for g1, g2 in zip(gaps, gaps[1:]))


def test_observed_rating_stays_in_scale():
    rng = np.random.default_rng(8)
    for _ in range(500):
        r = observed_rating(
            float(rng.uniform(1, 5)),
            float(rng.uniform(1, 5)),
            float(rng.uniform(0, 1)),
            float(rng.normal(0, 1)),
            _SCALE,
        )
        assert 1.0 <= r <= 5.0


# -- gives_feedback ----------------------------------------------------------


def test_gives_feedback_degenerate_probabilities(rng):
    always = make_user(feedback_prob=1.0)
    never = make_user(feedback_prob=0.0)
    assert all(gives_feedback(always, rng) for _ in range(100))
    assert not any(gives_feedback(never, rng) for _ in range(100))


def test_gives_feedback_monte_carlo():
    user = make_user(feedback_prob=0.3)
    rng = np.random.default_rng(9)
    n = 100_000
    rate = sum(gives_feedback(user, rng) for _ in range(n)) / n
    assert abs(rate - 0.3) <= 0.01
