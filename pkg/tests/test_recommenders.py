"""Engine contract and the five algorithms, against hand and brute-force
oracles."""

import numpy as np
import pytest

from recdyn.domain import ConfigError, RatingDb
from recdyn.recommenders import (
    Engine,
    FunkMfEngine,
    HybridBlendEngine,
    MostPopularEngine,
    NotFittedError,
    RandomEngine,
    UserKnnEngine,
    build_engine,
    mf_loss_and_grad,
)
from tests.conftest import db_from_ratings
from tests.oracles import knn_predict_oracle

SCALE = (1.0, 5.0)


def _fitted(engine, ratings, seed=0):
    engine.fit(db_from_ratings(ratings), np.random.default_rng(seed))
    return engine


ALL_ENGINES = [
    lambda: RandomEngine(*SCALE),
    lambda: MostPopularEngine(*SCALE),
    lambda: UserKnnEngine(*SCALE),
    lambda: FunkMfEngine(*SCALE, epochs_per_fit=5),
    lambda: HybridBlendEngine(*SCALE, blend_weight=0.5, base=UserKnnEngine(*SCALE)),
]


# -- shared contract ---------------------------------------------------------


@pytest.mark.parametrize("factory", ALL_ENGINES)
def test_unfitted_engine_raises(factory):
    engine = factory()
    with pytest.raises(NotFittedError):
        engine.predict(0, 0)
    with pytest.raises(NotFittedError):
        engine.recommend(0, 5, set(), np.arange(3))
    with pytest.raises(NotFittedError):
        engine.assess([(0, 0, 3.0)])


@pytest.mark.parametrize("factory", ALL_ENGINES)
def test_cold_start_predicts_scale_midpoint(factory):
    engine = _fitted(factory(), {})
    assert engine.predict(7, 9) == 3.0


@pytest.mark.parametrize("factory", ALL_ENGINES)
def test_refit_is_deterministic(factory):
    ratings = {(0, 0): 5, (0, 1): 3, (1, 0): 4, (1, 2): 2, (2, 1): 1, (2, 2): 5}
    a = _fitted(factory(), ratings, seed=3)
    b = _fitted(factory(), ratings, seed=3)
    items = np.arange(4)
    for uid in range(3):
        assert np.array_equal(a.predict_many(uid, items), b.predict_many(uid, items))


@pytest.mark.parametrize("factory", ALL_ENGINES)
def test_predictions_stay_within_scale(factory):
    rng = np.random.default_rng(17)
    ratings = {
        (int(u), int(i)): float(r)
        for u, i, r in zip(rng.integers(0, 6, 40), rng.integers(0, 8, 40), rng.integers(1, 6, 40))
    }
    engine = _fitted(factory(), ratings, seed=1)
    for uid in range(7):
        vals = engine.predict_many(uid, np.arange(10))
        assert np.all(vals >= 1.0) and np.all(vals <= 5.0)


def test_recommend_validates_list_length():
    engine = _fitted(MostPopularEngine(*SCALE), {(0, 0): 4})
    with pytest.raises(ValueError):
        engine.recommend(0, 0, set(), np.arange(3))


def test_recommend_empty_candidate_set():
    engine = _fitted(MostPopularEngine(*SCALE), {(0, 0): 4})
    assert engine.recommend(0, 5, set(), np.asarray([], dtype=np.int64)) == []
    assert engine.recommend(0, 5, {1, 2}, np.asarray([1, 2], dtype=np.int64)) == []


@pytest.mark.parametrize("factory", ALL_ENGINES)
def test_recommend_respects_exclusions_and_catalog(factory):
    rng = np.random.default_rng(23)
    ratings = {
        (int(u), int(i)): float(r)
        for u, i, r in zip(rng.integers(0, 5, 30), rng.integers(0, 12, 30), rng.integers(1, 6, 30))
    }
    engine = _fitted(factory(), ratings, seed=2)
    active = np.asarray([0, 2, 3, 5, 8, 9, 11], dtype=np.int64)
    exclusions = {2, 9}
    lst = engine.recommend(1, 4, exclusions, active)
    ids = [i for i, _ in lst]
    assert len(lst) <= 4
    assert len(set(ids)) == len(ids)
    assert all(i in set(active.tolist()) - exclusions for i in ids)
    # displayed prediction is the clamped personalized prediction
    for i, shown in lst:
        assert shown == pytest.approx(engine.predict(1, i))


def test_recommend_orders_by_score_with_ascending_id_ties():
    # two items with identical rating profiles tie; lower id wins
    engine = _fitted(
        MostPopularEngine(*SCALE),
        {(0, 4): 5, (1, 4): 5, (0, 2): 5, (1, 2): 5, (0, 1): 1},
    )
    lst = engine.recommend(9, 3, set(), np.asarray([1, 2, 4], dtype=np.int64))
    assert [i for i, _ in lst] == [2, 4, 1]
    scores = [s for _, s in lst]
    assert scores == sorted(scores, reverse=True)


def test_assess_oracle_values():
    class FixedEngine(Engine):
        name = "fixed"

        def _fit(self, db, rng):
            pass

        def _raw_score(self, user_id, item_ids):
            table = {0: 5.0, 1: 2.0}
            return np.asarray([table[int(i)] for i in item_ids])

    engine = FixedEngine(*SCALE)
    engine.fit(RatingDb(), np.random.default_rng(0))
    assert engine.assess([(0, 0, 5.0), (0, 1, 2.0)]) == (0.0, 0.0)
    # errors {3, -1}: rmse sqrt(5), mae 2
    r, m = engine.assess([(0, 0, 2.0), (0, 1, 3.0)])
    assert r == pytest.approx(np.sqrt(5))
    assert m == pytest.approx(2.0)
    with pytest.raises(ValueError):
        engine.assess([])


# -- random scores -----------------------------------------------------------


def test_random_scores_stable_within_a_fit():
    engine = _fitted(RandomEngine(*SCALE), {(0, 0): 3}, seed=4)
    a = engine.predict_many(2, np.arange(20))
    b = engine.predict_many(2, np.arange(20))
    assert np.array_equal(a, b)
    assert np.all((a >= 1.0) & (a <= 5.0))
    assert np.unique(a).size > 15  # actually spread out, not constant


def test_random_scores_change_across_fits():
    engine = RandomEngine(*SCALE)
    db = db_from_ratings({(0, 0): 3})
    engine.fit(db, np.random.default_rng(1))
    a = engine.predict_many(2, np.arange(20))
    engine.fit(db, np.random.default_rng(2))
    b = engine.predict_many(2, np.arange(20))
    assert not np.array_equal(a, b)


# -- popularity --------------------------------------------------------------


def test_most_popular_unrated_item_gets_global_mean():
    engine = _fitted(MostPopularEngine(*SCALE), {(0, 0): 5, (1, 0): 4, (0, 1): 3})
    assert engine.predict(9, 7) == pytest.approx(4.0)


def test_most_popular_shrinkage_formula():
    # item 0: two ratings (5, 4); global mean 4.0; s=5
    engine = _fitted(MostPopularEngine(*SCALE), {(0, 0): 5, (1, 0): 4, (0, 1): 3})
    expected = (9 + 5 * 4.0) / (2 + 5)
    assert engine.predict(3, 0) == pytest.approx(expected)


def test_most_popular_rating_count_beats_equal_mean():
    # i1 has three 5s, i2 one 5: shrinkage favors the better-supported item
    # (the extra low rating on i3 keeps the global mean below 5 so the two
    # shrunk means actually differ)
    engine = _fitted(
        MostPopularEngine(*SCALE),
        {(0, 1): 5, (1, 1): 5, (2, 1): 5, (0, 2): 5, (3, 3): 1},
    )
    lst = engine.recommend(7, 1, set(), np.asarray([1, 2], dtype=np.int64))
    assert [i for i, _ in lst] == [1]
    assert engine.predict(7, 1) > engine.predict(7, 2)


def test_most_popular_rejects_negative_shrinkage():
    with pytest.raises(ConfigError):
        MostPopularEngine(*SCALE, shrinkage=-1)


# -- user-knn ----------------------------------------------------------------


def test_user_knn_hand_oracle():
    # u1 and u2 agree exactly on (i1, i2): Pearson 1; both have mean 4 on
    # their ratings, u2's deviation on i3 is 0 -> prediction 4.0
    engine = _fitted(
        UserKnnEngine(*SCALE, k=1, min_overlap=2),
        {(1, 1): 5, (1, 2): 3, (2, 1): 5, (2, 2): 3, (2, 3): 4},
    )
    assert engine.predict(1, 3) == pytest.approx(4.0)


def test_user_knn_fallback_chain():
    ratings = {(1, 1): 5, (1, 2): 3, (2, 3): 2}
    engine = _fitted(UserKnnEngine(*SCALE, k=2, min_overlap=2), ratings)
    # known user, no usable neighbors -> user mean
    assert engine.predict(1, 3) == pytest.approx(4.0)
    # unknown user, known item -> item mean
    assert engine.predict(9, 3) == pytest.approx(2.0)
    # unknown user, unknown item -> global mean
    assert engine.predict(9, 9) == pytest.approx(10 / 3)


def test_user_knn_min_overlap_gates_similarity():
    # identical users, but only 1 co-rated item: below min_overlap=2 the
    # neighbor is invalid and prediction falls back to the user mean
    ratings = {(1, 1): 5, (1, 2): 1, (2, 1): 5, (2, 3): 4}
    engine = _fitted(UserKnnEngine(*SCALE, k=3, min_overlap=2), ratings)
    assert engine.predict(1, 3) == pytest.approx(3.0)  # mean of (5, 1)


def test_user_knn_matches_brute_force_oracle_on_random_dbs():
    rng = np.random.default_rng(42)
    for case in range(300):
        n_u = int(rng.integers(2, 5))
        n_i = int(rng.integers(2, 6))
        ratings = {}
        for u in range(n_u):
            for i in range(n_i):
                if rng.random() < 0.7:
                    ratings[(u, i)] = float(rng.integers(1, 6))
        if not ratings:
            continue
        k = int(rng.integers(1, 5))
        mo = int(rng.integers(1, 4))
        engine = _fitted(UserKnnEngine(*SCALE, k=k, min_overlap=mo), ratings, seed=case)
        for u in range(n_u + 1):
            for i in range(n_i + 1):
                got = engine.predict(u, i)
                want = knn_predict_oracle(ratings, u, i, k, mo)
                assert got == pytest.approx(want, abs=1e-9), (case, u, i, k, mo)


def test_user_knn_hyperparameter_validation():
    with pytest.raises(ConfigError):
        UserKnnEngine(*SCALE, k=0)
    with pytest.raises(ConfigError):
        UserKnnEngine(*SCALE, min_overlap=0)


# -- matrix factorization ----------------------------------------------------


def test_funk_mf_single_record_convergence():
    engine = FunkMfEngine(*SCALE, latent_dim=4, learning_rate=0.05, regularization=0.0, epochs_per_fit=200)
    engine.fit(db_from_ratings({(1, 1): 5}), np.random.default_rng(0))
    assert engine.predict(1, 1) == pytest.approx(5.0, abs=0.05)


def test_funk_mf_zero_factors_predict_global_mean():
    ratings = {(0, 0): 5, (0, 1): 3, (1, 0): 4}
    engine = _fitted(FunkMfEngine(*SCALE, epochs_per_fit=3), ratings)
    engine._p[:] = 0.0
    engine._q[:] = 0.0
    engine._bu[:] = 0.0
    engine._bi[:] = 0.0
    for u in range(2):
        for i in range(2):
            assert engine.predict(u, i) == pytest.approx(4.0)


def test_funk_mf_training_loss_settles():
    rng = np.random.default_rng(11)
    ratings = {
        (int(u), int(i)): float(r)
        for u, i, r in zip(rng.integers(0, 12, 120), rng.integers(0, 15, 120), rng.integers(1, 6, 120))
    }
    engine = FunkMfEngine(*SCALE, latent_dim=4, learning_rate=0.01, regularization=0.02, epochs_per_fit=40)
    engine.fit(db_from_ratings(ratings), np.random.default_rng(5))
    tail = engine.loss_history[-5:]
    assert all(b <= a + 1e-6 for a, b in zip(tail, tail[1:]))
    assert all(np.all(np.isfinite(arr)) for arr in (engine._p, engine._q, engine._bu, engine._bi))


def test_funk_mf_gradient_matches_finite_differences():
    rng = np.random.default_rng(77)
    nu, ni, d = 3, 4, 2
    for _ in range(20):
        p = rng.normal(0, 0.5, (nu, d))
        q = rng.normal(0, 0.5, (ni, d))
        bu = rng.normal(0, 0.3, nu)
        bi = rng.normal(0, 0.3, ni)
        users = rng.integers(0, nu, 10)
        items = rng.integers(0, ni, 10)
        ratings = rng.uniform(1, 5, 10)
        reg = float(rng.uniform(0, 0.1))
        mu = 3.0
        _, (gp, gq, gbu, gbi) = mf_loss_and_grad(p, q, bu, bi, mu, users, items, ratings, reg)
        h = 1e-5

        def loss_at(pp, qq, bbu, bbi):
            return mf_loss_and_grad(pp, qq, bbu, bbi, mu, users, items, ratings, reg)[0]

        for analytic, theta in ((gp, p), (gq, q), (gbu, bu), (gbi, bi)):
            numeric = np.zeros_like(theta)
            it = np.nditer(theta, flags=["multi_index"])
            while not it.finished:
                idx = it.multi_index
                orig = theta[idx]
                theta[idx] = orig + h
                hi = loss_at(p, q, bu, bi)
                theta[idx] = orig - h
                lo = loss_at(p, q, bu, bi)
                theta[idx] = orig
                numeric[idx] = (hi - lo) / (2 * h)
                it.iternext()
            denom = max(float(np.linalg.norm(numeric)), 1e-12)
            assert float(np.linalg.norm(analytic - numeric)) / denom <= 1e-4


def test_funk_mf_hyperparameter_validation():
    with pytest.raises(ConfigError):
        FunkMfEngine(*SCALE, latent_dim=0)
    with pytest.raises(ConfigError):
        FunkMfEngine(*SCALE, learning_rate=0.0)
    with pytest.raises(ConfigError):
        FunkMfEngine(*SCALE, regularization=-0.1)
    with pytest.raises(ConfigError):
        FunkMfEngine(*SCALE, epochs_per_fit=0)


# -- hybrid blend ------------------------------------------------------------


_HYBRID_DB = {
    (0, 0): 5, (0, 1): 2, (0, 2): 4,
    (1, 0): 5, (1, 1): 1, (1, 3): 3,
    (2, 1): 2, (2, 2): 5, (2, 3): 4,
    (3, 0): 4, (3, 2): 5, (3, 4): 2,
}


def _ranking(engine, uid=0, n=5):
    return [i for i, _ in engine.recommend(uid, n, set(), np.arange(6))]


def test_hybrid_full_weight_matches_base_ranking():
    hybrid = _fitted(HybridBlendEngine(*SCALE, blend_weight=1.0, base=UserKnnEngine(*SCALE, k=3, min_overlap=2)), _HYBRID_DB)
    base = _fitted(UserKnnEngine(*SCALE, k=3, min_overlap=2), _HYBRID_DB)
    for uid in range(4):
        assert _ranking(hybrid, uid) == _ranking(base, uid)


def test_hybrid_zero_weight_matches_popularity_ranking():
    hybrid = _fitted(HybridBlendEngine(*SCALE, blend_weight=0.0, base=UserKnnEngine(*SCALE, k=3, min_overlap=2)), _HYBRID_DB)
    pop = _fitted(MostPopularEngine(*SCALE), _HYBRID_DB)
    for uid in range(4):
        assert _ranking(hybrid, uid) == _ranking(pop, uid)


def test_hybrid_prediction_stays_on_base_scale():
    hybrid = _fitted(HybridBlendEngine(*SCALE, blend_weight=0.5, base=UserKnnEngine(*SCALE, k=3, min_overlap=2)), _HYBRID_DB)
    base = _fitted(UserKnnEngine(*SCALE, k=3, min_overlap=2), _HYBRID_DB)
    for uid in range(4):
        for iid in range(6):
            assert hybrid.predict(uid, iid) == pytest.approx(base.predict(uid, iid))


def test_hybrid_weight_validation():
    with pytest.raises(ConfigError):
        HybridBlendEngine(*SCALE, blend_weight=1.2, base=UserKnnEngine(*SCALE))


# -- factory -----------------------------------------------------------------


def test_build_engine_dispatch():
    assert isinstance(build_engine({"name": "random"}, *SCALE), RandomEngine)
    mp = build_engine({"name": "most_popular", "shrinkage": 9}, *SCALE)
    assert isinstance(mp, MostPopularEngine) and mp.shrinkage == 9
    knn = build_engine({"name": "user_knn", "k": 7, "min_overlap": 3}, *SCALE)
    assert isinstance(knn, UserKnnEngine) and knn.k == 7 and knn.min_overlap == 3
    mf = build_engine({"name": "funk_mf", "latent_dim": 8, "learning_rate": 0.02, "regularization": 0.01, "epochs_per_fit": 7}, *SCALE)
    assert isinstance(mf, FunkMfEngine) and mf.latent_dim == 8
    hy = build_engine(
        {"name": "hybrid", "blend_weight": 0.3, "base": {"name": "user_knn", "k": 5, "min_overlap": 2}},
        *SCALE,
    )
    assert isinstance(hy, HybridBlendEngine) and isinstance(hy.base, UserKnnEngine)
    assert hy.blend_weight == 0.3


def test_build_engine_unknown_name():
    with pytest.raises(ConfigError):
        build_engine({"name": "oracle"}, *SCALE)
