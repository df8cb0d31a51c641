"""Posterior-predictive classification, level-set maps and the classical
k-NN baseline with leave-one-out cross-validation."""

import numpy as np
import pytest

from boltzknn import Prior, build_graph
from boltzknn.errors import ConfigError, DataError
from boltzknn.model import predictive_conditional
from boltzknn.posterior import ChainTrace, ModelContext
from boltzknn.prediction import (classify_test_set, knn_baseline, knn_classify,
                                 knn_test_error, level_set_map, loo_cv_error,
                                 mc_predictive, new_point_counts,
                                 predict_points)

from conftest import make_instance


def make_ctx(n=20, G=2, K=4, seed=0, beta_max=4.0):
    g, y = make_instance(n, G=G, K=K, seed=seed)
    return ModelContext(g, y, G, Prior(beta_max=beta_max, K=K))


def const_chain(beta, k, m=1):
    return ChainTrace(beta=np.full(m, float(beta)),
                      k=np.full(m, k, dtype=np.int64),
                      accepted=np.ones(m, dtype=bool), kind="pseudo")


class TestNewPointCounts:
    def test_matches_single_point_conditional(self):
        """The vectorised counts reproduce the per-point conditional for
        every k, including the reverse-neighbour contribution."""
        ctx = make_ctx(n=30, G=3, K=5, seed=1)
        rng = np.random.default_rng(2)
        X_new = rng.standard_normal((7, 2))
        counts = new_point_counts(ctx, X_new)
        for q in range(7):
            for k in (1, 3, 5):
                beta = 1.3
                p_direct = predictive_conditional(X_new[q], ctx.y, ctx.graph,
                                                  beta, k, 3)
                e = beta / k * counts[q, k - 1]
                e -= e.max()
                p_vec = np.exp(e) / np.exp(e).sum()
                assert np.allclose(p_vec, p_direct, atol=1e-12)

    def test_dimension_and_finiteness(self):
        ctx = make_ctx()
        with pytest.raises(DataError):
            new_point_counts(ctx, np.zeros((2, 5)))
        with pytest.raises(DataError):
            new_point_counts(ctx, np.array([[np.inf, 0.0]]))

    def test_chunking_invariance(self):
        ctx = make_ctx(n=40, K=3, seed=3)
        X_new = np.random.default_rng(4).standard_normal((23, 2))
        a = new_point_counts(ctx, X_new, chunk=5)
        b = new_point_counts(ctx, X_new, chunk=1000)
        assert np.array_equal(a, b)


class TestMcPredictive:
    def test_degenerate_chain(self):
        ctx = make_ctx(seed=5)
        x = np.array([0.3, -0.2])
        s = mc_predictive(x, const_chain(1.5, 2, m=4), ctx)
        direct = predictive_conditional(x, ctx.y, ctx.graph, 1.5, 2, 2)
        assert np.allclose(s.probs, direct, atol=1e-12)
        assert np.allclose(s.lo, s.hi)  # degenerate interval

    def test_beta_zero_chain_uncertain(self):
        ctx = make_ctx(seed=6)
        s = mc_predictive(np.zeros(2), const_chain(0.0, 1, m=10), ctx)
        assert np.allclose(s.probs, 0.5)
        assert s.uncertain

    def test_two_draw_interval(self):
        # two draws with class-1 probabilities p and 1-p: mean 0.5,
        # interval spanning both, hence uncertain
        ctx = make_ctx(n=10, K=2, seed=7)
        counts = new_point_counts(ctx, np.zeros((1, 2)))[0]
        # find a beta making the two draws differ
        chain = ChainTrace(beta=np.array([0.0, 3.0]),
                           k=np.array([1, 1], dtype=np.int64),
                           accepted=np.ones(2, dtype=bool), kind="pseudo")
        s = mc_predictive(np.zeros(2), chain, ctx, level=1.0)
        per0 = 0.5
        e = 3.0 * counts[0]
        per1 = np.exp(e[0] - e.max()) / np.exp(e - e.max()).sum()
        assert s.probs[0] == pytest.approx((per0 + per1) / 2, abs=1e-12)
        assert s.lo[0] == pytest.approx(min(per0, per1), abs=1e-12)
        assert s.hi[0] == pytest.approx(max(per0, per1), abs=1e-12)

    def test_probs_sum_to_one(self):
        ctx = make_ctx(n=25, G=4, K=3, seed=8)
        rng = np.random.default_rng(9)
        chain = ChainTrace(beta=rng.random(50) * 4,
                           k=rng.integers(1, 4, 50),
                           accepted=np.ones(50, dtype=bool), kind="pseudo")
        for s in predict_points(rng.standard_normal((5, 2)), chain, ctx):
            assert s.probs.sum() == pytest.approx(1.0, abs=1e-12)
            assert np.all(s.lo <= s.hi + 1e-12)
            assert 1 <= s.bayes_class <= 4

    def test_chain_order_invariance(self):
        ctx = make_ctx(seed=10)
        rng = np.random.default_rng(11)
        beta = rng.random(40) * 3
        k = rng.integers(1, 5, 40)
        chain = ChainTrace(beta=beta, k=k, accepted=np.ones(40, dtype=bool),
                           kind="pseudo")
        perm = rng.permutation(40)
        shuffled = ChainTrace(beta=beta[perm], k=k[perm],
                              accepted=np.ones(40, dtype=bool), kind="pseudo")
        x = np.array([0.1, 0.2])
        a = mc_predictive(x, chain, ctx)
        b = mc_predictive(x, shuffled, ctx)
        assert np.allclose(a.probs, b.probs, atol=1e-14)

    def test_empty_chain_rejected(self):
        ctx = make_ctx()
        empty = ChainTrace(beta=np.empty(0), k=np.empty(0, dtype=np.int64),
                           accepted=np.empty(0, dtype=bool), kind="pseudo")
        with pytest.raises(ConfigError):
            mc_predictive(np.zeros(2), empty, ctx)


class TestClassifyTestSet:
    def test_large_beta_matches_local_majority(self):
        ctx = make_ctx(n=30, K=5, seed=12)
        chain = const_chain(100.0, 5)
        err, summaries = classify_test_set(ctx.graph.X, ctx.y + 1, chain, ctx)
        for i, s in enumerate(summaries):
            counts = new_point_counts(ctx, ctx.graph.X[i:i + 1])[0, 4]
            if counts[0] != counts[1]:
                assert s.bayes_class - 1 == int(np.argmax(counts))

    def test_length_mismatch(self):
        ctx = make_ctx()
        with pytest.raises(DataError):
            classify_test_set(np.zeros((3, 2)), np.array([1, 2]),
                              const_chain(1.0, 1), ctx)


class TestLevelSetMap:
    def test_all_uncertain_at_beta_zero(self):
        ctx = make_ctx(seed=13)
        grid = level_set_map(((-1, 1), (-1, 1)), 4,
                             const_chain(0.0, 1, m=5), ctx)
        assert np.all(grid.zone == 0)
        assert grid.probs.shape == (4, 4, 2)

    def test_single_cell_equals_centre_prediction(self):
        ctx = make_ctx(seed=14)
        chain = const_chain(2.0, 2, m=3)
        grid = level_set_map(((0, 1), (0, 1)), 1, chain, ctx)
        centre = mc_predictive(np.array([0.5, 0.5]), chain, ctx)
        assert np.allclose(grid.probs[0, 0], centre.probs)

    def test_cells_tile_box(self):
        ctx = make_ctx(seed=15)
        grid = level_set_map(((0, 2), (0, 1)), (4, 2),
                             const_chain(1.0, 1), ctx)
        assert np.allclose(grid.x1, [0.25, 0.75, 1.25, 1.75])
        assert np.allclose(grid.x2, [0.25, 0.75])

    def test_degenerate_box(self):
        ctx = make_ctx()
        with pytest.raises(ConfigError):
            level_set_map(((0, 0), (0, 1)), 2, const_chain(1.0, 1), ctx)


class TestKnnBaseline:
    def test_single_training_point_class(self):
        pred = knn_baseline(np.array([[0.0]]), np.array([2]),
                            np.array([5.0]), 1)
        assert pred == 2

    def test_majority_vote(self):
        X = np.array([[0.0], [1.0], [2.0], [10.0]])
        y = np.array([1, 1, 2, 2])
        assert knn_baseline(X, y, np.array([0.5]), 3) == 1

    def test_tie_broken_by_shrinking_k(self):
        # at k=2 the vote ties 1-1; shrinking to k=1 picks the nearest
        X = np.array([[0.0], [1.0], [2.0]])
        y = np.array([1, 2, 2])
        assert knn_baseline(X, y, np.array([0.1]), 2) == 1

    def test_determinism(self):
        g, y = make_instance(20, K=3, seed=16)
        q = np.array([0.0, 0.0])
        a = knn_baseline(g.X, y + 1, q, 3)
        assert all(knn_baseline(g.X, y + 1, q, 3) == a for _ in range(3))

    def test_k_out_of_range(self):
        with pytest.raises(ConfigError):
            knn_classify(np.zeros((3, 1)), np.array([1, 1, 2]),
                         np.zeros((1, 1)), 4)


class TestLooCv:
    def test_identical_pair_zero_error(self):
        errors, argmin = loo_cv_error(np.array([[0.0], [1.0]]),
                                      np.array([1, 1]), [1])
        assert errors[1] == 0.0 and argmin == [1]

    def test_matches_explicit_holdout(self):
        """LOO via the shared graph equals physically removing each point
        and classifying it with the remainder."""
        g, y = make_instance(15, K=14, seed=17)
        errors, _ = loo_cv_error(g.X, y + 1, [1, 3, 5])
        for k in (1, 3, 5):
            wrong = 0
            for i in range(15):
                keep = np.arange(15) != i
                pred = knn_baseline(g.X[keep], y[keep] + 1, g.X[i], k)
                wrong += pred != y[i] + 1
            assert errors[k] == pytest.approx(wrong / 15)

    def test_k_range_validation(self):
        with pytest.raises(ConfigError):
            loo_cv_error(np.zeros((3, 1)), np.array([1, 1, 2]), [3])
