import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import wasserstein_distance

from otcpd.gof import (
    ConsistencyError,
    GofStatistic,
    _clamp,
    energy_statistic,
    median_bandwidth,
    mmd,
    null_calibration,
    permutations,
    rank_energy,
    sinkhorn_divergence,
    soft_rank_energy,
    wasserstein1,
)
from otcpd.ranks import hard_rank_map, sample_reference

ALL_STATS = [
    GofStatistic("re"),
    GofStatistic("sre", epsilon=0.1),
    GofStatistic("sre", epsilon=1.0),
    GofStatistic("ed"),
    GofStatistic("mmd"),
    GofStatistic("w1"),
    GofStatistic("sinkdiv", epsilon=1.0),
]


def loop_energy(A, B):
    """Energy distance written out term by term."""
    def mean_dist(P, Q):
        return sum(np.linalg.norm(p - q) for p, q in itertools.product(P, Q)) / (len(P) * len(Q))

    return 2 * mean_dist(A, B) - mean_dist(A, A) - mean_dist(B, B)


def loop_mmd(X, Y, h):
    def k(x, y):
        return np.exp(-np.sum((x - y) ** 2) / (2 * h * h))

    def mean_k(P, Q):
        return sum(k(p, q) for p, q in itertools.product(P, Q)) / (len(P) * len(Q))

    return mean_k(X, X) + mean_k(Y, Y) - 2 * mean_k(X, Y)


class TestEnergyStatistic:
    def test_matches_term_by_term(self, rng):
        A, B = rng.normal(size=(5, 3)), rng.normal(size=(7, 3)) + 0.5
        assert energy_statistic(A, B) == pytest.approx(loop_energy(A, B), rel=1e-12)

    def test_one_dimensional_example(self):
        # |0-1| = 1 cross; within A = 0, within B = 0
        assert energy_statistic([0.0], [1.0]) == pytest.approx(2.0)

    def test_identical_is_zero(self, rng):
        A = rng.normal(size=(9, 2))
        assert energy_statistic(A, A) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            energy_statistic(np.zeros((2, 2)), np.zeros((2, 3)))


class TestClamp:
    def test_tiny_negative_clamped(self):
        assert _clamp(-1e-12, 1.0, "x") == 0.0

    def test_large_negative_raises(self):
        with pytest.raises(ConsistencyError):
            _clamp(-1e-6, 1.0, "x")


class TestRankEnergies:
    def test_identical_samples_are_zero(self, rng):
        X = rng.normal(size=(10, 3))
        assert rank_energy(X, X) == pytest.approx(0.0, abs=1e-12)
        assert soft_rank_energy(X, X, 0.1) == pytest.approx(0.0, abs=1e-12)

    def test_bounded_by_two_sqrt_d(self, rng):
        for d in (1, 3, 6):
            X, Y = rng.normal(size=(15, d)), rng.normal(size=(15, d)) + 10
            assert rank_energy(X, Y) <= 2 * np.sqrt(d)
            assert soft_rank_energy(X, Y, 0.05) <= 2 * np.sqrt(d)

    def test_separated_samples_score_higher_than_mixed(self, rng):
        X = rng.normal(size=(30, 2))
        near = rng.normal(size=(30, 2))
        far = rng.normal(size=(30, 2)) + 3
        assert rank_energy(X, far) > rank_energy(X, near)
        assert soft_rank_energy(X, far, 0.1) > soft_rank_energy(X, near, 0.1)

    def test_explicit_reference_equals_seeded(self, rng):
        X, Y = rng.normal(size=(6, 2)), rng.normal(size=(4, 2))
        ref = sample_reference(10, 2, seed=5)
        assert rank_energy(X, Y, reference=ref) == rank_energy(X, Y, ref_seed=5)

    def test_reference_shape_checked(self, rng):
        with pytest.raises(ValueError, match="reference"):
            rank_energy(rng.random((3, 2)), rng.random((3, 2)), reference=sample_reference(5, 2))

    def test_large_epsilon_goes_to_zero(self, rng):
        X, Y = rng.normal(size=(10, 2)), rng.normal(size=(10, 2)) + 5
        values = [soft_rank_energy(X, Y, eps) for eps in (1e2, 1e4, 1e6)]
        assert values[0] > values[1] > values[2]
        assert values[2] < 1e-5

    def test_affine_invariance_of_assignment(self, rng):
        X, Y = rng.normal(size=(8, 3)), rng.normal(size=(8, 3)) + 1
        assert rank_energy(3.5 * X + 2, 3.5 * Y + 2) == pytest.approx(rank_energy(X, Y), abs=1e-12)

    @given(
        n=st.integers(2, 20), d=st.integers(1, 5), eps=st.sampled_from([0.1, 1.0, 10.0]),
        seed=st.integers(0, 10_000),
    )
    def test_soft_rank_energy_bounded_by_w1(self, n, d, eps, seed):
        r = np.random.default_rng(seed)
        X, Y = r.normal(size=(n, d)), r.normal(size=(n, d)) * 2 + 0.5
        sre = soft_rank_energy(X, Y, eps, ref_seed=seed)
        assert sre <= 2 * d / eps * wasserstein1(X, Y) + 1e-6


class TestBaselines:
    def test_mmd_matches_loops(self, rng):
        X, Y = rng.normal(size=(6, 2)), rng.normal(size=(5, 2)) + 1
        h = median_bandwidth(X, Y)
        assert mmd(X, Y) == pytest.approx(loop_mmd(X, Y, h), rel=1e-12)
        assert mmd(X, Y, bandwidth=0.7) == pytest.approx(loop_mmd(X, Y, 0.7), rel=1e-12)

    def test_median_bandwidth_degenerate(self):
        assert median_bandwidth(np.zeros((3, 1)), np.zeros((3, 1))) == 1.0

    def test_w1_matches_scipy_in_one_dimension(self, rng):
        for m, n in [(5, 5), (4, 7), (10, 3)]:
            x, y = rng.normal(size=m), rng.normal(size=n)
            assert wasserstein1(x, y) == pytest.approx(wasserstein_distance(x, y), abs=1e-10)

    def test_sinkhorn_divergence_properties(self, rng):
        X, Y = rng.normal(size=(8, 2)), rng.normal(size=(6, 2)) + 1
        assert sinkhorn_divergence(X, X, 0.5) == pytest.approx(0.0, abs=1e-8)
        s_xy = sinkhorn_divergence(X, Y, 0.5)
        assert s_xy > 0
        assert sinkhorn_divergence(Y, X, 0.5) == pytest.approx(s_xy, rel=1e-7)

    def test_sinkhorn_divergence_large_epsilon_limit(self, rng):
        # as eps grows the divergence tends to half the squared mean gap (MMD with -||.||^2/2 kernel)
        X, Y = rng.normal(size=(6, 2)), rng.normal(size=(6, 2)) + 1
        gap = 0.5 * np.sum((X.mean(0) - Y.mean(0)) ** 2)
        assert sinkhorn_divergence(X, Y, 1e5) == pytest.approx(gap, rel=1e-3)

    @pytest.mark.parametrize("stat", ALL_STATS, ids=lambda s: s.label)
    def test_zero_on_identical_inputs(self, stat, rng):
        X = rng.normal(size=(12, 3))
        assert stat(X, X) == pytest.approx(0.0, abs=1e-8)

    @pytest.mark.parametrize("stat", ALL_STATS, ids=lambda s: s.label)
    def test_nonnegative(self, stat, rng):
        X, Y = rng.normal(size=(10, 2)), rng.standard_t(3, size=(10, 2))
        assert stat(X, Y) >= 0


class TestGofStatistic:
    @pytest.mark.parametrize(
        "kwargs",
        [{"kind": "xyz"}, {"kind": "sre"}, {"kind": "sinkdiv", "epsilon": -1.0}, {"kind": "mmd", "bandwidth": 0.0}],
    )
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            GofStatistic(**kwargs)

    def test_labels_and_serialization(self):
        s = GofStatistic("sre", epsilon=0.1, seed=3)
        assert s.label == "sRE(eps=0.1)"
        assert GofStatistic("mmd").label == "MMD(bw=median)"
        assert GofStatistic(**s.to_dict()) == s

    def test_evaluator_matches_one_shot(self, rng):
        stat = GofStatistic("sre", epsilon=0.2, seed=4, tol=1e-12)
        ev = stat.evaluator()
        for _ in range(4):
            X, Y = rng.normal(size=(7, 2)), rng.normal(size=(7, 2))
            direct = soft_rank_energy(X, Y, 0.2, ref_seed=4, tol=1e-12)
            assert ev(X, Y) == pytest.approx(direct, abs=1e-9)
        assert ev.unconverged == 0

    def test_evaluator_counts_unconverged(self, rng):
        stat = GofStatistic("sre", epsilon=1e-3, max_iter=2)
        ev = stat.evaluator()
        ev(rng.normal(size=(10, 2)), rng.normal(size=(10, 2)))
        assert ev.unconverged == 1


class TestNullCalibration:
    def test_single_draw(self, rng):
        ns = null_calibration(rng.normal(size=(10, 2)), (5, 5), GofStatistic("ed"), B=1)
        assert ns.B == 1 and ns.values[0] >= 0

    def test_identity_first_equals_scaled_observed(self, rng):
        pooled = rng.normal(size=(12, 2))
        for stat in (GofStatistic("ed"), GofStatistic("re", seed=2), GofStatistic("sre", epsilon=0.5, seed=2)):
            ns = null_calibration(pooled, (5, 7), stat, B=3, include_identity=True)
            assert ns.values[0] == pytest.approx(stat(pooled[:5], pooled[5:]) * 35 / 12, rel=1e-8)

    def test_rank_fast_path_equals_per_split_evaluation(self, rng):
        pooled = rng.normal(size=(14, 2))
        stat = GofStatistic("re", seed=1)
        ns = null_calibration(pooled, (7, 7), stat, B=20, seed=9)
        perms = permutations(14, 20, 9)
        slow = [stat(pooled[p[:7]], pooled[p[7:]]) * 3.5 for p in perms]
        np.testing.assert_allclose(ns.values, slow, atol=1e-12)

    def test_permutation_streams_are_prefix_stable(self):
        np.testing.assert_array_equal(permutations(8, 5, 3), permutations(8, 5, 3))
        # each stream depends only on (seed, index, total); spawning is deterministic
        assert sorted(permutations(8, 1, 3)[0]) == list(range(8))

    def test_workers_do_not_change_values(self, rng):
        pooled = rng.normal(size=(16, 2))
        stat = GofStatistic("mmd")
        a = null_calibration(pooled, (8, 8), stat, B=12, workers=1, chunk=5)
        b = null_calibration(pooled, (8, 8), stat, B=12, workers=2, chunk=5)
        np.testing.assert_array_equal(a.values, b.values)

    def test_rank_energy_null_is_distribution_free(self):
        # over all splits, the hard-rank null depends only on the reference
        r = np.random.default_rng(0)
        ref = sample_reference(8, 2, seed=1)

        def all_splits(pooled):
            images = hard_rank_map(pooled, ref).images
            out = []
            for S in itertools.combinations(range(8), 4):
                rest = [i for i in range(8) if i not in S]
                out.append(energy_statistic(images[list(S)], images[rest]))
            return np.sort(out)

        np.testing.assert_allclose(
            all_splits(r.normal(size=(8, 2))), all_splits(r.standard_cauchy(size=(8, 2))), atol=1e-12
        )

    @pytest.mark.parametrize("split", [(0, 10), (4, 4), (11, -1)])
    def test_bad_split(self, split, rng):
        with pytest.raises(ValueError, match="split"):
            null_calibration(rng.normal(size=(10, 1)), split, GofStatistic("ed"))
