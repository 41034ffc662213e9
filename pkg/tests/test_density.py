"""Tests for sequence density estimation (mdpfuzz.density).

Tests verify:
    1. Gaussian mixture evaluation against closed forms, per-component
       summation, and extended-precision oracles.
    2. The factored sequence density (marginal first state, telescoped
       transition terms).
    3. The exponentially-weighted statistics update arithmetic, including
       closed-form geometric series and recovery of mixture parameters.
    4. Seeding, the tau-gated update of DensityEstimator, and snapshots.
"""

import math

import numpy as np
import pytest

from mdpfuzz.density import (EPS_COV, EPS_WEIGHT, DensityEstimator, DynEmPair,
                             DynEmState, GmmDensity, GmmParams, dynem_update,
                             get_gmm_params, gmm_pdf, init_dynem,
                             log_gmm_pdf, seq_density, seq_log_density,
                             update_params)
from mdpfuzz.errors import (DegenerateComponent, DimensionMismatch,
                            NonPositiveDefiniteCovariance, SnapshotError)

from conftest import random_gmm
from oracles import (ew_mean_mp, gmm_pdf_naive, log_gmm_pdf_mp,
                     mixture_box_mass, repeated_update_closed_form,
                     seq_log_density_mp)


def params_tuple(params: GmmParams):
    return params.weights, params.means, params.covariances


class TestGmmEvaluation:
    """Mixture density values against closed forms and oracles."""

    def test_standard_normal_at_origin(self):
        """A single standard normal evaluates to 1/sqrt(2*pi) at 0."""
        params = GmmParams(np.array([1.0]), np.zeros((1, 1)),
                           np.ones((1, 1, 1)))
        value = gmm_pdf(params, np.array([0.0]))[0]
        assert value == pytest.approx(1.0 / math.sqrt(2.0 * math.pi),
                                      rel=1e-12), (
            "standard normal at its mean must equal 1/sqrt(2 pi)"
        )

    def test_two_component_symmetric_mixture(self):
        """Equal-weight normals at -1 and +1 give e^(-1/2)/sqrt(2 pi) at 0."""
        params = GmmParams(np.array([0.5, 0.5]),
                           np.array([[-1.0], [1.0]]),
                           np.ones((2, 1, 1)))
        value = gmm_pdf(params, np.array([0.0]))[0]
        expected = math.exp(-0.5) / math.sqrt(2.0 * math.pi)
        assert value == pytest.approx(expected, rel=1e-12)
        assert value == pytest.approx(0.2419707, abs=5e-8)

    def test_matches_per_component_summation(self):
        """gmm_pdf equals the naive weighted sum over components."""
        rng = np.random.default_rng(42)
        weights, means, covs = random_gmm(3, 2, rng)
        params = GmmParams(weights, means, covs)
        points = rng.uniform(-4.0, 4.0, (50, 2))
        ours = gmm_pdf(params, points)
        for n in range(points.shape[0]):
            naive = gmm_pdf_naive(weights, means, covs, points[n])
            assert ours[n] == pytest.approx(naive, rel=1e-12), (
                f"point {n}: Cholesky evaluation {ours[n]!r} deviates from "
                f"per-component summation {naive!r}"
            )

    def test_exp_log_consistency(self):
        """exp(log_gmm_pdf) and gmm_pdf agree wherever values are nonzero."""
        rng = np.random.default_rng(7)
        weights, means, covs = random_gmm(4, 3, rng)
        params = GmmParams(weights, means, covs)
        points = rng.uniform(-6.0, 6.0, (200, 3))
        dens = gmm_pdf(params, points)
        log_dens = log_gmm_pdf(params, points)
        mask = dens > 1e-300
        assert np.all(mask), "test points should not underflow"
        assert np.allclose(np.exp(log_dens[mask]), dens[mask], rtol=1e-12)

    def test_matches_extended_precision_oracle(self):
        """Float64 mixture evaluation tracks a 50-digit mpmath oracle."""
        rng = np.random.default_rng(3)
        weights, means, covs = random_gmm(3, 2, rng)
        params = GmmParams(weights, means, covs)
        points = rng.uniform(-4.0, 4.0, (20, 2))
        ours = log_gmm_pdf(params, points)
        for n in range(points.shape[0]):
            oracle = float(log_gmm_pdf_mp(weights, means, covs, points[n]))
            assert ours[n] == pytest.approx(oracle, rel=1e-12, abs=1e-12)

    def test_density_integrates_to_box_mass(self):
        """Monte-Carlo integral of the pdf over a box matches the exact
        mixture mass in that box to within 2%."""
        weights = np.array([0.3, 0.7])
        means = np.array([[-1.0, 0.5], [2.0, -1.0]])
        covs = np.array([np.diag([1.0, 0.5]), np.diag([0.8, 1.5])])
        params = GmmParams(weights, means, covs)
        lo = np.array([-7.0, -7.0])
        hi = np.array([8.0, 6.0])
        rng = np.random.default_rng(2024)
        points = rng.uniform(lo, hi, (400_000, 2))
        volume = float(np.prod(hi - lo))
        mc_mass = float(np.mean(gmm_pdf(params, points))) * volume
        exact = mixture_box_mass(weights, means, covs, lo, hi)
        assert exact > 0.99, "box should capture nearly all mass"
        assert abs(mc_mass - exact) <= 0.02 * exact, (
            f"Monte-Carlo box mass {mc_mass:.5f} deviates from exact "
            f"{exact:.5f} by more than 2%"
        )

    def test_batch_matches_single_point_scoring(self):
        """Scoring a block of points equals scoring them one at a time."""
        rng = np.random.default_rng(11)
        weights, means, covs = random_gmm(2, 2, rng)
        params = GmmParams(weights, means, covs)
        points = rng.uniform(-3.0, 3.0, (10, 2))
        block = log_gmm_pdf(params, points)
        singles = [log_gmm_pdf(params, p)[0] for p in points]
        # block and single-column triangular solves may differ in the last
        # bit, nothing more
        assert np.allclose(block, singles, rtol=1e-13, atol=0)

    def test_dimension_mismatch_raises(self):
        params = GmmParams(np.array([1.0]), np.zeros((1, 2)),
                           np.eye(2)[None])
        with pytest.raises(DimensionMismatch):
            log_gmm_pdf(params, np.zeros((1, 3)))

    def test_non_positive_definite_covariance_raises(self):
        params = GmmParams(np.array([1.0]), np.zeros((1, 2)),
                           np.array([[[1.0, 2.0], [2.0, 1.0]]]))
        with pytest.raises(NonPositiveDefiniteCovariance):
            GmmDensity(params)


class TestSequenceDensity:
    """The factored trajectory density and its per-step geometric mean."""

    @pytest.fixture
    def mixtures(self):
        rng = np.random.default_rng(5)
        single = GmmDensity(GmmParams(*random_gmm(3, 2, rng)))
        concat = GmmDensity(GmmParams(*random_gmm(3, 4, rng)))
        return single, concat

    def test_single_state_scores_as_marginal(self, mixtures):
        """A length-1 sequence is scored by the single-state mixture alone."""
        single, concat = mixtures
        state = np.array([[0.3, -0.7]])
        raw = seq_log_density(state, single, concat)
        assert raw == pytest.approx(float(single.log_pdf(state)[0]),
                                    rel=1e-15)

    def test_pair_telescopes_to_concat_density(self, mixtures):
        """For two states the first-state marginal cancels, leaving the
        concatenated-pair density."""
        single, concat = mixtures
        states = np.array([[0.5, 0.5], [-1.0, 2.0]])
        raw = seq_log_density(states, single, concat)
        pair = np.hstack([states[0], states[1]])[None, :]
        assert raw == pytest.approx(float(concat.log_pdf(pair)[0]),
                                    rel=1e-12)

    def test_factorization_matches_extended_precision(self, mixtures):
        """Five-state factored log density tracks the mpmath oracle."""
        single, concat = mixtures
        rng = np.random.default_rng(17)
        states = rng.uniform(-2.0, 2.0, (5, 2))
        raw = seq_log_density(states, single, concat)
        oracle = float(seq_log_density_mp(
            states, params_tuple(single.params),
            params_tuple(concat.params)))
        assert abs(raw - oracle) <= 1e-9 * abs(oracle), (
            f"factored log density {raw!r} deviates from oracle {oracle!r}"
        )

    def test_step_density_is_per_transition_geometric_mean(self, mixtures):
        single, concat = mixtures
        rng = np.random.default_rng(23)
        states = rng.uniform(-2.0, 2.0, (8, 2))
        dens = seq_density(states, single, concat)
        assert dens.length == 8
        assert dens.step_density == pytest.approx(
            math.exp(dens.raw_log_density / 7.0), rel=1e-15)
        assert dens.step_density > 0.0

    def test_length_one_uses_unit_divisor(self, mixtures):
        single, concat = mixtures
        dens = seq_density(np.array([[0.0, 0.0]]), single, concat)
        assert dens.step_density == pytest.approx(
            math.exp(dens.raw_log_density), rel=1e-15)

    def test_empty_sequence_rejected(self, mixtures):
        single, concat = mixtures
        with pytest.raises(ValueError):
            seq_log_density(np.empty((0, 2)), single, concat)


class TestUpdateParams:
    """The exponentially-weighted statistics fold."""

    @staticmethod
    def stats(gamma: float) -> DynEmState:
        g0 = np.array([0.5, 0.5])
        g1 = np.array([[1.0, 0.0], [0.0, 1.0]])
        g2 = np.array([np.eye(2), 2.0 * np.eye(2)])
        return DynEmState(g0, g1, g2, gamma)

    def test_full_weight_replaces_statistics(self):
        """gamma = 1 discards history: statistics become the observation's."""
        stats = DynEmState(np.array([0.7]), np.array([[3.0, 3.0]]),
                           np.array([5.0 * np.eye(2)]), gamma=1.0)
        w = np.array([0.4])
        x = np.array([1.0, 2.0])
        out = update_params(stats, w, x)
        assert np.array_equal(out.g0, w)
        assert np.array_equal(out.g1, w[:, None] * x)
        assert np.array_equal(out.g2, w[:, None, None] * np.outer(x, x))

    def test_zero_gamma_keeps_statistics(self):
        """gamma = 0 ignores the observation entirely."""
        stats = self.stats(gamma=0.0)
        out = update_params(stats, np.array([1.0, 1.0]),
                            np.array([9.0, 9.0]))
        assert np.array_equal(out.g0, stats.g0)
        assert np.array_equal(out.g1, stats.g1)
        assert np.array_equal(out.g2, stats.g2)

    def test_zero_responsibility_decays_by_keep_factor(self):
        """With w = 0 every statistic is scaled by exactly (1 - gamma)."""
        stats = self.stats(gamma=0.25)
        out = update_params(stats, np.zeros(2), np.array([5.0, -5.0]))
        assert np.array_equal(out.g0, 0.75 * stats.g0)
        assert np.array_equal(out.g1, 0.75 * stats.g1)
        assert np.array_equal(out.g2, 0.75 * stats.g2)

    def test_one_hot_responsibility_isolates_component(self):
        """Only the responsible component moves toward the observation; the
        other is purely decayed."""
        stats = self.stats(gamma=0.5)
        x = np.array([2.0, 4.0])
        out = update_params(stats, np.array([1.0, 0.0]), x)
        assert out.g0[0] == pytest.approx(0.5 * 1.0 + 0.5 * 0.5)
        assert np.allclose(out.g1[0], 0.5 * x + 0.5 * stats.g1[0])
        assert np.allclose(out.g2[0],
                           0.5 * np.outer(x, x) + 0.5 * stats.g2[0])
        assert np.array_equal(out.g0[1:], 0.5 * stats.g0[1:])
        assert np.array_equal(out.g1[1:], 0.5 * stats.g1[1:])
        assert np.array_equal(out.g2[1:], 0.5 * stats.g2[1:])

    def test_repeated_update_matches_geometric_series(self):
        """n identical folds at gamma = 0.5 equal the closed-form series."""
        stats = self.stats(gamma=0.5)
        w = np.array([0.3, 0.7])
        x = np.array([1.0, -2.0])
        out = stats
        n = 7
        for _ in range(n):
            out = update_params(out, w, x)
        g0, g1, g2 = repeated_update_closed_form(
            stats.g0, stats.g1, stats.g2, 0.5, w, x, n)
        assert np.allclose(out.g0, g0, rtol=1e-12, atol=0)
        assert np.allclose(out.g1, g1, rtol=1e-12, atol=1e-15)
        assert np.allclose(out.g2, g2, rtol=1e-12, atol=1e-15)

    def test_update_is_pure(self):
        """Inputs are left untouched; a fresh state is returned."""
        stats = self.stats(gamma=0.5)
        g0_before = stats.g0.copy()
        out = update_params(stats, np.array([1.0, 0.0]),
                            np.array([2.0, 2.0]))
        assert out is not stats
        assert np.array_equal(stats.g0, g0_before)

    def test_responsibility_count_must_match(self):
        with pytest.raises(DimensionMismatch):
            update_params(self.stats(0.5), np.ones(3), np.zeros(2))

    def test_observation_dim_must_match(self):
        with pytest.raises(DimensionMismatch):
            update_params(self.stats(0.5), np.ones(2), np.zeros(3))


class TestExponentialMeanRecurrence:
    """With one component the tracked mean follows the scalar recurrence
    m_n = gamma * x_n + (1 - gamma) * m_{n-1} exactly."""

    def test_single_component_mean_tracks_recurrence(self):
        rng = np.random.default_rng(99)
        seed_state = np.array([[0.5, -0.5]])
        pair = init_dynem(1, 2, seed_state, gamma=0.2, rng=rng)
        samples = rng.uniform(-2.0, 2.0, (40, 2))
        for x in samples:
            pair = dynem_update(pair, x[None, :])
        mean = get_gmm_params(pair.single).means[0]
        oracle = ew_mean_mp(samples, 0.2, seed_state[0])
        assert np.allclose(mean, oracle, rtol=1e-12, atol=1e-14), (
            "single-component mean must follow the exponentially weighted "
            "recurrence exactly"
        )
        # with K = 1 the weight statistic is a fixed point at 1
        assert pair.single.g0[0] == pytest.approx(1.0, rel=1e-12)


class TestGetGmmParams:
    """Recovery of mixture parameters from accumulated statistics."""

    def test_closed_form_recovery(self):
        """Hand-computed statistics recover mu = [1, 2] and the diagonal
        covariance [[1, 0], [0, 5]] (plus the diagonal loading)."""
        stats = DynEmState(np.array([2.0]),
                           np.array([[2.0, 4.0]]),
                           np.array([[[4.0, 4.0], [4.0, 18.0]]]),
                           gamma=0.5)
        params = get_gmm_params(stats)
        assert np.array_equal(params.weights, np.array([1.0]))
        assert np.allclose(params.means[0], [1.0, 2.0], rtol=1e-15)
        expected_cov = np.array([[1.0, 0.0], [0.0, 5.0]]) + EPS_COV * np.eye(2)
        assert np.allclose(params.covariances[0], expected_cov, rtol=1e-12)

    def test_identical_statistics_give_uniform_weights(self):
        g0 = np.full(4, 0.3)
        g1 = np.tile([1.0, 1.0], (4, 1)) * 0.3
        g2 = np.tile(np.outer([1.0, 1.0], [1.0, 1.0]) + np.eye(2),
                     (4, 1, 1)) * 0.3
        params = get_gmm_params(DynEmState(g0, g1, g2, 0.5))
        assert np.allclose(params.weights, 0.25, rtol=1e-15)

    def test_statistics_of_known_gaussian_roundtrip(self):
        """g0 = c, g1 = c mu, g2 = c (Sigma + mu mu^T) recovers (mu, Sigma)
        up to the diagonal loading, for any positive scale c."""
        rng = np.random.default_rng(31)
        mu = rng.uniform(-3.0, 3.0, 3)
        a = rng.uniform(-1.0, 1.0, (3, 3))
        sigma = a @ a.T + 0.5 * np.eye(3)
        for c in (1.0, 0.013, 250.0):
            stats = DynEmState(
                np.array([c]), np.array([c * mu]),
                np.array([c * (sigma + np.outer(mu, mu))]), gamma=0.5)
            params = get_gmm_params(stats)
            assert np.allclose(params.means[0], mu, rtol=1e-9, atol=1e-12)
            assert np.allclose(params.covariances[0],
                               sigma + EPS_COV * np.eye(3),
                               rtol=1e-9, atol=1e-9), f"scale {c}"

    def test_collapsed_component_raises(self):
        stats = DynEmState(np.array([1.0, EPS_WEIGHT / 2]),
                           np.zeros((2, 2)), np.zeros((2, 2, 2)), 0.5)
        with pytest.raises(DegenerateComponent):
            get_gmm_params(stats)

    def test_unfactorizable_covariance_falls_back_to_diagonal(self):
        """A statistics state whose implied covariance has a large negative
        eigenvalue still yields a scorable (positive definite) component."""
        stats = DynEmState(np.array([1.0]), np.array([[2.0, 0.0]]),
                           np.array([np.zeros((2, 2))]), gamma=0.5)
        params = get_gmm_params(stats)
        np.linalg.cholesky(params.covariances[0])  # must not raise
        GmmDensity(params).log_pdf(np.array([0.0, 0.0]))


class TestInitDynem:
    """Seeding both mixtures from one reference trajectory."""

    def test_single_component_seeds_at_state(self):
        v = np.array([1.5, -2.5])
        pair = init_dynem(1, 2, v[None, :], gamma=0.1,
                          rng=np.random.default_rng(0))
        params = get_gmm_params(pair.single)
        assert np.array_equal(params.weights, [1.0])
        assert np.allclose(params.means[0], v, rtol=1e-12)

    def test_lone_state_pairs_with_itself(self):
        v = np.array([1.5, -2.5])
        pair = init_dynem(1, 2, v[None, :], gamma=0.1,
                          rng=np.random.default_rng(0))
        concat = get_gmm_params(pair.concat)
        assert concat.dim == 4
        assert np.allclose(concat.means[0], np.concatenate([v, v]),
                           rtol=1e-12)

    def test_same_seed_is_reproducible(self):
        states = np.random.default_rng(8).normal(size=(30, 3))
        a = init_dynem(5, 3, states, 0.05, np.random.default_rng(123))
        b = init_dynem(5, 3, states, 0.05, np.random.default_rng(123))
        assert np.array_equal(a.single.g1, b.single.g1)
        assert np.array_equal(a.concat.g2, b.concat.g2)

    def test_gamma_domain_enforced(self):
        states = np.zeros((3, 2))
        for bad in (0.0, 1.0, -0.1, 1.5):
            with pytest.raises(ValueError):
                init_dynem(2, 2, states, bad, np.random.default_rng(0))

    def test_components_start_equally_weighted(self):
        states = np.random.default_rng(2).normal(size=(20, 2))
        pair = init_dynem(4, 2, states, 0.05, np.random.default_rng(1))
        assert np.allclose(pair.single.g0, 0.25, rtol=1e-15)
        params = get_gmm_params(pair.single)
        assert np.allclose(params.weights, 0.25, rtol=1e-12)


class TestDynemUpdate:
    """Folding a whole trajectory into both mixtures."""

    @pytest.fixture
    def pair(self):
        states = np.random.default_rng(4).normal(size=(25, 2))
        return init_dynem(3, 2, states, 0.05, np.random.default_rng(9))

    def test_returns_new_pair(self, pair):
        before = pair.single.g0.copy()
        out = dynem_update(pair, np.random.default_rng(1).normal(size=(6, 2)))
        assert out is not pair
        assert np.array_equal(pair.single.g0, before), (
            "dynem_update must not mutate its input"
        )

    def test_length_one_leaves_concat_untouched(self, pair):
        out = dynem_update(pair, np.array([[0.5, 0.5]]))
        assert np.array_equal(out.concat.g0, pair.concat.g0)
        assert np.array_equal(out.concat.g2, pair.concat.g2)
        assert not np.array_equal(out.single.g0, pair.single.g0)

    def test_collapsed_components_are_reseeded(self):
        """A component starved of responsibility long enough to collapse is
        re-seeded instead of poisoning parameter recovery."""
        seed = np.array([[0.0, 0.0], [100.0, 100.0]])
        pair = init_dynem(2, 2, seed, gamma=0.5,
                          rng=np.random.default_rng(0))
        # every observation sits on one component; the other decays by
        # (1 - gamma) per fold and crosses EPS_WEIGHT within ~60 folds
        x = get_gmm_params(pair.single).means[0][None, :]
        for _ in range(80):
            pair = dynem_update(pair, x)
        assert np.all(pair.single.g0 >= EPS_WEIGHT), (
            "no component may remain collapsed after an update"
        )
        get_gmm_params(pair.single)  # must not raise


class TestDensityEstimatorGate:
    """tau-gated updates, scoring, and standardization of the owner object."""

    @staticmethod
    def make_estimator(tau: float) -> DensityEstimator:
        states = np.random.default_rng(6).normal(size=(40, 2))
        return DensityEstimator.from_states(
            3, 2, states, tau=tau, gamma=0.05,
            rng=np.random.default_rng(10))

    @staticmethod
    def stats_snapshot(est: DensityEstimator):
        return (est.pair.single.g0.copy(), est.pair.single.g1.copy(),
                est.pair.concat.g2.copy())

    def test_tau_must_be_positive(self):
        with pytest.raises(ValueError):
            self.make_estimator(0.0)
        with pytest.raises(ValueError):
            self.make_estimator(-1.0)

    def test_densities_are_strictly_positive(self):
        est = self.make_estimator(0.01)
        seq = np.random.default_rng(3).normal(size=(12, 2))
        dens = est.score(seq)
        assert dens.step_density > 0.0
        assert math.isfinite(dens.raw_log_density)

    def test_tiny_tau_never_updates(self):
        """Densities are strictly positive, so a tau at the bottom of the
        float range can never be undercut: the statistics stay bit-equal."""
        est = self.make_estimator(1e-300)
        g0, g1, g2 = self.stats_snapshot(est)
        for k in range(5):
            est.score_and_maybe_update(
                np.random.default_rng(k).normal(size=(10, 2)))
        assert np.array_equal(est.pair.single.g0, g0)
        assert np.array_equal(est.pair.single.g1, g1)
        assert np.array_equal(est.pair.concat.g2, g2)

    def test_infinite_tau_always_updates(self):
        est = self.make_estimator(float("inf"))
        g0, _, _ = self.stats_snapshot(est)
        est.score_and_maybe_update(
            np.random.default_rng(1).normal(size=(10, 2)))
        assert not np.array_equal(est.pair.single.g0, g0), (
            "an infinite threshold must fold every sequence in"
        )

    def test_returns_pre_update_density(self):
        """score_and_maybe_update reports the density under the parameters
        in force before the fold."""
        est = self.make_estimator(float("inf"))
        seq = np.random.default_rng(2).normal(size=(8, 2))
        before = est.score(seq)
        returned = est.score_and_maybe_update(seq)
        assert returned.raw_log_density == before.raw_log_density
        assert est.score(seq).raw_log_density != before.raw_log_density

    def test_second_presentation_scores_strictly_higher(self):
        """Folding a trajectory in raises its own density: the second
        presentation of the same sequence scores strictly higher."""
        est = self.make_estimator(float("inf"))
        seq = np.random.default_rng(14).normal(size=(15, 2))
        first = est.score_and_maybe_update(seq)
        second = est.score_and_maybe_update(seq)
        assert second.step_density > first.step_density, (
            f"second presentation {second.step_density!r} should exceed "
            f"first {first.step_density!r}"
        )

    def test_gate_straddles_threshold(self):
        """With tau between a sequence's first and post-update densities the
        gate closes after one fold: a third presentation changes nothing."""
        probe = self.make_estimator(float("inf"))
        seq = np.random.default_rng(14).normal(size=(15, 2))
        first = probe.score_and_maybe_update(seq)
        second = probe.score(seq)
        tau = 0.5 * (first.step_density + second.step_density)

        est = self.make_estimator(tau)
        est.score_and_maybe_update(seq)   # below tau: folds in
        est.score_and_maybe_update(seq)   # now above tau: gate closed
        g0, g1, g2 = self.stats_snapshot(est)
        est.score_and_maybe_update(seq)
        assert np.array_equal(est.pair.single.g0, g0)
        assert np.array_equal(est.pair.single.g1, g1)
        assert np.array_equal(est.pair.concat.g2, g2)

    def test_score_never_updates(self):
        est = self.make_estimator(float("inf"))
        g0, g1, g2 = self.stats_snapshot(est)
        est.score(np.random.default_rng(0).normal(size=(9, 2)))
        assert np.array_equal(est.pair.single.g0, g0)
        assert np.array_equal(est.pair.single.g1, g1)
        assert np.array_equal(est.pair.concat.g2, g2)

    def test_standardization_floors_constant_dimensions(self):
        """Dimensions without spread in the normalization pool keep unit
        scale instead of exploding."""
        states = np.zeros((30, 2))
        states[:, 0] = np.linspace(-1.0, 1.0, 30)  # dim 1 stays constant
        est = DensityEstimator.from_states(
            2, 2, states, tau=0.01, gamma=0.05,
            rng=np.random.default_rng(0), norm_states=states)
        assert est.scale[1] == pytest.approx(1.0)
        assert est.scale[0] == pytest.approx(1.0 / states[:, 0].std(),
                                             rel=1e-12)


class TestSnapshot:
    """Bit-exact persistence of the estimator."""

    def test_roundtrip_is_bit_exact(self, tmp_path):
        est = TestDensityEstimatorGate.make_estimator(0.02)
        est.update(np.random.default_rng(55).normal(size=(20, 2)))
        path = tmp_path / "dynem.snapshot"
        est.save(path)
        loaded = DensityEstimator.load(path)
        assert loaded.tau == est.tau
        assert loaded.normalize == est.normalize
        for name in ("g0", "g1", "g2"):
            assert np.array_equal(getattr(loaded.pair.single, name),
                                  getattr(est.pair.single, name)), name
            assert np.array_equal(getattr(loaded.pair.concat, name),
                                  getattr(est.pair.concat, name)), name
        assert np.array_equal(loaded.offset, est.offset)
        assert np.array_equal(loaded.scale, est.scale)
        seq = np.random.default_rng(1).normal(size=(10, 2))
        assert loaded.score(seq).raw_log_density == \
            est.score(seq).raw_log_density

    def test_missing_snapshot_raises(self, tmp_path):
        with pytest.raises(SnapshotError):
            DensityEstimator.load(tmp_path / "nope.snapshot")

    def test_corrupt_snapshot_raises(self, tmp_path):
        path = tmp_path / "bad.snapshot"
        path.write_bytes(b"this is not an npz archive")
        with pytest.raises(SnapshotError):
            DensityEstimator.load(path)

    def test_unknown_version_raises(self, tmp_path):
        path = tmp_path / "future.snapshot.npz"
        np.savez(path, version=np.int64(99))
        with pytest.raises(SnapshotError):
            DensityEstimator.load(path)
