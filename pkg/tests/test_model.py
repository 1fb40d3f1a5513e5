import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import binom

from cpreg.model import (
    ChangePointState,
    Dataset,
    InsufficientDataError,
    NoiseModel,
    SpikeSlabPrior,
    default_spike_slab_scales,
    default_spike_slab_prior,
    initial_changepoints,
    log_likelihood,
    partition_by_threshold,
    solve_prior_inclusion,
)

from oracles import exact_binomial_tail, solve_prior_inclusion_exact


def cp(tau, a=-1e9, b=1e9):
    return ChangePointState(np.asarray(tau, dtype=float), a, b)


class TestPartition:
    def test_single_changepoint(self):
        part = partition_by_threshold(np.array([1.0, 2, 3, 4, 5]), cp([2.5]))
        assert part.segment_of.tolist() == [1, 1, 2, 2, 2]
        assert part.counts.tolist() == [2, 3]

    def test_two_changepoints(self):
        part = partition_by_threshold(np.array([1.0, 2, 3, 4, 5]), cp([1.5, 3.5]))
        assert part.segment_of.tolist() == [1, 2, 2, 3, 3]

    def test_homogeneous(self):
        part = partition_by_threshold(np.array([1.0, 2, 3]), cp([]))
        assert part.segment_of.tolist() == [1, 1, 1]
        assert part.counts.tolist() == [3]

    def test_right_closed_boundary(self):
        # t equal to a change point belongs to the left segment
        part = partition_by_threshold(np.array([1.0, 2.0, 3.0]), cp([2.0]))
        assert part.segment_of.tolist() == [1, 1, 2]

    @given(
        st.lists(st.integers(0, 50), min_size=1, max_size=40),
        st.lists(st.floats(-5, 55), min_size=0, max_size=4),
    )
    @settings(max_examples=200, deadline=None)
    def test_labels_nondecreasing_counts_sum(self, t_raw, tau_raw):
        t = np.sort(np.asarray(t_raw, dtype=float))
        tau = np.unique(np.asarray(tau_raw, dtype=float))
        part = partition_by_threshold(t, cp(tau))
        assert np.all(np.diff(part.segment_of) >= 0)
        assert part.counts.sum() == t.size
        # brute-force the right-closed definition per observation
        for i, ti in enumerate(t):
            expected = 1 + int(np.sum(tau < ti))
            assert part.segment_of[i] == expected


class TestLogLikelihood:
    def make_data(self, y, t=None):
        y = np.asarray(y, dtype=float)
        t = np.arange(1.0, y.size + 1) if t is None else np.asarray(t, float)
        return Dataset(y=y, X=np.zeros((y.size, 1)), t=t)

    def test_standard_normal_point(self):
        data = self.make_data([0.0])
        part = partition_by_threshold(data.t, cp([]))
        value = log_likelihood(data, part, np.zeros((1, 1)), 1.0)
        assert value == pytest.approx(-0.9189385332046727, abs=1e-12)

    def test_two_unit_residuals(self):
        data = self.make_data([1.0, -1.0])
        part = partition_by_threshold(data.t, cp([]))
        value = log_likelihood(data, part, np.zeros((1, 1)), 1.0)
        assert value == pytest.approx(-2.8378770664093453, abs=1e-12)

    def test_inflated_variance_zero_residual(self):
        data = self.make_data([0.0])
        part = partition_by_threshold(data.t, cp([]))
        value = log_likelihood(data, part, np.zeros((1, 1)), 4.0)
        assert value == pytest.approx(-0.5 * math.log(8 * math.pi), abs=1e-12)

    def test_additive_over_observations(self):
        rng = np.random.default_rng(0)
        y = rng.normal(size=9)
        X = rng.normal(size=(9, 2))
        beta = rng.normal(size=(1, 2))
        full = Dataset(y=y, X=X, t=np.arange(9.0))
        part = partition_by_threshold(full.t, cp([]))
        total = log_likelihood(full, part, beta, 1.7)
        pieces = 0.0
        for sl in (slice(0, 4), slice(4, 9)):
            sub = Dataset(y=y[sl], X=X[sl], t=np.arange(float(sl.stop - sl.start)))
            pieces += log_likelihood(
                sub, partition_by_threshold(sub.t, cp([])), beta, 1.7
            )
        assert total == pytest.approx(pieces, rel=1e-12)

    def test_segmented_matches_direct_oracle(self):
        from oracles import gaussian_loglik

        rng = np.random.default_rng(3)
        y = rng.normal(size=8)
        X = rng.normal(size=(8, 3))
        t = np.arange(1.0, 9.0)
        beta = rng.normal(size=(2, 3))
        data = Dataset(y=y, X=X, t=t)
        part = partition_by_threshold(t, cp([4.5]))
        ours = log_likelihood(data, part, beta, 0.8)
        assert ours == pytest.approx(gaussian_loglik(y, X, t, [4.5], beta, 0.8), rel=1e-12)

    def test_nonpositive_sigma2(self):
        data = self.make_data([0.0])
        part = partition_by_threshold(data.t, cp([]))
        with pytest.raises(ValueError):
            log_likelihood(data, part, np.zeros((1, 1)), 0.0)


class TestSpikeSlabScales:
    def test_large_p_branch(self):
        gamma0, gamma1 = default_spike_slab_scales(1.0, 100, 250)
        assert gamma0 == pytest.approx(0.001, rel=1e-12)
        assert gamma1 == pytest.approx(10.856104576373047, rel=1e-10)

    def test_log_branch(self):
        gamma0, gamma1 = default_spike_slab_scales(4.0, 200, 50)
        assert gamma0 == pytest.approx(0.002, rel=1e-12)
        assert gamma1 == pytest.approx(21.193269466192145, rel=1e-10)

    def test_small_p(self):
        gamma0, gamma1 = default_spike_slab_scales(1.0, 10, 1)
        assert gamma0 == pytest.approx(0.01, rel=1e-12)
        assert gamma1 == pytest.approx(math.log(10), rel=1e-12)

    def test_insufficient_data(self):
        with pytest.raises(InsufficientDataError):
            default_spike_slab_scales(1.0, 1, 5)

    @given(
        st.floats(1e-6, 1e6),
        st.integers(2, 10_000),
        st.integers(1, 2_000),
    )
    @settings(max_examples=300, deadline=None)
    def test_spike_below_slab(self, var, n_k, p):
        gamma0, gamma1 = default_spike_slab_scales(var, n_k, p)
        assert 0 < gamma0 < gamma1


class TestPriorInclusion:
    def test_benchmark_dimensions(self):
        q = solve_prior_inclusion(250, 100)
        assert q == pytest.approx(0.02825309386162924, abs=5e-6)
        assert q == pytest.approx(solve_prior_inclusion_exact(250, 100), abs=5e-6)

    def test_two_variables_closed_form(self):
        # m = 1, so q solves q^2 = 0.1
        q = solve_prior_inclusion(2, 100)
        assert q == pytest.approx(math.sqrt(0.1), abs=1e-7)

    def test_tail_reproduced(self):
        for p, n_k in [(250, 100), (50, 30), (22, 93)]:
            q = solve_prior_inclusion(p, n_k)
            m = min(p - 1, max(10.0, math.log(n_k)))
            tail = float(exact_binomial_tail(p, Fraction(q).limit_denominator(10**12), m))
            assert tail == pytest.approx(0.1, abs=1e-6)

    def test_unreachable_target_clamps(self):
        with pytest.warns(UserWarning):
            q = solve_prior_inclusion(5, 10, tail_prob=1.0)
        assert q == pytest.approx(1.0, abs=1e-9)

    def test_scipy_tail_agrees_with_exact(self):
        # the implementation leans on scipy's binomial tail; pin it to the
        # exact rational computation once
        value = float(binom.sf(10, 250, 0.028))
        exact = float(exact_binomial_tail(250, Fraction(28, 1000), 10.0))
        assert value == pytest.approx(exact, rel=1e-10)


class TestTypes:
    def test_dataset_requires_sorted_t(self):
        with pytest.raises(ValueError):
            Dataset(y=np.zeros(2), X=np.zeros((2, 1)), t=np.array([2.0, 1.0]))

    def test_dataset_from_arrays_sorts_stably(self):
        data = Dataset.from_arrays(
            y=[1.0, 2.0, 3.0], X=[[1.0], [2.0], [3.0]], t=[3.0, 1.0, 1.0]
        )
        assert data.t.tolist() == [1.0, 1.0, 3.0]
        assert data.y.tolist() == [2.0, 3.0, 1.0]

    def test_changepoint_state_bounds(self):
        with pytest.raises(ValueError):
            ChangePointState(np.array([1.0]), 5.0, 2.0)
        state = ChangePointState(np.array([3.0, 2.0]), 0.0, 10.0)
        assert not state.in_support()
        assert ChangePointState(np.array([2.0, 3.0]), 0.0, 10.0).in_support()

    def test_spike_slab_prior_validation(self):
        with pytest.raises(ValueError):
            SpikeSlabPrior(gamma0=[1.0], gamma1=[0.5], q=[0.5])
        with pytest.raises(ValueError):
            SpikeSlabPrior(gamma0=[0.1], gamma1=[1.0], q=[1.5])

    def test_noise_model_validation(self):
        with pytest.raises(ValueError):
            NoiseModel(sigma2=-1.0)

    def test_initial_changepoints_equally_spaced(self):
        assert initial_changepoints(1, 20.0, 180.0).tolist() == [100.0]
        assert np.allclose(
            initial_changepoints(2, 0.0, 30.0), [10.0, 20.0]
        )


class TestDefaultPrior:
    def test_segment_variances_under_midpoint(self):
        rng = np.random.default_rng(1)
        n = 60
        t = np.arange(1.0, n + 1)
        y = np.concatenate([rng.normal(0, 1, 30), rng.normal(0, 3, 30)])
        data = Dataset(y=y, X=rng.normal(size=(n, 4)), t=t)
        prior = default_spike_slab_prior(data, K=1, a_tau=10.0, b_tau=50.0)
        # midpoint initial estimate is tau0 = 30
        v1 = float(np.var(y[:30], ddof=1))
        v2 = float(np.var(y[30:], ddof=1))
        assert prior.gamma0[0] == pytest.approx(v1 / 300.0)
        assert prior.gamma0[1] == pytest.approx(v2 / 300.0)
        assert np.all(prior.gamma1 > prior.gamma0)
        assert np.all((prior.q > 0) & (prior.q < 1))

    def test_too_small_segments_rejected(self):
        data = Dataset(
            y=np.arange(4.0), X=np.ones((4, 2)), t=np.arange(1.0, 5.0)
        )
        with pytest.raises(InsufficientDataError):
            default_spike_slab_prior(data, K=1, a_tau=1.0, b_tau=1.5)
