import math

import numpy as np
import pytest

from cpreg.inference import (
    ChainConfig,
    PosteriorSamples,
    compute_dic,
    default_proposal_sd,
    dic_from_deviances,
    interval_selection,
    median_probability_model,
    one_step_ahead_forecast,
    rmspe,
    run_chain,
    select_num_changepoints,
    summarize,
)
from cpreg.kernels import NumericalError, RngStream
from cpreg.model import Dataset, NoiseModel, SpikeSlabPrior

from oracles import spike_slab_log_marginal


def strong_signal_data(n=50, seed=21, p=1):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    y = 2.5 * X[:, 0] + 0.6 * rng.normal(size=n)
    return Dataset(y=y, X=X, t=np.arange(1.0, n + 1))


def tiny_config(**kw):
    defaults = dict(
        iterations=400, burn_in=100, K=1, cp_bounds=(3.0, 48.0), seed=5,
        noise=NoiseModel(1.0, 3.0, 2.0),
    )
    defaults.update(kw)
    return ChainConfig(**defaults)


class TestRunChain:
    def test_bit_identical_reruns(self):
        data = strong_signal_data()
        prior = SpikeSlabPrior(gamma0=[0.01, 0.01], gamma1=[5.0, 5.0], q=[0.3, 0.3])
        cfg = tiny_config(prior=prior)
        a = run_chain(data, cfg)
        b = run_chain(data, cfg)
        assert np.array_equal(a.beta, b.beta)
        assert np.array_equal(a.sigma2, b.sigma2)
        assert np.array_equal(a.tau, b.tau)
        assert np.array_equal(a.Z, b.Z)
        assert a.tau_acceptance == b.tau_acceptance

    def test_retained_count_and_thinning(self):
        data = strong_signal_data()
        cfg = tiny_config(iterations=500, burn_in=200, thin=3,
                          prior=SpikeSlabPrior([0.01, 0.01], [5.0, 5.0], [0.3, 0.3]))
        samples = run_chain(data, cfg)
        assert samples.draws == (500 - 200) // 3
        assert samples.beta.shape == (100, 2, 1)
        assert 0.0 <= samples.tau_acceptance <= 1.0

    def test_homogeneous_inclusion_matches_bayes_factor_oracle(self):
        # p = 1, K = 0: P(Z=1 | y) available in closed form by integrating
        # beta and sigma2 out of both inclusion configurations
        data = strong_signal_data()
        g0, g1, q = 0.005, 5.0, 0.3
        a_s, b_s = 3.0, 2.0
        prior = SpikeSlabPrior(gamma0=[g0], gamma1=[g1], q=[q])
        cfg = ChainConfig(
            iterations=6000, burn_in=1000, K=0, cp_bounds=(3.0, 48.0),
            prior=prior, noise=NoiseModel(1.0, a_s, b_s), seed=13,
        )
        samples = run_chain(data, cfg)
        inclusion = samples.Z.astype(float).mean(axis=0)[0, 0]

        tau_off = 1e9  # single segment; oracle treats all rows as segment 1
        m1 = spike_slab_log_marginal(
            data.y, data.X, data.t, tau_off, (1,), (0,), g0, g1, a_s, b_s,
        )
        m0 = spike_slab_log_marginal(
            data.y, data.X, data.t, tau_off, (0,), (0,), g0, g1, a_s, b_s,
        )
        post = 1.0 / (1.0 + math.exp(m0 - m1) * (1 - q) / q)
        assert inclusion > 0.9
        assert inclusion == pytest.approx(post, abs=0.03)

    def test_numerical_error_carries_sweep(self):
        data = strong_signal_data()
        bad = Dataset(
            y=data.y, X=data.X.copy(), t=data.t
        )
        bad.X[3, 0] = np.nan
        cfg = tiny_config(prior=SpikeSlabPrior([0.01, 0.01], [5.0, 5.0], [0.3, 0.3]))
        with pytest.raises(NumericalError, match="sweep 1"):
            run_chain(bad, cfg)

    def test_lasso_and_group_lasso_run(self):
        data = strong_signal_data()
        for prior in ("lasso", "group-lasso"):
            samples = run_chain(data, tiny_config(prior=prior))
            assert samples.Z is None
            assert samples.eta is not None
            assert np.all(np.isfinite(samples.beta))

    def test_default_proposal_scales_with_spacing(self):
        assert default_proposal_sd(np.arange(10.0)) == pytest.approx(0.1)
        assert default_proposal_sd(np.arange(0.0, 50.0, 5.0)) == pytest.approx(0.5)


class TestSelectionRules:
    def test_median_probability_strict_threshold(self):
        draws = np.zeros((10, 1, 3), dtype=np.int8)
        draws[:6, 0, 0] = 1   # 0.6
        draws[:4, 0, 1] = 1   # 0.4
        draws[:5, 0, 2] = 1   # 0.5 exactly: excluded
        assert median_probability_model(draws)[0].tolist() == [0]

    def test_median_probability_empty(self):
        draws = np.zeros((8, 2, 3), dtype=np.int8)
        assert all(len(s) == 0 for s in median_probability_model(draws))

    def test_near_half_probability_not_selected(self):
        draws = np.zeros((1000, 1, 1), dtype=np.int8)
        draws[:498, 0, 0] = 1
        assert median_probability_model(draws)[0].size == 0

    def test_interval_selection(self):
        rng = np.random.default_rng(0)
        draws = np.stack(
            [
                np.column_stack([rng.uniform(0.2, 0.9, 500), rng.uniform(-0.1, 0.3, 500)])
            ],
            axis=1,
        )
        assert interval_selection(draws, 0.95)[0].tolist() == [0]

    def test_interval_selection_degenerate_zero(self):
        draws = np.zeros((50, 1, 2))
        assert interval_selection(draws)[0].size == 0


class TestDic:
    def test_identity_on_toy_deviances(self):
        dic, p_d = dic_from_deviances(np.array([10.0, 14.0]), 11.0)
        assert dic == pytest.approx(13.0)
        assert p_d == pytest.approx(1.0)

    def test_point_mass_posterior(self):
        data = strong_signal_data(n=20)
        cfg = tiny_config(iterations=12, burn_in=2, cp_bounds=(3.0, 18.0),
                          prior=SpikeSlabPrior([0.01, 0.01], [5.0, 5.0], [0.3, 0.3]))
        samples = run_chain(data, cfg)
        frozen = PosteriorSamples(
            beta=np.repeat(samples.beta[:1], 5, axis=0),
            sigma2=np.repeat(samples.sigma2[:1], 5),
            tau=np.repeat(samples.tau[:1], 5, axis=0),
            log_likelihood=np.repeat(samples.log_likelihood[:1], 5),
            tau_acceptance=1.0,
            config=cfg,
            prior=samples.prior,
            Z=np.repeat(samples.Z[:1], 5, axis=0),
        )
        dic, p_d = compute_dic(frozen, data)
        assert p_d == pytest.approx(0.0, abs=1e-9)
        assert dic == pytest.approx(-2.0 * frozen.log_likelihood[0], rel=1e-12)

    def test_dic_identity_holds_on_real_run(self):
        data = strong_signal_data()
        cfg = tiny_config(prior=SpikeSlabPrior([0.01, 0.01], [5.0, 5.0], [0.3, 0.3]))
        samples = run_chain(data, cfg)
        dic, p_d = compute_dic(samples, data)
        mean_dev = float((-2.0 * samples.log_likelihood).mean())
        assert dic == pytest.approx(mean_dev + p_d, rel=1e-12)

    def test_no_draws_rejected(self):
        with pytest.raises(ValueError):
            dic_from_deviances(np.empty(0), 1.0)


class TestForecast:
    def make_samples(self, beta, sigma2, tau, config):
        beta = np.asarray(beta, float)
        n_draws = beta.shape[0]
        return PosteriorSamples(
            beta=beta,
            sigma2=np.asarray(sigma2, float),
            tau=np.asarray(tau, float).reshape(n_draws, -1),
            log_likelihood=np.zeros(n_draws),
            tau_acceptance=1.0,
            config=config,
            prior="spike-slab",
        )

    def test_noiseless_point_mass(self):
        cfg = tiny_config()
        samples = self.make_samples(
            beta=[[[1.0, 2.0], [3.0, -1.0]]], sigma2=[1e-30], tau=[[10.0]], config=cfg
        )
        fc = one_step_ahead_forecast(
            samples, np.array([[2.0, 1.0]]), np.array([5.0]), RngStream(0).generator()
        )
        assert fc.draws[0, 0] == pytest.approx(4.0, abs=1e-9)

    def test_beyond_last_changepoint_uses_last_segment(self):
        cfg = tiny_config()
        samples = self.make_samples(
            beta=[[[1.0, 0.0], [5.0, 0.0]]], sigma2=[1e-30], tau=[[10.0]], config=cfg
        )
        fc = one_step_ahead_forecast(
            samples, np.array([[1.0, 0.0]]), np.array([99.0]), RngStream(0).generator()
        )
        assert fc.median[0] == pytest.approx(5.0, abs=1e-9)

    def test_intervals_widen_with_noise_scale(self):
        cfg = tiny_config()
        rng_draws = np.random.default_rng(3)
        beta = rng_draws.normal(size=(400, 2, 2))
        s2 = rng_draws.uniform(0.5, 1.5, 400)
        tau = np.full((400, 1), 10.0)
        x = np.array([[1.0, 1.0], [0.5, -2.0]])
        t_new = np.array([3.0, 20.0])
        lo = self.make_samples(beta, s2, tau, cfg)
        hi = self.make_samples(beta, 4.0 * s2, tau, cfg)
        fc_lo = one_step_ahead_forecast(lo, x, t_new, RngStream(4).generator())
        fc_hi = one_step_ahead_forecast(hi, x, t_new, RngStream(4).generator())
        assert np.all((fc_hi.upper - fc_hi.lower) >= (fc_lo.upper - fc_lo.lower))

    def test_rmspe(self):
        assert rmspe([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert rmspe([2.0, 0.0], [1.0, 1.0]) == pytest.approx(1.0)
        with pytest.raises(ValueError):
            rmspe([1.0], [1.0, 2.0])


class TestSelectNumChangepoints:
    def test_single_value_trivial(self):
        data = strong_signal_data()
        sel = select_num_changepoints(
            data, [0], tiny_config(K=0, prior=SpikeSlabPrior([0.01], [5.0], [0.3]))
        )
        assert sel.best_K == 0
        assert len(sel.reports) == 1

    def test_jobs_do_not_change_results(self):
        data = strong_signal_data(p=2)
        base = tiny_config(prior="spike-slab")
        serial = select_num_changepoints(data, [0, 1], base, jobs=1)
        threaded = select_num_changepoints(data, [0, 1], base, jobs=2)
        for r1, r2 in zip(serial.reports, threaded.reports):
            assert r1.K == r2.K
            assert r1.dic == r2.dic
            assert np.array_equal(r1.tau_median, r2.tau_median)
        for K in (0, 1):
            assert np.array_equal(serial.samples[K].beta, threaded.samples[K].beta)

    def test_holdout_produces_rmspe(self):
        data = strong_signal_data(p=2)
        train = Dataset(y=data.y[:40], X=data.X[:40], t=data.t[:40])
        held = (data.X[40:], data.y[40:], data.t[40:])
        sel = select_num_changepoints(
            data=train,
            K_values=[0],
            base_config=tiny_config(K=0, cp_bounds=(3.0, 38.0), prior="spike-slab"),
            holdout=held,
        )
        assert sel.reports[0].rmspe is not None
        assert sel.reports[0].rmspe < 2.0  # strong signal forecasts well


class TestSummarize:
    def test_summary_shapes_and_order(self):
        data = strong_signal_data(p=2)
        cfg = tiny_config(prior="spike-slab")
        samples = run_chain(data, cfg)
        summary = summarize(samples, data, level=0.9)
        assert summary.beta_median.shape == (2, 2)
        assert np.all(summary.beta_lower <= summary.beta_median)
        assert np.all(summary.beta_median <= summary.beta_upper)
        assert summary.inclusion_prob.shape == (2, 2)
        assert summary.dic == pytest.approx(
            float((-2 * samples.log_likelihood).mean()) + summary.p_d, rel=1e-12
        )

    def test_summary_invariant_to_relabeling_noop_thin(self):
        data = strong_signal_data(p=2)
        cfg = tiny_config(prior="spike-slab")
        samples = run_chain(data, cfg)
        s1 = summarize(samples, data)
        # reversing draw order must not change any summary (draws exchangeable)
        reversed_samples = PosteriorSamples(
            beta=samples.beta[::-1].copy(),
            sigma2=samples.sigma2[::-1].copy(),
            tau=samples.tau[::-1].copy(),
            log_likelihood=samples.log_likelihood[::-1].copy(),
            tau_acceptance=samples.tau_acceptance,
            config=samples.config,
            prior=samples.prior,
            Z=samples.Z[::-1].copy(),
        )
        s2 = summarize(reversed_samples, data)
        assert np.array_equal(s1.beta_median, s2.beta_median)
        assert np.array_equal(s1.inclusion_prob, s2.inclusion_prob)
        assert s1.dic == s2.dic


class TestForecastCoverage:
    def test_predictive_interval_coverage(self):
        # correctly specified model: 95% one-step intervals should cover the
        # held-out truth in roughly 95% of replicates
        g0, g1, q = 0.005, 5.0, 0.4
        prior = SpikeSlabPrior(gamma0=[g0], gamma1=[g1], q=[q])
        covered = 0
        replicates = 200
        for rep in range(replicates):
            rng = np.random.default_rng(1000 + rep)
            n = 40
            X = rng.normal(size=(n + 1, 2))
            sigma = 0.8
            y = 1.8 * X[:, 0] - 1.1 * X[:, 1] + sigma * rng.standard_normal(n + 1)
            data = Dataset(y=y[:n], X=X[:n], t=np.arange(1.0, n + 1))
            cfg = ChainConfig(
                iterations=500, burn_in=150, K=0, cp_bounds=(3.0, 38.0),
                prior=prior, noise=NoiseModel(1.0, 3.0, 2.0), seed=2000 + rep,
            )
            samples = run_chain(data, cfg)
            fc = one_step_ahead_forecast(
                samples, X[n:], np.array([float(n + 1)]),
                RngStream(3000 + rep).generator(),
            )
            covered += fc.lower[0] <= y[n] <= fc.upper[0]
        rate = covered / replicates
        assert 0.90 <= rate <= 1.0
