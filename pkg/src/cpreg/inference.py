"""Chain orchestration and posterior inference: the Gibbs sweep, burn-in and
thinning, posterior summaries, variable selection rules, DIC-based comparison
of change-point counts, and one-step-ahead prediction.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .kernels import (
    KernelWorkspace,
    NumericalError,
    RngStream,
    metropolis_tau,
    sample_beta_segment,
    sample_grouplasso_eta,
    sample_grouplasso_lambda2,
    sample_inclusion,
    sample_lasso_eta,
    sample_lasso_lambda2,
    sample_sigma2,
)
from .model import (
    MIN_SEGMENT_SIZE,
    ChangePointState,
    Dataset,
    GroupLassoPrior,
    InsufficientDataError,
    LassoPrior,
    McmcState,
    NoiseModel,
    PriorSpec,
    SpikeSlabPrior,
    default_spike_slab_prior,
    initial_changepoints,
    log_likelihood,
    partition_by_threshold,
)

__all__ = [
    "PRIOR_FAMILIES",
    "ChainConfig",
    "PosteriorSamples",
    "PosteriorSummary",
    "Forecast",
    "KReport",
    "KSelection",
    "default_proposal_sd",
    "gibbs_sweep",
    "run_chain",
    "median_probability_model",
    "interval_selection",
    "dic_from_deviances",
    "compute_dic",
    "one_step_ahead_forecast",
    "rmspe",
    "select_num_changepoints",
    "summarize",
]

PRIOR_FAMILIES = ("spike-slab", "lasso", "group-lasso")

# Forecast noise draws use an RNG stream offset far from chain streams
# (chains use stream = K) so the two never collide.
FORECAST_STREAM_OFFSET = 1_000_000


@dataclass(frozen=True)
class ChainConfig:
    """Settings for one MCMC run.

    ``prior`` is either a concrete prior specification or a family name from
    ``PRIOR_FAMILIES``; family names get data-driven hyperparameter defaults
    resolved when the chain starts. ``proposal_sd`` of None defaults to
    0.1 times the median spacing of the threshold variable.
    """

    iterations: int
    burn_in: int
    K: int
    cp_bounds: tuple[float, float]
    prior: PriorSpec | str = "spike-slab"
    noise: NoiseModel = NoiseModel()
    thin: int = 1
    seed: int = 0
    proposal_sd: float | None = None
    exact_conditionals: bool = True
    forced_in: np.ndarray | None = None
    lasso_r: float = 1.0
    lasso_s: float = 1.0
    # explicit scalar overrides of the data-driven spike-slab defaults,
    # as (gamma0, gamma1, q); applied to every segment
    spike_overrides: tuple[float, float, float] | None = None

    def __post_init__(self):
        if self.burn_in >= self.iterations:
            raise ValueError("burn_in must be smaller than iterations")
        if self.burn_in < 0 or self.thin < 1:
            raise ValueError("need burn_in >= 0 and thin >= 1")
        if self.K < 0:
            raise ValueError("K must be nonnegative")
        a, b = self.cp_bounds
        if not a < b:
            raise ValueError(f"invalid change-point bounds {self.cp_bounds}")
        if isinstance(self.prior, str) and self.prior not in PRIOR_FAMILIES:
            raise ValueError(
                f"unknown prior family {self.prior!r}; expected one of {PRIOR_FAMILIES}"
            )

    @property
    def retained(self) -> int:
        return (self.iterations - self.burn_in) // self.thin


@dataclass
class PosteriorSamples:
    """Retained draws from one chain.

    ``beta`` is (draws, K+1, p); ``tau`` is (draws, K); ``Z`` is present for
    the spike-slab prior, ``eta``/``lambda2`` for the Lasso variants.
    """

    beta: np.ndarray
    sigma2: np.ndarray
    tau: np.ndarray
    log_likelihood: np.ndarray
    tau_acceptance: float
    config: ChainConfig
    prior: PriorSpec
    Z: np.ndarray | None = None
    eta: np.ndarray | None = None
    lambda2: np.ndarray | None = None

    @property
    def draws(self) -> int:
        return self.sigma2.size


@dataclass
class PosteriorSummary:
    """Point estimates, intervals, selection, and fit metrics for one run."""

    level: float
    beta_median: np.ndarray
    beta_lower: np.ndarray
    beta_upper: np.ndarray
    sigma2_median: float
    sigma2_interval: tuple[float, float]
    tau_median: np.ndarray
    tau_lower: np.ndarray
    tau_upper: np.ndarray
    inclusion_prob: np.ndarray | None
    selected: list[np.ndarray]
    dic: float
    p_d: float
    tau_acceptance: float
    rmspe: float | None = None


def _resolve_prior(data: Dataset, config: ChainConfig) -> PriorSpec:
    if not isinstance(config.prior, str):
        return config.prior
    a, b = config.cp_bounds
    n_seg = config.K + 1
    if config.prior == "spike-slab":
        forced = config.forced_in
        if forced is not None:
            forced = np.asarray(forced, dtype=bool)[:n_seg]
        if config.spike_overrides is not None:
            g0, g1, q = config.spike_overrides
            return SpikeSlabPrior(
                gamma0=np.full(n_seg, g0),
                gamma1=np.full(n_seg, g1),
                q=np.full(n_seg, q),
                forced_in=forced,
            )
        return default_spike_slab_prior(data, config.K, a, b, forced_in=forced)
    if config.prior == "lasso":
        return LassoPrior(
            r=np.full(n_seg, config.lasso_r), s=np.full(n_seg, config.lasso_s)
        )
    if config.K != 1:
        raise ValueError(
            "the group-Lasso prior couples coefficients across exactly two "
            f"segments; it requires K = 1, got K = {config.K}"
        )
    return GroupLassoPrior(r=config.lasso_r, s=config.lasso_s)


def default_proposal_sd(t: np.ndarray) -> float:
    """Default Metropolis step size: 0.1 times the median spacing of t."""
    gaps = np.diff(np.unique(t))
    spacing = float(np.median(gaps)) if gaps.size else 1.0
    return 0.1 * spacing


def _initial_state(data: Dataset, config: ChainConfig, prior: PriorSpec) -> McmcState:
    a, b = config.cp_bounds
    K = config.K
    inside = data.t[(data.t > a) & (data.t < b)]
    if K > 0 and inside.size == 0:
        raise InsufficientDataError("no threshold values inside the prior bounds")
    if K > 0:
        tau0 = np.quantile(inside, np.arange(1, K + 1) / (K + 1))
        if np.any(np.diff(tau0) <= 0):
            tau0 = initial_changepoints(K, a, b)
    else:
        tau0 = np.empty(0)
    cp = ChangePointState(tau0, a, b)
    part = partition_by_threshold(data.t, cp)
    if np.any(part.counts < MIN_SEGMENT_SIZE):
        raise InsufficientDataError(
            f"initial segments have counts {part.counts.tolist()}; every segment "
            f"needs at least {MIN_SEGMENT_SIZE} observations"
        )
    n_seg = K + 1
    p = data.p
    sigma2 = float(np.var(data.y, ddof=1)) if data.n > 1 else config.noise.sigma2
    if sigma2 <= 0:
        sigma2 = config.noise.sigma2
    state = McmcState(beta=np.zeros((n_seg, p)), sigma2=sigma2, cp=cp)
    if isinstance(prior, SpikeSlabPrior):
        state.Z = np.zeros((n_seg, p), dtype=np.int8)
        if prior.forced_in is not None:
            state.Z[prior.forced_in] = 1
    elif isinstance(prior, LassoPrior):
        state.eta = np.ones((n_seg, p))
        state.lambda2 = np.ones(n_seg)
    else:
        state.eta = np.ones(p)
        state.lambda2 = 1.0
    return state


def _prior_variance_diag(state: McmcState, prior: PriorSpec, k: int) -> np.ndarray:
    if isinstance(prior, SpikeSlabPrior):
        Z_k = state.Z[k]
        return np.where(Z_k == 1, prior.gamma1[k], prior.gamma0[k])
    if isinstance(prior, LassoPrior):
        return state.eta[k]
    return state.eta


def gibbs_sweep(
    state: McmcState,
    data: Dataset,
    workspace: KernelWorkspace,
    prior: PriorSpec,
    noise: NoiseModel,
    proposal_sd: float,
    rng: np.random.Generator,
    exact_conditionals: bool = True,
) -> bool:
    """One full sweep in fixed order: per segment beta then Z (or eta), the
    group latents, sigma2, the shrinkage rates, and finally the change-point
    Metropolis step. Mutates ``state`` and ``workspace``; returns whether the
    change-point proposal was accepted (True when K = 0).
    """
    n_seg = state.cp.K + 1
    is_spike_slab = isinstance(prior, SpikeSlabPrior)
    is_lasso = isinstance(prior, LassoPrior)
    is_group = isinstance(prior, GroupLassoPrior)

    for k in range(n_seg):
        d_k = _prior_variance_diag(state, prior, k)
        state.beta[k] = sample_beta_segment(
            workspace.gram[k], workspace.cross[k], state.sigma2, d_k, rng, segment=k
        )
        if is_spike_slab:
            forced = prior.forced_in[k] if prior.forced_in is not None else None
            state.Z[k] = sample_inclusion(
                state.beta[k],
                state.sigma2,
                prior.gamma0[k],
                prior.gamma1[k],
                prior.q[k],
                forced,
                rng,
            )
        elif is_lasso:
            state.eta[k] = sample_lasso_eta(
                state.beta[k], state.sigma2, state.lambda2[k], rng
            )
    if is_group:
        group_norms = np.sqrt(np.sum(state.beta**2, axis=0))
        state.eta = sample_grouplasso_eta(
            group_norms, state.sigma2, state.lambda2, rng
        )

    rss = workspace.residual_sum_of_squares(data, state.beta)
    prior_quad = 0.0
    for k in range(n_seg):
        d_k = _prior_variance_diag(state, prior, k)
        prior_quad += float(np.sum(state.beta[k] ** 2 / d_k))
    state.sigma2 = sample_sigma2(
        rss,
        prior_quad,
        data.n,
        n_seg * data.p,
        noise,
        exact_conditional=exact_conditionals,
        rng=rng,
    )

    if is_lasso:
        for k in range(n_seg):
            state.lambda2[k] = sample_lasso_lambda2(
                state.eta[k],
                prior.r[k],
                prior.s[k],
                rng,
                exact_conditional=exact_conditionals,
            )
    elif is_group:
        state.lambda2 = sample_grouplasso_lambda2(state.eta, prior.r, prior.s, rng)

    accepted = True
    if state.cp.K >= 1:
        new_cp, accepted = metropolis_tau(state, data, proposal_sd, rng)
        if accepted:
            workspace.update_changepoints(data, new_cp)
            state.cp = new_cp
    return accepted


def run_chain(data: Dataset, config: ChainConfig) -> PosteriorSamples:
    """Run one chain from the deterministic initialization (beta = 0, all
    indicators at the spike except forced entries, sigma2 = var(y), equally
    spaced threshold quantiles for tau) and return post-burn-in thinned draws.

    Fully reproducible given (data, config): the RNG stream is derived from
    (config.seed, config.K).
    """
    prior = _resolve_prior(data, config)
    if isinstance(prior, GroupLassoPrior) and config.K != 1:
        raise ValueError(
            "the group-Lasso prior couples coefficients across exactly two "
            f"segments; it requires K = 1, got K = {config.K}"
        )
    state = _initial_state(data, config, prior)
    workspace = KernelWorkspace(data, state.cp)
    rng = RngStream(config.seed, config.K).generator()
    proposal_sd = (
        config.proposal_sd
        if config.proposal_sd is not None
        else default_proposal_sd(data.t)
    )

    n_keep = config.retained
    n_seg = config.K + 1
    p = data.p
    beta_draws = np.empty((n_keep, n_seg, p))
    sigma2_draws = np.empty(n_keep)
    tau_draws = np.empty((n_keep, config.K))
    loglik_draws = np.empty(n_keep)
    Z_draws = eta_draws = lambda2_draws = None
    if isinstance(prior, SpikeSlabPrior):
        Z_draws = np.empty((n_keep, n_seg, p), dtype=np.int8)
    elif isinstance(prior, LassoPrior):
        eta_draws = np.empty((n_keep, n_seg, p))
        lambda2_draws = np.empty((n_keep, n_seg))
    else:
        eta_draws = np.empty((n_keep, p))
        lambda2_draws = np.empty(n_keep)

    accepted = 0
    kept = 0
    for sweep in range(1, config.iterations + 1):
        try:
            accepted += gibbs_sweep(
                state,
                data,
                workspace,
                prior,
                config.noise,
                proposal_sd,
                rng,
                exact_conditionals=config.exact_conditionals,
            )
        except NumericalError as exc:
            raise NumericalError(f"sweep {sweep}: {exc}") from exc
        if sweep > config.burn_in and (sweep - config.burn_in) % config.thin == 0:
            if kept < n_keep:
                beta_draws[kept] = state.beta
                sigma2_draws[kept] = state.sigma2
                tau_draws[kept] = state.cp.tau
                part = partition_by_threshold(data.t, state.cp)
                loglik_draws[kept] = log_likelihood(
                    data, part, state.beta, state.sigma2
                )
                if Z_draws is not None:
                    Z_draws[kept] = state.Z
                if eta_draws is not None:
                    eta_draws[kept] = state.eta
                if lambda2_draws is not None:
                    lambda2_draws[kept] = state.lambda2
                kept += 1

    rate = accepted / config.iterations if config.K >= 1 else 1.0
    return PosteriorSamples(
        beta=beta_draws,
        sigma2=sigma2_draws,
        tau=tau_draws,
        log_likelihood=loglik_draws,
        tau_acceptance=rate,
        config=config,
        prior=prior,
        Z=Z_draws,
        eta=eta_draws,
        lambda2=lambda2_draws,
    )


def median_probability_model(Z_draws: np.ndarray) -> list[np.ndarray]:
    """Variables whose posterior inclusion probability strictly exceeds 1/2,
    per segment. ``Z_draws`` is (draws, K+1, p)."""
    probs = np.asarray(Z_draws, dtype=float).mean(axis=0)
    return [np.flatnonzero(probs[k] > 0.5) for k in range(probs.shape[0])]


def interval_selection(beta_draws: np.ndarray, level: float = 0.95) -> list[np.ndarray]:
    """Variables whose equal-tailed credible interval excludes zero, per
    segment. Used for priors without explicit inclusion indicators."""
    alpha = 0.5 * (1.0 - level)
    lower = np.quantile(beta_draws, alpha, axis=0)
    upper = np.quantile(beta_draws, 1.0 - alpha, axis=0)
    excludes = (lower > 0) | (upper < 0)
    return [np.flatnonzero(excludes[k]) for k in range(excludes.shape[0])]


def dic_from_deviances(deviance_draws: np.ndarray, deviance_plugin: float) -> tuple[float, float]:
    """DIC = 2 mean(D) - D(plug-in); p_D = mean(D) - D(plug-in)."""
    deviance_draws = np.asarray(deviance_draws, dtype=float)
    if deviance_draws.size == 0:
        raise ValueError("no retained draws")
    mean_dev = float(deviance_draws.mean())
    return 2.0 * mean_dev - deviance_plugin, mean_dev - deviance_plugin


def compute_dic(samples: PosteriorSamples, data: Dataset) -> tuple[float, float]:
    """Deviance information criterion and its effective-parameter penalty.

    The plug-in uses posterior means of beta and sigma2 and the posterior
    median of each change point (a mean of a multimodal change point can land
    in a low-likelihood valley).
    """
    if samples.draws == 0:
        raise ValueError("no retained draws")
    beta_hat = samples.beta.mean(axis=0)
    sigma2_hat = float(samples.sigma2.mean())
    tau_hat = np.median(samples.tau, axis=0) if samples.tau.size else np.empty(0)
    a, b = samples.config.cp_bounds
    part = partition_by_threshold(data.t, ChangePointState(tau_hat, a, b))
    deviance_plugin = -2.0 * log_likelihood(data, part, beta_hat, sigma2_hat)
    return dic_from_deviances(-2.0 * samples.log_likelihood, deviance_plugin)


@dataclass
class Forecast:
    """Posterior predictive draws (draws, m) with equal-tailed summaries."""

    draws: np.ndarray
    median: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


def one_step_ahead_forecast(
    samples: PosteriorSamples,
    new_X: np.ndarray,
    t_new: np.ndarray,
    rng: np.random.Generator,
    level: float = 0.95,
) -> Forecast:
    """Posterior predictive draws for new rows.

    Rows must carry observed values in any lagged-response column (one-step-
    ahead, never iterated). Each retained draw predicts
    x' beta_seg + N(0, sigma2), with the segment determined by that draw's
    change points (right-closed boundaries, last segment beyond them all).
    """
    new_X = np.atleast_2d(np.asarray(new_X, dtype=float))
    t_new = np.atleast_1d(np.asarray(t_new, dtype=float))
    if new_X.shape[0] != t_new.size:
        raise ValueError("new rows and thresholds are misaligned")
    n_draws = samples.draws
    m = t_new.size
    draws = np.empty((n_draws, m))
    sd = np.sqrt(samples.sigma2)
    for j in range(m):
        seg = (
            np.sum(samples.tau < t_new[j], axis=1).astype(int)
            if samples.tau.size
            else np.zeros(n_draws, dtype=int)
        )
        means = samples.beta[np.arange(n_draws), seg] @ new_X[j]
        draws[:, j] = means + sd * rng.standard_normal(n_draws)
    alpha = 0.5 * (1.0 - level)
    return Forecast(
        draws=draws,
        median=np.median(draws, axis=0),
        lower=np.quantile(draws, alpha, axis=0),
        upper=np.quantile(draws, 1.0 - alpha, axis=0),
    )


def rmspe(predictions: np.ndarray, actuals: np.ndarray) -> float:
    """Root mean squared prediction error over a held-out set."""
    predictions = np.asarray(predictions, dtype=float)
    actuals = np.asarray(actuals, dtype=float)
    if predictions.shape != actuals.shape or predictions.size == 0:
        raise ValueError("predictions and actuals must be nonempty and aligned")
    return float(np.sqrt(np.mean((predictions - actuals) ** 2)))


def summarize(
    samples: PosteriorSamples,
    data: Dataset,
    level: float = 0.95,
    rmspe_value: float | None = None,
) -> PosteriorSummary:
    """Equal-tailed posterior summaries, selected supports, and DIC.

    Selection uses the median probability model when inclusion indicators
    exist, interval exclusion of zero otherwise.
    """
    alpha = 0.5 * (1.0 - level)
    qs = [alpha, 0.5, 1.0 - alpha]
    beta_lo, beta_med, beta_hi = np.quantile(samples.beta, qs, axis=0)
    s2_lo, s2_med, s2_hi = np.quantile(samples.sigma2, qs)
    if samples.tau.size:
        tau_lo, tau_med, tau_hi = np.quantile(samples.tau, qs, axis=0)
    else:
        tau_lo = tau_med = tau_hi = np.empty(0)
    if samples.Z is not None:
        inclusion = samples.Z.astype(float).mean(axis=0)
        selected = median_probability_model(samples.Z)
    else:
        inclusion = None
        selected = interval_selection(samples.beta, level)
    dic, p_d = compute_dic(samples, data)
    return PosteriorSummary(
        level=level,
        beta_median=beta_med,
        beta_lower=beta_lo,
        beta_upper=beta_hi,
        sigma2_median=float(s2_med),
        sigma2_interval=(float(s2_lo), float(s2_hi)),
        tau_median=tau_med,
        tau_lower=tau_lo,
        tau_upper=tau_hi,
        inclusion_prob=inclusion,
        selected=selected,
        dic=dic,
        p_d=p_d,
        tau_acceptance=samples.tau_acceptance,
        rmspe=rmspe_value,
    )


@dataclass
class KReport:
    """One row of the change-point-count comparison."""

    K: int
    dic: float
    p_d: float
    tau_median: np.ndarray
    tau_lower: np.ndarray
    tau_upper: np.ndarray
    tau_acceptance: float
    rmspe: float | None = None


@dataclass
class KSelection:
    """Per-K reports plus the DIC-minimizing choice."""

    reports: list[KReport]
    best_K: int
    samples: dict[int, PosteriorSamples] = field(default_factory=dict)


def select_num_changepoints(
    data: Dataset,
    K_values,
    base_config: ChainConfig,
    holdout: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None,
    level: float = 0.95,
    jobs: int = 1,
) -> KSelection:
    """Fit an independent chain for each K and compare by DIC.

    ``holdout`` is an optional (X_new, y_new, t_new) triple; when given, each
    K also gets a one-step-ahead RMSPE (predictions are posterior predictive
    medians). Chains run concurrently up to ``jobs`` workers; every chain owns
    an RNG stream derived from (seed, K), so results do not depend on the
    worker count.
    """
    K_values = sorted(set(int(k) for k in K_values))
    if not K_values:
        raise ValueError("K_values must be nonempty")

    def fit_one(K: int) -> tuple[int, PosteriorSamples]:
        return K, run_chain(data, replace(base_config, K=K))

    if jobs > 1 and len(K_values) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = dict(pool.map(fit_one, K_values))
    else:
        results = dict(fit_one(K) for K in K_values)

    reports = []
    for K in K_values:
        samples = results[K]
        dic, p_d = compute_dic(samples, data)
        alpha = 0.5 * (1.0 - level)
        if samples.tau.size:
            tau_lo, tau_med, tau_hi = np.quantile(
                samples.tau, [alpha, 0.5, 1.0 - alpha], axis=0
            )
        else:
            tau_lo = tau_med = tau_hi = np.empty(0)
        score = None
        if holdout is not None:
            X_new, y_new, t_new = holdout
            rng = RngStream(
                base_config.seed, FORECAST_STREAM_OFFSET + K
            ).generator()
            fc = one_step_ahead_forecast(samples, X_new, t_new, rng, level)
            score = rmspe(fc.median, y_new)
        reports.append(
            KReport(
                K=K,
                dic=dic,
                p_d=p_d,
                tau_median=tau_med,
                tau_lower=tau_lo,
                tau_upper=tau_hi,
                tau_acceptance=samples.tau_acceptance,
                rmspe=score,
            )
        )
    best = min(reports, key=lambda r: r.dic).K
    return KSelection(reports=reports, best_K=best, samples=results)
