"""Synthetic data generation and evaluation metrics for the benchmark
experiment designs: segment-wise sparse regression with planted change
points, selection scoring (correct/incorrect counts), support-truncated
coefficient error, and a grid runner that fits every scenario-prior cell.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .inference import ChainConfig, run_chain, summarize
from .model import Dataset, NoiseModel

__all__ = [
    "ScenarioSpec",
    "GroundTruth",
    "SelectionReport",
    "gen_covariance",
    "gen_dataset",
    "selection_metrics",
    "truncated_mse",
    "single_changepoint_scenario",
    "two_changepoint_scenario",
    "dic_demo_scenario",
    "reference_chain_config",
    "REFERENCE_SEEDS",
    "run_scenario_grid",
    "write_csv_rows",
    "gen_hpi_analog",
    "HPI_ANALOG_BREAK",
    "HPI_ANALOG_COLUMNS",
]

# Replicate seeds used by the benchmark presets; replicate 1 is the default.
REFERENCE_SEEDS = (11, 12, 13)


@dataclass(frozen=True)
class ScenarioSpec:
    """One synthetic design: segment coefficients, planted change points,
    covariate covariance structure, and noise level."""

    n: int
    p: int
    beta: np.ndarray
    tau: tuple[float, ...]
    sigma2: float = 1.0
    cov_kind: str = "ar"
    rho: float = 0.5
    seed: int = 0

    def __post_init__(self):
        beta = np.atleast_2d(np.asarray(self.beta, dtype=float))
        if beta.shape != (len(self.tau) + 1, self.p):
            raise ValueError(
                f"beta must be ({len(self.tau) + 1}, {self.p}), got {beta.shape}"
            )
        tau = tuple(float(v) for v in self.tau)
        if any(b <= a for a, b in zip(tau, tau[1:])):
            raise ValueError("change points must be strictly increasing")
        if tau and not (1 < tau[0] and tau[-1] < self.n):
            raise ValueError("change points must lie inside (1, n)")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "tau", tau)


@dataclass(frozen=True)
class GroundTruth:
    beta: np.ndarray
    tau: tuple[float, ...]
    sigma2: float
    supports: list[np.ndarray]


@dataclass
class SelectionReport:
    """Correct / incorrect selection counts per segment, with optional
    support-truncated squared error."""

    correct: np.ndarray
    incorrect: np.ndarray
    mse: np.ndarray | None = None


def gen_covariance(p: int, kind: str, rho: float = 0.5) -> np.ndarray:
    """Covariate covariance: 'ar' gives rho^|i-j|, 'cs' gives rho off the
    diagonal and 1 on it."""
    if p < 1:
        raise ValueError("p must be at least 1")
    if kind == "ar":
        idx = np.arange(p)
        return rho ** np.abs(idx[:, None] - idx[None, :])
    if kind == "cs":
        return np.full((p, p), rho) + (1.0 - rho) * np.eye(p)
    raise ValueError(f"unknown covariance kind {kind!r}; expected 'ar' or 'cs'")


def gen_dataset(spec: ScenarioSpec) -> tuple[Dataset, GroundTruth]:
    """Generate (y, X, t) with t_i = i and segment-wise Gaussian responses.

    Rows of X are i.i.d. N(0, Sigma) via a Cholesky factor of Sigma;
    deterministic given the spec's seed.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(spec.seed)))
    chol = np.linalg.cholesky(gen_covariance(spec.p, spec.cov_kind, spec.rho))
    X = rng.standard_normal((spec.n, spec.p)) @ chol.T
    t = np.arange(1.0, spec.n + 1.0)
    seg = np.searchsorted(np.asarray(spec.tau), t, side="left")
    mean = np.einsum("ij,ij->i", X, spec.beta[seg])
    noise = (
        math.sqrt(spec.sigma2) * rng.standard_normal(spec.n)
        if spec.sigma2 > 0
        else 0.0
    )
    y = mean + noise
    supports = [np.flatnonzero(b) for b in spec.beta]
    truth = GroundTruth(
        beta=spec.beta, tau=spec.tau, sigma2=spec.sigma2, supports=supports
    )
    return Dataset(y=y, X=X, t=t), truth


def selection_metrics(true_supports, est_supports) -> SelectionReport:
    """Per-segment counts: correct = |true & est|, incorrect = |est \\ true|."""
    if len(true_supports) != len(est_supports):
        raise ValueError("segment counts differ between truth and estimate")
    correct = np.empty(len(true_supports), dtype=int)
    incorrect = np.empty(len(true_supports), dtype=int)
    for k, (truth, est) in enumerate(zip(true_supports, est_supports)):
        ts, es = set(np.asarray(truth).tolist()), set(np.asarray(est).tolist())
        correct[k] = len(ts & es)
        incorrect[k] = len(es - ts)
    return SelectionReport(correct=correct, incorrect=incorrect)


def truncated_mse(true_beta_k, est_beta_k, true_support) -> float:
    """Squared coefficient error restricted to the true support:
    || beta[S] - est[S] ||^2."""
    true_beta_k = np.asarray(true_beta_k, dtype=float)
    est_beta_k = np.asarray(est_beta_k, dtype=float)
    support = np.asarray(true_support, dtype=int)
    if support.size == 0:
        return 0.0
    diff = true_beta_k[support] - est_beta_k[support]
    return float(diff @ diff)


def _benchmark_beta(p: int) -> np.ndarray:
    beta = np.zeros(p)
    beta[[0, 1, 4]] = (3.0, 1.5, 2.0)
    return beta


def single_changepoint_scenario(
    tau: float = 100.5,
    p: int = 250,
    cov_kind: str = "ar",
    n: int = 200,
    sigma2: float = 1.0,
    seed: int = REFERENCE_SEEDS[0],
) -> ScenarioSpec:
    """Benchmark single-break design: beta1 has (3, 1.5, 2) on variables
    {1, 2, 5}, beta2 = -beta1."""
    beta1 = _benchmark_beta(p)
    return ScenarioSpec(
        n=n,
        p=p,
        beta=np.stack([beta1, -beta1]),
        tau=(tau,),
        sigma2=sigma2,
        cov_kind=cov_kind,
        seed=seed,
    )


def two_changepoint_scenario(
    tau: tuple[float, float] = (50.5, 100.5),
    p: int = 250,
    cov_kind: str = "ar",
    n: int = 200,
    sigma2: float = 1.0,
    seed: int = REFERENCE_SEEDS[0],
) -> ScenarioSpec:
    """Benchmark two-break design with nested supports across segments."""
    beta1 = np.zeros(p)
    beta1[0] = 3.0
    beta2 = np.zeros(p)
    beta2[[0, 1]] = (3.0, 1.5)
    beta3 = _benchmark_beta(p)
    return ScenarioSpec(
        n=n,
        p=p,
        beta=np.stack([beta1, beta2, beta3]),
        tau=tau,
        sigma2=sigma2,
        cov_kind=cov_kind,
        seed=seed,
    )


def dic_demo_scenario(change: bool, seed: int) -> ScenarioSpec:
    """Small strong-signal design for change-point-count selection checks:
    a sign-flipping break at 60.5, or a homogeneous model."""
    p = 8
    beta1 = np.zeros(p)
    beta1[:3] = (2.0, -1.5, 1.0)
    if change:
        return ScenarioSpec(
            n=120, p=p, beta=np.stack([beta1, -beta1]), tau=(60.5,), seed=seed
        )
    return ScenarioSpec(n=120, p=p, beta=beta1[None, :], tau=(), seed=seed)


def reference_chain_config(
    K: int,
    iterations: int = 100_000,
    burn_in: int = 50_000,
    thin: int = 1,
    seed: int = REFERENCE_SEEDS[0],
    prior: str = "spike-slab",
) -> ChainConfig:
    """Benchmark chain settings: change-point range (20, 180), proposal
    standard deviation sqrt(0.1) (the benchmark tuning value 0.1 is a
    variance), and an IG(2, 1) noise prior."""
    return ChainConfig(
        iterations=iterations,
        burn_in=burn_in,
        K=K,
        cp_bounds=(20.0, 180.0),
        prior=prior,
        noise=NoiseModel(sigma2=1.0, a_sigma=2.0, b_sigma=1.0),
        thin=thin,
        seed=seed,
        proposal_sd=math.sqrt(0.1),
        exact_conditionals=True,
    )


def _fit_cell(spec: ScenarioSpec, prior: str, config: ChainConfig, level: float):
    data, truth = gen_dataset(spec)
    cfg = replace(config, K=len(spec.tau), prior=prior, seed=spec.seed)
    samples = run_chain(data, cfg)
    summary = summarize(samples, data, level)
    report = selection_metrics(truth.supports, summary.selected)
    report.mse = np.array(
        [
            truncated_mse(truth.beta[k], summary.beta_median[k], truth.supports[k])
            for k in range(truth.beta.shape[0])
        ]
    )
    return truth, summary, report


def run_scenario_grid(
    scenarios,
    priors,
    config: ChainConfig,
    level: float = 0.95,
    jobs: int = 1,
) -> tuple[list[dict], list[dict]]:
    """Fit every (scenario x prior) cell and tabulate the results.

    Returns (rows, beta_rows): one summary row per cell with change-point
    estimates, selection counts and truncated errors per segment, and one
    beta_rows record per true-support coefficient with its posterior median
    and interval (plot-ready). Cells run concurrently up to ``jobs`` workers.
    """
    cells = [(spec, prior) for spec in scenarios for prior in priors]

    def one(cell):
        spec, prior = cell
        return cell, _fit_cell(spec, prior, config, level)

    if jobs > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            fitted = list(pool.map(one, cells))
    else:
        fitted = [one(c) for c in cells]

    rows: list[dict] = []
    beta_rows: list[dict] = []
    for (spec, prior), (truth, summary, report) in fitted:
        n_seg = len(spec.tau) + 1
        row = {
            "n": spec.n,
            "p": spec.p,
            "cov_kind": spec.cov_kind,
            "true_tau": ";".join(f"{v:g}" for v in spec.tau),
            "seed": spec.seed,
            "prior": prior,
            "K": len(spec.tau),
            "dic": summary.dic,
            "p_d": summary.p_d,
            "tau_median": ";".join(f"{v:.6g}" for v in summary.tau_median),
            "tau_lower": ";".join(f"{v:.6g}" for v in summary.tau_lower),
            "tau_upper": ";".join(f"{v:.6g}" for v in summary.tau_upper),
            "tau_acceptance": summary.tau_acceptance,
        }
        for k in range(n_seg):
            row[f"correct_{k + 1}"] = int(report.correct[k])
            row[f"incorrect_{k + 1}"] = int(report.incorrect[k])
            row[f"mse_{k + 1}"] = float(report.mse[k])
        rows.append(row)
        for k in range(n_seg):
            for j in truth.supports[k]:
                beta_rows.append(
                    {
                        "prior": prior,
                        "cov_kind": spec.cov_kind,
                        "seed": spec.seed,
                        "true_tau": row["true_tau"],
                        "segment": k + 1,
                        "variable": int(j) + 1,
                        "truth": float(truth.beta[k, j]),
                        "median": float(summary.beta_median[k, j]),
                        "lower": float(summary.beta_lower[k, j]),
                        "upper": float(summary.beta_upper[k, j]),
                    }
                )
    return rows, beta_rows


def write_csv_rows(rows: list[dict], path) -> None:
    """Write homogeneous-ish dict rows as CSV (union of keys, insertion order)."""
    if not rows:
        raise ValueError("nothing to write")
    fields: list[str] = []
    for row in rows:
        for key in row:
            if key not in fields:
                fields.append(key)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# Synthetic quarterly house-price-like dataset with one planted break.
# ---------------------------------------------------------------------------

HPI_ANALOG_COLUMNS = (
    ["period", "t", "hpi", "cpi", "unemp", "temp", "precip"]
    + [f"s{j:02d}" for j in range(1, 17)]
)

# Quarter index of the last pre-break quarter; the break sits at +0.5.
_HPI_BREAK_QUARTER = 71
HPI_ANALOG_BREAK = _HPI_BREAK_QUARTER + 0.5


def gen_hpi_analog(seed: int = 2008) -> list[list]:
    """Quarterly house-price-index-like table, 1991Q1 through 2015Q1
    (97 rows), with one planted regression break after quarter 71.

    Pre-break the index mean-reverts strongly on its own lag with a mild
    seasonal precipitation effect; post-break the autoregressive pull weakens,
    the precipitation effect strengthens, and three of the sixteen stock
    series enter the model. Returns rows matching HPI_ANALOG_COLUMNS.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    n = 97
    t = np.arange(1, n + 1)
    quarter = (t - 1) % 4
    year = 1991 + (t - 1) // 4
    periods = [f"{y}Q{q + 1}" for y, q in zip(year, quarter)]

    temp = np.array([16.0, 48.0, 68.0, 35.0])[quarter] + rng.normal(0, 3.0, n)
    precip = np.clip(
        np.array([0.9, 3.2, 3.8, 1.6])[quarter] + rng.normal(0, 0.35, n), 0.05, None
    )
    cpi = 136.0 + 1.55 * t + rng.normal(0, 0.8, n)
    unemp = np.clip(
        5.5
        + np.cumsum(rng.normal(0, 0.22, n))
        + 2.5 * np.exp(-(((t - 74) / 6.0) ** 2)),
        3.0,
        10.5,
    )
    stocks = np.empty((n, 16))
    start = rng.uniform(12.0, 60.0, 16)
    drift = rng.uniform(0.002, 0.012, 16)
    vol = rng.uniform(0.05, 0.11, 16)
    stocks[0] = start
    for i in range(1, n):
        stocks[i] = stocks[i - 1] * np.exp(rng.normal(drift, vol))
    stocks = np.clip(stocks, 2.0, 400.0)

    hpi = np.empty(n)
    hpi[0] = 130.0
    eps = rng.normal(0.0, 1.0, n)
    for i in range(1, n):
        if t[i] <= _HPI_BREAK_QUARTER:
            hpi[i] = 12.0 + 0.90 * hpi[i - 1] + 0.6 * precip[i] + eps[i]
        else:
            hpi[i] = (
                58.0
                + 0.45 * hpi[i - 1]
                + 2.2 * precip[i]
                - 0.12 * stocks[i, 0]
                + 0.20 * stocks[i, 6]
                + 0.25 * stocks[i, 15]
                + eps[i]
            )

    rows = []
    for i in range(n):
        rows.append(
            [periods[i], int(t[i]), hpi[i], cpi[i], unemp[i], temp[i], precip[i]]
            + stocks[i].tolist()
        )
    return rows
