"""Batch command-line interface.

Commands:

* ``fit``       -- ingest a CSV, run chains for one or more change-point
                   counts, and write a results bundle (samples, summaries,
                   selection, DIC table, predictions, manifest).
* ``simulate``  -- write synthetic benchmark datasets with ground truth.
* ``pacf``      -- plot-ready partial autocorrelation table for a CSV column.
* ``summarize`` -- regenerate summary.json from a bundle's samples file.

Exit codes: 0 success, 1 user error (config, schema, data), 2 numerical
failure. The seed resolution order is CLI flag, then the CPREG_SEED
environment variable, then the config file, then the default of 0.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field, replace

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .inference import (
    FORECAST_STREAM_OFFSET,
    ChainConfig,
    PosteriorSamples,
    PosteriorSummary,
    default_proposal_sd,
    one_step_ahead_forecast,
    rmspe,
    select_num_changepoints,
    summarize,
)
from .kernels import NumericalError, RngStream
from .model import Dataset, InsufficientDataError, NoiseModel
from .simulate import (
    HPI_ANALOG_BREAK,
    HPI_ANALOG_COLUMNS,
    gen_dataset,
    gen_hpi_analog,
    single_changepoint_scenario,
    two_changepoint_scenario,
    ScenarioSpec,
)
from .timeseries import build_lagged, pacf

SEED_ENV_VAR = "CPREG_SEED"


class UserError(ValueError):
    """Configuration or input problems attributable to the caller."""


@dataclass
class RunConfig:
    """Resolved settings for one ``fit`` run."""

    input: str
    response: str
    threshold: str
    covariates: list[str] | None = None  # None means every other column
    lag: int = 0
    intercept: bool = False
    forced_in: list[str] = field(default_factory=list)
    prior: str = "spike-slab"
    k_values: tuple[int, ...] = (1,)
    a_tau: float | None = None
    b_tau: float | None = None
    a_sigma: float = 2.0
    b_sigma: float = 1.0
    gamma0: float | None = None
    gamma1: float | None = None
    q: float | None = None
    r: float = 1.0
    s: float = 1.0
    iterations: int = 100_000
    burn_in: int = 50_000
    thin: int = 1
    seed: int = 0
    proposal_sd: float | None = None
    exact_conditionals: bool = True
    holdout: int = 0
    level: float = 0.95
    jobs: int = 1
    output_dir: str = "cpreg-out"


_CONFIG_SECTIONS = {
    "data": ("input", "response", "threshold", "covariates", "lag", "intercept", "forced_in"),
    "model": (
        "prior", "k", "k_values", "a_tau", "b_tau", "a_sigma", "b_sigma",
        "gamma0", "gamma1", "q", "r", "s",
    ),
    "chain": ("iterations", "burn_in", "thin", "seed", "proposal_sd", "exact_conditionals"),
    "output": ("directory", "holdout", "level", "jobs"),
}


def load_run_config(path: str) -> RunConfig:
    """Parse a TOML run configuration (sections [data], [model], [chain],
    [output]); unknown keys are rejected, extra sections like [run] from a
    manifest are ignored."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise UserError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise UserError(f"config file {path} is not valid TOML: {exc}") from exc

    kwargs: dict = {}
    for section, allowed in _CONFIG_SECTIONS.items():
        table = raw.get(section, {})
        if not isinstance(table, dict):
            raise UserError(f"[{section}] must be a table")
        for key, value in table.items():
            if key not in allowed:
                raise UserError(f"unknown key {key!r} in [{section}]")
            if section == "model" and key == "k":
                kwargs["k_values"] = (int(value),)
            elif section == "model" and key == "k_values":
                kwargs["k_values"] = tuple(int(v) for v in value)
            elif section == "output" and key == "directory":
                kwargs["output_dir"] = str(value)
            elif key == "covariates":
                kwargs["covariates"] = [str(v) for v in value]
            elif key == "forced_in":
                kwargs["forced_in"] = [str(v) for v in value]
            else:
                kwargs[key] = value
    missing = {"input", "response", "threshold"} - set(kwargs)
    if missing:
        raise UserError(f"config is missing required data keys: {sorted(missing)}")
    try:
        return RunConfig(**kwargs)
    except TypeError as exc:
        raise UserError(f"bad config value types: {exc}") from exc


@dataclass
class IngestResult:
    data: Dataset
    columns: list[str]        # covariate names in design order (p entries)
    base_columns: list[str]   # covariate names before intercept/lag additions
    dropped: list[str]        # rows consumed by lag construction


def _parse_cell(cell: str, row: int, column: str) -> float:
    try:
        value = float(cell)
    except ValueError as exc:
        raise UserError(
            f"row {row}, column {column!r}: not numeric: {cell!r}"
        ) from exc
    if not math.isfinite(value):
        raise UserError(f"row {row}, column {column!r}: not finite: {cell!r}")
    return value


def load_csv_dataset(path: str, config: RunConfig) -> IngestResult:
    """Build the modeling frame from a headered CSV: select columns, sort by
    the threshold variable, construct the lagged-response covariate, and trim
    rows the lag consumes."""
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise UserError(f"{path} is empty") from None
            rows = [row for row in reader if row]
    except FileNotFoundError as exc:
        raise UserError(f"input file not found: {path}") from exc
    header = [h.strip() for h in header]
    index = {name: i for i, name in enumerate(header)}

    for required in (config.response, config.threshold):
        if required not in index:
            raise UserError(f"column {required!r} not found in {path}")
    if config.covariates is None:
        covariates = [
            name for name in header
            if name not in (config.response, config.threshold)
        ]
    else:
        for name in config.covariates:
            if name not in index:
                raise UserError(f"covariate column {name!r} not found in {path}")
        covariates = list(config.covariates)

    n_raw = len(rows)
    if n_raw == 0:
        raise InsufficientDataError(f"{path} has no data rows")
    y = np.empty(n_raw)
    t = np.empty(n_raw)
    X = np.empty((n_raw, len(covariates)))
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise UserError(f"row {i + 1}: expected {len(header)} cells, got {len(row)}")
        y[i] = _parse_cell(row[index[config.response]], i + 1, config.response)
        t[i] = _parse_cell(row[index[config.threshold]], i + 1, config.threshold)
        for j, name in enumerate(covariates):
            X[i, j] = _parse_cell(row[index[name]], i + 1, name)

    order = np.argsort(t, kind="stable")
    y, t, X = y[order], t[order], X[order]

    base_columns = list(covariates)
    dropped: list[str] = []
    if config.lag > 0:
        if config.lag >= n_raw:
            raise InsufficientDataError(f"lag {config.lag} consumes all {n_raw} rows")
        lagged = build_lagged(y, lag=config.lag)
        lag_name = f"{config.response}_lag{config.lag}"
        dropped = [f"{config.threshold}={v:g}" for v in t[: config.lag]]
        y = y[config.lag :]
        t = t[config.lag :]
        X = np.column_stack([X[config.lag :], lagged.values])
        covariates = covariates + [lag_name]
    if config.intercept:
        X = np.column_stack([np.ones(y.size), X])
        covariates = ["intercept"] + covariates

    k_max = max(config.k_values)
    minimum = 2 * (k_max + 1) * 2
    if y.size < minimum:
        raise InsufficientDataError(
            f"{y.size} usable rows after lag trimming; need at least {minimum} "
            f"for K={k_max}"
        )
    for name in config.forced_in:
        if name not in covariates:
            raise UserError(f"forced-inclusion column {name!r} is not a covariate")
    return IngestResult(
        data=Dataset(y=y, X=X, t=t),
        columns=covariates,
        base_columns=base_columns,
        dropped=dropped,
    )


def _default_bounds(t: np.ndarray) -> tuple[float, float]:
    lo, hi = float(t[0]), float(t[-1])
    span = hi - lo
    return lo + 0.1 * span, hi - 0.1 * span


def _chain_config(config: RunConfig, data: Dataset, columns: list[str]) -> ChainConfig:
    a = config.a_tau if config.a_tau is not None else _default_bounds(data.t)[0]
    b = config.b_tau if config.b_tau is not None else _default_bounds(data.t)[1]
    forced = None
    if config.forced_in:
        mask = np.zeros(len(columns), dtype=bool)
        for name in config.forced_in:
            mask[columns.index(name)] = True
        forced = np.tile(mask, (max(config.k_values) + 1, 1))
    overrides = None
    if config.prior == "spike-slab" and None not in (config.gamma0, config.gamma1, config.q):
        overrides = (config.gamma0, config.gamma1, config.q)
    return ChainConfig(
        iterations=config.iterations,
        burn_in=config.burn_in,
        K=config.k_values[0],
        cp_bounds=(a, b),
        prior=config.prior,
        noise=NoiseModel(sigma2=1.0, a_sigma=config.a_sigma, b_sigma=config.b_sigma),
        thin=config.thin,
        seed=config.seed,
        proposal_sd=config.proposal_sd,
        exact_conditionals=config.exact_conditionals,
        forced_in=forced,
        lasso_r=config.r,
        lasso_s=config.s,
        spike_overrides=overrides,
    )


# ---------------------------------------------------------------------------
# Samples file round-tripping
# ---------------------------------------------------------------------------


def samples_columns(prior: str, n_seg: int, p: int, K: int) -> list[str]:
    """Column layout of a samples CSV; k and j are 1-based."""
    cols = [f"beta.{k + 1}.{j + 1}" for k in range(n_seg) for j in range(p)]
    if prior == "spike-slab":
        cols += [f"Z.{k + 1}.{j + 1}" for k in range(n_seg) for j in range(p)]
    elif prior == "lasso":
        cols += [f"lambda2.{k + 1}" for k in range(n_seg)]
    else:
        cols += ["lambda2"]
    cols += ["sigma2"]
    cols += [f"tau.{k + 1}" for k in range(K)]
    cols += ["loglik"]
    return cols


def write_samples_csv(path: str, samples: PosteriorSamples, prior: str) -> None:
    n_draws = samples.draws
    n_seg = samples.beta.shape[1]
    p = samples.beta.shape[2]
    K = samples.tau.shape[1]
    blocks = [samples.beta.reshape(n_draws, n_seg * p)]
    if prior == "spike-slab":
        blocks.append(samples.Z.reshape(n_draws, n_seg * p).astype(float))
    elif prior == "lasso":
        blocks.append(samples.lambda2.reshape(n_draws, n_seg))
    else:
        blocks.append(samples.lambda2.reshape(n_draws, 1))
    blocks.append(samples.sigma2.reshape(n_draws, 1))
    if K:
        blocks.append(samples.tau.reshape(n_draws, K))
    blocks.append(samples.log_likelihood.reshape(n_draws, 1))
    matrix = np.column_stack(blocks)
    header = ",".join(samples_columns(prior, n_seg, p, K))
    np.savetxt(path, matrix, fmt="%.17g", delimiter=",", header=header, comments="")


def read_samples_csv(
    path: str, prior: str, config: ChainConfig, p: int
) -> PosteriorSamples:
    """Rebuild retained draws from a samples CSV (latent eta draws are not
    stored on disk; summaries do not use them)."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    matrix = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    K = config.K
    n_seg = K + 1
    expected = samples_columns(prior, n_seg, p, K)
    if header != expected:
        raise UserError(f"{path} does not match the expected samples layout")
    n_draws = matrix.shape[0]
    pos = 0
    beta = matrix[:, pos : pos + n_seg * p].reshape(n_draws, n_seg, p)
    pos += n_seg * p
    Z = lam2 = None
    if prior == "spike-slab":
        Z = matrix[:, pos : pos + n_seg * p].reshape(n_draws, n_seg, p).astype(np.int8)
        pos += n_seg * p
    elif prior == "lasso":
        lam2 = matrix[:, pos : pos + n_seg]
        pos += n_seg
    else:
        lam2 = matrix[:, pos]
        pos += 1
    sigma2 = matrix[:, pos]
    pos += 1
    tau = matrix[:, pos : pos + K]
    pos += K
    loglik = matrix[:, pos]
    return PosteriorSamples(
        beta=beta,
        sigma2=sigma2,
        tau=tau,
        log_likelihood=loglik,
        tau_acceptance=float("nan"),
        config=config,
        prior=config.prior,
        Z=Z,
        lambda2=lam2,
    )


# ---------------------------------------------------------------------------
# Manifest and summary serialization
# ---------------------------------------------------------------------------


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise TypeError(f"cannot serialize {type(value)} to TOML")


def write_manifest(path: str, sections: dict[str, dict]) -> None:
    lines = []
    for section, table in sections.items():
        lines.append(f"[{section}]")
        for key, value in table.items():
            if value is None:
                continue
            lines.append(f"{key} = {_toml_value(value)}")
        lines.append("")
    with open(path, "w") as fh:
        fh.write("\n".join(lines))


def manifest_sections(config: RunConfig, run_info: dict) -> dict[str, dict]:
    return {
        "data": {
            "input": config.input,
            "response": config.response,
            "threshold": config.threshold,
            "covariates": config.covariates,
            "lag": config.lag,
            "intercept": config.intercept,
            "forced_in": config.forced_in,
        },
        "model": {
            "prior": config.prior,
            "k_values": list(config.k_values),
            "a_tau": config.a_tau,
            "b_tau": config.b_tau,
            "a_sigma": config.a_sigma,
            "b_sigma": config.b_sigma,
            "gamma0": config.gamma0,
            "gamma1": config.gamma1,
            "q": config.q,
            "r": config.r,
            "s": config.s,
        },
        "chain": {
            "iterations": config.iterations,
            "burn_in": config.burn_in,
            "thin": config.thin,
            "seed": config.seed,
            "proposal_sd": config.proposal_sd,
            "exact_conditionals": config.exact_conditionals,
        },
        "output": {
            "directory": config.output_dir,
            "holdout": config.holdout,
            "level": config.level,
            "jobs": config.jobs,
        },
        "run": run_info,
    }


def summary_to_dict(
    summary: PosteriorSummary, columns: list[str], K: int
) -> dict:
    selected = [
        [columns[j] for j in seg.tolist()] for seg in summary.selected
    ]
    out = {
        "k": K,
        "level": summary.level,
        "columns": columns,
        "dic": summary.dic,
        "p_d": summary.p_d,
        "tau_acceptance": summary.tau_acceptance,
        "rmspe": summary.rmspe,
        "sigma2": {
            "median": summary.sigma2_median,
            "lower": summary.sigma2_interval[0],
            "upper": summary.sigma2_interval[1],
        },
        "tau": {
            "median": summary.tau_median.tolist(),
            "lower": summary.tau_lower.tolist(),
            "upper": summary.tau_upper.tolist(),
        },
        "beta": {
            "median": summary.beta_median.tolist(),
            "lower": summary.beta_lower.tolist(),
            "upper": summary.beta_upper.tolist(),
        },
        "inclusion_prob": (
            summary.inclusion_prob.tolist()
            if summary.inclusion_prob is not None
            else None
        ),
        "selected": selected,
    }
    return out


def write_summary_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------


def _split_holdout(ingest: IngestResult, holdout: int):
    data = ingest.data
    if holdout <= 0:
        return data, None
    if holdout >= data.n:
        raise UserError(f"holdout {holdout} must be below the row count {data.n}")
    cut = data.n - holdout
    train = Dataset(y=data.y[:cut], X=data.X[:cut], t=data.t[:cut])
    held = (data.X[cut:], data.y[cut:], data.t[cut:])
    return train, held


def run_fit(config: RunConfig) -> dict:
    """Execute a fit run and write the output bundle; returns run info."""
    started = time.time()
    ingest = load_csv_dataset(config.input, config)
    train, held = _split_holdout(ingest, config.holdout)
    base = _chain_config(config, train, ingest.columns)
    # resolved values flow into the manifest so a rerun is self-contained
    config.covariates = ingest.base_columns
    config.a_tau, config.b_tau = base.cp_bounds
    if config.proposal_sd is None:
        config.proposal_sd = default_proposal_sd(train.t)

    selection = select_num_changepoints(
        train,
        config.k_values,
        base,
        holdout=held,
        level=config.level,
        jobs=config.jobs,
    )
    best_K = selection.best_K
    best = selection.samples[best_K]
    best_report = next(r for r in selection.reports if r.K == best_K)
    summary = summarize(
        best, train, config.level, rmspe_value=best_report.rmspe
    )

    outdir = config.output_dir
    os.makedirs(outdir, exist_ok=True)
    write_samples_csv(os.path.join(outdir, "samples.csv"), best, config.prior)
    write_summary_json(
        os.path.join(outdir, "summary.json"),
        summary_to_dict(summary, ingest.columns, best_K),
    )

    with open(os.path.join(outdir, "selection.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["segment", "variable", "inclusion_prob", "selected"])
        for k in range(best_K + 1):
            chosen = set(summary.selected[k].tolist())
            for j, name in enumerate(ingest.columns):
                prob = (
                    f"{summary.inclusion_prob[k, j]:.17g}"
                    if summary.inclusion_prob is not None
                    else ""
                )
                writer.writerow([k + 1, name, prob, int(j in chosen)])

    k_max = max(config.k_values)
    with open(os.path.join(outdir, "dic_table.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        head = ["K", "dic", "p_d", "rmspe", "tau_acceptance"]
        for i in range(1, k_max + 1):
            head += [f"tau{i}_median", f"tau{i}_lower", f"tau{i}_upper"]
        writer.writerow(head)
        for rep in selection.reports:
            row = [
                rep.K,
                f"{rep.dic:.17g}",
                f"{rep.p_d:.17g}",
                f"{rep.rmspe:.17g}" if rep.rmspe is not None else "",
                f"{rep.tau_acceptance:.17g}",
            ]
            for i in range(k_max):
                if i < rep.K:
                    row += [
                        f"{rep.tau_median[i]:.17g}",
                        f"{rep.tau_lower[i]:.17g}",
                        f"{rep.tau_upper[i]:.17g}",
                    ]
                else:
                    row += ["", "", ""]
            writer.writerow(row)

    if held is not None:
        X_new, y_new, t_new = held
        rng = RngStream(config.seed, FORECAST_STREAM_OFFSET + best_K).generator()
        fc = one_step_ahead_forecast(best, X_new, t_new, rng, config.level)
        with open(os.path.join(outdir, "predictive.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([config.threshold, "actual", "median", "lower", "upper"])
            for j in range(t_new.size):
                writer.writerow(
                    [
                        f"{t_new[j]:.17g}",
                        f"{y_new[j]:.17g}",
                        f"{fc.median[j]:.17g}",
                        f"{fc.lower[j]:.17g}",
                        f"{fc.upper[j]:.17g}",
                    ]
                )

    run_info = {
        "version": __version__,
        "wall_time_s": round(time.time() - started, 3),
        "best_k": best_K,
        "tau_acceptance": best.tau_acceptance,
        "dropped_rows": ingest.dropped,
    }
    write_manifest(os.path.join(outdir, "manifest.toml"), manifest_sections(config, run_info))
    return run_info


def run_summarize(bundle_dir: str, out_path: str | None = None) -> None:
    """Recompute summary.json from a bundle's manifest and samples file."""
    manifest_path = os.path.join(bundle_dir, "manifest.toml")
    config = load_run_config(manifest_path)
    with open(manifest_path, "rb") as fh:
        manifest = tomllib.load(fh)
    best_K = int(manifest["run"]["best_k"])
    tau_acceptance = float(manifest["run"]["tau_acceptance"])

    ingest = load_csv_dataset(config.input, config)
    train, held = _split_holdout(ingest, config.holdout)
    base = replace(_chain_config(config, train, ingest.columns), K=best_K)
    samples = read_samples_csv(
        os.path.join(bundle_dir, "samples.csv"), config.prior, base, train.p
    )
    samples.tau_acceptance = tau_acceptance
    score = None
    if held is not None:
        X_new, y_new, t_new = held
        rng = RngStream(config.seed, FORECAST_STREAM_OFFSET + best_K).generator()
        fc = one_step_ahead_forecast(samples, X_new, t_new, rng, config.level)
        score = rmspe(fc.median, y_new)
    summary = summarize(samples, train, config.level, rmspe_value=score)
    target = out_path or os.path.join(bundle_dir, "summary.json")
    write_summary_json(target, summary_to_dict(summary, ingest.columns, best_K))


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _write_dataset_csv(path: str, data: Dataset) -> None:
    header = ["t", "y"] + [f"x{j + 1}" for j in range(data.p)]
    matrix = np.column_stack([data.t, data.y, data.X])
    np.savetxt(
        path, matrix, fmt="%.17g", delimiter=",", header=",".join(header), comments=""
    )


def _scenario_from_spec_file(path: str) -> ScenarioSpec:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise UserError(f"spec file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise UserError(f"spec file {path} is not valid TOML: {exc}") from exc
    table = raw.get("scenario")
    if not isinstance(table, dict):
        raise UserError("spec file needs a [scenario] table")
    try:
        beta = np.asarray(table["beta"], dtype=float)
        return ScenarioSpec(
            n=int(table["n"]),
            p=int(table["p"]),
            beta=beta,
            tau=tuple(float(v) for v in table.get("tau", ())),
            sigma2=float(table.get("sigma2", 1.0)),
            cov_kind=str(table.get("cov_kind", "ar")),
            rho=float(table.get("rho", 0.5)),
            seed=int(table.get("seed", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise UserError(f"bad scenario spec: {exc}") from exc


def run_simulate(args) -> None:
    os.makedirs(args.out, exist_ok=True)
    dataset_path = os.path.join(args.out, "dataset.csv")
    truth_path = os.path.join(args.out, "truth.json")

    if args.preset == "hpi-analog":
        rows = gen_hpi_analog(seed=args.seed)
        with open(dataset_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(HPI_ANALOG_COLUMNS)
            for row in rows:
                writer.writerow(
                    [row[0], row[1]] + [f"{v:.17g}" for v in row[2:]]
                )
        truth = {
            "preset": "hpi-analog",
            "seed": args.seed,
            "break_t": HPI_ANALOG_BREAK,
            "response": "hpi",
            "threshold": "t",
        }
        with open(truth_path, "w") as fh:
            json.dump(truth, fh, indent=2)
            fh.write("\n")
        return

    if args.spec:
        spec = _scenario_from_spec_file(args.spec)
    elif args.preset == "single-cp":
        spec = single_changepoint_scenario(
            tau=args.tau[0] if args.tau else 100.5,
            p=args.p,
            cov_kind=args.cov,
            n=args.n,
            seed=args.seed,
        )
    elif args.preset == "two-cp":
        tau = tuple(args.tau) if args.tau else (50.5, 100.5)
        if len(tau) != 2:
            raise UserError("two-cp preset needs exactly two --tau values")
        spec = two_changepoint_scenario(
            tau=tau, p=args.p, cov_kind=args.cov, n=args.n, seed=args.seed
        )
    else:
        raise UserError("choose --preset single-cp|two-cp|hpi-analog or --spec FILE")

    data, truth = gen_dataset(spec)
    _write_dataset_csv(dataset_path, data)
    payload = {
        "n": spec.n,
        "p": spec.p,
        "tau": list(truth.tau),
        "sigma2": truth.sigma2,
        "cov_kind": spec.cov_kind,
        "rho": spec.rho,
        "seed": spec.seed,
        "beta": truth.beta.tolist(),
        "supports": [(s + 1).tolist() for s in truth.supports],
    }
    with open(truth_path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# pacf
# ---------------------------------------------------------------------------


def run_pacf(args) -> None:
    with open(args.input, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [row for row in reader if row]
    header = [h.strip() for h in header]
    if args.column not in header:
        raise UserError(f"column {args.column!r} not found in {args.input}")
    idx = header.index(args.column)
    values = np.array(
        [_parse_cell(row[idx], i + 1, args.column) for i, row in enumerate(rows)]
    )
    band = 2.0 / math.sqrt(values.size)
    out = args.out or "pacf.csv"
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lag", "pacf", "band"])
        if args.max_lag > 0:
            for lag, value in enumerate(pacf(values, args.max_lag), start=1):
                writer.writerow([lag, f"{value:.17g}", f"{band:.17g}"])


# ---------------------------------------------------------------------------
# argument parsing and dispatch
# ---------------------------------------------------------------------------


def _resolve_seed(flag_seed: int | None, config_seed: int) -> int:
    if flag_seed is not None:
        return flag_seed
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise UserError(f"{SEED_ENV_VAR} must be an integer, got {env!r}") from exc
    return config_seed


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cpreg",
        description="Bayesian change-point regression with per-segment variable selection",
    )
    parser.add_argument("--version", action="version", version=f"cpreg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit change-point regression models from a CSV")
    fit.add_argument("--config", required=True, help="TOML run configuration")
    fit.add_argument("--seed", type=int, default=None)
    fit.add_argument("--iterations", type=int, default=None)
    fit.add_argument("--burn-in", type=int, default=None)
    fit.add_argument("--thin", type=int, default=None)
    fit.add_argument("--k", default=None, help="K or comma-separated K range, e.g. 0,1,2")
    fit.add_argument("--prior", choices=("spike-slab", "lasso", "group-lasso"), default=None)
    fit.add_argument("--holdout", type=int, default=None)
    fit.add_argument("--jobs", type=int, default=None)
    fit.add_argument("--out", default=None, help="output directory")

    sim = sub.add_parser("simulate", help="write synthetic benchmark datasets")
    sim.add_argument("--preset", choices=("single-cp", "two-cp", "hpi-analog"), default=None)
    sim.add_argument("--spec", default=None, help="TOML scenario spec file")
    sim.add_argument("--tau", type=float, nargs="*", default=None)
    sim.add_argument("--p", type=int, default=250)
    sim.add_argument("--n", type=int, default=200)
    sim.add_argument("--cov", choices=("ar", "cs"), default="ar")
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--out", required=True, help="output directory")

    pac = sub.add_parser("pacf", help="partial autocorrelation table for a CSV column")
    pac.add_argument("--input", required=True)
    pac.add_argument("--column", required=True)
    pac.add_argument("--max-lag", type=int, default=20)
    pac.add_argument("--out", default=None)

    summ = sub.add_parser("summarize", help="regenerate summary.json from a bundle")
    summ.add_argument("--bundle", required=True, help="bundle directory with manifest.toml")
    summ.add_argument("--out", default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "fit":
            config = load_run_config(args.config)
            config.seed = _resolve_seed(args.seed, config.seed)
            if args.iterations is not None:
                config.iterations = args.iterations
            if args.burn_in is not None:
                config.burn_in = args.burn_in
            if args.thin is not None:
                config.thin = args.thin
            if args.k is not None:
                config.k_values = tuple(int(v) for v in str(args.k).split(","))
            if args.prior is not None:
                config.prior = args.prior
            if args.holdout is not None:
                config.holdout = args.holdout
            if args.jobs is not None:
                config.jobs = args.jobs
            if args.out is not None:
                config.output_dir = args.out
            info = run_fit(config)
            print(
                f"fit complete: best K = {info['best_k']}, "
                f"wall time {info['wall_time_s']}s, bundle in {config.output_dir}"
            )
        elif args.command == "simulate":
            if args.seed is None:
                args.seed = int(os.environ.get(SEED_ENV_VAR, "0") or 0)
            run_simulate(args)
            print(f"dataset written to {args.out}")
        elif args.command == "pacf":
            run_pacf(args)
            print(f"pacf table written to {args.out or 'pacf.csv'}")
        elif args.command == "summarize":
            run_summarize(args.bundle, args.out)
            print("summary regenerated")
    except NumericalError as exc:
        print(f"cpreg: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (UserError, InsufficientDataError) as exc:
        print(f"cpreg: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"cpreg: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
