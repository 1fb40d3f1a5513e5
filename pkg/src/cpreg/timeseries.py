"""Time-series preprocessing: partial autocorrelation, monthly-to-quarterly
aggregation, and lagged-covariate construction for autoregressive terms.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

__all__ = ["Series", "Lagged", "pacf", "monthly_to_quarterly", "build_lagged"]


@dataclass(frozen=True)
class Series:
    """Evenly spaced series with optional ordered period labels."""

    values: np.ndarray
    labels: tuple | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise ValueError("series values must be 1-d")
        if self.labels is not None:
            labels = tuple(self.labels)
            if len(labels) != values.size:
                raise ValueError("labels and values have different lengths")
            object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class Lagged:
    """A lagged covariate column aligned to its target rows."""

    values: np.ndarray
    target_labels: tuple | None
    dropped_labels: tuple


def _values(series) -> np.ndarray:
    return series.values if isinstance(series, Series) else np.asarray(series, float)


def pacf(series, max_lag: int) -> np.ndarray:
    """Partial autocorrelations at lags 1..max_lag via the Durbin-Levinson
    recursion on sample autocovariances (denominator n, which keeps the
    autocovariance sequence positive semidefinite).
    """
    x = _values(series)
    n = x.size
    if max_lag < 1:
        raise ValueError("max_lag must be at least 1")
    if n <= max_lag + 1:
        raise ValueError(f"series of length {n} is too short for max_lag={max_lag}")
    xc = x - x.mean()
    acov = np.array([xc[: n - h] @ xc[h:] for h in range(max_lag + 1)]) / n
    if acov[0] <= 0:
        raise ValueError("constant series: autocorrelation is undefined")

    pac = np.zeros(max_lag)
    phi_prev = np.zeros(max_lag + 1)
    v = acov[0]
    for k in range(1, max_lag + 1):
        if v <= 1e-14 * acov[0]:
            # perfectly predicted process; remaining partials are zero
            break
        if k == 1:
            a = acov[1] / acov[0]
        else:
            a = (acov[k] - phi_prev[1:k] @ acov[k - 1 : 0 : -1]) / v
        pac[k - 1] = a
        phi = phi_prev.copy()
        phi[k] = a
        phi[1:k] = phi_prev[1:k] - a * phi_prev[k - 1 : 0 : -1]
        v *= 1.0 - a * a
        phi_prev = phi
    return pac


def monthly_to_quarterly(series: Series) -> Series:
    """Average consecutive month triples into quarters. Labels, when present,
    must align to month starts; each quarter keeps its first month's label."""
    x = _values(series)
    if x.size % 3 != 0:
        raise ValueError(f"series length {x.size} is not divisible by 3")
    values = x.reshape(-1, 3).mean(axis=1)
    labels = None
    if isinstance(series, Series) and series.labels is not None:
        labels = series.labels[::3]
    return Series(values=values, labels=labels)


def build_lagged(series, lag: int = 1) -> Lagged:
    """Shift a series by ``lag`` to form an autoregressive covariate column;
    the first ``lag`` target rows drop out of the modeling frame."""
    x = _values(series)
    labels = series.labels if isinstance(series, Series) else None
    if lag < 0:
        raise ValueError("lag must be nonnegative")
    if lag >= x.size:
        raise ValueError(f"lag {lag} is not below the series length {x.size}")
    if lag == 0:
        warnings.warn("lag 0 regresses the series on itself", stacklevel=2)
        return Lagged(values=x.copy(), target_labels=labels, dropped_labels=())
    return Lagged(
        values=x[:-lag].copy(),
        target_labels=labels[lag:] if labels is not None else None,
        dropped_labels=labels[:lag] if labels is not None else tuple(range(lag)),
    )
