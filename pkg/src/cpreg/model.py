"""Core types for segmented linear regression: data containers, change-point
states, segment partitions, prior families, and the hyperparameter defaults
shared by every sampler.

Conventions used throughout the package:

* observations are sorted ascending by the threshold variable ``t``;
* segment boundaries are right-closed: observation ``i`` belongs to segment
  ``k`` iff ``tau[k-1] < t[i] <= tau[k]`` (with ``tau[0] = -inf`` and
  ``tau[K+1] = +inf``);
* segment labels are 1-based in ``SegmentPartition.segment_of``; coefficient
  matrices are 0-indexed numpy arrays of shape ``(K+1, p)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

__all__ = [
    "MIN_SEGMENT_SIZE",
    "InsufficientDataError",
    "Dataset",
    "ChangePointState",
    "SegmentPartition",
    "NoiseModel",
    "SpikeSlabPrior",
    "LassoPrior",
    "GroupLassoPrior",
    "PriorSpec",
    "McmcState",
    "partition_by_threshold",
    "log_likelihood",
    "default_spike_slab_scales",
    "solve_prior_inclusion",
    "default_spike_slab_prior",
    "initial_changepoints",
]

# Every segment must keep at least this many observations so that segment
# variances stay defined. Enforced as a prior-support restriction on tau.
MIN_SEGMENT_SIZE = 2


class InsufficientDataError(ValueError):
    """Too few observations for the requested operation."""


@dataclass(frozen=True)
class Dataset:
    """Response ``y``, covariate matrix ``X`` and threshold variable ``t``.

    Rows must already be sorted ascending by ``t``; use :meth:`from_arrays`
    to sort arbitrary input stably.
    """

    y: np.ndarray
    X: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        X = np.asarray(self.X, dtype=float)
        t = np.asarray(self.t, dtype=float)
        if X.ndim != 2:
            raise ValueError("X must be a 2-d matrix")
        if y.ndim != 1 or t.ndim != 1:
            raise ValueError("y and t must be 1-d")
        if not (y.size == X.shape[0] == t.size):
            raise ValueError(
                f"misaligned rows: y has {y.size}, X has {X.shape[0]}, t has {t.size}"
            )
        if y.size < 1 or X.shape[1] < 1:
            raise ValueError("need at least one observation and one covariate")
        if np.any(np.diff(t) < 0):
            raise ValueError("t must be sorted ascending; use Dataset.from_arrays")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "t", t)

    @classmethod
    def from_arrays(cls, y, X, t) -> "Dataset":
        """Build a dataset, stably sorting rows ascending by ``t``."""
        t = np.asarray(t, dtype=float)
        order = np.argsort(t, kind="stable")
        return cls(
            y=np.asarray(y, dtype=float)[order],
            X=np.asarray(X, dtype=float)[order],
            t=t[order],
        )

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class ChangePointState:
    """Ordered change-point vector with its uniform prior bounds.

    ``K = len(tau)``; ``K = 0`` means a single homogeneous segment. States in
    the prior support satisfy ``a_tau < tau[0] < ... < tau[K-1] < b_tau``;
    out-of-support vectors may be constructed (e.g. Metropolis proposals) and
    carry prior density zero.
    """

    tau: np.ndarray
    a_tau: float
    b_tau: float

    def __post_init__(self):
        tau = np.atleast_1d(np.asarray(self.tau, dtype=float))
        if tau.ndim != 1:
            raise ValueError("tau must be 1-d")
        if not self.a_tau < self.b_tau:
            raise ValueError(f"need a_tau < b_tau, got ({self.a_tau}, {self.b_tau})")
        object.__setattr__(self, "tau", tau)

    @property
    def K(self) -> int:
        return self.tau.size

    def in_support(self) -> bool:
        """True if tau is strictly increasing and inside (a_tau, b_tau)."""
        if self.K == 0:
            return True
        tau = self.tau
        return bool(
            self.a_tau < tau[0]
            and tau[-1] < self.b_tau
            and np.all(np.diff(tau) > 0)
        )


@dataclass(frozen=True)
class SegmentPartition:
    """Assignment of observations (in t-sorted order) to segments 1..K+1."""

    segment_of: np.ndarray
    counts: np.ndarray

    @property
    def boundaries(self) -> np.ndarray:
        """Row offsets ``[0, c1, c1+c2, ..., n]``; segment k spans
        ``boundaries[k-1]:boundaries[k]``."""
        return np.concatenate(([0], np.cumsum(self.counts)))


@dataclass(frozen=True)
class NoiseModel:
    """Noise variance with its inverse-gamma prior (shape, scale)."""

    sigma2: float = 1.0
    a_sigma: float = 2.0
    b_sigma: float = 1.0

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if self.a_sigma <= 0 or self.b_sigma <= 0:
            raise ValueError("inverse-gamma prior parameters must be positive")


@dataclass(frozen=True)
class SpikeSlabPrior:
    """Two-component normal mixture prior on coefficients, selected by binary
    indicators: variance ``sigma2 * gamma0`` when excluded (narrow spike),
    ``sigma2 * gamma1`` when included (wide slab), inclusion probability ``q``.

    All hyperparameters are per segment (length K+1). ``forced_in`` marks
    (segment, variable) entries that always receive the wide prior.
    """

    gamma0: np.ndarray
    gamma1: np.ndarray
    q: np.ndarray
    forced_in: np.ndarray | None = None

    def __post_init__(self):
        g0 = np.atleast_1d(np.asarray(self.gamma0, dtype=float))
        g1 = np.atleast_1d(np.asarray(self.gamma1, dtype=float))
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        if not (g0.shape == g1.shape == q.shape):
            raise ValueError("gamma0, gamma1, q must have one entry per segment")
        if np.any(g0 <= 0) or np.any(g1 <= g0):
            raise ValueError("need 0 < gamma0 < gamma1 in every segment")
        if np.any(q <= 0) or np.any(q >= 1):
            raise ValueError("inclusion probability q must lie strictly in (0, 1)")
        object.__setattr__(self, "gamma0", g0)
        object.__setattr__(self, "gamma1", g1)
        object.__setattr__(self, "q", q)
        if self.forced_in is not None:
            object.__setattr__(self, "forced_in", np.asarray(self.forced_in, dtype=bool))

    @property
    def n_segments(self) -> int:
        return self.gamma0.size


@dataclass(frozen=True)
class LassoPrior:
    """Laplace shrinkage via exponential latent scales; gamma hyperprior
    Gamma(r, s) on each segment's squared rate."""

    r: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        r = np.atleast_1d(np.asarray(self.r, dtype=float))
        s = np.atleast_1d(np.asarray(self.s, dtype=float))
        if r.shape != s.shape:
            raise ValueError("r and s must have one entry per segment")
        if np.any(r <= 0) or np.any(s <= 0):
            raise ValueError("r and s must be positive")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "s", s)

    @property
    def n_segments(self) -> int:
        return self.r.size


@dataclass(frozen=True)
class GroupLassoPrior:
    """Multivariate-Laplace prior grouping each variable's coefficients across
    segments, forcing a shared support. Only defined for two segments (one
    change point). Single gamma hyperprior Gamma(r, s) on the squared rate."""

    r: float = 1.0
    s: float = 1.0

    def __post_init__(self):
        if self.r <= 0 or self.s <= 0:
            raise ValueError("r and s must be positive")


PriorSpec = SpikeSlabPrior | LassoPrior | GroupLassoPrior


@dataclass
class McmcState:
    """Mutable sampler state.

    ``beta`` is (K+1, p). ``Z`` is the (K+1, p) inclusion matrix (spike-slab
    only). ``eta`` holds latent prior-variance scales: (K+1, p) for the Lasso,
    (p,) shared across segments for the group Lasso. ``lambda2`` is per
    segment for the Lasso, a scalar for the group Lasso.
    """

    beta: np.ndarray
    sigma2: float
    cp: ChangePointState
    Z: np.ndarray | None = None
    eta: np.ndarray | None = None
    lambda2: np.ndarray | float | None = None


def partition_by_threshold(t: np.ndarray, cp: ChangePointState) -> SegmentPartition:
    """Assign t-sorted observations to segments under right-closed boundaries.

    Observation i lands in segment k iff ``tau[k-1] < t[i] <= tau[k]``.
    Degenerate (undersized or empty) segments are permitted here; callers
    enforce minimum segment sizes where the prior support requires them.
    """
    t = np.asarray(t, dtype=float)
    edges = np.searchsorted(t, cp.tau, side="right")
    counts = np.diff(np.concatenate(([0], edges, [t.size]))).astype(int)
    segment_of = np.repeat(np.arange(1, cp.K + 2), counts)
    return SegmentPartition(segment_of=segment_of, counts=counts)


def log_likelihood(
    data: Dataset,
    part: SegmentPartition,
    beta: np.ndarray,
    sigma2: float,
) -> float:
    """Gaussian log likelihood sum_i log N(y_i | x_i' beta_seg(i), sigma2),
    normalizing constants included."""
    if sigma2 <= 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    b = part.boundaries
    if b[-1] != data.n or beta.shape[0] != len(part.counts):
        raise ValueError("partition inconsistent with data or beta")
    ss = 0.0
    for k in range(len(part.counts)):
        sl = slice(b[k], b[k + 1])
        r = data.y[sl] - data.X[sl] @ beta[k]
        ss += float(r @ r)
    return -0.5 * data.n * math.log(2.0 * math.pi * sigma2) - 0.5 * ss / sigma2


def default_spike_slab_scales(
    segment_variance: float, n_k: int, p: int
) -> tuple[float, float]:
    """Default spike/slab variance scales for one segment.

    gamma0 = var / (10 n_k); gamma1 = var * max(p^2.1 / (100 n_k), log n_k).
    ``segment_variance`` is the sample variance of the segment's responses
    under the initial change-point estimate.
    """
    if n_k < 2:
        raise InsufficientDataError(
            f"segment has {n_k} observations; need at least 2 for a sample variance"
        )
    if p < 1:
        raise ValueError("p must be at least 1")
    if segment_variance <= 0:
        raise ValueError("segment variance must be positive")
    gamma0 = segment_variance / (10.0 * n_k)
    gamma1 = segment_variance * max(p**2.1 / (100.0 * n_k), math.log(n_k))
    return gamma0, gamma1


def solve_prior_inclusion(p: int, n_k: int, tail_prob: float = 0.1) -> float:
    """Inclusion probability q such that the prior number of active variables
    exceeds ``min(p-1, max(10, log n_k))`` with probability ``tail_prob``.

    Solved by bisection on q in (0, 1) against the exact binomial tail,
    to within 1e-8 on the tail probability. Unreachable targets clamp q to
    the nearest boundary and emit a warning.
    """
    if p < 2:
        raise ValueError("p must be at least 2")
    m = min(p - 1, max(10.0, math.log(n_k)))
    thresh = math.floor(m)  # P(X > m) = P(X >= floor(m) + 1)
    eps = 1e-12

    def tail(q: float) -> float:
        return float(stats.binom.sf(thresh, p, q))

    if tail_prob >= tail(1.0 - eps):
        warnings.warn(
            f"tail probability {tail_prob} unreachable; clamping q to {1 - eps}",
            stacklevel=2,
        )
        return 1.0 - eps
    if tail_prob <= tail(eps):
        warnings.warn(
            f"tail probability {tail_prob} unreachable; clamping q to {eps}",
            stacklevel=2,
        )
        return eps

    lo, hi = eps, 1.0 - eps
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f = tail(mid)
        if abs(f - tail_prob) <= 1e-8:
            return mid
        if f < tail_prob:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def initial_changepoints(K: int, a_tau: float, b_tau: float) -> np.ndarray:
    """Equally spaced initial change-point estimates inside (a_tau, b_tau)."""
    if K < 0:
        raise ValueError("K must be nonnegative")
    return a_tau + (b_tau - a_tau) * np.arange(1, K + 1) / (K + 1)


def default_spike_slab_prior(
    data: Dataset,
    K: int,
    a_tau: float,
    b_tau: float,
    tail_prob: float = 0.1,
    forced_in: np.ndarray | None = None,
) -> SpikeSlabPrior:
    """Data-driven spike-slab hyperparameters.

    Segment response variances are taken under the initial change-point
    estimate (equally spaced in the prior range); each segment then gets
    :func:`default_spike_slab_scales` and :func:`solve_prior_inclusion`.
    """
    cp0 = ChangePointState(initial_changepoints(K, a_tau, b_tau), a_tau, b_tau)
    part = partition_by_threshold(data.t, cp0)
    if np.any(part.counts < MIN_SEGMENT_SIZE):
        raise InsufficientDataError(
            f"initial segment counts {part.counts.tolist()} fall below "
            f"{MIN_SEGMENT_SIZE}; widen the change-point bounds or reduce K"
        )
    b = part.boundaries
    gamma0 = np.empty(K + 1)
    gamma1 = np.empty(K + 1)
    q = np.empty(K + 1)
    for k in range(K + 1):
        y_k = data.y[b[k] : b[k + 1]]
        n_k = y_k.size
        var_k = float(np.var(y_k, ddof=1))
        if var_k <= 0:
            raise InsufficientDataError(
                f"segment {k + 1} responses are constant; variance-based "
                "hyperparameter defaults are undefined"
            )
        gamma0[k], gamma1[k] = default_spike_slab_scales(var_k, n_k, data.p)
        q[k] = solve_prior_inclusion(data.p, n_k, tail_prob)
    return SpikeSlabPrior(gamma0=gamma0, gamma1=gamma1, q=q, forced_in=forced_in)
