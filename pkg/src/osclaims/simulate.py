"""Seeded Monte Carlo for aggregate claims under order-statistic arrivals.

The generator is counter based: every uniform variate is a pure function
of (master seed, replicate, purpose, draw index), so replicates are
independent substreams and results do not depend on scheduling or thread
count.  Two execution backends share the exact floating-point semantics;
``OSCLAIMS_BACKEND`` picks between them (``numba``, ``numpy``, or ``auto``)
and ``OSCLAIMS_THREADS`` caps the numba thread pool.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels
from .errors import ConfigError, NumericFailure
from .model import (
    Boudreault,
    DependenceModel,
    HomogeneousPoisson,
    Independent,
    MixedPoisson,
    NonHomogeneousPoisson,
    ProcessSpec,
    SamplePath,
    TabulatedTV,
    TabulatedV,
)

__all__ = [
    "SimulationPlan",
    "MomentEstimate",
    "CounterStream",
    "active_backend",
    "sample_count",
    "sample_arrivals",
    "sample_path",
    "estimate_moments",
]

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLD = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

# draw purposes; each (replicate, purpose) pair is an independent substream
_P_STRUCTURE = np.uint64(0)
_P_COUNT = np.uint64(1)
_P_ARRIVAL = np.uint64(2)
_P_MIX = np.uint64(3)
_P_SEVERITY = np.uint64(4)


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z + _GOLD) & _MASK
    z = ((z ^ (z >> np.uint64(30))) * _MIX1) & _MASK
    z = ((z ^ (z >> np.uint64(27))) * _MIX2) & _MASK
    return z ^ (z >> np.uint64(31))


def _uniforms(
    seed: int, replicate: np.ndarray, purpose: np.uint64, index: np.ndarray
) -> np.ndarray:
    """Uniform(0, 1) variates as a pure function of the four identifiers."""
    s = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
    # scalar uint64 products overflow-warn in numpy; fold them in python ints
    purpose_off = np.uint64((0x9E3779B97F4A7C15 * int(purpose)) & 0xFFFFFFFFFFFFFFFF)
    key = _mix64(s + _GOLD * np.asarray(replicate, dtype=np.uint64))
    key = _mix64(key + purpose_off)
    bits = _mix64(key + _GOLD * np.asarray(index, dtype=np.uint64))
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


@dataclass(frozen=True)
class CounterStream:
    """Uniform source for one replicate of a seeded plan."""

    master_seed: int
    replicate: int = 0

    def uniform(self, purpose: int, index: int = 0) -> float:
        return float(
            _uniforms(
                self.master_seed,
                np.asarray([self.replicate]),
                np.uint64(purpose),
                np.asarray([index]),
            )[0]
        )

    def uniforms(self, purpose: int, count: int) -> np.ndarray:
        if count == 0:
            return np.empty(0)
        return _uniforms(
            self.master_seed,
            np.full(count, self.replicate),
            np.uint64(purpose),
            np.arange(count),
        )


@dataclass(frozen=True)
class SimulationPlan:
    """A fully-specified Monte Carlo experiment."""

    process: ProcessSpec
    dependence: DependenceModel
    horizon: float
    replicates: int
    master_seed: int = 0

    def __post_init__(self):
        if self.horizon < 0.0:
            raise ValueError("horizon must be >= 0")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must fit in 64 bits")


@dataclass(frozen=True)
class MomentEstimate:
    """Monte Carlo point estimate with its 95% normal interval.

    With a single replicate the spread is undefined and ``stderr`` and the
    interval are reported as NaN.
    """

    value: float
    stderr: float
    ci_low: float
    ci_high: float
    replicates: int
    seed: int

    def __post_init__(self):
        if self.stderr < 0.0:
            raise ValueError("stderr must be >= 0")

    @classmethod
    def from_spread(
        cls, value: float, stderr: float, replicates: int, seed: int
    ) -> "MomentEstimate":
        if math.isnan(stderr):
            return cls(value, float("nan"), float("nan"), float("nan"), replicates, seed)
        return cls(
            value,
            stderr,
            value - 1.96 * stderr,
            value + 1.96 * stderr,
            replicates,
            seed,
        )


# ---------------------------------------------------------------------------
# backend selection
# ---------------------------------------------------------------------------


def active_backend() -> str:
    """Resolve the execution backend from ``OSCLAIMS_BACKEND``."""
    choice = os.environ.get("OSCLAIMS_BACKEND", "auto").strip().lower()
    if choice in ("", "auto"):
        return "numba" if _kernels.HAVE_NUMBA else "numpy"
    if choice == "numpy":
        return "numpy"
    if choice == "numba":
        if not _kernels.HAVE_NUMBA:
            raise ConfigError("OSCLAIMS_BACKEND=numba but numba is not importable")
        return "numba"
    raise ConfigError(f"unknown OSCLAIMS_BACKEND value {choice!r}")


def _apply_thread_cap() -> None:
    raw = os.environ.get("OSCLAIMS_THREADS")
    if not raw:
        return
    try:
        threads = int(raw)
    except ValueError as exc:
        raise ConfigError(f"OSCLAIMS_THREADS must be an integer, got {raw!r}") from exc
    if threads < 1:
        raise ConfigError("OSCLAIMS_THREADS must be >= 1")
    import numba

    numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))


def _counts(p0, mu, u, k_hard):
    if active_backend() == "numba":
        _apply_thread_cap()
        return _kernels.counts_numba(p0, mu, u, k_hard)
    return _kernels.counts_numpy(p0, mu, u, k_hard)


def _sort_segments(values, offsets, rep_ids):
    if active_backend() == "numba":
        _apply_thread_cap()
        return _kernels.sort_segments_numba(values, offsets)
    return _kernels.sort_segments_numpy(values, offsets, rep_ids)


def _gaps(times, offsets):
    if active_backend() == "numba":
        _apply_thread_cap()
        return _kernels.gaps_numba(times, offsets)
    return _kernels.gaps_numpy(times, offsets)


def _totals(sizes, offsets, rep_ids, n_reps):
    if active_backend() == "numba":
        _apply_thread_cap()
        return _kernels.totals_numba(sizes, offsets)
    return _kernels.totals_numpy(sizes, rep_ids, n_reps)


# ---------------------------------------------------------------------------
# process-specific pieces
# ---------------------------------------------------------------------------


def _count_means(process: ProcessSpec, t: float, u_structure: np.ndarray) -> np.ndarray:
    """Conditional Poisson mean per replicate (the mixing draw resolves
    random structure)."""
    if isinstance(process, MixedPoisson):
        lam = np.asarray(process.structure.ppf(u_structure), dtype=float)
        return lam * t
    if isinstance(process, HomogeneousPoisson):
        return np.full(len(u_structure), process.rate * t)
    if isinstance(process, NonHomogeneousPoisson):
        total = float(np.asarray(process.cumulative_intensity(t), dtype=float))
        return np.full(len(u_structure), total)
    raise TypeError(f"unsupported process type {type(process).__name__}")


@lru_cache(maxsize=16)
def _nhpp_inverter(process: NonHomogeneousPoisson, t: float):
    """Quantile function of the arrival law built on a 1024-interval grid
    with bisection refinement."""
    xs = np.linspace(0.0, t, 1025)
    grid = np.asarray(process.os_cdf(t, xs), dtype=float)
    if np.any(~np.isfinite(grid)) or np.any(np.diff(grid) < 0.0):
        raise NumericFailure("cumulative intensity is not monotone on the horizon")

    def invert(u: np.ndarray) -> np.ndarray:
        hi_idx = np.clip(np.searchsorted(grid, u, side="left"), 1, 1024)
        lo = xs[hi_idx - 1]
        hi = xs[hi_idx]
        for _ in range(52):
            mid = 0.5 * (lo + hi)
            below = np.asarray(process.os_cdf(t, mid)) < u
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)

    return invert


def _positions(process: ProcessSpec, t: float, u: np.ndarray) -> np.ndarray:
    """Map arrival uniforms through the inverse of the arrival law."""
    if isinstance(process, NonHomogeneousPoisson):
        return _nhpp_inverter(process, t)(u)
    return t * u


def _severities(
    dep: DependenceModel,
    gaps: np.ndarray,
    prev_times: np.ndarray,
    u_mix: np.ndarray,
    u_sev: np.ndarray,
) -> np.ndarray:
    if isinstance(dep, Boudreault):
        sizes = np.empty(len(gaps))
        large = u_mix < -np.expm1(-dep.decay * gaps)
        if np.any(large):
            sizes[large] = dep.large.ppf(u_sev[large])
        if not np.all(large):
            small = ~large
            sizes[small] = dep.small.ppf(u_sev[small])
        return sizes
    if isinstance(dep, Independent):
        return np.asarray(dep.law.ppf(u_sev), dtype=float)
    if isinstance(dep, (TabulatedV, TabulatedTV)):
        if dep.sampler is None:
            raise ConfigError(
                f"{type(dep).__name__} has no sampler attached; simulation "
                "needs one of signature (gap, prev_time, uniform) -> size"
            )
        return np.asarray(dep.sampler(gaps, prev_times, u_sev), dtype=float)
    raise TypeError(f"unsupported dependence type {type(dep).__name__}")


# ---------------------------------------------------------------------------
# public sampling operations
# ---------------------------------------------------------------------------


def _hard_count_cap(mu_max: float) -> int:
    # beyond this the Poisson tail is < 2^-60; clamping keeps both backends
    # in lockstep on pathological uniforms
    return int(math.ceil(mu_max + 20.0 * math.sqrt(mu_max) + 64.0))


def sample_count(process: ProcessSpec, t: float, rng: CounterStream) -> int:
    """One claim count: resolves random structure, then inverts the Poisson
    cdf by sequential search."""
    if t < 0.0:
        raise ValueError("horizon must be >= 0")
    if t == 0.0:
        return 0
    u_structure = np.asarray([rng.uniform(int(_P_STRUCTURE))])
    mu = _count_means(process, t, u_structure)
    u_count = np.asarray([rng.uniform(int(_P_COUNT))])
    counts = _counts(np.exp(-mu), mu, u_count, _hard_count_cap(float(mu[0])))
    return int(counts[0])


def sample_arrivals(
    process: ProcessSpec, t: float, n: int, rng: CounterStream
) -> np.ndarray:
    """``n`` arrival epochs: i.i.d. draws from the arrival law, sorted."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return np.empty(0)
    u = rng.uniforms(int(_P_ARRIVAL), n)
    return np.sort(_positions(process, t, u))


def sample_path(
    process: ProcessSpec,
    dep: DependenceModel,
    t: float,
    rng: CounterStream,
) -> SamplePath:
    """One full sample path: count, sorted arrivals, then claim sizes drawn
    conditionally on each preceding gap by inverse transform."""
    n = sample_count(process, t, rng)
    times = sample_arrivals(process, t, n, rng)
    gaps = np.diff(times, prepend=0.0)
    sizes = _severities(
        dep,
        gaps,
        times - gaps,
        rng.uniforms(int(_P_MIX), n),
        rng.uniforms(int(_P_SEVERITY), n),
    )
    return SamplePath(horizon=t, arrival_times=times, claim_sizes=sizes)


def _simulate_totals(plan: SimulationPlan) -> np.ndarray:
    """Aggregate claim totals for every replicate of the plan.

    Vectorized across replicates but draw-for-draw identical to calling
    :func:`sample_path` with ``CounterStream(master_seed, r)``.
    """
    reps = np.arange(plan.replicates)
    t = plan.horizon
    if t == 0.0:
        return np.zeros(plan.replicates)
    zero = np.zeros(plan.replicates, dtype=np.int64)
    u_structure = _uniforms(plan.master_seed, reps, _P_STRUCTURE, zero)
    mu = _count_means(plan.process, t, u_structure)
    u_count = _uniforms(plan.master_seed, reps, _P_COUNT, zero)
    counts = _counts(
        np.exp(-mu), mu, u_count, _hard_count_cap(float(np.max(mu, initial=0.0)))
    )

    offsets = np.zeros(plan.replicates + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    total_claims = int(offsets[-1])
    if total_claims == 0:
        return np.zeros(plan.replicates)
    rep_ids = np.repeat(reps, counts)
    slot = np.arange(total_claims) - offsets[rep_ids]

    u_arrival = _uniforms(plan.master_seed, rep_ids, _P_ARRIVAL, slot)
    times = _sort_segments(_positions(plan.process, t, u_arrival), offsets, rep_ids)
    gaps = _gaps(times, offsets)
    sizes = _severities(
        plan.dependence,
        gaps,
        times - gaps,
        _uniforms(plan.master_seed, rep_ids, _P_MIX, slot),
        _uniforms(plan.master_seed, rep_ids, _P_SEVERITY, slot),
    )
    return _totals(sizes, offsets, rep_ids, plan.replicates)


def estimate_moments(
    plan: SimulationPlan,
) -> tuple[MomentEstimate, MomentEstimate, MomentEstimate]:
    """Monte Carlo estimates of mean, second moment, and variance of the
    aggregate at the horizon.

    The variance estimate is the unbiased sample variance; its standard
    error uses the classical fourth-moment formula.
    """
    totals = _simulate_totals(plan)
    r = plan.replicates
    seed = plan.master_seed

    mean_val = float(np.mean(totals))
    squares = totals * totals
    second_val = float(np.mean(squares))
    if r >= 2:
        mean_se = float(np.std(totals, ddof=1) / math.sqrt(r))
        second_se = float(np.std(squares, ddof=1) / math.sqrt(r))
        centered = totals - mean_val
        m2 = float(np.mean(centered**2))
        m4 = float(np.mean(centered**4))
        var_val = float(np.var(totals, ddof=1))
        var_se = math.sqrt(max(m4 - (r - 3) / (r - 1) * m2 * m2, 0.0) / r)
    else:
        mean_se = second_se = var_se = float("nan")
        var_val = float("nan")

    return (
        MomentEstimate.from_spread(mean_val, mean_se, r, seed),
        MomentEstimate.from_spread(second_val, second_se, r, seed),
        MomentEstimate.from_spread(var_val, var_se, r, seed),
    )
