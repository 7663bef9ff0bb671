"""Model primitives for aggregate claims under order-statistic arrival processes.

Claim counts come from a homogeneous, mixed, or non-homogeneous Poisson
process.  Conditional on ``N(t) = n`` the arrival epochs are distributed as
the order statistics of ``n`` i.i.d. draws from the normalized arrival law
``F_t``.  The size of each claim may depend on the inter-arrival gap that
precedes it (and, in the most general variant, on the previous arrival
epoch), which is how short gaps can trigger systematically different claim
sizes.

The module provides the three ingredient families

* :class:`SeverityLaw` - nonnegative claim-size distributions with
  closed-form moments and inverse transforms,
* :class:`StructureDistribution` - mixing laws for the random Poisson rate,
* :class:`DependenceModel` - conditional claim-size moments given the gap,

plus :class:`ProcessSpec` (the count process itself) and the
:class:`SamplePath` container produced by the simulator.
"""

from __future__ import annotations

import math
import warnings
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate as _quadpack
from scipy import special as _spec

from .errors import DegenerateProcessError, InfiniteMomentError, NumericFailure

__all__ = [
    "SeverityLaw",
    "Exponential",
    "GammaSeverity",
    "Lognormal",
    "Pareto",
    "PointMass",
    "StructureDistribution",
    "Degenerate",
    "FiniteAtoms",
    "GammaStructure",
    "TabulatedDensity",
    "ProcessSpec",
    "HomogeneousPoisson",
    "MixedPoisson",
    "NonHomogeneousPoisson",
    "DependenceModel",
    "Boudreault",
    "Independent",
    "TabulatedV",
    "TabulatedTV",
    "SamplePath",
    "count_pmf",
    "os_cdf",
    "os_density",
    "structure_integrate",
    "conditional_mean",
    "conditional_second_moment",
    "require_finite_moment",
]


def _scalarize(value, *inputs):
    """Return a float when every input was scalar, else the array itself."""
    if all(np.ndim(x) == 0 for x in inputs):
        return float(value)
    return value


def _positive(name: str, value: float) -> None:
    if not (value > 0.0) or not math.isfinite(value):
        raise ValueError(f"{name} must be a finite positive number, got {value!r}")


def _nonnegative(name: str, value: float) -> None:
    if not (value >= 0.0) or not math.isfinite(value):
        raise ValueError(f"{name} must be finite and >= 0, got {value!r}")


# ---------------------------------------------------------------------------
# Severity laws
# ---------------------------------------------------------------------------


class SeverityLaw(ABC):
    """Nonnegative claim-size distribution with analytic raw moments."""

    @abstractmethod
    def moment(self, k: int) -> float:
        """Raw moment ``E[Y^k]``; returns ``math.inf`` when it diverges."""

    @abstractmethod
    def cdf(self, x):
        """Distribution function, vectorized over ``x``."""

    @abstractmethod
    def ppf(self, u):
        """Quantile function for ``u`` in ``[0, 1)``, vectorized."""

    @property
    def mean(self) -> float:
        return self.moment(1)

    @property
    def second_moment(self) -> float:
        return self.moment(2)


def require_finite_moment(law: SeverityLaw, k: int) -> float:
    """Return ``E[Y^k]`` or raise :class:`InfiniteMomentError` if it diverges."""
    value = law.moment(k)
    if not math.isfinite(value):
        raise InfiniteMomentError(
            f"{type(law).__name__} has no finite moment of order {k}"
        )
    return value


@dataclass(frozen=True)
class Exponential(SeverityLaw):
    """Exponential claim sizes parameterized by their mean."""

    mean_value: float

    def __post_init__(self):
        _positive("mean_value", self.mean_value)

    def moment(self, k: int) -> float:
        return self.mean_value**k * math.gamma(k + 1)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return _scalarize(np.where(x > 0.0, -np.expm1(-x / self.mean_value), 0.0), x)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        return _scalarize(-self.mean_value * np.log1p(-u), u)


@dataclass(frozen=True)
class GammaSeverity(SeverityLaw):
    """Gamma claim sizes with shape ``a`` and scale ``s`` (mean ``a*s``)."""

    shape: float
    scale: float

    def __post_init__(self):
        _positive("shape", self.shape)
        _positive("scale", self.scale)

    def moment(self, k: int) -> float:
        return self.scale**k * math.exp(
            math.lgamma(self.shape + k) - math.lgamma(self.shape)
        )

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return _scalarize(
            _spec.gammainc(self.shape, np.maximum(x, 0.0) / self.scale), x
        )

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        return _scalarize(self.scale * _spec.gammaincinv(self.shape, u), u)


@dataclass(frozen=True)
class Lognormal(SeverityLaw):
    """Lognormal claim sizes: ``log Y ~ Normal(mu, sigma^2)``."""

    mu: float
    sigma: float

    def __post_init__(self):
        if not math.isfinite(self.mu):
            raise ValueError(f"mu must be finite, got {self.mu!r}")
        _positive("sigma", self.sigma)

    def moment(self, k: int) -> float:
        return math.exp(k * self.mu + 0.5 * (k * self.sigma) ** 2)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x, dtype=float)
        pos = x > 0.0
        out[pos] = _spec.ndtr((np.log(x[pos]) - self.mu) / self.sigma)
        return _scalarize(out, x)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        with np.errstate(over="ignore"):
            out = np.exp(self.mu + self.sigma * _spec.ndtri(u))
        return _scalarize(out, u)


@dataclass(frozen=True)
class Pareto(SeverityLaw):
    """Pareto claim sizes on ``[scale, inf)`` with tail index ``shape``.

    ``E[Y^k]`` is finite only for ``k < shape``; heavier moments come back as
    ``math.inf`` so that callers can decide whether a formula applies.
    """

    shape: float
    scale: float

    def __post_init__(self):
        _positive("shape", self.shape)
        _positive("scale", self.scale)

    def moment(self, k: int) -> float:
        if k >= self.shape:
            return math.inf
        return self.shape * self.scale**k / (self.shape - k)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x, dtype=float)
        pos = x >= self.scale
        out[pos] = -np.expm1(self.shape * np.log(self.scale / x[pos]))
        return _scalarize(out, x)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        return _scalarize(self.scale * np.power(1.0 - u, -1.0 / self.shape), u)


@dataclass(frozen=True)
class PointMass(SeverityLaw):
    """Deterministic claim size."""

    value: float

    def __post_init__(self):
        _nonnegative("value", self.value)

    def moment(self, k: int) -> float:
        return self.value**k

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return _scalarize((x >= self.value).astype(float), x)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        return _scalarize(np.full_like(u, self.value, dtype=float), u)


# ---------------------------------------------------------------------------
# Structure distributions (mixing laws for the Poisson rate)
# ---------------------------------------------------------------------------


class StructureDistribution(ABC):
    """Distribution of the random Poisson rate in a mixed Poisson process."""

    @abstractmethod
    def moment(self, k: int) -> float:
        """Raw moment ``E[Lambda^k]`` (finite for ``k <= 2`` by contract)."""

    @abstractmethod
    def integrate(self, g: Callable[[float], float], rtol: float = 1e-9) -> float:
        """Expectation ``E[g(Lambda)]`` with an accuracy check."""

    @abstractmethod
    def mixture_count_pmf(self, t: float, n_max: int) -> np.ndarray:
        """Vector of ``P[N(t) = n]`` for ``n = 0..n_max`` under this mixing law."""

    @abstractmethod
    def ppf(self, u):
        """Quantile function of the rate, vectorized; used by the simulator."""

    @property
    def mean(self) -> float:
        return self.moment(1)

    @property
    def second_moment(self) -> float:
        return self.moment(2)

    @property
    def variance(self) -> float:
        return self.moment(2) - self.moment(1) ** 2


def _poisson_pmf_vector(mu: float, n_max: int) -> np.ndarray:
    n = np.arange(n_max + 1, dtype=float)
    if mu == 0.0:
        out = np.zeros(n_max + 1)
        out[0] = 1.0
        return out
    return np.exp(n * math.log(mu) - mu - _spec.gammaln(n + 1.0))


@dataclass(frozen=True)
class Degenerate(StructureDistribution):
    """Deterministic rate; the process collapses to a homogeneous Poisson."""

    rate: float

    def __post_init__(self):
        _nonnegative("rate", self.rate)

    def moment(self, k: int) -> float:
        return self.rate**k

    def integrate(self, g, rtol: float = 1e-9) -> float:
        return float(g(self.rate))

    def mixture_count_pmf(self, t: float, n_max: int) -> np.ndarray:
        return _poisson_pmf_vector(self.rate * t, n_max)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        return _scalarize(np.full_like(u, self.rate, dtype=float), u)


@dataclass(frozen=True)
class FiniteAtoms(StructureDistribution):
    """Finitely many candidate rates with given probabilities."""

    rates: tuple
    probs: tuple

    def __init__(self, rates: Sequence[float], probs: Sequence[float]):
        rates = tuple(float(r) for r in rates)
        probs = tuple(float(p) for p in probs)
        if len(rates) == 0 or len(rates) != len(probs):
            raise ValueError("rates and probs must be equal-length, non-empty")
        for r in rates:
            _nonnegative("rate", r)
        if any(p < 0.0 for p in probs):
            raise ValueError("probabilities must be nonnegative")
        if abs(sum(probs) - 1.0) > 1e-12:
            raise ValueError(f"probabilities must sum to 1, got {sum(probs)!r}")
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "probs", probs)

    def moment(self, k: int) -> float:
        return float(sum(p * r**k for r, p in zip(self.rates, self.probs)))

    def integrate(self, g, rtol: float = 1e-9) -> float:
        return float(sum(p * g(r) for r, p in zip(self.rates, self.probs)))

    def mixture_count_pmf(self, t: float, n_max: int) -> np.ndarray:
        out = np.zeros(n_max + 1)
        for r, p in zip(self.rates, self.probs):
            out += p * _poisson_pmf_vector(r * t, n_max)
        return out

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        cum = np.cumsum(self.probs)
        idx = np.searchsorted(cum, u, side="right")
        idx = np.minimum(idx, len(self.rates) - 1)
        return _scalarize(np.asarray(self.rates, dtype=float)[idx], u)


@dataclass(frozen=True)
class GammaStructure(StructureDistribution):
    """Gamma mixing law with shape ``a`` and *rate* ``r`` (mean ``a / r``).

    Mixing a Poisson count with this law yields a negative binomial count
    distribution, which :meth:`mixture_count_pmf` evaluates in closed form
    through log-gamma calls so that large ``n`` stays accurate.
    """

    shape: float
    rate: float

    def __post_init__(self):
        _positive("shape", self.shape)
        _positive("rate", self.rate)

    def moment(self, k: int) -> float:
        return math.exp(
            math.lgamma(self.shape + k) - math.lgamma(self.shape)
        ) / self.rate**k

    def integrate(self, g, rtol: float = 1e-9) -> float:
        a, r = self.shape, self.rate
        log_norm = a * math.log(r) - math.lgamma(a)

        def weighted(lam: float) -> float:
            if lam <= 0.0:
                return 0.0
            log_w = log_norm + (a - 1.0) * math.log(lam) - r * lam
            # do not evaluate g far in the rate tail where the density underflows
            if log_w < -745.0:
                return 0.0
            return g(lam) * math.exp(log_w)

        # aim two digits below the requested tolerance, but no deeper than
        # 1e-11: integrands built from truncated series have noise near 1e-10
        # relative, so the subdivision budget can run out chasing it; the
        # reported abserr is checked below either way
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", _quadpack.IntegrationWarning)
            value, abserr = _quadpack.quad(
                weighted,
                0.0,
                np.inf,
                limit=200,
                epsabs=1e-13,
                epsrel=max(1e-11, 0.01 * rtol),
            )
        if abserr > max(1e-10, rtol * abs(value)):
            raise NumericFailure(
                f"structure expectation did not converge (abserr={abserr:.3e})",
                residual_bound=abserr,
            )
        return float(value)

    def mixture_count_pmf(self, t: float, n_max: int) -> np.ndarray:
        if t == 0.0:
            return _poisson_pmf_vector(0.0, n_max)
        a, r = self.shape, self.rate
        n = np.arange(n_max + 1, dtype=float)
        log_pmf = (
            _spec.gammaln(n + a)
            - _spec.gammaln(a)
            - _spec.gammaln(n + 1.0)
            + a * math.log(r / (r + t))
            + n * math.log(t / (r + t))
        )
        return np.exp(log_pmf)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        return _scalarize(_spec.gammaincinv(self.shape, u) / self.rate, u)


@dataclass(frozen=True, eq=False)
class TabulatedDensity(StructureDistribution):
    """Piecewise-linear rate density on a finite grid.

    The tabulated mass must equal 1 to within ``1e-6``; it is then rescaled
    exactly so that downstream quadratures see a proper density.
    """

    grid: np.ndarray
    density: np.ndarray
    _nodes: np.ndarray = field(init=False, repr=False)
    _weights: np.ndarray = field(init=False, repr=False)

    def __init__(self, grid: Sequence[float], density: Sequence[float]):
        grid = np.asarray(grid, dtype=float)
        density = np.asarray(density, dtype=float)
        if grid.ndim != 1 or grid.size < 2 or grid.shape != density.shape:
            raise ValueError("grid and density must be 1-d arrays of equal length >= 2")
        if grid[0] < 0.0 or np.any(np.diff(grid) <= 0.0):
            raise ValueError("grid must be strictly increasing and nonnegative")
        if np.any(density < 0.0):
            raise ValueError("density values must be nonnegative")
        mass = float(np.trapezoid(density, grid))
        if abs(mass - 1.0) > 1e-6:
            raise ValueError(f"tabulated density mass {mass!r} is not 1 within 1e-6")
        density = density / mass
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "density", density)
        # 16-node Gauss-Legendre rule per segment, density folded into weights
        x16, w16 = np.polynomial.legendre.leggauss(16)
        lo = grid[:-1, None]
        hi = grid[1:, None]
        half = 0.5 * (hi - lo)
        nodes = lo + half * (x16[None, :] + 1.0)
        weights = half * w16[None, :] * np.interp(nodes, grid, density)
        object.__setattr__(self, "_nodes", nodes.ravel())
        object.__setattr__(self, "_weights", weights.ravel())

    def moment(self, k: int) -> float:
        return float(np.sum(self._weights * self._nodes**k))

    def integrate(self, g, rtol: float = 1e-9) -> float:
        try:
            values = np.asarray(g(self._nodes), dtype=float)
            if values.shape != self._nodes.shape:
                raise TypeError
        except TypeError:
            values = np.array([g(x) for x in self._nodes], dtype=float)
        return float(np.sum(self._weights * values))

    def mixture_count_pmf(self, t: float, n_max: int) -> np.ndarray:
        pois = np.exp(
            np.arange(n_max + 1, dtype=float)[:, None]
            * np.log(np.maximum(self._nodes * t, 1e-300))[None, :]
            - self._nodes[None, :] * t
            - _spec.gammaln(np.arange(n_max + 1, dtype=float) + 1.0)[:, None]
        )
        if t == 0.0 or self.grid[0] == 0.0:
            pois[0] = np.exp(-self._nodes * t)
        return pois @ self._weights

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        # refine each segment so the piecewise-quadratic cdf inverts accurately
        fine = np.linspace(self.grid[:-1], self.grid[1:], 65, axis=1)[:, :-1].ravel()
        fine = np.append(fine, self.grid[-1])
        dens = np.interp(fine, self.grid, self.density)
        cdf = np.concatenate(
            [[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(fine))]
        )
        cdf /= cdf[-1]
        return _scalarize(np.interp(u, cdf, fine), u)


def structure_integrate(
    structure: StructureDistribution,
    g: Callable[[float], float],
    rtol: float = 1e-9,
) -> float:
    """Expectation of ``g`` under the mixing law.

    Degenerate and finite-atom laws evaluate exactly; continuous laws fall
    back to quadrature and raise :class:`NumericFailure` when the estimated
    error exceeds ``max(1e-11, rtol * |value|)``.
    """
    return structure.integrate(g, rtol=rtol)


# ---------------------------------------------------------------------------
# Count processes
# ---------------------------------------------------------------------------


class ProcessSpec(ABC):
    """Arrival process of claims over a horizon ``[0, t]``."""

    @abstractmethod
    def count_pmf_array(self, t: float, n_max: int) -> np.ndarray:
        """Vector of ``P[N(t) = n]`` for ``n = 0..n_max``."""

    @abstractmethod
    def count_mean(self, t: float) -> float:
        """``E[N(t)]``."""

    @abstractmethod
    def count_second_moment(self, t: float) -> float:
        """``E[N(t)^2]``."""

    @abstractmethod
    def os_cdf(self, t: float, x):
        """Arrival law ``F_t(x)`` of a single epoch, vectorized over ``x``."""

    @abstractmethod
    def os_density(self, t: float, x):
        """Density of ``F_t``, vectorized over ``x``."""

    def count_pmf(self, t: float, n: int) -> float:
        if n < 0:
            return 0.0
        return float(self.count_pmf_array(t, n)[n])

    def truncated_count_pmf(
        self, t: float, tail_epsilon: float = 1e-10, n_cap: int = 60
    ) -> tuple[np.ndarray, float]:
        """Probabilities ``P[N(t)=n]`` up to the tail-rule truncation level.

        Returns ``(pmf, tail_mass)`` where ``pmf`` runs from ``n = 0`` to the
        smallest level with cumulative mass at least ``1 - tail_epsilon``
        (never below 10), and ``tail_mass`` bounds the discarded mass.
        Raises :class:`NumericFailure` when ``n_cap`` terms do not reach the
        target mass.
        """
        n_hi = min(max(16, 2 * n_cap // 3), n_cap)
        while True:
            pmf = self.count_pmf_array(t, n_hi)
            cum = np.cumsum(pmf)
            if cum[-1] >= 1.0 - tail_epsilon or n_hi >= n_cap:
                break
            n_hi = min(2 * n_hi, n_cap)
        if cum[-1] < 1.0 - tail_epsilon:
            raise NumericFailure(
                f"count distribution needs more than n_cap={n_cap} terms "
                f"to reach mass 1 - {tail_epsilon:g} (got {float(cum[-1]):.6g})",
                residual_bound=float(max(1.0 - cum[-1], 0.0)),
            )
        n_star = max(int(np.searchsorted(cum, 1.0 - tail_epsilon)), 10)
        n_star = min(n_star, n_hi)
        tail = float(max(1.0 - cum[n_star], 0.0))
        return pmf[: n_star + 1], tail


@dataclass(frozen=True)
class HomogeneousPoisson(ProcessSpec):
    """Poisson arrivals at a constant rate."""

    rate: float

    def __post_init__(self):
        _nonnegative("rate", self.rate)

    def count_pmf_array(self, t: float, n_max: int) -> np.ndarray:
        return _poisson_pmf_vector(self.rate * t, n_max)

    def count_mean(self, t: float) -> float:
        return self.rate * t

    def count_second_moment(self, t: float) -> float:
        mu = self.rate * t
        return mu + mu * mu

    def os_cdf(self, t: float, x):
        if t <= 0.0:
            raise ValueError("os_cdf requires t > 0")
        x = np.asarray(x, dtype=float)
        return _scalarize(np.clip(x / t, 0.0, 1.0), x)

    def os_density(self, t: float, x):
        if t <= 0.0:
            raise ValueError("os_density requires t > 0")
        x = np.asarray(x, dtype=float)
        inside = (x >= 0.0) & (x <= t)
        return _scalarize(np.where(inside, 1.0 / t, 0.0), x)


@dataclass(frozen=True)
class MixedPoisson(ProcessSpec):
    """Poisson process whose rate is drawn once from a structure distribution.

    The conditional arrival law given the count is uniform on ``[0, t]``
    regardless of the mixing law, which is what makes the specialized
    uniform-kernel engines applicable.
    """

    structure: StructureDistribution

    def count_pmf_array(self, t: float, n_max: int) -> np.ndarray:
        return self.structure.mixture_count_pmf(t, n_max)

    def count_mean(self, t: float) -> float:
        return t * self.structure.mean

    def count_second_moment(self, t: float) -> float:
        return t * self.structure.mean + t * t * self.structure.second_moment

    def os_cdf(self, t: float, x):
        if t <= 0.0:
            raise ValueError("os_cdf requires t > 0")
        x = np.asarray(x, dtype=float)
        return _scalarize(np.clip(x / t, 0.0, 1.0), x)

    def os_density(self, t: float, x):
        if t <= 0.0:
            raise ValueError("os_density requires t > 0")
        x = np.asarray(x, dtype=float)
        inside = (x >= 0.0) & (x <= t)
        return _scalarize(np.where(inside, 1.0 / t, 0.0), x)


@dataclass(frozen=True, eq=False)
class NonHomogeneousPoisson(ProcessSpec):
    """Poisson arrivals with cumulative intensity ``x -> Lambda(x)``.

    ``cumulative_intensity`` must vanish at zero and be nondecreasing.  The
    pointwise ``intensity`` is optional; when omitted, densities fall back to
    a symmetric difference quotient of the cumulative intensity.
    """

    cumulative_intensity: Callable
    intensity: Callable | None = None

    def __post_init__(self):
        at_zero = float(self.cumulative_intensity(0.0))
        if abs(at_zero) > 1e-12:
            raise ValueError(f"cumulative intensity at 0 must be 0, got {at_zero!r}")

    def _cumulative(self, x):
        x = np.asarray(x, dtype=float)
        try:
            values = np.asarray(self.cumulative_intensity(x), dtype=float)
            if values.shape != x.shape:
                raise TypeError
        except (TypeError, ValueError):
            values = np.array(
                [self.cumulative_intensity(float(v)) for v in np.atleast_1d(x)]
            ).reshape(x.shape)
        return values

    def _mass(self, t: float) -> float:
        mass = float(self.cumulative_intensity(t))
        if mass < 0.0:
            raise ValueError("cumulative intensity must be nonnegative")
        return mass

    def count_pmf_array(self, t: float, n_max: int) -> np.ndarray:
        return _poisson_pmf_vector(self._mass(t), n_max)

    def count_mean(self, t: float) -> float:
        return self._mass(t)

    def count_second_moment(self, t: float) -> float:
        mu = self._mass(t)
        return mu + mu * mu

    def os_cdf(self, t: float, x):
        if t <= 0.0:
            raise ValueError("os_cdf requires t > 0")
        total = self._mass(t)
        if total == 0.0:
            raise DegenerateProcessError(
                f"cumulative intensity vanishes on [0, {t}]"
            )
        x = np.asarray(x, dtype=float)
        values = self._cumulative(np.clip(x, 0.0, t)) / total
        return _scalarize(np.clip(values, 0.0, 1.0), x)

    def os_density(self, t: float, x):
        if t <= 0.0:
            raise ValueError("os_density requires t > 0")
        total = self._mass(t)
        if total == 0.0:
            raise DegenerateProcessError(
                f"cumulative intensity vanishes on [0, {t}]"
            )
        x = np.asarray(x, dtype=float)
        if self.intensity is not None:
            try:
                rate = np.asarray(self.intensity(x), dtype=float)
                if rate.shape != x.shape:
                    raise TypeError
            except (TypeError, ValueError):
                rate = np.array(
                    [self.intensity(float(v)) for v in np.atleast_1d(x)]
                ).reshape(x.shape)
        else:
            h = max(1e-6 * t, 1e-12)
            hi = self._cumulative(np.minimum(x + h, t))
            lo = self._cumulative(np.maximum(x - h, 0.0))
            rate = (hi - lo) / (np.minimum(x + h, t) - np.maximum(x - h, 0.0))
        inside = (x >= 0.0) & (x <= t)
        return _scalarize(np.where(inside, rate / total, 0.0), x)


def count_pmf(process: ProcessSpec, t: float, n: int) -> float:
    """Probability of exactly ``n`` claims on ``[0, t]``."""
    return process.count_pmf(t, n)


def os_cdf(process: ProcessSpec, t: float, x):
    """Arrival law ``F_t(x)`` shared by all order statistics on ``[0, t]``."""
    return process.os_cdf(t, x)


def os_density(process: ProcessSpec, t: float, x):
    """Density of the arrival law ``F_t``."""
    return process.os_density(t, x)


# ---------------------------------------------------------------------------
# Dependence between gaps and claim sizes
# ---------------------------------------------------------------------------


class DependenceModel(ABC):
    """Conditional claim-size moments given the preceding inter-arrival gap.

    ``conditional_mean(gap, prev_time)`` is the expected claim size given
    that the gap before the claim equals ``gap`` and the previous arrival
    happened at ``prev_time``; ``conditional_second_moment`` is the matching
    raw second moment.  Both are vectorized over their arguments.
    """

    @abstractmethod
    def conditional_mean(self, gap, prev_time=0.0):
        ...

    @abstractmethod
    def conditional_second_moment(self, gap, prev_time=0.0):
        ...

    def mean_bound(self, horizon: float) -> float:
        """Upper bound of the conditional mean over gaps in ``[0, horizon]``."""
        grid = np.linspace(0.0, horizon, 257)
        values = np.asarray(self.conditional_mean(grid, np.zeros_like(grid)))
        return float(np.max(values))

    def second_bound(self, horizon: float) -> float:
        grid = np.linspace(0.0, horizon, 257)
        values = np.asarray(self.conditional_second_moment(grid, np.zeros_like(grid)))
        return float(np.max(values))


@dataclass(frozen=True)
class Boudreault(DependenceModel):
    """Two-regime dependence: short gaps favor one severity law.

    The claim following a gap ``v`` is drawn from ``large`` with probability
    ``1 - exp(-decay * v)`` and from ``small`` otherwise.  ``decay = 0``
    degenerates to i.i.d. draws from ``small``.
    """

    decay: float
    large: SeverityLaw
    small: SeverityLaw

    def __post_init__(self):
        _nonnegative("decay", self.decay)

    def _mix(self, gap, k: int):
        m_large = require_finite_moment(self.large, k)
        m_small = require_finite_moment(self.small, k)
        gap = np.asarray(gap, dtype=float)
        w_small = np.exp(-self.decay * gap)
        return m_large + (m_small - m_large) * w_small, gap

    def conditional_mean(self, gap, prev_time=0.0):
        values, gap = self._mix(gap, 1)
        return _scalarize(values, gap, prev_time)

    def conditional_second_moment(self, gap, prev_time=0.0):
        values, gap = self._mix(gap, 2)
        return _scalarize(values, gap, prev_time)

    def mean_bound(self, horizon: float) -> float:
        return max(require_finite_moment(self.large, 1), require_finite_moment(self.small, 1))

    def second_bound(self, horizon: float) -> float:
        return max(require_finite_moment(self.large, 2), require_finite_moment(self.small, 2))


@dataclass(frozen=True)
class Independent(DependenceModel):
    """Claim sizes i.i.d. from a single law, ignoring gaps entirely."""

    law: SeverityLaw

    def conditional_mean(self, gap, prev_time=0.0):
        m = require_finite_moment(self.law, 1)
        gap = np.asarray(gap, dtype=float)
        return _scalarize(np.full_like(gap, m, dtype=float), gap, prev_time)

    def conditional_second_moment(self, gap, prev_time=0.0):
        m = require_finite_moment(self.law, 2)
        gap = np.asarray(gap, dtype=float)
        return _scalarize(np.full_like(gap, m, dtype=float), gap, prev_time)

    def mean_bound(self, horizon: float) -> float:
        return require_finite_moment(self.law, 1)

    def second_bound(self, horizon: float) -> float:
        return require_finite_moment(self.law, 2)


@dataclass(frozen=True, eq=False)
class TabulatedV(DependenceModel):
    """Gap-dependent moments given on a grid, linearly interpolated.

    Values are extrapolated as constants beyond the grid ends.  ``sampler``
    is an optional callable ``(gaps, uniforms) -> claim sizes`` implementing
    the inverse transform of the conditional law; simulation requires it.
    """

    gaps: np.ndarray
    means: np.ndarray
    second_moments: np.ndarray
    sampler: Callable | None = None

    def __init__(self, gaps, means, second_moments, sampler=None):
        gaps = np.asarray(gaps, dtype=float)
        means = np.asarray(means, dtype=float)
        second_moments = np.asarray(second_moments, dtype=float)
        if gaps.ndim != 1 or gaps.size < 2:
            raise ValueError("gap grid must be a 1-d array with >= 2 points")
        if means.shape != gaps.shape or second_moments.shape != gaps.shape:
            raise ValueError("means and second_moments must match the gap grid")
        if gaps[0] < 0.0 or np.any(np.diff(gaps) <= 0.0):
            raise ValueError("gap grid must be strictly increasing and nonnegative")
        if np.any(means < 0.0):
            raise ValueError("conditional means must be nonnegative")
        if np.any(second_moments < means**2 * (1.0 - 1e-9) - 1e-12):
            raise ValueError("second moments must dominate squared means")
        object.__setattr__(self, "gaps", gaps)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "second_moments", second_moments)
        object.__setattr__(self, "sampler", sampler)

    def conditional_mean(self, gap, prev_time=0.0):
        gap = np.asarray(gap, dtype=float)
        return _scalarize(np.interp(gap, self.gaps, self.means), gap, prev_time)

    def conditional_second_moment(self, gap, prev_time=0.0):
        gap = np.asarray(gap, dtype=float)
        return _scalarize(
            np.interp(gap, self.gaps, self.second_moments), gap, prev_time
        )

    def mean_bound(self, horizon: float) -> float:
        return float(np.max(self.means))

    def second_bound(self, horizon: float) -> float:
        return float(np.max(self.second_moments))


@dataclass(frozen=True, eq=False)
class TabulatedTV(DependenceModel):
    """Fully general moments as callables of ``(gap, prev_time)``.

    The callables should be numpy-vectorized; scalar-only callables are
    wrapped on the fly.  ``sampler`` is an optional callable
    ``(gaps, prev_times, uniforms) -> claim sizes`` used by the simulator.
    """

    mean_fn: Callable
    second_moment_fn: Callable
    sampler: Callable | None = None

    def _eval(self, fn, gap, prev_time):
        gap = np.asarray(gap, dtype=float)
        prev = np.broadcast_to(np.asarray(prev_time, dtype=float), np.broadcast_shapes(gap.shape, np.shape(prev_time)))
        gap_b = np.broadcast_to(gap, prev.shape)
        try:
            values = np.asarray(fn(gap_b, prev), dtype=float)
            if values.shape != gap_b.shape:
                raise TypeError
        except (TypeError, ValueError):
            values = np.array(
                [fn(float(g), float(p)) for g, p in zip(gap_b.ravel(), prev.ravel())]
            ).reshape(gap_b.shape)
        return values, gap

    def conditional_mean(self, gap, prev_time=0.0):
        values, gap = self._eval(self.mean_fn, gap, prev_time)
        return _scalarize(values, gap, prev_time)

    def conditional_second_moment(self, gap, prev_time=0.0):
        values, gap = self._eval(self.second_moment_fn, gap, prev_time)
        return _scalarize(values, gap, prev_time)

    def mean_bound(self, horizon: float) -> float:
        g = np.linspace(0.0, horizon, 65)
        gg, pp = np.meshgrid(g, g)
        values, _ = self._eval(self.mean_fn, gg.ravel(), pp.ravel())
        return float(np.max(values)) * 1.0

    def second_bound(self, horizon: float) -> float:
        g = np.linspace(0.0, horizon, 65)
        gg, pp = np.meshgrid(g, g)
        values, _ = self._eval(self.second_moment_fn, gg.ravel(), pp.ravel())
        return float(np.max(values)) * 1.0


def conditional_mean(dep: DependenceModel, gap, prev_time=0.0, index: int = 1):
    """Expected size of claim ``index`` given its gap and the previous epoch.

    The stock models are stationary in the claim index; ``index`` is
    validated and reserved for models where position matters.
    """
    if index < 1:
        raise ValueError("claim index must be >= 1")
    return dep.conditional_mean(gap, prev_time)


def conditional_second_moment(dep: DependenceModel, gap, prev_time=0.0, index: int = 1):
    """Raw second moment of claim ``index`` given its gap and previous epoch."""
    if index < 1:
        raise ValueError("claim index must be >= 1")
    return dep.conditional_second_moment(gap, prev_time)


# ---------------------------------------------------------------------------
# Sample paths
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SamplePath:
    """One realized claim history on ``[0, horizon]``."""

    horizon: float
    arrival_times: np.ndarray
    claim_sizes: np.ndarray

    def __post_init__(self):
        _nonnegative("horizon", self.horizon)
        times = np.asarray(self.arrival_times, dtype=float)
        sizes = np.asarray(self.claim_sizes, dtype=float)
        if times.ndim != 1 or times.shape != sizes.shape:
            raise ValueError("arrival_times and claim_sizes must be 1-d and aligned")
        if times.size:
            if np.any(np.diff(times) < 0.0):
                raise ValueError("arrival times must be nondecreasing")
            if times[0] < 0.0 or times[-1] > self.horizon:
                raise ValueError("arrival times must lie in [0, horizon]")
            if np.any(sizes < 0.0):
                raise ValueError("claim sizes must be nonnegative")
        times = times.copy()
        sizes = sizes.copy()
        times.setflags(write=False)
        sizes.setflags(write=False)
        object.__setattr__(self, "arrival_times", times)
        object.__setattr__(self, "claim_sizes", sizes)

    @property
    def count(self) -> int:
        return int(self.arrival_times.size)

    @property
    def gaps(self) -> np.ndarray:
        if self.arrival_times.size == 0:
            return np.empty(0)
        return np.diff(self.arrival_times, prepend=0.0)

    @property
    def total(self) -> float:
        return float(np.sum(self.claim_sizes))
