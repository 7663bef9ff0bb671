"""Closed-form moments of the aggregate claim under two-regime dependence.

All formulas here are exact modulo the expectation over the mixing law,
which is delegated to :func:`~osclaims.model.structure_integrate`.  They
apply to mixed Poisson processes whose claim sizes follow the
:class:`~osclaims.model.Boudreault` dependence (an
:class:`~osclaims.model.Independent` model is treated as its zero-decay
special case).  The quadrature and simulation engines reproduce the same
quantities by entirely different routes, which is what the validation
command cross-checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

from scipy import integrate as _quadpack

from .errors import NumericFailure
from .model import (
    Boudreault,
    Degenerate,
    DependenceModel,
    Independent,
    SeverityLaw,
    StructureDistribution,
    require_finite_moment,
    structure_integrate,
)
from .weights import (
    expected_large_weight,
    expected_pair_weight,
    expected_small_weight,
    pair_weight_growth,
    small_weight_growth,
)

__all__ = [
    "MomentReport",
    "as_two_regime",
    "mean_closed",
    "mean_closed_homogeneous",
    "second_moment_closed",
    "second_moment_parts",
    "variance_closed",
    "mean_rate_limit",
    "second_rate_limits",
    "variance_quadratic_limit",
    "variance_linear_limit",
]


@dataclass(frozen=True)
class MomentReport:
    """Moments of the aggregate claim at one horizon, with the additive
    pieces each formula is assembled from."""

    horizon: float
    mean: float
    second_moment: float
    variance: float
    mean_parts: Mapping[str, float] = field(default_factory=dict)
    second_moment_parts: Mapping[str, float] = field(default_factory=dict)


def as_two_regime(dep: DependenceModel) -> Boudreault:
    """Coerce a dependence model to the two-regime form the closed formulas
    cover, or raise ``TypeError``."""
    if isinstance(dep, Boudreault):
        return dep
    if isinstance(dep, Independent):
        return Boudreault(decay=0.0, large=dep.law, small=dep.law)
    raise TypeError(
        "closed-form moments require Boudreault or Independent dependence, "
        f"got {type(dep).__name__}"
    )


def mean_closed(
    t: float, structure: StructureDistribution, dep: DependenceModel
) -> float:
    """``E[S(t)]`` from the expected mixture weights.

    The expected count splits into an expected large-regime weight and an
    expected small-regime weight; each multiplies the matching severity
    mean.
    """
    if t < 0.0:
        raise ValueError("horizon must be >= 0")
    if t == 0.0:
        return 0.0
    two = as_two_regime(dep)
    m_large = require_finite_moment(two.large, 1)
    m_small = require_finite_moment(two.small, 1)
    beta = two.decay
    large_part = m_large * structure_integrate(
        structure, lambda lam: expected_large_weight(t, lam, beta)
    )
    small_part = m_small * structure_integrate(
        structure, lambda lam: expected_small_weight(t, lam, beta)
    )
    return large_part + small_part


def mean_closed_homogeneous(t: float, rate: float, dep: DependenceModel) -> float:
    """``E[S(t)]`` for a homogeneous Poisson process by direct quadrature.

    Integrates ``conditional_mean(v) * rate * exp(-rate v) * (rate (t-v) + 1)``
    over the gap ``v``; valid for any gap-only dependence model.  Serves as
    an independent check on :func:`mean_closed`.
    """
    if t < 0.0:
        raise ValueError("horizon must be >= 0")
    if rate < 0.0:
        raise ValueError("rate must be >= 0")
    if t == 0.0 or rate == 0.0:
        return 0.0

    def integrand(v: float) -> float:
        delta = float(dep.conditional_mean(v, 0.0))
        return delta * rate * math.exp(-rate * v) * (rate * (t - v) + 1.0)

    value, abserr = _quadpack.quad(integrand, 0.0, t, limit=200)
    if abserr > max(1e-12, 1e-10 * abs(value)):
        raise NumericFailure(
            f"gap quadrature did not converge (abserr={abserr:.3e})",
            residual_bound=abserr,
        )
    return float(value)


def second_moment_parts(
    t: float, structure: StructureDistribution, dep: DependenceModel
) -> dict[str, float]:
    """The five additive pieces of the closed-form ``E[S(t)^2]``.

    Two single-claim pieces pair severity second moments with the expected
    regime weights; three pair pieces pair products of severity means with
    expected two-claim weights at decay combinations ``(0,0)``, ``(0,b)``
    and ``(b,b)``.
    """
    two = as_two_regime(dep)
    m_large = require_finite_moment(two.large, 1)
    m_small = require_finite_moment(two.small, 1)
    q_large = require_finite_moment(two.large, 2)
    q_small = require_finite_moment(two.small, 2)
    beta = two.decay
    if t == 0.0:
        return {key: 0.0 for key in (
            "large_second", "small_second", "large_pair", "cross_pair", "small_pair",
        )}

    def pair(lam: float, d1: float, d2: float) -> float:
        return expected_pair_weight(t, lam, d1, d2)

    return {
        "large_second": q_large * structure_integrate(
            structure, lambda lam: expected_large_weight(t, lam, beta)
        ),
        "small_second": q_small * structure_integrate(
            structure, lambda lam: expected_small_weight(t, lam, beta)
        ),
        "large_pair": m_large**2 * structure_integrate(
            structure,
            lambda lam: pair(lam, 0.0, 0.0) - 2.0 * pair(lam, 0.0, beta) + pair(lam, beta, beta),
        ),
        "cross_pair": 2.0 * m_large * m_small * structure_integrate(
            structure, lambda lam: pair(lam, 0.0, beta) - pair(lam, beta, beta)
        ),
        "small_pair": m_small**2 * structure_integrate(
            structure, lambda lam: pair(lam, beta, beta)
        ),
    }


def second_moment_closed(
    t: float, structure: StructureDistribution, dep: DependenceModel
) -> float:
    """``E[S(t)^2]`` assembled from the five closed-form pieces."""
    if t < 0.0:
        raise ValueError("horizon must be >= 0")
    return float(sum(second_moment_parts(t, structure, dep).values()))


def variance_closed(
    t: float, structure: StructureDistribution, dep: DependenceModel
) -> MomentReport:
    """Mean, raw second moment, and variance in one report."""
    if t < 0.0:
        raise ValueError("horizon must be >= 0")
    two = as_two_regime(dep)
    beta = two.decay
    if t == 0.0:
        mean_parts = {"large": 0.0, "small": 0.0}
        parts = second_moment_parts(t, structure, dep)
        return MomentReport(0.0, 0.0, 0.0, 0.0, mean_parts, parts)
    m_large = require_finite_moment(two.large, 1)
    m_small = require_finite_moment(two.small, 1)
    mean_parts = {
        "large": m_large * structure_integrate(
            structure, lambda lam: expected_large_weight(t, lam, beta)
        ),
        "small": m_small * structure_integrate(
            structure, lambda lam: expected_small_weight(t, lam, beta)
        ),
    }
    parts = second_moment_parts(t, structure, dep)
    mean = sum(mean_parts.values())
    second = sum(parts.values())
    return MomentReport(
        horizon=t,
        mean=mean,
        second_moment=second,
        variance=second - mean * mean,
        mean_parts=mean_parts,
        second_moment_parts=parts,
    )


# ---------------------------------------------------------------------------
# Large-horizon asymptotics
# ---------------------------------------------------------------------------


def _large_rate(lam: float, beta: float) -> float:
    # lam - lam^2/(beta+lam), written without cancellation
    if lam == 0.0:
        return 0.0
    return lam * beta / (beta + lam)


def mean_rate_limit(structure: StructureDistribution, dep: DependenceModel) -> float:
    """Limit of ``E[S(t)] / t`` as the horizon grows."""
    two = as_two_regime(dep)
    m_large = require_finite_moment(two.large, 1)
    m_small = require_finite_moment(two.small, 1)
    beta = two.decay
    return m_large * structure_integrate(
        structure, lambda lam: _large_rate(lam, beta)
    ) + m_small * structure_integrate(
        structure, lambda lam: small_weight_growth(lam, beta)
    )


def second_rate_limits(
    structure: StructureDistribution, dep: DependenceModel
) -> tuple[float, float]:
    """Asymptote ``E[S(t)^2] / t -> intercept + slope * t``.

    The slope also equals the limit of ``E[S(t)^2] / t^2``.
    """
    two = as_two_regime(dep)
    m_large = require_finite_moment(two.large, 1)
    m_small = require_finite_moment(two.small, 1)
    q_large = require_finite_moment(two.large, 2)
    q_small = require_finite_moment(two.small, 2)
    beta = two.decay

    def combo(lam: float, which: int) -> float:
        g00 = pair_weight_growth(lam, 0.0, 0.0)[which]
        g0b = pair_weight_growth(lam, 0.0, beta)[which]
        gbb = pair_weight_growth(lam, beta, beta)[which]
        return (
            m_large**2 * (g00 - 2.0 * g0b + gbb)
            + 2.0 * m_large * m_small * (g0b - gbb)
            + m_small**2 * gbb
        )

    intercept = (
        q_large * structure_integrate(structure, lambda lam: _large_rate(lam, beta))
        + q_small * structure_integrate(structure, lambda lam: small_weight_growth(lam, beta))
        + structure_integrate(structure, lambda lam: combo(lam, 0))
    )
    slope = structure_integrate(structure, lambda lam: combo(lam, 1))
    return (intercept, slope)


def variance_quadratic_limit(
    structure: StructureDistribution, dep: DependenceModel
) -> float:
    """Limit of ``Var[S(t)] / t^2``; zero for degenerate mixing laws."""
    slope = second_rate_limits(structure, dep)[1]
    rate = mean_rate_limit(structure, dep)
    return slope - rate * rate


def variance_linear_limit(
    structure: StructureDistribution, severity: SeverityLaw
) -> float:
    """Reported limit of ``Var[S(t)] / t`` for a degenerate mixing law with
    one-type claims: ``E[Y]^2 * rate``.

    Matches the variance growth of deterministic claim sizes; random claim
    sizes add a further ``Var[Y] * rate`` to the true slope.
    """
    if not isinstance(structure, Degenerate):
        raise TypeError(
            "variance_linear_limit applies only to degenerate mixing laws"
        )
    mean = require_finite_moment(severity, 1)
    return mean * mean * structure.rate
