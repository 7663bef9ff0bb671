"""Closed-form expected mixture weights for the two-regime dependence model.

Under :class:`~osclaims.model.Boudreault` dependence with decay ``beta``, the
claim after a gap ``v`` comes from the small-claim law with weight
``exp(-beta * v)``.  For a Poisson process at rate ``lam`` on ``[0, t]``:

* :func:`expected_small_weight` is ``E[sum_i exp(-beta * V_i)]``, the
  expected number of claims drawn from the small-claim regime;
* :func:`expected_large_weight` is its complement against ``E[N(t)] = lam*t``;
* :func:`expected_pair_weight` is the analogous two-claim functional
  ``E[sum_{i<j pairs}]`` with separate decay rates attached to the two gaps.
  It powers the closed-form second moment.

Each has a large-``t`` growth description used by the asymptotic reports.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

__all__ = [
    "expected_small_weight",
    "expected_large_weight",
    "expected_pair_weight",
    "small_weight_growth",
    "pair_weight_growth",
]

# e^-46 ~ 1e-20: exponential tails beyond this cutoff cannot move a double
_TAIL_CUTOFF = 46.0
# below this exponent scale the explicit formulas cancel catastrophically,
# so the positive-integrand quadrature takes over
_SMALL_EXPONENT = 1e-2


@lru_cache(maxsize=32)
def _gauss_unit(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped to (0, 1)."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _validate(t: float, lam: float, decays: tuple[float, ...]) -> None:
    if not (t >= 0.0) or not math.isfinite(t):
        raise ValueError(f"horizon t must be finite and >= 0, got {t!r}")
    if not (lam >= 0.0) or not math.isfinite(lam):
        raise ValueError(f"rate lam must be finite and >= 0, got {lam!r}")
    for d in decays:
        if not (d >= 0.0) or not math.isfinite(d):
            raise ValueError(f"decay must be finite and >= 0, got {d!r}")


def expected_small_weight(t: float, lam: float, decay: float) -> float:
    """Expected total small-regime weight ``E[sum_i exp(-decay * V_i)]``.

    Lies in ``[0, lam * t]``; equals ``lam * t`` when ``decay == 0`` and
    loses mass as the decay sharpens.
    """
    _validate(t, lam, (decay,))
    if t == 0.0 or lam == 0.0:
        return 0.0
    rate = decay + lam
    s = rate * t
    return lam / rate**2 * (decay * (-math.expm1(-s)) + rate * lam * t)


def expected_large_weight(t: float, lam: float, decay: float) -> float:
    """Complement ``lam * t - expected_small_weight`` computed without
    cancellation for small ``(decay + lam) * t``."""
    _validate(t, lam, (decay,))
    if t == 0.0 or lam == 0.0 or decay == 0.0:
        return 0.0
    rate = decay + lam
    s = rate * t
    if s < 1e-3:
        # s - 1 + exp(-s) expanded; next term is s**7/5040
        g = s**2 / 2 - s**3 / 6 + s**4 / 24 - s**5 / 120 + s**6 / 720
    else:
        g = s + math.expm1(-s)
    return lam * decay / rate**2 * g


def _pair_weight_quadrature(
    t: float, lam: float, decay_first: float, decay_second: float, nodes: int
) -> float:
    # E[.] = lam^2 * int_0^t e^{-(lam+th) y} int_0^{t-y} e^{-(lam+de) v}
    #        * ((lam (t-y-v) + 2)^2 - 2) dv dy, all factors positive
    a = lam + decay_first
    b = lam + decay_second
    y_hi = min(t, _TAIL_CUTOFF / a) if a > 0.0 else t
    u, w = _gauss_unit(nodes)
    y = y_hi * u
    v_hi = np.minimum(t - y, _TAIL_CUTOFF / b) if b > 0.0 else t - y
    v = v_hi[:, None] * u[None, :]
    z = lam * (t - y[:, None] - v)
    inner = np.exp(-b * v) * (z * (z + 4.0) + 2.0)
    inner_vals = v_hi * (inner @ w)
    outer = np.exp(-a * y) * inner_vals
    return float(lam * lam * y_hi * np.dot(w, outer))


def _pair_weight_equal(t: float, lam: float, beta: float) -> float:
    # both gaps discounted at the same positive rate
    r = beta + lam
    s = r * t
    const = 2.0 * beta * lam**2 * (beta - 2.0 * lam) / r**4
    linear = 4.0 * beta * lam**3 * t / r**3
    quad = lam**4 * t * t / r**2
    decaying = -2.0 * beta * lam**2 * (-2.0 * lam + beta * (1.0 + s)) * math.exp(-s) / r**4
    return const + linear + quad + decaying


def _pair_weight_single(t: float, lam: float, beta: float) -> float:
    # one gap undiscounted, the other discounted at rate beta > 0
    r = beta + lam
    s = r * t
    const = -2.0 * beta * lam**2 / r**3
    linear = 2.0 * beta * lam**2 * t / r**2
    quad = lam**3 * t * t / r
    decaying = 2.0 * beta * lam**2 * math.exp(-s) / r**3
    return const + linear + quad + decaying


def expected_pair_weight(
    t: float,
    lam: float,
    decay_first: float,
    decay_second: float,
    nodes: int = 64,
) -> float:
    """Expected two-claim weight with decays attached to the two gaps.

    Symmetric in the two decay rates and bounded by ``(lam * t) ** 2``.
    Decay pairs where either rate is zero or both coincide hit explicit
    formulas; other pairs fall back to a nested Gauss-Legendre rule with
    ``nodes`` points per axis.  The explicit formulas cancel badly when
    ``(decay + lam) * t`` is tiny, so that regime is routed to the
    quadrature path as well (the integrand there is positive).
    """
    _validate(t, lam, (decay_first, decay_second))
    if nodes < 2:
        raise ValueError("nodes must be >= 2")
    if t == 0.0 or lam == 0.0:
        return 0.0
    if decay_first == 0.0 and decay_second == 0.0:
        return (lam * t) ** 2
    beta = max(decay_first, decay_second)
    small_scale = (beta + lam) * t < _SMALL_EXPONENT
    if not small_scale:
        if decay_first == 0.0 or decay_second == 0.0:
            return _pair_weight_single(t, lam, beta)
        if decay_first == decay_second:
            return _pair_weight_equal(t, lam, beta)
    return _pair_weight_quadrature(t, lam, decay_first, decay_second, nodes)


def small_weight_growth(lam: float, decay: float) -> float:
    """Limit of ``expected_small_weight(t) / t`` as ``t`` grows."""
    _validate(0.0, lam, (decay,))
    if lam == 0.0:
        return 0.0
    return lam**2 / (decay + lam)


def pair_weight_growth(
    lam: float, decay_first: float, decay_second: float
) -> tuple[float, float]:
    """Asymptote of ``expected_pair_weight(t) / t`` as ``t`` grows.

    Returns ``(intercept, slope)`` such that the ratio approaches
    ``intercept + slope * t``.
    """
    _validate(0.0, lam, (decay_first, decay_second))
    if lam == 0.0:
        return (0.0, 0.0)
    a = lam + decay_first
    b = lam + decay_second
    slope = lam**4 / (a * b)
    intercept = 2.0 * lam**3 / (a * b) * (2.0 - lam * (a + b) / (a * b))
    return (intercept, slope)
