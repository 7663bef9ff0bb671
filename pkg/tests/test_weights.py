"""Expected regime weights: exact reductions, oracles, and symmetry."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from osclaims import (
    expected_large_weight,
    expected_pair_weight,
    expected_small_weight,
    pair_weight_growth,
    small_weight_growth,
)


def _mc_weights(t: float, lam: float, theta: float, delta: float, replicates: int, seed: int):
    """Monte Carlo oracle for the expected gap-discounted sums.

    Returns estimates and standard errors for ``E[sum_i e^(-delta V_i)]``
    and ``E[sum_{i != j} e^(-theta V_i) e^(-delta V_j)]`` under a Poisson
    process with rate ``lam`` on ``[0, t]``.
    """
    rng = np.random.default_rng(seed)
    counts = rng.poisson(lam * t, size=replicates)
    total = int(counts.sum())
    u = rng.uniform(0.0, t, size=total)
    rep = np.repeat(np.arange(replicates), counts)
    order = np.lexsort((u, rep))
    u = u[order]
    offsets = np.concatenate([[0], np.cumsum(counts)])
    gaps = u.copy()
    gaps[1:] = u[1:] - u[:-1]
    starts = offsets[:-1][counts > 0]
    gaps[starts] = u[starts]
    s_theta = np.bincount(rep, weights=np.exp(-theta * gaps), minlength=replicates)
    s_delta = np.bincount(rep, weights=np.exp(-delta * gaps), minlength=replicates)
    s_both = np.bincount(rep, weights=np.exp(-(theta + delta) * gaps), minlength=replicates)
    single = s_delta
    pair = s_theta * s_delta - s_both
    scale = math.sqrt(replicates)
    return (
        float(single.mean()),
        float(single.std(ddof=1)) / scale,
        float(pair.mean()),
        float(pair.std(ddof=1)) / scale,
    )


# ---------------------------------------------------------------------------
# Exact reductions at zero decay
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("t", [0.5, 1.0, 2.0, 5.0])
@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
def test_zero_decay_single_weight_is_expected_count(t, lam):
    assert math.isclose(expected_small_weight(t, lam, 0.0), lam * t, rel_tol=1e-12)


@pytest.mark.parametrize("t", [0.5, 1.0, 2.0, 5.0])
@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
def test_zero_decay_pair_weight_is_squared_count(t, lam):
    assert math.isclose(expected_pair_weight(t, lam, 0.0, 0.0), (lam * t) ** 2, rel_tol=1e-12)


def test_large_and_small_weights_split_the_expected_count():
    for beta in (0.0, 0.3, 1.0, 4.0):
        for t, lam in ((0.5, 2.0), (2.0, 1.0), (5.0, 0.7)):
            total = expected_large_weight(t, lam, beta) + expected_small_weight(t, lam, beta)
            assert math.isclose(total, lam * t, rel_tol=1e-12)


def test_zero_horizon_and_zero_rate_vanish():
    assert expected_small_weight(0.0, 1.0, 2.0) == 0.0
    assert expected_small_weight(1.0, 0.0, 2.0) == 0.0
    assert expected_pair_weight(0.0, 1.0, 1.0, 2.0) == 0.0


# ---------------------------------------------------------------------------
# Quadrature oracles
# ---------------------------------------------------------------------------


def test_single_weight_matches_renewal_integral():
    # Each claim contributes e^(-beta v) where v is its preceding gap; for
    # Poisson arrivals the expected number of claims with gap in dv is
    # lam e^(-lam v) (1 + lam (t - v)) dv on [0, t].
    for t, lam, beta in [(2.0, 1.5, 0.8), (1.0, 0.5, 3.0), (4.0, 2.0, 0.2)]:
        expected, abserr = integrate.quad(
            lambda v: lam * math.exp(-(beta + lam) * v) * (1.0 + lam * (t - v)), 0.0, t
        )
        assert abserr < 1e-10
        assert math.isclose(expected_small_weight(t, lam, beta), expected, rel_tol=1e-10)


def test_pair_weight_matches_monte_carlo():
    t, lam, theta, delta = 2.0, 1.5, 0.8, 0.3
    single, single_err, pair, pair_err = _mc_weights(t, lam, theta, delta, 200_000, seed=42)
    assert abs(expected_small_weight(t, lam, delta) - single) < 5.0 * single_err
    assert abs(expected_pair_weight(t, lam, theta, delta) - pair) < 5.0 * pair_err


def test_equal_decay_formula_agrees_with_quadrature_path():
    # Nudging one decay off the diagonal reroutes to the quadrature branch.
    t, lam, beta = 2.0, 1.0, 1.3
    diagonal = expected_pair_weight(t, lam, beta, beta)
    nudged = expected_pair_weight(t, lam, beta, beta * (1.0 + 1e-12))
    assert math.isclose(diagonal, nudged, rel_tol=1e-9)


def test_single_decay_formula_agrees_with_quadrature_path():
    t, lam, beta = 2.0, 1.0, 1.3
    formula = expected_pair_weight(t, lam, 0.0, beta)
    nudged = expected_pair_weight(t, lam, 1e-13, beta)
    assert math.isclose(formula, nudged, rel_tol=1e-9)


# ---------------------------------------------------------------------------
# Symmetry and bounds
# ---------------------------------------------------------------------------


def test_pair_weight_symmetry_on_a_random_grid():
    rng = np.random.default_rng(7)
    for _ in range(50):
        t = float(rng.uniform(0.2, 4.0))
        lam = float(rng.uniform(0.2, 3.0))
        theta = float(rng.uniform(0.0, 5.0))
        delta = float(rng.uniform(0.0, 5.0))
        forward = expected_pair_weight(t, lam, theta, delta)
        backward = expected_pair_weight(t, lam, delta, theta)
        assert math.isclose(forward, backward, rel_tol=1e-8), (t, lam, theta, delta)


@settings(max_examples=80, deadline=None)
@given(
    t=st.floats(0.01, 10.0),
    lam=st.floats(0.01, 5.0),
    beta=st.floats(0.0, 10.0),
)
def test_single_weight_bounds(t, lam, beta):
    value = expected_small_weight(t, lam, beta)
    assert 0.0 <= value <= lam * t * (1.0 + 1e-12)


@settings(max_examples=80, deadline=None)
@given(
    t=st.floats(0.01, 10.0),
    lam=st.floats(0.01, 5.0),
    theta=st.floats(0.0, 10.0),
    delta=st.floats(0.0, 10.0),
)
def test_pair_weight_bounds(t, lam, theta, delta):
    value = expected_pair_weight(t, lam, theta, delta)
    assert 0.0 <= value <= (lam * t) ** 2 * (1.0 + 1e-12)


@settings(max_examples=40, deadline=None)
@given(
    t=st.floats(0.1, 5.0),
    lam=st.floats(0.1, 3.0),
    beta=st.floats(0.01, 8.0),
)
def test_single_weight_decreases_in_decay(t, lam, beta):
    lighter = expected_small_weight(t, lam, beta)
    heavier = expected_small_weight(t, lam, beta * 1.5)
    assert heavier <= lighter * (1.0 + 1e-12)


def test_tiny_exponent_regime_stays_accurate():
    # (decay + lam) * t near zero cancels badly in the explicit formulas,
    # so that corner must reroute to quadrature and stay near the limit.
    t, lam, beta = 1e-4, 1e-3, 1e-3
    value = expected_pair_weight(t, lam, beta, beta)
    assert math.isclose(value, (lam * t) ** 2, rel_tol=1e-3)
    assert value > 0.0


# ---------------------------------------------------------------------------
# Growth limits
# ---------------------------------------------------------------------------


def test_single_weight_growth_matches_large_horizon():
    lam, beta = 1.2, 0.7
    t = 400.0
    ratio = expected_small_weight(t, lam, beta) / t
    assert math.isclose(ratio, small_weight_growth(lam, beta), rel_tol=2e-3)
    assert math.isclose(small_weight_growth(lam, beta), lam**2 / (beta + lam), rel_tol=1e-12)


def test_pair_weight_growth_matches_large_horizon():
    lam, theta, delta = 1.2, 0.7, 0.4
    intercept, slope = pair_weight_growth(lam, theta, delta)
    t_hi, t_lo = 400.0, 320.0
    ratio_hi = expected_pair_weight(t_hi, lam, theta, delta) / t_hi
    ratio_lo = expected_pair_weight(t_lo, lam, theta, delta) / t_lo
    # Fit the affine growth of the ratio from two large horizons.
    fitted_slope = (ratio_hi - ratio_lo) / (t_hi - t_lo)
    fitted_intercept = ratio_hi - fitted_slope * t_hi
    assert math.isclose(fitted_slope, slope, rel_tol=1e-4)
    assert math.isclose(fitted_intercept, intercept, rel_tol=2e-2)


def test_validation_rejects_bad_arguments():
    with pytest.raises(ValueError):
        expected_small_weight(-1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        expected_small_weight(1.0, -1.0, 1.0)
    with pytest.raises(ValueError):
        expected_small_weight(1.0, 1.0, -1.0)
    with pytest.raises(ValueError):
        expected_pair_weight(1.0, 1.0, 1.0, -1.0)
