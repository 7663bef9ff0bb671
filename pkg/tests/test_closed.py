"""Closed-form moments: reductions, mixtures, cross-checks, asymptotics."""

from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from osclaims import (
    Boudreault,
    Degenerate,
    Exponential,
    FiniteAtoms,
    GammaStructure,
    Independent,
    PointMass,
    mean_closed,
    mean_closed_homogeneous,
    mean_rate_limit,
    second_moment_closed,
    second_moment_parts,
    second_rate_limits,
    variance_closed,
    variance_linear_limit,
    variance_quadratic_limit,
)

BENCH_DEP = Boudreault(1.0, Exponential(10.0), Exponential(1.0))

# Cross-validated reference values: the quadrature engines and the seeded
# Monte Carlo oracle in this suite reproduce them independently.
BENCH_MEAN_T2 = 8.79121018749965
BENCH_SECOND_T2 = 208.90108284375404
GAMMA21_MEAN_T1 = 5.6495641916862365
GAMMA21_SECOND_T1 = 115.53967246175128


# ---------------------------------------------------------------------------
# Exact reductions
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("rate", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("t", [0.5, 1.0, 2.0, 5.0])
def test_zero_decay_collapses_to_compound_poisson(rate, t):
    law = Exponential(1.3)
    dep = Boudreault(0.0, Exponential(10.0), law)
    structure = Degenerate(rate)
    mean = mean_closed(t, structure, dep)
    report = variance_closed(t, structure, dep)
    assert math.isclose(mean / t, law.moment(1) * rate, rel_tol=1e-12)
    assert math.isclose(report.variance / t, law.moment(2) * rate, rel_tol=1e-12)


def test_independent_severities_give_compound_mixed_poisson():
    structure = GammaStructure(shape=2.0, rate=1.0)
    law = Exponential(2.0)
    t = 1.5
    mean = mean_closed(t, structure, Independent(law))
    assert math.isclose(mean, law.moment(1) * structure.mean * t, rel_tol=1e-12)
    report = variance_closed(t, structure, Independent(law))
    # Var[S] = E[Lam] t E[Y^2] + Var[Lam] t^2 E[Y]^2 for independent claims.
    expected = (
        structure.mean * t * law.moment(2)
        + structure.variance * t * t * law.moment(1) ** 2
    )
    assert math.isclose(report.variance, expected, rel_tol=1e-11)


def test_zero_horizon_is_zero():
    report = variance_closed(0.0, Degenerate(1.0), BENCH_DEP)
    assert report.mean == 0.0
    assert report.second_moment == 0.0
    assert report.variance == 0.0


def test_negative_horizon_rejected():
    with pytest.raises(ValueError):
        mean_closed(-1.0, Degenerate(1.0), BENCH_DEP)


def test_huge_decay_saturates_to_large_claims_only():
    lam, t = 1.0, 2.0
    dep = Boudreault(1e7, Exponential(10.0), Exponential(1.0))
    mean = mean_closed(t, Degenerate(lam), dep)
    assert math.isclose(mean, 10.0 * lam * t, rel_tol=1e-5)


# ---------------------------------------------------------------------------
# Reference values and independent re-derivations
# ---------------------------------------------------------------------------


def test_benchmark_reference_values():
    report = variance_closed(2.0, Degenerate(1.0), BENCH_DEP)
    assert math.isclose(report.mean, BENCH_MEAN_T2, rel_tol=1e-12)
    assert math.isclose(report.second_moment, BENCH_SECOND_T2, rel_tol=1e-12)
    gamma = variance_closed(1.0, GammaStructure(2.0, 1.0), BENCH_DEP)
    assert math.isclose(gamma.mean, GAMMA21_MEAN_T1, rel_tol=1e-12)
    assert math.isclose(gamma.second_moment, GAMMA21_SECOND_T1, rel_tol=1e-12)


@pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("beta", [0.25, 1.0, 3.0])
def test_mean_agrees_with_direct_gap_quadrature(t, lam, beta):
    dep = Boudreault(beta, Exponential(10.0), Exponential(1.0))
    formula = mean_closed(t, Degenerate(lam), dep)
    quadrature = mean_closed_homogeneous(t, lam, dep)
    assert math.isclose(formula, quadrature, rel_tol=1e-9)


def test_report_is_internally_consistent():
    report = variance_closed(2.0, Degenerate(1.0), BENCH_DEP)
    assert math.isclose(
        report.variance, report.second_moment - report.mean**2, rel_tol=1e-12
    )
    assert math.isclose(report.mean, sum(report.mean_parts.values()), rel_tol=1e-12)
    assert math.isclose(
        report.second_moment, sum(report.second_moment_parts.values()), rel_tol=1e-12
    )
    parts = second_moment_parts(2.0, Degenerate(1.0), BENCH_DEP)
    assert math.isclose(second_moment_closed(2.0, Degenerate(1.0), BENCH_DEP),
                        sum(parts.values()), rel_tol=1e-12)


def test_moments_are_mixtures_over_the_rate():
    # Mean and raw second moment are linear in the mixing law, so a
    # two-atom structure must equal the matching convex combination of
    # degenerate runs.
    t = 1.5
    atoms = FiniteAtoms([0.8, 2.5], [0.3, 0.7])
    mean_mix = mean_closed(t, atoms, BENCH_DEP)
    mean_split = 0.3 * mean_closed(t, Degenerate(0.8), BENCH_DEP) + 0.7 * mean_closed(
        t, Degenerate(2.5), BENCH_DEP
    )
    assert math.isclose(mean_mix, mean_split, rel_tol=1e-12)
    second_mix = second_moment_closed(t, atoms, BENCH_DEP)
    second_split = 0.3 * second_moment_closed(
        t, Degenerate(0.8), BENCH_DEP
    ) + 0.7 * second_moment_closed(t, Degenerate(2.5), BENCH_DEP)
    assert math.isclose(second_mix, second_split, rel_tol=1e-12)


def test_mean_grows_with_horizon():
    values = [mean_closed(t, Degenerate(1.0), BENCH_DEP) for t in (0.5, 1.0, 2.0, 4.0)]
    assert all(b > a for a, b in zip(values, values[1:]))


@settings(max_examples=40, deadline=None)
@given(
    t=st.floats(0.05, 5.0),
    lam=st.floats(0.05, 4.0),
    beta=st.floats(0.0, 6.0),
    m_large=st.floats(0.2, 20.0),
    m_small=st.floats(0.2, 20.0),
)
def test_variance_is_nonnegative(t, lam, beta, m_large, m_small):
    dep = Boudreault(beta, Exponential(m_large), Exponential(m_small))
    report = variance_closed(t, Degenerate(lam), dep)
    assert report.variance >= -1e-9 * report.second_moment


@settings(max_examples=30, deadline=None)
@given(t=st.floats(0.05, 5.0), lam=st.floats(0.05, 4.0), beta=st.floats(0.0, 6.0))
def test_mean_lies_between_pure_regime_means(t, lam, beta):
    dep = Boudreault(beta, Exponential(10.0), Exponential(1.0))
    mean = mean_closed(t, Degenerate(lam), dep)
    low = 1.0 * lam * t
    high = 10.0 * lam * t
    assert low * (1.0 - 1e-12) <= mean <= high * (1.0 + 1e-12)


# ---------------------------------------------------------------------------
# Large-horizon asymptotics
# ---------------------------------------------------------------------------


def test_mean_rate_limit_matches_large_horizon():
    structure = Degenerate(1.0)
    limit = mean_rate_limit(structure, BENCH_DEP)
    t = 500.0
    assert math.isclose(mean_closed(t, structure, BENCH_DEP) / t, limit, rel_tol=1e-2)


def test_second_rate_limits_fit_the_growth():
    structure = Degenerate(1.0)
    intercept, slope = second_rate_limits(structure, BENCH_DEP)
    t_hi, t_lo = 500.0, 400.0
    ratio_hi = second_moment_closed(t_hi, structure, BENCH_DEP) / t_hi
    ratio_lo = second_moment_closed(t_lo, structure, BENCH_DEP) / t_lo
    fitted_slope = (ratio_hi - ratio_lo) / (t_hi - t_lo)
    assert math.isclose(fitted_slope, slope, rel_tol=1e-3)
    assert math.isclose(ratio_hi - fitted_slope * t_hi, intercept, rel_tol=2e-2)


def test_quadratic_variance_limit_vanishes_for_degenerate_rates():
    assert abs(variance_quadratic_limit(Degenerate(2.0), BENCH_DEP)) < 1e-12


def test_quadratic_variance_limit_for_random_rates():
    structure = FiniteAtoms([1.0, 3.0], [0.5, 0.5])
    dep = Independent(PointMass(1.0))
    limit = variance_quadratic_limit(structure, dep)
    # One-type claims: the quadratic growth equals E[Y]^2 Var[Lam].
    assert math.isclose(limit, 1.0 * structure.variance, rel_tol=1e-12)
    t = 500.0
    ratio = variance_closed(t, structure, dep).variance / t**2
    assert math.isclose(ratio, limit, rel_tol=1e-2)


def test_linear_variance_limit_for_one_type_claims():
    structure = Degenerate(1.5)
    law = PointMass(2.0)
    limit = variance_linear_limit(structure, law)
    assert math.isclose(limit, 4.0 * 1.5, rel_tol=1e-12)
    t = 500.0
    ratio = variance_closed(t, structure, Independent(law)).variance / t
    assert math.isclose(ratio, limit, rel_tol=1e-12)


def test_linear_variance_limit_needs_degenerate_rates():
    with pytest.raises(TypeError):
        variance_linear_limit(GammaStructure(2.0, 1.0), PointMass(1.0))
