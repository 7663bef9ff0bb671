"""Series-of-integrals engines: configs, Poisson series, engine agreement."""

from __future__ import annotations

import math

import numpy as np
import pytest

from osclaims import (
    Boudreault,
    Degenerate,
    Exponential,
    FiniteAtoms,
    GammaStructure,
    Independent,
    MixedPoisson,
    NonHomogeneousPoisson,
    NumericFailure,
    QuadratureConfig,
    TabulatedTV,
    mean_closed,
    mean_gap_integral,
    mean_os_series,
    mean_uniform_series,
    poisson_functional_expectation,
    second_moment_closed,
    second_moment_gap_integral,
    second_moment_os_series,
    second_moment_uniform_series,
    variance_closed,
)

BENCH_DEP = Boudreault(1.0, Exponential(10.0), Exponential(1.0))
FAST = QuadratureConfig(nodes_per_axis=48)


def _assert_within_bound(estimate, reference: float, scale: float | None = None) -> None:
    """The reported residual bound (plus sampling error) must cover the truth."""
    scale = abs(reference) if scale is None else scale
    allowance = estimate.residual_bound + 6.0 * estimate.mc_stderr + 1e-11 * scale
    assert abs(estimate.value - reference) <= allowance


# ---------------------------------------------------------------------------
# Configuration object
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "kwargs",
    [
        {"nodes_per_axis": 4},
        {"tail_epsilon": 0.0},
        {"tail_epsilon": 1e-2},
        {"n_cap": 5},
        {"dim_cap": 5},
        {"mc_fallback_samples": 10},
    ],
)
def test_quadrature_config_rejects_bad_values(kwargs):
    with pytest.raises(ValueError):
        QuadratureConfig(**kwargs)


def test_axis_node_policy_throttles_high_dimensions():
    config = QuadratureConfig(nodes_per_axis=64)
    assert config.axis_nodes(1) == 64
    assert config.axis_nodes(2) == 64
    assert config.axis_nodes(3) == 32
    assert config.axis_nodes(4) == 16


# ---------------------------------------------------------------------------
# Poisson series helper
# ---------------------------------------------------------------------------


def test_poisson_functional_expectation_of_identity():
    # Truncation at count mass 1 - tail_epsilon leaves an error of that order.
    value = poisson_functional_expectation(1.0, 1.0, lambda n: float(n))
    assert math.isclose(float(value), 1.0, rel_tol=1e-8)


def test_poisson_functional_expectation_of_square():
    # E[N^2] = mu + mu^2 for a Poisson count.
    mu = 3.0
    value = poisson_functional_expectation(1.5, 2.0, lambda n: float(n) ** 2)
    assert math.isclose(float(value), mu + mu * mu, rel_tol=1e-7)


def test_poisson_functional_expectation_shifted_quadratic():
    # E[(N+2)(N+1)] = (mu+2)^2 - 2.
    mu = 1.0
    value = poisson_functional_expectation(1.0, 1.0, lambda n: (n + 2.0) * (n + 1.0))
    assert math.isclose(float(value), (mu + 2.0) ** 2 - 2.0, rel_tol=1e-7)


def test_poisson_functional_expectation_sharpens_with_tail_epsilon():
    exact = 3.0 + 9.0
    loose = poisson_functional_expectation(1.5, 2.0, lambda n: float(n) ** 2)
    tight = poisson_functional_expectation(
        1.5, 2.0, lambda n: float(n) ** 2, QuadratureConfig(tail_epsilon=1e-14, n_cap=120)
    )
    assert abs(float(tight) - exact) < abs(float(loose) - exact)
    assert math.isclose(float(tight), exact, rel_tol=1e-11)


def test_poisson_functional_expectation_zero_rate_duration():
    value = poisson_functional_expectation(2.0, 0.0, lambda n: n + 7.0)
    assert float(value) == 7.0


def test_poisson_functional_expectation_respects_cap():
    config = QuadratureConfig(n_cap=12)
    with pytest.raises(NumericFailure):
        poisson_functional_expectation(40.0, 2.0, lambda n: float(n), config)


def test_poisson_functional_expectation_validates_inputs():
    with pytest.raises(ValueError):
        poisson_functional_expectation(-1.0, 1.0, lambda n: float(n))
    with pytest.raises(ValueError):
        poisson_functional_expectation(1.0, -1.0, lambda n: float(n))


# ---------------------------------------------------------------------------
# Mean engines
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "structure",
    [Degenerate(1.0), Degenerate(2.0), FiniteAtoms([0.8, 2.5], [0.3, 0.7])],
    ids=["deg1", "deg2", "atoms"],
)
def test_uniform_mean_series_matches_closed_form(structure):
    t = 1.5
    estimate = mean_uniform_series(t, structure, BENCH_DEP, FAST)
    reference = mean_closed(t, structure, BENCH_DEP)
    assert math.isclose(estimate.value, reference, rel_tol=1e-6)
    _assert_within_bound(estimate, reference)


def test_gap_mean_integral_matches_closed_form():
    for structure in (Degenerate(1.0), GammaStructure(2.0, 1.0)):
        t = 2.0
        estimate = mean_gap_integral(t, structure, BENCH_DEP, FAST)
        reference = mean_closed(t, structure, BENCH_DEP)
        assert math.isclose(estimate.value, reference, rel_tol=1e-8)
        _assert_within_bound(estimate, reference)


def test_general_mean_series_reduces_to_uniform_engine():
    t = 1.0
    process = MixedPoisson(Degenerate(2.0))
    general = mean_os_series(t, process, BENCH_DEP, FAST)
    uniform = mean_uniform_series(t, Degenerate(2.0), BENCH_DEP, FAST)
    assert math.isclose(general.value, uniform.value, rel_tol=1e-10)


def test_linear_intensity_equals_constant_rate():
    # Lambda(x) = c x gives the same process as a rate-c Poisson.
    c, t = 1.5, 1.2
    process = NonHomogeneousPoisson(
        cumulative_intensity=lambda x: c * np.asarray(x, dtype=float),
        intensity=lambda x: np.full_like(np.asarray(x, dtype=float), c),
    )
    general = mean_os_series(t, process, BENCH_DEP, FAST)
    uniform = mean_uniform_series(t, Degenerate(c), BENCH_DEP, FAST)
    assert math.isclose(general.value, uniform.value, rel_tol=1e-12)


def test_time_dependent_table_matches_gap_only_dependence():
    # A (prev_time, gap) table that ignores prev_time must reproduce the
    # gap-only engines.
    dep_tv = TabulatedTV(
        mean_fn=lambda gap, prev: BENCH_DEP.conditional_mean(gap),
        second_moment_fn=lambda gap, prev: BENCH_DEP.conditional_second_moment(gap),
    )
    t = 1.0
    structure = Degenerate(2.0)
    via_tv = mean_uniform_series(t, structure, dep_tv, FAST)
    reference = mean_closed(t, structure, BENCH_DEP)
    assert math.isclose(via_tv.value, reference, rel_tol=1e-6)


def test_gap_engines_reject_time_dependent_tables():
    dep_tv = TabulatedTV(
        mean_fn=lambda gap, prev: np.ones_like(np.asarray(gap, dtype=float)),
        second_moment_fn=lambda gap, prev: 2.0 * np.ones_like(np.asarray(gap, dtype=float)),
    )
    with pytest.raises(TypeError):
        mean_gap_integral(1.0, Degenerate(1.0), dep_tv, FAST)
    with pytest.raises(TypeError):
        second_moment_gap_integral(1.0, Degenerate(1.0), dep_tv, FAST)


def test_zero_horizon_series_is_zero():
    estimate = mean_uniform_series(0.0, Degenerate(1.0), BENCH_DEP, FAST)
    assert estimate.value == 0.0
    assert estimate.residual_bound == 0.0


# ---------------------------------------------------------------------------
# Second-moment engines
# ---------------------------------------------------------------------------


def test_uniform_second_moment_matches_closed_form_tensor_path():
    # Degenerate(2) at t = 1 keeps every count below the 4-D tensor limit.
    t, structure = 1.0, Degenerate(2.0)
    estimate = second_moment_uniform_series(t, structure, BENCH_DEP, FAST)
    reference = second_moment_closed(t, structure, BENCH_DEP)
    assert math.isclose(estimate.value, reference, rel_tol=1e-7)
    _assert_within_bound(estimate, reference)


def test_uniform_second_moment_qmc_path_agrees():
    # dim_cap = 3 forces the scrambled-net fallback for every pair family.
    t, structure = 1.0, Degenerate(2.0)
    tensor = second_moment_uniform_series(t, structure, BENCH_DEP, QuadratureConfig(dim_cap=4))
    sampled = second_moment_uniform_series(t, structure, BENCH_DEP, QuadratureConfig(dim_cap=3))
    assert sampled.mc_stderr > 0.0
    assert abs(sampled.value - tensor.value) <= 6.0 * sampled.mc_stderr
    reference = second_moment_closed(t, structure, BENCH_DEP)
    assert math.isclose(sampled.value, reference, rel_tol=1e-4)


def test_gap_second_moment_matches_closed_form():
    for structure in (Degenerate(1.0), FiniteAtoms([0.8, 2.5], [0.3, 0.7])):
        t = 2.0
        estimate = second_moment_gap_integral(t, structure, BENCH_DEP, FAST)
        reference = second_moment_closed(t, structure, BENCH_DEP)
        assert math.isclose(estimate.value, reference, rel_tol=1e-8)
        _assert_within_bound(estimate, reference)


def test_general_second_moment_reduces_to_uniform_engine():
    t = 1.0
    process = MixedPoisson(Degenerate(2.0))
    general = second_moment_os_series(t, process, BENCH_DEP, FAST)
    uniform = second_moment_uniform_series(t, Degenerate(2.0), BENCH_DEP, FAST)
    assert math.isclose(general.value, uniform.value, rel_tol=1e-8)


def test_variance_from_series_is_nonnegative():
    t, structure = 1.0, GammaStructure(2.0, 1.0)
    mean_est = mean_gap_integral(t, structure, BENCH_DEP, FAST)
    second_est = second_moment_gap_integral(t, structure, BENCH_DEP, FAST)
    variance = second_est.value - mean_est.value**2
    reference = variance_closed(t, structure, BENCH_DEP).variance
    assert variance >= 0.0
    assert math.isclose(variance, reference, rel_tol=1e-7)


# ---------------------------------------------------------------------------
# Node convergence
# ---------------------------------------------------------------------------


def test_node_refinement_converges_at_second_order_or_better():
    # A stiff decay makes the kernel resolution-limited at 32 nodes, so
    # successive refinements must shrink by at least the second-order factor.
    dep = Boudreault(1000.0, Exponential(10.0), Exponential(1.0))
    structure = Degenerate(2.0)
    values = {
        nodes: mean_uniform_series(1.0, structure, dep, QuadratureConfig(nodes_per_axis=nodes)).value
        for nodes in (32, 64, 128)
    }
    first = abs(values[32] - values[64])
    second = abs(values[64] - values[128])
    assert second < first
    assert first / second >= 4.0


# ---------------------------------------------------------------------------
# Order-statistic densities (spot checks; the full sweep runs in acceptance)
# ---------------------------------------------------------------------------


def test_first_arrival_density_formula():
    from osclaims import OrderStatDensity

    process = MixedPoisson(Degenerate(1.0))
    t, n = 2.0, 5
    density = OrderStatDensity("first", n, process, t)
    x = np.array([0.1, 0.5, 1.5])
    expected = n * (1.0 - x / t) ** (n - 1) / t
    np.testing.assert_allclose(density.pdf(x), expected, rtol=1e-12)
    assert density.pdf(np.array([-0.1])) == 0.0
    assert density.pdf(np.array([2.1])) == 0.0


def test_density_region_mask_enforces_ordering():
    from osclaims import OrderStatDensity

    process = MixedPoisson(Degenerate(1.0))
    density = OrderStatDensity("consecutive-pair", 4, process, 1.0, i=3)
    assert density.pdf(0.7, 0.2) == 0.0  # x > y is outside the region
    assert density.pdf(0.2, 0.7) > 0.0


def test_density_index_validation():
    from osclaims import OrderStatDensity

    process = MixedPoisson(Degenerate(1.0))
    with pytest.raises(ValueError):
        OrderStatDensity("consecutive-pair", 3, process, 1.0, i=1)
    with pytest.raises(ValueError):
        OrderStatDensity("double-pair", 5, process, 1.0, i=2, j=3)
    with pytest.raises(ValueError):
        OrderStatDensity("unknown-kind", 3, process, 1.0)


def test_density_normalization_spot_checks():
    from osclaims import OrderStatDensity

    process = MixedPoisson(GammaStructure(2.0, 1.0))
    cases = [
        OrderStatDensity("first", 6, process, 1.5),
        OrderStatDensity("consecutive-pair", 6, process, 1.5, i=4),
        OrderStatDensity("first-plus-pair", 7, process, 1.5, j=5),
        OrderStatDensity("triple-consecutive", 7, process, 1.5, i=4),
        OrderStatDensity("double-pair", 8, process, 1.5, i=3, j=6),
    ]
    for density in cases:
        assert math.isclose(density.normalization(), 1.0, rel_tol=1e-8), density.kind
