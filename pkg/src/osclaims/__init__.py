"""Moments of aggregate claims under order-statistic arrival processes.

The package computes the mean, second moment, and variance of the
aggregate claim amount at a horizon ``t`` when arrivals form an
order-statistic point process (mixed Poisson or non-homogeneous Poisson)
and each claim size may depend on the waiting time that preceded it.

Three engine families cross-validate each other:

``closed``
    Exact formulas for mixing-law processes with two-regime exponential
    dependence (:mod:`osclaims.closed`, :mod:`osclaims.weights`).
``quadrature``
    Truncated count series over order-statistic integrals, with explicit
    residual bounds (:mod:`osclaims.quadrature`).
``simulate``
    Seeded, backend-independent Monte Carlo (:mod:`osclaims.simulate`).

The CLI front end lives in :mod:`osclaims.cli` (``python -m osclaims``).
"""

from .closed import (
    MomentReport,
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
from .errors import (
    ConfigError,
    DegenerateProcessError,
    InfiniteMomentError,
    NumericFailure,
    OsclaimsError,
    ValidationFailure,
)
from .model import (
    Boudreault,
    Degenerate,
    DependenceModel,
    Exponential,
    FiniteAtoms,
    GammaSeverity,
    GammaStructure,
    HomogeneousPoisson,
    Independent,
    Lognormal,
    MixedPoisson,
    NonHomogeneousPoisson,
    Pareto,
    PointMass,
    ProcessSpec,
    SamplePath,
    SeverityLaw,
    StructureDistribution,
    TabulatedDensity,
    TabulatedTV,
    TabulatedV,
    require_finite_moment,
    structure_integrate,
)
from .quadrature import (
    DEFAULT_CONFIG,
    OrderStatDensity,
    QuadratureConfig,
    SeriesEstimate,
    mean_gap_integral,
    mean_os_series,
    mean_uniform_series,
    poisson_functional_expectation,
    second_moment_gap_integral,
    second_moment_os_series,
    second_moment_uniform_series,
)
from .simulate import (
    CounterStream,
    MomentEstimate,
    SimulationPlan,
    active_backend,
    estimate_moments,
    sample_arrivals,
    sample_count,
    sample_path,
)
from .weights import (
    expected_large_weight,
    expected_pair_weight,
    expected_small_weight,
    pair_weight_growth,
    small_weight_growth,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # model
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
    "require_finite_moment",
    "structure_integrate",
    # errors
    "OsclaimsError",
    "ConfigError",
    "NumericFailure",
    "InfiniteMomentError",
    "DegenerateProcessError",
    "ValidationFailure",
    # closed forms
    "MomentReport",
    "mean_closed",
    "mean_closed_homogeneous",
    "second_moment_parts",
    "second_moment_closed",
    "variance_closed",
    "mean_rate_limit",
    "second_rate_limits",
    "variance_quadratic_limit",
    "variance_linear_limit",
    # special forms
    "expected_small_weight",
    "expected_large_weight",
    "expected_pair_weight",
    "small_weight_growth",
    "pair_weight_growth",
    # quadrature
    "QuadratureConfig",
    "DEFAULT_CONFIG",
    "SeriesEstimate",
    "OrderStatDensity",
    "poisson_functional_expectation",
    "mean_os_series",
    "mean_uniform_series",
    "mean_gap_integral",
    "second_moment_os_series",
    "second_moment_uniform_series",
    "second_moment_gap_integral",
    # simulation
    "SimulationPlan",
    "MomentEstimate",
    "CounterStream",
    "active_backend",
    "sample_count",
    "sample_arrivals",
    "sample_path",
    "estimate_moments",
]
