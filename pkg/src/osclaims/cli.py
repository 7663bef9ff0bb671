"""Command line front end: config files in, moment reports out.

The interface is file-centric.  A flat key/value config names the model
(arrival process, dependence structure, severity laws) and the computation
(horizon grid, engine selection, numeric overrides); the tool writes a CSV
or JSON report and prints a single summary line on stdout.

Subcommands
-----------
``mean``, ``second-moment``, ``variance``
    Evaluate one quantity over the horizon grid with the configured
    engine(s).
``simulate``
    Monte Carlo estimates of all three quantities with standard errors.
``validate``
    Run every engine and compare them pairwise; exit 4 if any gate fails.
``asymptote``
    Compare finite-horizon ratios against their large-horizon limits.

Config format: one ``key = value`` pair per line, ``#`` comments, dotted
keys with explicit variant tags, for example::

    process.kind = mixed_poisson_gamma
    process.shape = 2.0
    process.rate = 1.0
    dependence.kind = boudreault
    dependence.decay = 1.0
    severity.large.kind = exponential
    severity.large.mean = 10.0
    severity.small.kind = exponential
    severity.small.mean = 1.0
    computation.t = 2.0
    computation.engine = all
    output.format = csv

Unknown keys are rejected, every numeric field is range-checked, and any
rejection happens before an engine runs.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .closed import (
    mean_closed,
    mean_rate_limit,
    second_moment_closed,
    variance_closed,
    variance_linear_limit,
    variance_quadratic_limit,
)
from .errors import (
    ConfigError,
    DegenerateProcessError,
    InfiniteMomentError,
    NumericFailure,
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
    Independent,
    Lognormal,
    MixedPoisson,
    NonHomogeneousPoisson,
    Pareto,
    PointMass,
    ProcessSpec,
    SeverityLaw,
    StructureDistribution,
    require_finite_moment,
)
from .quadrature import (
    QuadratureConfig,
    SeriesEstimate,
    mean_gap_integral,
    mean_os_series,
    second_moment_gap_integral,
    second_moment_os_series,
)
from .simulate import MomentEstimate, SimulationPlan, estimate_moments

__all__ = [
    "RunConfig",
    "ReportRow",
    "GateResult",
    "ValidationReport",
    "load_run_config",
    "emit_report",
    "format_csv",
    "format_json",
    "read_json_report",
    "run",
    "main",
]

_ENGINES = ("closed", "quadrature", "simulate")
_ENGINE_CHOICES = _ENGINES + ("all",)
_FORMATS = ("csv", "json")
_COLUMNS = (
    "t",
    "engine",
    "quantity",
    "value",
    "stderr",
    "residual_bound",
    "seed",
    "replicates",
)

# Cross-engine gates used by `validate`.
_MEAN_RTOL = 1e-6
_SECOND_RTOL = 1e-5
_VARIANCE_RTOL = 1e-5
_Z_LIMIT = 4.0


# ---------------------------------------------------------------------------
# Config file parsing
# ---------------------------------------------------------------------------


_REQUIRED = object()


def _parse_config_text(text: str, source: str) -> dict[str, str]:
    """Parse ``key = value`` lines into an ordered mapping.

    Blank lines and ``#`` comments are skipped; duplicate keys are an
    error because silently-last-wins configs are a debugging trap.
    """
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip().lower()
        value = value.strip()
        if not key or not value:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        if key in entries:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key}")
        entries[key] = value
    return entries


class _KeyBag:
    """Tracks which config keys were consumed so leftovers can be rejected."""

    def __init__(self, entries: dict[str, str], source: str):
        self._entries = dict(entries)
        self._source = source

    def take(self, key: str, default: object = _REQUIRED) -> str:
        if key in self._entries:
            return self._entries.pop(key)
        if default is _REQUIRED:
            raise ConfigError(f"{self._source}: missing required key {key}")
        return default  # type: ignore[return-value]

    def take_choice(self, key: str, choices: Sequence[str], default: object = _REQUIRED) -> str:
        raw = self.take(key, default)
        if raw is default and key not in self._entries:
            return raw  # type: ignore[return-value]
        value = str(raw).lower()
        if value not in choices:
            raise ConfigError(
                f"{self._source}: {key} must be one of {', '.join(choices)}, got {raw}"
            )
        return value

    def take_float(
        self,
        key: str,
        default: object = _REQUIRED,
        minimum: float | None = None,
        exclusive_minimum: float | None = None,
    ) -> float:
        raw = self.take(key, default)
        if not isinstance(raw, str):
            return raw  # type: ignore[return-value]
        try:
            value = float(raw)
        except ValueError:
            raise ConfigError(f"{self._source}: {key} is not a number: {raw!r}") from None
        if not math.isfinite(value):
            raise ConfigError(f"{self._source}: {key} must be finite, got {raw}")
        if minimum is not None and value < minimum:
            raise ConfigError(f"{self._source}: {key} must be >= {minimum}, got {raw}")
        if exclusive_minimum is not None and value <= exclusive_minimum:
            raise ConfigError(f"{self._source}: {key} must be > {exclusive_minimum}, got {raw}")
        return value

    def take_int(
        self, key: str, default: object = _REQUIRED, minimum: int | None = None
    ) -> int:
        raw = self.take(key, default)
        if not isinstance(raw, str):
            return raw  # type: ignore[return-value]
        try:
            value = int(raw)
        except ValueError:
            raise ConfigError(f"{self._source}: {key} is not an integer: {raw!r}") from None
        if minimum is not None and value < minimum:
            raise ConfigError(f"{self._source}: {key} must be >= {minimum}, got {raw}")
        return value

    def take_float_list(self, key: str) -> tuple[float, ...]:
        raw = self.take(key)
        try:
            values = tuple(float(part) for part in raw.split(","))
        except ValueError:
            raise ConfigError(
                f"{self._source}: {key} must be a comma-separated number list, got {raw!r}"
            ) from None
        if not values:
            raise ConfigError(f"{self._source}: {key} must not be empty")
        return values

    def has_prefix(self, prefix: str) -> bool:
        return any(k == prefix or k.startswith(prefix + ".") for k in self._entries)

    def finish(self) -> None:
        if self._entries:
            stray = ", ".join(sorted(self._entries))
            raise ConfigError(f"{self._source}: unknown key(s): {stray}")


def _checked(source: str, key_prefix: str, build: Callable[[], object]) -> object:
    """Run a model constructor, renaming its ValueError to the config key."""
    try:
        return build()
    except ValueError as exc:
        raise ConfigError(f"{source}: {key_prefix}: {exc}") from exc


# ---------------------------------------------------------------------------
# Model construction
# ---------------------------------------------------------------------------


_SEVERITY_KINDS = ("exponential", "gamma", "lognormal", "pareto", "point_mass")


def _build_severity(bag: _KeyBag, source: str, prefix: str) -> SeverityLaw:
    kind = bag.take_choice(f"{prefix}.kind", _SEVERITY_KINDS)
    if kind == "exponential":
        law = _checked(source, prefix, lambda: Exponential(bag.take_float(f"{prefix}.mean")))
    elif kind == "gamma":
        law = _checked(
            source,
            prefix,
            lambda: GammaSeverity(
                shape=bag.take_float(f"{prefix}.shape"),
                scale=bag.take_float(f"{prefix}.scale"),
            ),
        )
    elif kind == "lognormal":
        law = _checked(
            source,
            prefix,
            lambda: Lognormal(
                mu=bag.take_float(f"{prefix}.log_mean"),
                sigma=bag.take_float(f"{prefix}.log_sd"),
            ),
        )
    elif kind == "pareto":
        law = _checked(
            source,
            prefix,
            lambda: Pareto(
                shape=bag.take_float(f"{prefix}.shape"),
                scale=bag.take_float(f"{prefix}.scale"),
            ),
        )
    else:
        law = _checked(source, prefix, lambda: PointMass(bag.take_float(f"{prefix}.value")))
    # Every engine here consumes two severity moments; reject early.
    try:
        require_finite_moment(law, 2)  # type: ignore[arg-type]
    except InfiniteMomentError as exc:
        raise ConfigError(f"{source}: {prefix}: {exc}") from exc
    return law  # type: ignore[return-value]


_PROCESS_KINDS = ("poisson", "mixed_poisson_gamma", "mixed_poisson_atoms", "nhpp_power")


def _build_process(bag: _KeyBag, source: str) -> ProcessSpec:
    kind = bag.take_choice("process.kind", _PROCESS_KINDS)
    if kind == "poisson":
        rate = bag.take_float("process.rate", exclusive_minimum=0.0)
        return MixedPoisson(_checked(source, "process.rate", lambda: Degenerate(rate)))
    if kind == "mixed_poisson_gamma":
        shape = bag.take_float("process.shape", exclusive_minimum=0.0)
        rate = bag.take_float("process.rate", exclusive_minimum=0.0)
        return MixedPoisson(
            _checked(source, "process", lambda: GammaStructure(shape=shape, rate=rate))
        )
    if kind == "mixed_poisson_atoms":
        rates = bag.take_float_list("process.rates")
        probs = bag.take_float_list("process.probs")
        return MixedPoisson(
            _checked(source, "process.rates/process.probs", lambda: FiniteAtoms(rates, probs))
        )
    scale = bag.take_float("process.scale", exclusive_minimum=0.0)
    power = bag.take_float("process.power", exclusive_minimum=0.0)

    def cumulative(x):
        return scale * np.asarray(x, dtype=float) ** power

    def intensity(x):
        return scale * power * np.asarray(x, dtype=float) ** (power - 1.0)

    return NonHomogeneousPoisson(cumulative_intensity=cumulative, intensity=intensity)


def _build_dependence(bag: _KeyBag, source: str) -> DependenceModel:
    kind = bag.take_choice("dependence.kind", ("boudreault", "independent"))
    if kind == "boudreault":
        decay = bag.take_float("dependence.decay", minimum=0.0)
        large = _build_severity(bag, source, "severity.large")
        small = _build_severity(bag, source, "severity.small")
        return _checked(source, "dependence", lambda: Boudreault(decay, large, small))
    return Independent(_build_severity(bag, source, "severity"))


def _build_grid(bag: _KeyBag, source: str) -> tuple[float, ...]:
    has_single = "computation.t" in bag._entries
    has_grid = bag.has_prefix("computation.grid")
    if has_single and has_grid:
        raise ConfigError(f"{source}: computation.t conflicts with computation.grid.*")
    if has_single:
        return (bag.take_float("computation.t", minimum=0.0),)
    if not has_grid:
        raise ConfigError(f"{source}: missing required key computation.t (or computation.grid.*)")
    start = bag.take_float("computation.grid.start", minimum=0.0)
    stop = bag.take_float("computation.grid.stop", exclusive_minimum=0.0)
    count = bag.take_int("computation.grid.count", minimum=2)
    spacing = bag.take_choice("computation.grid.spacing", ("linear", "log"), default="linear")
    if stop <= start:
        raise ConfigError(f"{source}: computation.grid.stop must exceed computation.grid.start")
    if spacing == "log":
        if start <= 0.0:
            raise ConfigError(f"{source}: computation.grid.start must be > 0 for log spacing")
        values = np.geomspace(start, stop, count)
    else:
        values = np.linspace(start, stop, count)
    return tuple(float(v) for v in values)


def _build_quadrature(bag: _KeyBag, source: str) -> QuadratureConfig:
    defaults = QuadratureConfig()
    try:
        return QuadratureConfig(
            nodes_per_axis=bag.take_int("quadrature.nodes_per_axis", defaults.nodes_per_axis),
            tail_epsilon=bag.take_float("quadrature.tail_epsilon", defaults.tail_epsilon),
            n_cap=bag.take_int("quadrature.n_cap", defaults.n_cap),
            dim_cap=bag.take_int("quadrature.dim_cap", defaults.dim_cap),
            mc_fallback_samples=bag.take_int(
                "quadrature.mc_fallback_samples", defaults.mc_fallback_samples
            ),
        )
    except ValueError as exc:
        raise ConfigError(f"{source}: quadrature.*: {exc}") from exc


@dataclass(frozen=True)
class RunConfig:
    """A fully validated run: model, computation, and output settings."""

    process: ProcessSpec
    dependence: DependenceModel
    grid: tuple[float, ...]
    engine: str
    quadrature: QuadratureConfig
    replicates: int
    seed: int
    out_format: str
    out_path: str | None
    precision: int

    @property
    def structure(self) -> StructureDistribution | None:
        if isinstance(self.process, MixedPoisson):
            return self.process.structure
        return None

    def resolved_path(self) -> str:
        if self.out_path is not None:
            return self.out_path
        return f"report.{self.out_format}"


def load_run_config(
    path: str,
    engine: str | None = None,
    seed: int | None = None,
    out_format: str | None = None,
    out_path: str | None = None,
) -> RunConfig:
    """Read and validate a config file; optional arguments override it.

    Raises :class:`ConfigError` on any unknown key, missing key, or
    out-of-range value, before any computation starts.
    """
    try:
        with open(path, "r", encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    source = path
    bag = _KeyBag(_parse_config_text(text, source), source)

    process = _build_process(bag, source)
    dependence = _build_dependence(bag, source)
    grid = _build_grid(bag, source)
    cfg_engine = bag.take_choice("computation.engine", _ENGINE_CHOICES, default="closed")
    quad = _build_quadrature(bag, source)
    replicates = bag.take_int("simulation.replicates", default=100_000, minimum=1)
    cfg_seed = bag.take_int("simulation.seed", default=0, minimum=0)
    if cfg_seed >= 2**64:
        raise ConfigError(f"{source}: simulation.seed must be < 2**64")
    cfg_format = bag.take_choice("output.format", _FORMATS, default="csv")
    cfg_path = bag.take("output.path", default=None)
    precision = bag.take_int("output.precision", default=17, minimum=2)
    if precision > 17:
        raise ConfigError(f"{source}: output.precision must be <= 17")
    bag.finish()

    if engine is not None:
        cfg_engine = engine
    if seed is not None:
        if not 0 <= seed < 2**64:
            raise ConfigError("--seed must lie in [0, 2**64)")
        cfg_seed = seed
    if out_format is not None:
        cfg_format = out_format
    if out_path is not None:
        cfg_path = out_path
    return RunConfig(
        process=process,
        dependence=dependence,
        grid=grid,
        engine=cfg_engine,
        quadrature=quad,
        replicates=replicates,
        seed=cfg_seed,
        out_format=cfg_format,
        out_path=cfg_path,
        precision=precision,
    )


# ---------------------------------------------------------------------------
# Report rows
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReportRow:
    """One report line; optional fields stay empty in CSV and absent in JSON."""

    t: float
    engine: str
    quantity: str
    value: float
    stderr: float | None = None
    residual_bound: float | None = None
    seed: int | None = None
    replicates: int | None = None

    def as_dict(self) -> dict:
        out: dict = {"t": self.t, "engine": self.engine, "quantity": self.quantity}
        out["value"] = self.value
        if self.stderr is not None:
            out["stderr"] = self.stderr
        if self.residual_bound is not None:
            out["residual_bound"] = self.residual_bound
        if self.seed is not None:
            out["seed"] = self.seed
        if self.replicates is not None:
            out["replicates"] = self.replicates
        return out


@dataclass(frozen=True)
class GateResult:
    """One pairwise cross-engine check."""

    pair: str
    quantity: str
    metric: str
    value: float
    limit: float

    @property
    def passed(self) -> bool:
        # NaN compares false, so an undefined metric fails the gate.
        return bool(self.value <= self.limit)


@dataclass(frozen=True)
class ValidationReport:
    """Cross-engine comparison: value rows plus pass/fail gates."""

    rows: tuple[ReportRow, ...]
    gates: tuple[GateResult, ...]

    @property
    def passed(self) -> bool:
        return all(gate.passed for gate in self.gates)

    def worst_gate(self) -> GateResult:
        def badness(gate: GateResult) -> float:
            if gate.passed:
                return -1.0
            ratio = gate.value / gate.limit
            # An undefined metric (NaN stderr from a 1-replicate run) is
            # the most severe failure, not an ignorable one.
            return float("inf") if math.isnan(ratio) else ratio

        return max(self.gates, key=badness)


# ---------------------------------------------------------------------------
# Engine dispatch
# ---------------------------------------------------------------------------


def _require_mixing_law(cfg: RunConfig, context: str) -> StructureDistribution:
    structure = cfg.structure
    if structure is None:
        raise ConfigError(
            f"{context} supports only mixing-law processes; "
            "process.kind = nhpp_power needs computation.engine = quadrature or simulate"
        )
    return structure


def _closed_values(cfg: RunConfig, t: float) -> dict[str, float]:
    structure = _require_mixing_law(cfg, "computation.engine = closed")
    report = variance_closed(t, structure, cfg.dependence)
    return {
        "mean": report.mean,
        "second_moment": report.second_moment,
        "variance": report.variance,
    }


def _quadrature_mean(cfg: RunConfig, t: float) -> SeriesEstimate:
    structure = cfg.structure
    if structure is None:
        return mean_os_series(t, cfg.process, cfg.dependence, cfg.quadrature)
    return mean_gap_integral(t, structure, cfg.dependence, cfg.quadrature)


def _quadrature_second(cfg: RunConfig, t: float) -> SeriesEstimate:
    structure = cfg.structure
    if structure is None:
        return second_moment_os_series(t, cfg.process, cfg.dependence, cfg.quadrature)
    return second_moment_gap_integral(t, structure, cfg.dependence, cfg.quadrature)


def _quadrature_values(cfg: RunConfig, t: float) -> dict[str, tuple[float, float | None, float]]:
    """Quantity -> (value, stderr or None, residual bound)."""
    mean_est = _quadrature_mean(cfg, t)
    second_est = _quadrature_second(cfg, t)
    variance = second_est.value - mean_est.value**2
    # First-order propagation of the additive error bounds through m2 - m1^2.
    var_residual = (
        second_est.residual_bound
        + 2.0 * abs(mean_est.value) * mean_est.residual_bound
        + mean_est.residual_bound**2
    )
    var_stderr = second_est.mc_stderr + 2.0 * abs(mean_est.value) * mean_est.mc_stderr
    return {
        "mean": (mean_est.value, _none_if_zero(mean_est.mc_stderr), mean_est.residual_bound),
        "second_moment": (
            second_est.value,
            _none_if_zero(second_est.mc_stderr),
            second_est.residual_bound,
        ),
        "variance": (variance, _none_if_zero(var_stderr), var_residual),
    }


def _simulate_values(cfg: RunConfig, t: float) -> dict[str, MomentEstimate]:
    plan = SimulationPlan(
        process=cfg.process,
        dependence=cfg.dependence,
        horizon=t,
        replicates=cfg.replicates,
        master_seed=cfg.seed,
    )
    mean_est, second_est, variance_est = estimate_moments(plan)
    return {"mean": mean_est, "second_moment": second_est, "variance": variance_est}


def _none_if_zero(value: float) -> float | None:
    return value if value > 0.0 else None


def _engine_rows(cfg: RunConfig, t: float, engines: Sequence[str], quantities: Sequence[str]):
    rows: list[ReportRow] = []
    for engine in engines:
        if engine == "closed":
            values = _closed_values(cfg, t)
            rows.extend(ReportRow(t, "closed", q, values[q]) for q in quantities)
        elif engine == "quadrature":
            values = _quadrature_values(cfg, t)
            for q in quantities:
                value, stderr, residual = values[q]
                rows.append(ReportRow(t, "quadrature", q, value, stderr, residual))
        else:
            estimates = _simulate_values(cfg, t)
            for q in quantities:
                est = estimates[q]
                rows.append(
                    ReportRow(
                        t,
                        "simulate",
                        q,
                        est.value,
                        stderr=est.stderr,
                        seed=est.seed,
                        replicates=est.replicates,
                    )
                )
    return rows


# ---------------------------------------------------------------------------
# Subcommand drivers
# ---------------------------------------------------------------------------


def _cmd_moment(cfg: RunConfig, quantity: str) -> tuple[list[ReportRow], str, int]:
    engines = _ENGINES if cfg.engine == "all" else (cfg.engine,)
    rows: list[ReportRow] = []
    for t in cfg.grid:
        rows.extend(_engine_rows(cfg, t, engines, (quantity,)))
    last_t = cfg.grid[-1]
    shown = next(r for r in rows if r.t == last_t and r.engine == engines[0])
    summary = (
        f"{quantity}: t={shown.t:g} {shown.engine}={shown.value:.10g}"
        f" ({len(rows)} row(s))"
    )
    return rows, summary, 0


def _cmd_simulate(cfg: RunConfig) -> tuple[list[ReportRow], str, int]:
    rows: list[ReportRow] = []
    for t in cfg.grid:
        rows.extend(_engine_rows(cfg, t, ("simulate",), ("mean", "second_moment", "variance")))
    mean_row = rows[-3]
    stderr = mean_row.stderr if mean_row.stderr is not None else float("nan")
    summary = (
        f"simulate: t={mean_row.t:g} mean={mean_row.value:.10g}"
        f" stderr={stderr:.3g} replicates={cfg.replicates} seed={cfg.seed}"
    )
    return rows, summary, 0


def _relative_difference(a: float, b: float) -> float:
    scale = max(abs(a), abs(b))
    if scale == 0.0:
        return 0.0
    return abs(a - b) / scale


def _z_score(estimate: MomentEstimate, reference: float) -> float:
    if estimate.stderr == 0.0:
        return 0.0 if estimate.value == reference else float("inf")
    return abs(estimate.value - reference) / estimate.stderr


_QUANTITY_RTOL = {
    "mean": _MEAN_RTOL,
    "second_moment": _SECOND_RTOL,
    "variance": _VARIANCE_RTOL,
}


def build_validation_report(cfg: RunConfig) -> ValidationReport:
    """Run all engines over the grid and compare them pairwise.

    Closed vs quadrature uses relative-difference gates; each engine vs
    Monte Carlo uses a z-score gate at ``limit = 4``.  Asymptotic-limit
    comparisons are reported at the largest horizon but are informational
    only (finite-horizon ratios need large ``t`` to approach them).
    """
    quantities = ("mean", "second_moment", "variance")
    has_closed = cfg.structure is not None
    rows: list[ReportRow] = []
    gates: list[GateResult] = []
    for t in cfg.grid:
        closed = _closed_values(cfg, t) if has_closed else None
        quad = _quadrature_values(cfg, t)
        sim = _simulate_values(cfg, t)
        if closed is not None:
            rows.extend(ReportRow(t, "closed", q, closed[q]) for q in quantities)
        for q in quantities:
            value, stderr, residual = quad[q]
            rows.append(ReportRow(t, "quadrature", q, value, stderr, residual))
        for q in quantities:
            est = sim[q]
            rows.append(
                ReportRow(
                    t,
                    "simulate",
                    q,
                    est.value,
                    stderr=est.stderr,
                    seed=est.seed,
                    replicates=est.replicates,
                )
            )
        for q in quantities:
            if closed is not None:
                diff = _relative_difference(closed[q], quad[q][0])
                gates.append(GateResult("closed|quadrature", q, "rel_diff", diff, _QUANTITY_RTOL[q]))
                rows.append(ReportRow(t, "closed|quadrature", f"{q}_rel_diff", diff))
                z_closed = _z_score(sim[q], closed[q])
                gates.append(GateResult("closed|simulate", q, "z_score", z_closed, _Z_LIMIT))
                rows.append(ReportRow(t, "closed|simulate", f"{q}_z_score", z_closed))
            z_quad = _z_score(sim[q], quad[q][0])
            gates.append(GateResult("quadrature|simulate", q, "z_score", z_quad, _Z_LIMIT))
            rows.append(ReportRow(t, "quadrature|simulate", f"{q}_z_score", z_quad))
    if has_closed:
        rows.extend(_limit_rows(cfg, gated=False))
    return ValidationReport(tuple(rows), tuple(gates))


def _cmd_validate(cfg: RunConfig) -> tuple[list[ReportRow], str, int]:
    report = build_validation_report(cfg)
    rows = list(report.rows)
    if report.passed:
        worst_diff = max(
            (g.value for g in report.gates if g.metric == "rel_diff"), default=0.0
        )
        worst_z = max(
            (g.value for g in report.gates if g.metric == "z_score"), default=0.0
        )
        summary = (
            f"validate: PASS ({len(report.gates)} gates,"
            f" worst rel diff {worst_diff:.3g}, worst |z| {worst_z:.3g})"
        )
        return rows, summary, 0
    worst = report.worst_gate()
    summary = (
        f"validate: FAIL {worst.pair} {worst.quantity} {worst.metric}"
        f" {worst.value:.6g} > {worst.limit:g}"
    )
    return rows, summary, 4


def _single_severity(dep: DependenceModel) -> SeverityLaw | None:
    if isinstance(dep, Independent):
        return dep.law
    if isinstance(dep, Boudreault) and dep.large == dep.small:
        return dep.large
    return None


def _limit_rows(cfg: RunConfig, gated: bool = True) -> list[ReportRow]:
    structure = _require_mixing_law(cfg, "asymptote")
    t_max = max(cfg.grid)
    closed = _closed_values(cfg, t_max)
    rows = [
        ReportRow(t_max, "closed", "mean_over_t", closed["mean"] / t_max),
        ReportRow(t_max, "limit", "mean_rate_limit", mean_rate_limit(structure, cfg.dependence)),
        ReportRow(t_max, "closed", "variance_over_t2", closed["variance"] / t_max**2),
        ReportRow(
            t_max,
            "limit",
            "variance_quadratic_limit",
            variance_quadratic_limit(structure, cfg.dependence),
        ),
    ]
    law = _single_severity(cfg.dependence)
    if isinstance(structure, Degenerate) and law is not None:
        rows.append(ReportRow(t_max, "closed", "variance_over_t", closed["variance"] / t_max))
        rows.append(
            ReportRow(t_max, "limit", "variance_linear_limit", variance_linear_limit(structure, law))
        )
    return rows


def _cmd_asymptote(cfg: RunConfig) -> tuple[list[ReportRow], str, int]:
    structure = _require_mixing_law(cfg, "asymptote")
    linear = isinstance(structure, Degenerate) and _single_severity(cfg.dependence) is not None
    rows: list[ReportRow] = []
    for t in cfg.grid:
        closed = _closed_values(cfg, t)
        rows.append(ReportRow(t, "closed", "mean_over_t", closed["mean"] / t if t > 0.0 else 0.0))
        rows.append(
            ReportRow(t, "closed", "variance_over_t2", closed["variance"] / t**2 if t > 0.0 else 0.0)
        )
        if linear:
            rows.append(
                ReportRow(t, "closed", "variance_over_t", closed["variance"] / t if t > 0.0 else 0.0)
            )
    limit_rows = _limit_rows(cfg)
    rows.extend(r for r in limit_rows if r.engine == "limit")
    ratio = next(r.value for r in limit_rows if r.quantity == "variance_over_t2")
    limit = next(r.value for r in limit_rows if r.quantity == "variance_quadratic_limit")
    summary = (
        f"asymptote: t={max(cfg.grid):g} variance/t^2={ratio:.10g}"
        f" quadratic limit={limit:.10g}"
    )
    return rows, summary, 0


# ---------------------------------------------------------------------------
# Report output
# ---------------------------------------------------------------------------


def _format_number(value: float, precision: int) -> str:
    return f"{value:.{precision}g}"


def format_csv(rows: Sequence[ReportRow], precision: int = 17) -> str:
    """Render rows as CSV; floats carry ``precision`` significant digits.

    The default 17 digits round-trips IEEE doubles exactly.
    """
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(_COLUMNS)
    for row in rows:
        writer.writerow(
            [
                _format_number(row.t, precision),
                row.engine,
                row.quantity,
                _format_number(row.value, precision),
                "" if row.stderr is None else _format_number(row.stderr, precision),
                "" if row.residual_bound is None else _format_number(row.residual_bound, precision),
                "" if row.seed is None else str(row.seed),
                "" if row.replicates is None else str(row.replicates),
            ]
        )
    return buffer.getvalue()


def format_json(rows: Sequence[ReportRow]) -> str:
    """Render rows as JSON with exact float round-trip.

    Python serializes floats by shortest repr, which parses back to the
    identical double, so a re-read report equals the in-memory one.
    """
    return json.dumps({"rows": [row.as_dict() for row in rows]}, indent=2) + "\n"


def read_json_report(path: str) -> list[ReportRow]:
    """Load a JSON report back into row objects."""
    with open(path, "r", encoding="utf-8") as handle:
        payload = json.load(handle)
    return [ReportRow(**entry) for entry in payload["rows"]]


def emit_report(rows: Sequence[ReportRow], out_format: str, path: str, precision: int = 17) -> None:
    if out_format == "csv":
        text = format_csv(rows, precision)
    else:
        text = format_json(rows)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(text)


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="osclaims",
        description="Moments of aggregate claims under order-statistic arrival processes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("mean", "expected aggregate claims over the horizon grid"),
        ("second-moment", "raw second moment over the horizon grid"),
        ("variance", "variance over the horizon grid"),
        ("simulate", "Monte Carlo estimates with standard errors"),
        ("validate", "cross-check all engines pairwise"),
        ("asymptote", "finite-horizon ratios against large-horizon limits"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="path to the run config file")
        cmd.add_argument("--output", default=None, help="report path (default report.<format>)")
        cmd.add_argument("--seed", type=int, default=None, help="override simulation.seed")
        cmd.add_argument(
            "--engine", choices=list(_ENGINE_CHOICES), default=None, help="override computation.engine"
        )
        cmd.add_argument(
            "--format", choices=list(_FORMATS), default=None, help="override output.format"
        )
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    """Execute one CLI invocation and return its exit code.

    0 success, 2 config error, 3 numeric nonconvergence, 4 validation
    failure, 5 report I/O failure.
    """
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2

    try:
        cfg = load_run_config(
            args.config,
            engine=args.engine,
            seed=args.seed,
            out_format=args.format,
            out_path=args.output,
        )
        if args.command == "mean":
            rows, summary, status = _cmd_moment(cfg, "mean")
        elif args.command == "second-moment":
            rows, summary, status = _cmd_moment(cfg, "second_moment")
        elif args.command == "variance":
            rows, summary, status = _cmd_moment(cfg, "variance")
        elif args.command == "simulate":
            rows, summary, status = _cmd_simulate(cfg)
        elif args.command == "validate":
            rows, summary, status = _cmd_validate(cfg)
        else:
            rows, summary, status = _cmd_asymptote(cfg)
    except (ConfigError, InfiniteMomentError, DegenerateProcessError, TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericFailure as exc:
        print(f"error: numeric nonconvergence: {exc}", file=sys.stderr)
        return 3
    except ValidationFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4

    path = cfg.resolved_path()
    try:
        emit_report(rows, cfg.out_format, path, cfg.precision)
    except OSError as exc:
        print(f"error: cannot write report {path}: {exc}", file=sys.stderr)
        return 5
    print(f"{summary} -> {path}")
    return status


def main() -> None:
    raise SystemExit(run(sys.argv[1:]))
