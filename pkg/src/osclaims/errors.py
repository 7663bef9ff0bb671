"""Exception types shared across the package."""

from __future__ import annotations


class OsclaimsError(Exception):
    """Base class for all package errors."""


class ConfigError(OsclaimsError):
    """Invalid or inconsistent run configuration."""


class NumericFailure(OsclaimsError):
    """A numerical routine could not reach its accuracy target.

    Carries the residual bound that was achieved so callers can report it.
    """

    def __init__(self, message: str, residual_bound: float = float("nan")):
        super().__init__(message)
        self.residual_bound = residual_bound


class InfiniteMomentError(OsclaimsError):
    """A required severity moment does not exist."""


class DegenerateProcessError(OsclaimsError):
    """The arrival process puts no mass on the requested horizon."""


class ValidationFailure(OsclaimsError):
    """A cross-engine consistency gate was exceeded."""
