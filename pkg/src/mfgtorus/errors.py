"""Exception types shared across the package."""

from __future__ import annotations


class MFGError(Exception):
    """Base class for all package errors."""


class ValidationError(MFGError):
    """Invalid input data (shapes, mass, exponents, admissibility)."""


class ConfigError(ValidationError):
    """Malformed run configuration; carries a field-level diagnostic."""

    def __init__(self, message: str, *, section: str | None = None, key: str | None = None):
        self.section = section
        self.key = key
        where = ""
        if section is not None:
            where = f" [{section}]" + (f".{key}" if key else "")
        super().__init__(message + where)


class LinearSolveError(MFGError):
    """A linear system could not be solved to tolerance; carries the solve report."""

    def __init__(self, message: str, report=None):
        self.report = report
        super().__init__(message)


class InfiniteCostError(MFGError):
    """Legendre transform requested outside the admissible control ball."""


class InsufficientDataError(MFGError):
    """Not enough usable iterations for a rate estimate."""


class NewtonDivergenceError(MFGError):
    """Newton residuals grew for several consecutive steps; iteration aborted."""

    def __init__(self, message: str, reports=None):
        self.reports = reports
        super().__init__(message)


class StateMismatchError(ValidationError):
    """Resume state does not match its configuration hash."""


class KinkWarning(UserWarning):
    """A gradient landed exactly on a non-smooth set (truncation sphere, upwind tie)."""
