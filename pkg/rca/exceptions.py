"""Exception hierarchy shared by the services and the CLI.

Configuration and usage problems derive from ``ValueError``; numerical
failures derive from ``ArithmeticError``. The management command maps the two
families to exit codes 2 and 3.
"""

from __future__ import annotations

from typing import TYPE_CHECKING, Any

if TYPE_CHECKING:
    from rca.services.montecarlo.service import ExperimentReport


class RCAError(Exception):
    """Base class for every error raised by the rca app."""


class ConfigurationError(RCAError, ValueError):
    """Invalid parameters for a domain object.

    ``field`` names the offending attribute (e.g. ``alpha``) so the config
    parser can point at the key and line that produced it.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class ConfigParseError(ConfigurationError):
    """Plain-text experiment config could not be parsed or validated."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        location = ""
        if key is not None:
            location = f"{key}"
            if line is not None:
                location += f" (line {line})"
            location += ": "
        super().__init__(f"{location}{message}", field=key)
        self.key = key
        self.line = line


class DomainError(ConfigurationError):
    """Operation called on a law it is not defined for (e.g. tail norming of a Gaussian)."""


class UsageError(RCAError, ValueError):
    """Operation called with inputs that violate its preconditions."""


class NumericalError(RCAError, ArithmeticError):
    """Non-finite values, failed quadrature or degenerate data."""


class OverflowDetected(NumericalError):
    """The raw recursion left the floating-point range."""

    def __init__(self, index: int):
        super().__init__(f"X_k overflowed at k={index}; simulate with log_space=True to continue past it")
        self.index = index


class DegeneratePathError(NumericalError):
    """Some coefficient phi + b_k is exactly zero."""


class DegenerateDataError(NumericalError):
    """The likelihood does not depend on (s, x) for this trajectory."""


class UndefinedRateError(NumericalError):
    """log|X_n| / n is undefined because X_n = 0."""


class QuadratureError(NumericalError):
    """Adaptive quadrature did not reach the requested accuracy."""

    def __init__(self, message: str, diagnostics: dict[str, Any] | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ExperimentFailure(RCAError):
    """Too many replications failed; the sealed report is attached for inspection."""

    def __init__(self, message: str, report: ExperimentReport | None = None):
        super().__init__(message)
        self.report = report
