from __future__ import annotations

from typing import Any


class SolverFailure(RuntimeError):
    """Raised when a semidefinite solve does not end at a certified optimum."""

    def __init__(self, message: str, status: Any = None) -> None:
        super().__init__(message)
        self.status = status


class EnumerationCapExceeded(ValueError):
    def __init__(self, what: str, count: int, cap: int) -> None:
        super().__init__(f"{what}: {count} candidates exceed the cap of {cap}")
        self.what = what
        self.count = count
        self.cap = cap


class ScalabilityNotCertified(RuntimeError):
    """Diagonal certificates were requested before the weighting condition was certified."""


class TuningError(RuntimeError):
    def __init__(self, message: str, last_margin: float) -> None:
        super().__init__(message)
        self.last_margin = last_margin


class GeneratorExhausted(RuntimeError):
    pass


class ConfigError(ValueError):
    """Run configuration violates the schema; `field_path` names the offending key."""

    def __init__(self, message: str, field_path: str = "") -> None:
        super().__init__(f"{field_path}: {message}" if field_path else message)
        self.field_path = field_path


METHOD_FAILURES = (
    SolverFailure,
    EnumerationCapExceeded,
    ScalabilityNotCertified,
    TuningError,
    GeneratorExhausted,
)
