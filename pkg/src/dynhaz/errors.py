"""Exception types and the diagnostics channel shared across the package."""

from __future__ import annotations

from dataclasses import dataclass, field


class DynhazError(Exception):
    """Base class for all package errors."""


class SchemaError(DynhazError):
    """A required column is missing or the column mapping is inconsistent."""


class RowValidationError(DynhazError):
    """A data row failed validation; carries the offending row number."""

    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


class ConfigurationError(DynhazError):
    """Invalid configuration or usage (maps to CLI exit code 2)."""


class DomainError(DynhazError):
    """An argument is outside the mathematically valid domain."""


class NumericalError(DynhazError):
    """A numerical operation failed irrecoverably; carries the failing matrix."""

    def __init__(self, message: str, matrix=None):
        super().__init__(message)
        self.matrix = matrix


class DegeneracyError(DynhazError):
    """A particle set lost all finite weight mass."""


@dataclass
class Diagnostics:
    """Counters and warnings accumulated during a run.

    Pure compute functions accept an optional instance and increment counters;
    `merge` combines per-worker instances. Serialized into report JSON.
    """

    counters: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    series: dict = field(default_factory=dict)

    def count(self, key: str, n: int = 1) -> None:
        self.counters[key] = self.counters.get(key, 0) + n

    def record(self, key: str, value) -> None:
        self.series.setdefault(key, []).append(value)

    def warn(self, message: str) -> None:
        self.warnings.append(message)

    def merge(self, other: "Diagnostics") -> None:
        for key, n in other.counters.items():
            self.count(key, n)
        for key, values in other.series.items():
            self.series.setdefault(key, []).extend(values)
        self.warnings.extend(other.warnings)

    def to_dict(self) -> dict:
        return {"counters": dict(self.counters), "warnings": list(self.warnings),
                "series": {k: list(v) for k, v in self.series.items()}}
