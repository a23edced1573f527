"""Domain errors. The CLI maps every subclass of DomainError to exit code 1."""

from __future__ import annotations


class DomainError(ValueError):
    """Base class for errors caused by mathematically invalid input."""

    kind = "domain"

    def __init__(self, message: str, details: dict | None = None):
        super().__init__(message)
        self.details = details or {}

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "message": str(self)}
        if self.details:
            out["details"] = self.details
        return {"error": out}


class InvalidTreeError(DomainError):
    kind = "invalid_tree"


class DegenerateError(DomainError):
    kind = "degenerate"


class InsufficientDepthError(DomainError):
    kind = "insufficient_depth"


class NotReducedError(DomainError):
    kind = "not_reduced"


class InvalidMetricError(DomainError):
    kind = "invalid_metric"


class InvalidAntichainError(DomainError):
    kind = "invalid_antichain"


class AmbiguousDecompositionError(DomainError):
    kind = "ambiguous_decomposition"


class SAdicError(DomainError):
    kind = "sadic"


class RationalInputError(DomainError):
    kind = "rational_input"


class WindowTooShortError(DomainError):
    kind = "window_too_short"


class NoWitnessError(DomainError):
    kind = "no_witness"


class DistributionError(DomainError):
    kind = "distribution"


class PipelineError(DomainError):
    kind = "pipeline"
