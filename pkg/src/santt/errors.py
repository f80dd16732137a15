"""Exception types shared across the package."""


class SanttError(Exception):
    """Base class for all package errors."""


class ShapeMismatchError(SanttError):
    """Mode sizes or ranks of tensor-train operands do not match."""


class SizeCapError(SanttError):
    """A dense materialization would exceed the configured size cap."""


class ModelError(SanttError):
    """A model file or in-memory model violates the schema or its invariants."""


class SpectrumError(SanttError):
    """A spectral enclosure is invalid for the requested operation."""


class AccuracyError(SanttError):
    """A requested approximation accuracy is below the attainable floor."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class DivergenceError(SanttError):
    """An iteration shows sustained growth, signalling an invalid splitting."""


class AbsorptionError(SanttError):
    """The absorbing state cannot be reached from the initial support."""


class RankBudgetError(SanttError):
    """A rank cap forced a truncation error above the requested tolerance."""
