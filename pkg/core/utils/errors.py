"""Exception types shared across the bench.

Every bench failure derives from BenchError. Input problems also derive from
ValueError and computation failures from RuntimeError, so callers that only
know the builtin types keep working.
"""


class BenchError(Exception):
    """Base class of the bench's own failures."""


class ConfigError(BenchError, ValueError):
    """A configuration value violates a precondition."""


class PreconditionError(BenchError, ValueError):
    """An operation was called outside its documented domain."""


class UnstableMatrixError(BenchError, ValueError):
    """A matrix expected to be Schur stable has spectral radius >= 1."""


class DegeneratePackingError(BenchError, RuntimeError):
    """Rejection sampling could not place the requested number of centers."""


class ConvergenceError(BenchError, RuntimeError):
    """An iterative routine hit its iteration cap."""


class DivergenceError(BenchError, RuntimeError):
    """Training produced a non-finite loss."""
