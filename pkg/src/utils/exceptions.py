"""Error hierarchy shared by the library and the command line."""

from typing import Optional


class PPRError(Exception):
    """Base class for all errors raised by this package."""
    exit_code = 1


class DimensionError(PPRError, ValueError):
    """Order, length or shape mismatch at a call boundary."""
    exit_code = 2


class ModelError(PPRError, ValueError):
    """Invalid model definition or model file."""
    exit_code = 3


class ShapeError(ModelError):
    """A model coefficient has the wrong shape for (n, m, p)."""


class AsymmetricCoefficientError(ModelError):
    """A stored value coefficient is not invariant under permutation of its factors."""


class SynthesisError(PPRError):
    """Controller synthesis could not be completed."""
    exit_code = 4


class AreError(SynthesisError):
    """The Riccati equation has no stabilizing solution or its inputs are invalid."""


class SingularSystemError(SynthesisError):
    """The closed-loop matrix is not Hurwitz, so the degree-k systems are singular."""


class KwayResidualError(SynthesisError):
    """Structured solve did not reach the requested residual."""

    def __init__(self, message: str, residual: Optional[float] = None):
        super().__init__(message)
        self.residual = residual


class MemoryBudgetError(SynthesisError):
    """Requested degree needs more coefficient storage than allowed."""


class VerificationError(PPRError):
    """A residual check failed."""
    exit_code = 5
