# errors.py

from typing import Dict, List, Optional, Sequence


class ToricError(Exception):
    """Base class for every failure raised by the toolkit."""

    exit_code = 1


class InputError(ToricError, ValueError):
    """Malformed or inadmissible input data."""

    exit_code = 2


class DegeneratePolytopeError(InputError):
    """The half-space data does not describe a bounded full-dimensional polytope."""


class EmptyEnvelopeError(InputError):
    """No slope of the potential dominates the envelope level, so P_λφ is −∞."""


class TieError(InputError):
    """A max-affine potential is not differentiable at the requested point."""

    def __init__(self, message: str, tied: Sequence[int]):
        super().__init__(message)
        self.tied = tuple(int(i) for i in tied)


class DivergentIntegralError(InputError):
    """An integral over R^n does not converge (slope on the hull boundary)."""

    def __init__(self, message: str, indices: Optional[Sequence[int]] = None):
        super().__init__(message)
        self.indices = tuple(int(i) for i in (indices or ()))


class BasisMismatchError(InputError):
    """Two Hermitian weight vectors live on different lattice bases."""


class ConvergenceError(ToricError, RuntimeError):
    """An iterative solver stopped without reaching its tolerance."""

    exit_code = 3

    def __init__(self, message: str, trace: Optional[List[Dict]] = None,
                 residual: Optional[float] = None):
        super().__init__(message)
        self.trace = list(trace or [])
        self.residual = residual


class CapacityError(ToricError):
    """The requested computation exceeds the configured size limits."""

    exit_code = 4
