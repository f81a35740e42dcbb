"""Exception taxonomy shared across modules.

Config/validation problems raise ValueError subclasses; violations of the
numerical preconditions that guarantee accuracy raise
NumericalPreconditionError subclasses; a diverging fixed-point iteration
raises DivergenceError. The CLI maps these to distinct exit codes.
"""
from __future__ import annotations


class NumericalPreconditionError(RuntimeError):
    """A quantitative precondition needed for the accuracy guarantee failed."""


class ResolutionError(NumericalPreconditionError):
    """Requested quadrature resolution is below the guaranteed-accuracy floor."""


class ContractionPreconditionError(NumericalPreconditionError):
    """Iterate left the contraction ball the fixed-point argument needs."""


class PhaseConditionError(NumericalPreconditionError):
    """Second-derivative bounds of an oscillatory phase were violated."""


class DivergenceError(RuntimeError):
    """Fixed-point iteration diverged; carries the partial state if known."""

    def __init__(self, message: str, state=None):
        super().__init__(message)
        self.state = state
