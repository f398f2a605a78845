"""Exceptions raised by modal_sens."""

from __future__ import annotations


class ModalSensError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(ModalSensError, ValueError):
    """Vector length or matrix order does not match."""


class InvalidInputError(ModalSensError, ValueError):
    """An argument is outside its documented domain."""


class ZeroPivotError(ModalSensError, ArithmeticError):
    """The LDLᵀ factorization met a zero pivot.

    For a shifted matrix ``K - mu*M`` this usually means the shift coincides
    with an eigenvalue.
    """

    def __init__(self, message: str, pivot: int | None = None) -> None:
        super().__init__(message)
        self.pivot = pivot


class RepeatedEigenvalueError(ModalSensError):
    """Two eigenvalues in play are too close to be treated as distinct."""


class ConvergenceError(ModalSensError):
    """An iterative solver ran out of its iteration budget."""

    def __init__(
        self, message: str, iterations: int = 0, residual: float = float("nan")
    ) -> None:
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class SqmrBreakdownError(ConvergenceError):
    """SQMR recurrence broke down (sigma or rho vanished) before converging."""


class SingularOperatorError(ModalSensError):
    """The rank-one corrected operator G looks singular."""


class ModeCrossingError(ModalSensError):
    """The tracked mode swapped order with a neighbour under perturbation."""


class StageError(ModalSensError):
    """A command-line stage failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: BaseException) -> None:
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
