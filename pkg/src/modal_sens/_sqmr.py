"""Preconditioned symmetric QMR for symmetric indefinite systems."""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import asdict, dataclass
from typing import Protocol

import numpy as np
from numpy.typing import ArrayLike

from ._errors import (
    ConvergenceError,
    DimensionError,
    InvalidInputError,
    SqmrBreakdownError,
)
from ._sparse import FloatArray

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-5
DEFAULT_MAX_ITERATIONS = 500
ROUNDOFF_RESIDUAL = 1e-14
WARN_ITERATIONS = 50


class Preconditioner(Protocol):
    def solve(self, b: ArrayLike) -> FloatArray: ...


@dataclass
class SolveCounter:
    """Counts the expensive steps of a sensitivity computation.

    A Krylov solve counts as a single linear solve.
    """

    factorizations: int = 0
    linear_solves: int = 0
    krylov_iterations: int = 0
    preconditioner_applications: int = 0

    def snapshot(self) -> dict[str, int]:
        return asdict(self)

    def reset(self) -> None:
        self.factorizations = 0
        self.linear_solves = 0
        self.krylov_iterations = 0
        self.preconditioner_applications = 0


@dataclass(frozen=True)
class SqmrConfig:
    tolerance: float = DEFAULT_TOLERANCE
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    initial_guess: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if not self.tolerance > 0:
            raise InvalidInputError(
                f"SQMR tolerance must be positive, got {self.tolerance}"
            )
        if self.max_iterations < 1:
            raise InvalidInputError(
                f"SQMR needs at least one iteration, got {self.max_iterations}"
            )


@dataclass(frozen=True, eq=False)
class SqmrResult:
    solution: FloatArray
    iterations: int
    relative_residual: float
    converged: bool


def sqmr_solve(
    apply_g: Callable[[FloatArray], FloatArray],
    precond: Preconditioner | None,
    rhs: ArrayLike,
    cfg: SqmrConfig | None = None,
    counter: SolveCounter | None = None,
) -> SqmrResult:
    """Solve ``G u = rhs`` with symmetric QMR preconditioned by ``precond``.

    ``precond.solve`` applies the inverse of a symmetric preconditioner.
    Convergence needs both ``||u_n - u_n-1|| <= tol ||u_n||`` and a true
    relative residual ``<= tol``. The true residual is only formed once the
    step test passes, so a plain iteration costs one product with ``G`` and
    one preconditioner application.
    """
    cfg = SqmrConfig() if cfg is None else cfg
    counter = SolveCounter() if counter is None else counter
    b = np.asarray(rhs, dtype=np.float64)
    if b.ndim != 1:
        raise DimensionError("SQMR takes a single right-hand side vector")
    counter.linear_solves += 1

    def apply_p(x: FloatArray) -> FloatArray:
        counter.preconditioner_applications += 1
        return x.copy() if precond is None else precond.solve(x)

    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        logger.info("SQMR right-hand side is zero; solution is zero")
        return SqmrResult(np.zeros_like(b), 0, 0.0, True)

    if cfg.initial_guess is None:
        u = np.zeros_like(b)
    else:
        u = np.array(cfg.initial_guess, dtype=np.float64)
        if u.shape != b.shape:
            raise DimensionError(
                f"initial guess of length {u.size} does not match {b.size}"
            )

    def true_residual(x: FloatArray) -> float:
        return float(np.linalg.norm(b - apply_g(x))) / b_norm

    r = b - apply_g(u)
    t = apply_p(r)
    tau = float(np.linalg.norm(t))
    q = t.copy()
    theta = 0.0
    d = np.zeros_like(b)
    rho = float(r @ t)
    residual = float(np.linalg.norm(r)) / b_norm
    if residual <= ROUNDOFF_RESIDUAL:
        return SqmrResult(u, 0, residual, True)

    for iteration in range(1, cfg.max_iterations + 1):
        counter.krylov_iterations += 1
        t = apply_g(q)
        sigma = float(q @ t)
        if sigma == 0.0:
            return _breakdown("sigma", u, iteration, true_residual(u), cfg)
        alpha = rho / sigma
        r = r - alpha * t
        t = apply_p(r)

        theta_prev = theta
        theta = float(np.linalg.norm(t)) / tau
        c = 1.0 / np.sqrt(1.0 + theta**2)
        tau = tau * theta * c
        d = (c**2 * theta_prev**2) * d + (c**2 * alpha) * q
        u = u + d

        change = float(np.linalg.norm(d))
        logger.debug("SQMR iteration %d: step %.3e", iteration, change)
        if change <= cfg.tolerance * float(np.linalg.norm(u)):
            residual = true_residual(u)
            logger.debug("SQMR iteration %d: residual %.3e", iteration, residual)
            if residual <= max(cfg.tolerance, ROUNDOFF_RESIDUAL):
                return _finish(u, iteration, residual)

        rho_new = float(r @ t)
        if rho_new == 0.0:
            return _breakdown("rho", u, iteration, true_residual(u), cfg)
        beta = rho_new / rho
        q = t + beta * q
        rho = rho_new

    residual = true_residual(u)
    raise ConvergenceError(
        f"SQMR did not converge in {cfg.max_iterations} iterations "
        f"(relative residual {residual:.3e})",
        iterations=cfg.max_iterations,
        residual=residual,
    )


def _finish(u: FloatArray, iterations: int, residual: float) -> SqmrResult:
    log = logger.warning if iterations > WARN_ITERATIONS else logger.info
    log("SQMR converged in %d iterations, relative residual %.3e", iterations, residual)
    return SqmrResult(u, iterations, residual, True)


def _breakdown(
    which: str, u: FloatArray, iterations: int, residual: float, cfg: SqmrConfig
) -> SqmrResult:
    if residual <= cfg.tolerance:
        logger.debug("SQMR %s vanished at a converged iterate", which)
        return _finish(u, iterations, residual)
    raise SqmrBreakdownError(
        f"SQMR breakdown: {which} = 0 at iteration {iterations} "
        f"(relative residual {residual:.3e})",
        iterations=iterations,
        residual=residual,
    )
