"""The five sensitivity engines producing ``dF/dp`` over all parameters.

``fn`` and ``fa`` differentiate the mode once per parameter (forward mode),
``adne`` and ``adam`` solve one adjoint system, and ``pm`` solves one system
with the rank-one corrected operator ``G = K - lambda M + M phi phi.T M``
by preconditioned SQMR, reusing the factorization of ``K - mu M`` left
behind by the eigensolver.
"""

from __future__ import annotations

import logging
import time
import warnings
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla
from numpy.typing import ArrayLike

from ._characteristic import Characteristic
from ._eigen import EigenPair, ShiftedFactorization
from ._errors import (
    ConvergenceError,
    DimensionError,
    InvalidInputError,
    SingularOperatorError,
)
from ._modal import BorderedSystem, DerivativeProvider, NelsonSystem
from ._sparse import FloatArray, SymSparseMatrix
from ._sqmr import SolveCounter, SqmrConfig, SqmrResult, sqmr_solve
from ._verification import linf_entry

logger = logging.getLogger(__name__)

BLOCK_SIZE = 256
DENSE_LIMIT = 500
G_TOLERANCE = 1e-5


@dataclass(frozen=True, eq=False)
class SensitivityProblem:
    """Everything an engine needs for one mode and one characteristic."""

    k: SymSparseMatrix
    m: SymSparseMatrix
    pair: EigenPair
    shifted: ShiftedFactorization
    derivatives: DerivativeProvider
    characteristic: Characteristic
    params: FloatArray
    spectrum: FloatArray | None = None

    def __post_init__(self) -> None:
        orders = {self.k.order, self.m.order, self.pair.order, self.derivatives.order}
        if len(orders) != 1:
            raise DimensionError(f"problem operands have mismatched orders {orders}")
        params = np.array(self.params, dtype=np.float64).ravel()
        if params.size != self.derivatives.count:
            raise DimensionError(
                f"{params.size} parameter values for "
                f"{self.derivatives.count} parameters"
            )
        params.flags.writeable = False
        object.__setattr__(self, "params", params)

    @property
    def q(self) -> int:
        return self.derivatives.count

    @property
    def order(self) -> int:
        return self.k.order

    def partials(self) -> tuple[FloatArray, float, FloatArray]:
        return self.characteristic.partials(
            self.params, self.pair.eigenvalue, self.pair.phi
        )

    def spectral_gap(self) -> float:
        """Distance from this eigenvalue to the nearest other computed one."""
        if self.spectrum is None:
            return float("inf")
        others = np.delete(np.asarray(self.spectrum), self.pair.index - 1)
        if others.size == 0:
            return float("inf")
        return float(np.min(np.abs(others - self.pair.eigenvalue)))


class GOperator:
    """``x -> (K - lambda M) x + M phi (phi.T M x)``, never assembled."""

    def __init__(self, k: SymSparseMatrix, m: SymSparseMatrix, pair: EigenPair) -> None:
        self.k = k
        self.m = m
        self.eigenvalue = pair.eigenvalue
        self.m_phi = m.matvec(pair.phi)

    @property
    def order(self) -> int:
        return self.k.order

    def apply(self, x: ArrayLike) -> FloatArray:
        vector = np.asarray(x, dtype=np.float64)
        return (
            self.k.matvec(vector)
            - self.eigenvalue * self.m.matvec(vector)
            + np.multiply.outer(self.m_phi, self.m_phi @ vector)
        )

    __call__ = apply

    def dense(self) -> FloatArray:
        return (
            self.k.to_dense()
            - self.eigenvalue * self.m.to_dense()
            + np.outer(self.m_phi, self.m_phi)
        )

    def as_linear_operator(self) -> spla.LinearOperator:
        n = self.order
        return spla.LinearOperator(
            (n, n), matvec=self.apply, matmat=self.apply, dtype=np.float64
        )


@dataclass(frozen=True, eq=False)
class AdjointState:
    v: FloatArray
    alpha: float


@dataclass(frozen=True, eq=False)
class PmState:
    y: FloatArray
    sqmr: SqmrResult


def _blocks(q: int) -> Sequence[slice]:
    return [
        slice(start, min(start + BLOCK_SIZE, q)) for start in range(0, q, BLOCK_SIZE)
    ]


def _eigenvalue_derivatives(
    problem: SensitivityProblem,
) -> tuple[FloatArray, FloatArray]:
    """Return ``phi.T (dK_k - lambda dM_k) phi`` and ``phi.T dM_k phi / 2``."""
    batch = problem.derivatives.batch()
    phi = problem.pair.phi
    dm_quad = batch.dm_form(phi, phi)
    return batch.dk_form(phi, phi) - problem.pair.eigenvalue * dm_quad, 0.5 * dm_quad


def forward_nelson(
    problem: SensitivityProblem,
    cfg: SqmrConfig | None = None,
    *,
    counter: SolveCounter | None = None,
) -> FloatArray:
    """Nelson's method for every parameter, then the chain rule."""
    counter = SolveCounter() if counter is None else counter
    dp, dl, g = problem.partials()
    pair = problem.pair
    batch = problem.derivatives.batch()
    dlam, half_dm = _eigenvalue_derivatives(problem)
    m_phi = problem.m.matvec(pair.phi)

    system = NelsonSystem(problem.k, problem.m, pair)
    counter.factorizations += 1
    result = dp + dl * dlam
    for ks in _blocks(problem.q):
        f = (
            -batch.columns(pair.phi, pair.eigenvalue, ks, problem.order)
            + np.outer(m_phi, dlam[ks])
        )
        dphi = system.derivative(f, half_dm[ks])
        counter.linear_solves += f.shape[1]
        result[ks] += g @ dphi
    return result


def forward_algebraic(
    problem: SensitivityProblem,
    cfg: SqmrConfig | None = None,
    *,
    counter: SolveCounter | None = None,
) -> FloatArray:
    """Bordered solve for ``(dphi, dlambda)`` per parameter, then the chain rule."""
    counter = SolveCounter() if counter is None else counter
    dp, dl, g = problem.partials()
    pair = problem.pair
    batch = problem.derivatives.batch()
    _, half_dm = _eigenvalue_derivatives(problem)

    system = BorderedSystem(problem.k, problem.m, pair)
    counter.factorizations += 1
    result = dp.copy()
    for ks in _blocks(problem.q):
        width = ks.stop - ks.start
        rhs = np.empty((problem.order + 1, width))
        rhs[:-1] = -batch.columns(pair.phi, pair.eigenvalue, ks, problem.order)
        rhs[-1] = -half_dm[ks]
        solution = system.solve(rhs)
        counter.linear_solves += width
        result[ks] += dl * -solution[-1] + g @ solution[:-1]
    return result


def _accumulate(
    problem: SensitivityProblem, state: AdjointState, dp: FloatArray
) -> FloatArray:
    batch = problem.derivatives.batch()
    phi = problem.pair.phi
    return (
        dp
        + batch.dk_form(state.v, phi)
        - problem.pair.eigenvalue * batch.dm_form(state.v, phi)
        + 0.5 * state.alpha * batch.dm_form(phi, phi)
    )


def adjoint_state_nelson(
    problem: SensitivityProblem, counter: SolveCounter | None = None
) -> AdjointState:
    """Adjoint vector from the pinned system plus the homogeneous correction."""
    counter = SolveCounter() if counter is None else counter
    _, dl, g = problem.partials()
    phi = problem.pair.phi
    m_phi = problem.m.matvec(phi)
    alpha = -float(phi @ g)

    system = NelsonSystem(problem.k, problem.m, problem.pair)
    counter.factorizations += 1
    v0 = system.solve(-(g + alpha * m_phi))
    counter.linear_solves += 1
    c = dl - float(m_phi @ v0)
    return AdjointState(v=v0 + c * phi, alpha=alpha)


def adjoint_state_algebraic(
    problem: SensitivityProblem, counter: SolveCounter | None = None
) -> AdjointState:
    """Adjoint vector and multiplier from one bordered solve."""
    counter = SolveCounter() if counter is None else counter
    _, dl, g = problem.partials()
    system = BorderedSystem(problem.k, problem.m, problem.pair)
    counter.factorizations += 1
    rhs = np.append(-g, dl)
    solution = system.solve(rhs)
    counter.linear_solves += 1
    return AdjointState(v=solution[:-1], alpha=float(solution[-1]))


def adjoint_nelson(
    problem: SensitivityProblem,
    cfg: SqmrConfig | None = None,
    *,
    counter: SolveCounter | None = None,
) -> FloatArray:
    state = adjoint_state_nelson(problem, counter)
    return _accumulate(problem, state, problem.partials()[0])


def adjoint_algebraic(
    problem: SensitivityProblem,
    cfg: SqmrConfig | None = None,
    *,
    counter: SolveCounter | None = None,
) -> FloatArray:
    state = adjoint_state_algebraic(problem, counter)
    return _accumulate(problem, state, problem.partials()[0])


def pm_state(
    problem: SensitivityProblem,
    cfg: SqmrConfig | None = None,
    counter: SolveCounter | None = None,
) -> PmState:
    """Solve ``G y = dF/dphi`` preconditioned by the eigensolver's factors."""
    g = problem.partials()[2]
    operator = GOperator(problem.k, problem.m, problem.pair)
    result = sqmr_solve(operator.apply, problem.shifted, g, cfg, counter)
    return PmState(y=result.solution, sqmr=result)


def pm_sensitivity(
    problem: SensitivityProblem,
    cfg: SqmrConfig | None = None,
    *,
    counter: SolveCounter | None = None,
) -> FloatArray:
    """One Krylov solve, then per-parameter products with the element blocks."""
    dp, dl, _ = problem.partials()
    state = pm_state(problem, cfg, counter)
    y = state.y
    phi = problem.pair.phi
    lam = problem.pair.eigenvalue
    batch = problem.derivatives.batch()
    beta, half_dm = _eigenvalue_derivatives(problem)
    s = float(y @ problem.m.matvec(phi))
    alpha = (
        -batch.dk_form(y, phi)
        + beta * s
        + lam * batch.dm_form(y, phi)
        - s * half_dm
    )
    return dp + beta * dl + alpha


Engine = Callable[..., FloatArray]

ENGINES: dict[str, Engine] = {
    "fn": forward_nelson,
    "fa": forward_algebraic,
    "adne": adjoint_nelson,
    "adam": adjoint_algebraic,
    "pm": pm_sensitivity,
}
ENGINE_LABELS = {
    "fn": "forward Nelson",
    "fa": "forward algebraic",
    "adne": "adjoint Nelson",
    "adam": "adjoint algebraic",
    "pm": "rank-one corrected SQMR",
}


@dataclass(frozen=True, eq=False)
class SensitivityReport:
    method: str
    values: FloatArray
    seconds: float
    counts: dict[str, int] = field(default_factory=dict)

    @property
    def linf(self) -> float:
        return linf_entry(self.values)[0]

    @property
    def argmax(self) -> int:
        return linf_entry(self.values)[1]


def run_engine(
    name: str, problem: SensitivityProblem, sqmr: SqmrConfig | None = None
) -> SensitivityReport:
    """Run one engine by name under a timer and a fresh solve counter."""
    try:
        engine = ENGINES[name]
    except KeyError:
        raise InvalidInputError(
            f"unknown engine {name!r}; expected one of {', '.join(ENGINES)}"
        ) from None
    counter = SolveCounter()
    start = time.perf_counter()
    values = engine(problem, sqmr, counter=counter)
    seconds = time.perf_counter() - start
    logger.info(
        "%s: %d parameters in %.6f s, %d linear solve(s)",
        name,
        problem.q,
        seconds,
        counter.linear_solves,
    )
    return SensitivityReport(name, values, seconds, counter.snapshot())


def g_modal_projection(
    problem: SensitivityProblem, modes: Sequence[EigenPair]
) -> FloatArray:
    """Return ``Phi.T G Phi`` for the given modes."""
    operator = GOperator(problem.k, problem.m, problem.pair)
    basis = np.column_stack([pair.phi for pair in modes])
    return basis.T @ operator.apply(basis)


@dataclass(frozen=True)
class GDiagnostic:
    relative_residual: float
    spectral_gap: float
    iterations: int
    method: str


def assert_g_nonsingular(
    problem: SensitivityProblem,
    cfg: SqmrConfig | None = None,
    tolerance: float = G_TOLERANCE,
) -> GDiagnostic:
    """Solve ``G x = b`` for a random ``b`` and check the residual and gap.

    Dense LU is used up to order 500, preconditioned SQMR above.
    """
    gap = problem.spectral_gap()
    if gap <= 0.0:
        raise SingularOperatorError(
            f"mode {problem.pair.index} has a repeated eigenvalue; G is singular"
        )
    operator = GOperator(problem.k, problem.m, problem.pair)
    b = np.random.default_rng(0).standard_normal(problem.order)
    iterations = 0
    if problem.order <= DENSE_LIMIT:
        method = "dense"
        try:
            # boundary penalties make G ill-conditioned; the residual decides
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                x = scipy.linalg.solve(operator.dense(), b, assume_a="sym")
        except np.linalg.LinAlgError as exc:
            raise SingularOperatorError(f"dense solve with G failed ({exc})") from exc
    else:
        method = "sqmr"
        try:
            result = sqmr_solve(operator.apply, problem.shifted, b, cfg)
        except ConvergenceError as exc:
            raise SingularOperatorError(
                f"SQMR on G did not converge; G is suspected singular ({exc})"
            ) from exc
        x, iterations = result.solution, result.iterations
    residual = float(np.linalg.norm(b - operator.apply(x)) / np.linalg.norm(b))
    if not np.isfinite(residual) or residual > tolerance:
        raise SingularOperatorError(
            f"G solve left relative residual {residual:.3e} above {tolerance:.0e}"
        )
    logger.info(
        "G is nonsingular for mode %d: residual %.3e, spectral gap %.6e (%s)",
        problem.pair.index,
        residual,
        gap,
        method,
    )
    return GDiagnostic(residual, gap, iterations, method)
