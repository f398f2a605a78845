"""M-normalized eigenpairs of ``K phi = lambda M phi``."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla
from numpy.typing import ArrayLike

from ._errors import (
    ConvergenceError,
    DimensionError,
    InvalidInputError,
    RepeatedEigenvalueError,
)
from ._sparse import (
    DEFAULT_ORDERING,
    FloatArray,
    LdltFactorization,
    SymSparseMatrix,
    ldlt_factorize,
)

logger = logging.getLogger(__name__)

METHODS = ("auto", "lanczos", "dense")
REPEATED_RTOL = 1e-6
RESIDUAL_WARN = 1e-8
_START_SEED = 0


@dataclass(frozen=True, eq=False)
class EigenPair:
    """Eigenvalue and M-normalized eigenvector of mode ``index`` (1-based)."""

    index: int
    eigenvalue: float
    phi: FloatArray

    def __post_init__(self) -> None:
        phi = np.array(self.phi, dtype=np.float64)
        if phi.ndim != 1 or phi.size == 0:
            raise DimensionError("eigenvector must be a non-empty 1-D array")
        phi.flags.writeable = False
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "eigenvalue", float(self.eigenvalue))

    @property
    def order(self) -> int:
        return int(self.phi.size)


@dataclass(frozen=True, eq=False)
class ShiftedFactorization:
    """LDLᵀ factors of ``K - mu M``."""

    mu: float
    factorization: LdltFactorization

    def solve(self, b: ArrayLike) -> FloatArray:
        return self.factorization.solve(b)

    def as_operator(self) -> spla.LinearOperator:
        """View the inverse of ``K - mu M`` as a scipy ``LinearOperator``."""
        n = self.factorization.order
        return spla.LinearOperator(
            (n, n), matvec=self.solve, matmat=self.solve, dtype=np.float64
        )


class ModalSolution(NamedTuple):
    pairs: list[EigenPair]
    shifted: ShiftedFactorization

    @property
    def spectrum(self) -> FloatArray:
        """Computed eigenvalues in ascending order."""
        return np.array([pair.eigenvalue for pair in self.pairs])

    def mode(self, index: int) -> EigenPair:
        """Return the pair of 1-based mode ``index``."""
        if not 1 <= index <= len(self.pairs):
            raise InvalidInputError(
                f"mode {index} not computed; have modes 1..{len(self.pairs)}"
            )
        return self.pairs[index - 1]


def _apply_sign(phi: FloatArray) -> FloatArray:
    return phi if phi[int(np.argmax(np.abs(phi)))] >= 0 else -phi


def m_normalize(phi: ArrayLike, m: SymSparseMatrix) -> FloatArray:
    """Scale ``phi`` to unit M-norm with its largest entry positive.

    >>> m_normalize([2.0, 0.0], SymSparseMatrix.identity(2)).tolist()
    [1.0, 0.0]
    """
    vector = np.asarray(phi, dtype=np.float64)
    norm2 = m.bilinear(vector, vector)
    if not np.isfinite(norm2) or norm2 <= 0.0:
        raise InvalidInputError(
            f"vector has non-positive M-norm squared {norm2}; "
            "M must be positive definite and the vector nonzero"
        )
    return _apply_sign(vector / np.sqrt(norm2))


def mode_residual(k: SymSparseMatrix, m: SymSparseMatrix, pair: EigenPair) -> float:
    """Return ``||K phi - lambda M phi|| / ||K phi||``."""
    k_phi = k.matvec(pair.phi)
    return float(
        np.linalg.norm(k_phi - pair.eigenvalue * m.matvec(pair.phi))
        / np.linalg.norm(k_phi)
    )


def _check_distinct(eigenvalues: FloatArray) -> None:
    for i in range(eigenvalues.size - 1):
        low, high = eigenvalues[i], eigenvalues[i + 1]
        scale = max(abs(low), abs(high), np.finfo(np.float64).tiny)
        if abs(high - low) <= REPEATED_RTOL * scale:
            raise RepeatedEigenvalueError(
                f"modes {i + 1} and {i + 2} share eigenvalue {low:.9g}; "
                "derivatives need distinct eigenvalues"
            )


def _lanczos(
    k: SymSparseMatrix,
    m: SymSparseMatrix,
    n_modes: int,
    shifted: ShiftedFactorization,
) -> tuple[FloatArray, FloatArray]:
    v0 = np.random.default_rng(_START_SEED).standard_normal(k.order)
    try:
        eigenvalues, eigenvectors = spla.eigsh(
            k.to_scipy(),
            k=n_modes,
            M=m.to_scipy(),
            sigma=shifted.mu,
            which="LM",
            OPinv=shifted.as_operator(),
            v0=v0,
        )
    except spla.ArpackNoConvergence as exc:
        raise ConvergenceError(
            f"Lanczos found {len(exc.eigenvalues)} of {n_modes} modes "
            f"near shift {shifted.mu:.6e}"
        ) from exc
    return eigenvalues, eigenvectors


def _dense(
    k: SymSparseMatrix, m: SymSparseMatrix, n_modes: int
) -> tuple[FloatArray, FloatArray]:
    return scipy.linalg.eigh(
        k.to_dense(), m.to_dense(), subset_by_index=[0, n_modes - 1]
    )


def solve_modes(
    k: SymSparseMatrix,
    m: SymSparseMatrix,
    n_modes: int,
    mu: float = 0.0,
    method: str = "auto",
    ordering: str = DEFAULT_ORDERING,
) -> ModalSolution:
    """Compute the ``n_modes`` smallest eigenpairs and keep ``K - mu M`` factored.

    ``method="auto"`` runs shift-invert Lanczos with the LDLᵀ solve as the
    inverse operator and only falls back to a dense solve when ARPACK cannot
    deliver that many modes.
    """
    if k.order != m.order:
        raise DimensionError(f"K has order {k.order} but M has order {m.order}")
    if not 1 <= n_modes <= k.order:
        raise InvalidInputError(
            f"n_modes must lie in 1..{k.order}, got {n_modes}"
        )
    if method not in METHODS:
        raise InvalidInputError(
            f"unknown eigensolver {method!r}; expected one of {', '.join(METHODS)}"
        )

    shifted = ShiftedFactorization(
        float(mu), ldlt_factorize(k + m.scaled(-mu), ordering=ordering)
    )
    below = shifted.factorization.negative_pivots
    if below:
        raise InvalidInputError(
            f"shift {mu:.6e} lies above {below} eigenvalue(s); "
            "choose a shift below the first mode of interest"
        )

    if method == "auto":
        method = "dense" if n_modes >= k.order - 1 else "lanczos"
        if method == "dense":
            logger.warning(
                "%d modes requested from a system of order %d; using dense eigh",
                n_modes,
                k.order,
            )
    if method == "lanczos" and n_modes >= k.order:
        raise InvalidInputError(
            f"Lanczos needs n_modes < {k.order}, got {n_modes}"
        )

    if method == "lanczos":
        eigenvalues, eigenvectors = _lanczos(k, m, n_modes, shifted)
    else:
        eigenvalues, eigenvectors = _dense(k, m, n_modes)

    order = np.argsort(eigenvalues)
    eigenvalues = np.asarray(eigenvalues[order], dtype=np.float64)
    eigenvectors = np.asarray(eigenvectors[:, order], dtype=np.float64)
    _check_distinct(eigenvalues)

    pairs = [
        EigenPair(i + 1, eigenvalues[i], m_normalize(eigenvectors[:, i], m))
        for i in range(n_modes)
    ]
    worst = max(mode_residual(k, m, pair) for pair in pairs)
    if worst > RESIDUAL_WARN:
        logger.warning("largest eigen residual %.3e exceeds %.0e", worst, RESIDUAL_WARN)
    logger.info(
        "solved %d modes of order %d with %s (shift %.6e): lambda_1=%.9g, "
        "max residual %.3e",
        n_modes,
        k.order,
        method,
        shifted.mu,
        pairs[0].eigenvalue,
        worst,
    )
    return ModalSolution(pairs, shifted)
