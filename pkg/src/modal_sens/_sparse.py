"""Symmetric sparse storage and the LDLᵀ factorization built on it."""

from __future__ import annotations

import logging
from collections.abc import Iterable
from dataclasses import dataclass, field
from functools import cached_property
from os import PathLike
from typing import Any

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numpy.typing import ArrayLike, NDArray

from ._errors import DimensionError, InvalidInputError, ZeroPivotError

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]
IntArray = NDArray[np.intp]

DEFAULT_ORDERING = "MMD_AT_PLUS_A"
ORDERINGS = ("MMD_AT_PLUS_A", "MMD_ATA", "COLAMD", "NATURAL")


def _frozen(array: NDArray[Any]) -> NDArray[Any]:
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class SymSparseMatrix:
    """Symmetric matrix stored as the CSR upper triangle.

    Entries supplied below the diagonal are mirrored into the upper
    triangle, so ``(1, 0, v)`` and ``(0, 1, v)`` describe the same entry.
    """

    order: int
    row_offsets: IntArray
    col_indices: IntArray
    values: FloatArray

    def __post_init__(self) -> None:
        if self.order < 1:
            raise InvalidInputError(f"matrix order must be positive, got {self.order}")
        if self.row_offsets.shape != (self.order + 1,):
            raise DimensionError(
                f"row_offsets needs {self.order + 1} entries, "
                f"got {self.row_offsets.shape[0]}"
            )
        for array in (self.row_offsets, self.col_indices, self.values):
            _frozen(array)

    @classmethod
    def from_coo(
        cls,
        order: int,
        rows: ArrayLike,
        cols: ArrayLike,
        values: ArrayLike,
    ) -> SymSparseMatrix:
        """Build from coordinate arrays, summing duplicates."""
        if order < 1:
            raise InvalidInputError(f"matrix order must be positive, got {order}")
        r = np.asarray(rows, dtype=np.intp).ravel()
        c = np.asarray(cols, dtype=np.intp).ravel()
        v = np.asarray(values, dtype=np.float64).ravel()
        if not (r.shape == c.shape == v.shape):
            raise DimensionError("rows, cols and values must have equal length")
        if r.size and (min(r.min(), c.min()) < 0 or max(r.max(), c.max()) >= order):
            raise InvalidInputError(
                f"entry index out of range for a matrix of order {order}"
            )
        upper_r = np.minimum(r, c)
        upper_c = np.maximum(r, c)
        upper = sp.coo_matrix((v, (upper_r, upper_c)), shape=(order, order)).tocsr()
        upper.sum_duplicates()
        upper.sort_indices()
        return cls._from_upper_csr(upper)

    @classmethod
    def from_scipy(cls, matrix: sp.spmatrix | sp.sparray) -> SymSparseMatrix:
        """Keep the upper triangle of a symmetric scipy matrix."""
        if matrix.shape[0] != matrix.shape[1]:
            raise DimensionError(f"matrix must be square, got shape {matrix.shape}")
        upper = sp.csr_matrix(sp.triu(matrix, format="csr"), dtype=np.float64)
        upper.sum_duplicates()
        upper.sort_indices()
        return cls._from_upper_csr(upper)

    @classmethod
    def from_dense(cls, matrix: ArrayLike) -> SymSparseMatrix:
        """Keep the upper triangle of a dense symmetric matrix."""
        return cls.from_scipy(sp.csr_matrix(np.atleast_2d(np.asarray(matrix, float))))

    @classmethod
    def identity(cls, order: int) -> SymSparseMatrix:
        """Return the identity of the given order."""
        return cls.diagonal_matrix(np.ones(order))

    @classmethod
    def diagonal_matrix(cls, diagonal: ArrayLike) -> SymSparseMatrix:
        """Return the diagonal matrix with the given entries."""
        d = np.asarray(diagonal, dtype=np.float64).ravel()
        index = np.arange(d.size)
        return cls.from_coo(d.size, index, index, d)

    @classmethod
    def _from_upper_csr(cls, upper: sp.csr_matrix) -> SymSparseMatrix:
        return cls(
            order=upper.shape[0],
            row_offsets=np.asarray(upper.indptr, dtype=np.intp).copy(),
            col_indices=np.asarray(upper.indices, dtype=np.intp).copy(),
            values=np.asarray(upper.data, dtype=np.float64).copy(),
        )

    @property
    def nnz(self) -> int:
        """Number of stored (upper triangle) entries."""
        return int(self.values.size)

    @cached_property
    def upper(self) -> sp.csr_matrix:
        """Upper triangle as a scipy CSR matrix."""
        return sp.csr_matrix(
            (self.values, self.col_indices, self.row_offsets),
            shape=(self.order, self.order),
        )

    @cached_property
    def _full(self) -> sp.csr_matrix:
        upper = self.upper
        full = (upper + upper.T - sp.diags(upper.diagonal())).tocsr()
        full.sort_indices()
        return full

    def to_scipy(self) -> sp.csr_matrix:
        """Return the full symmetric matrix in CSR form."""
        return self._full

    def to_dense(self) -> FloatArray:
        """Return the full symmetric matrix as a dense array."""
        return np.asarray(self._full.toarray(), dtype=np.float64)

    def diagonal(self) -> FloatArray:
        """Return the main diagonal."""
        return np.asarray(self.upper.diagonal(), dtype=np.float64)

    def matvec(self, x: ArrayLike) -> FloatArray:
        """Return ``A @ x``; ``x`` may also be an ``order x m`` block."""
        vector = np.asarray(x, dtype=np.float64)
        if vector.shape[0] != self.order:
            raise DimensionError(
                f"vector of length {vector.shape[0]} does not match order {self.order}"
            )
        return np.asarray(self._full @ vector, dtype=np.float64)

    def bilinear(self, x: ArrayLike, y: ArrayLike) -> float:
        """Return ``x.T @ A @ y``."""
        return float(np.dot(np.asarray(x, dtype=np.float64), self.matvec(y)))

    def scaled(self, factor: float) -> SymSparseMatrix:
        """Return ``factor * A`` with the same sparsity."""
        return SymSparseMatrix(
            self.order,
            self.row_offsets.copy(),
            self.col_indices.copy(),
            self.values * factor,
        )

    def __add__(self, other: object) -> SymSparseMatrix:
        if not isinstance(other, SymSparseMatrix):
            return NotImplemented
        if other.order != self.order:
            raise DimensionError(
                f"cannot add matrices of order {self.order} and {other.order}"
            )
        return SymSparseMatrix._from_upper_csr(
            sp.csr_matrix(self.upper + other.upper)
        )

    def __repr__(self) -> str:
        return f"SymSparseMatrix(order={self.order}, nnz={self.nnz})"


def assemble(order: int, triplets: Iterable[tuple[int, int, float]]) -> SymSparseMatrix:
    """Assemble a symmetric matrix from ``(row, col, value)`` triplets.

    Duplicate positions are summed and entries below the diagonal are
    mirrored into the upper triangle.

    >>> assemble(2, [(0, 0, 2.0), (0, 1, -1.0), (1, 1, 1.0)]).to_dense().tolist()
    [[2.0, -1.0], [-1.0, 1.0]]
    """
    if order < 1:
        raise InvalidInputError(f"matrix order must be positive, got {order}")
    entries = np.asarray(list(triplets), dtype=np.float64).reshape(-1, 3)
    rows = entries[:, 0]
    cols = entries[:, 1]
    if np.any(rows != np.round(rows)) or np.any(cols != np.round(cols)):
        raise InvalidInputError("row and column indices must be integers")
    return SymSparseMatrix.from_coo(
        order, rows.astype(np.intp), cols.astype(np.intp), entries[:, 2]
    )


def matvec(a: SymSparseMatrix, x: ArrayLike) -> FloatArray:
    """Return ``A @ x`` using the full matrix implied by the stored triangle."""
    return a.matvec(x)


def write_matrix_market(a: SymSparseMatrix, path: str | PathLike[str]) -> None:
    """Write ``A`` as a symmetric Matrix Market coordinate file."""
    scipy.io.mmwrite(path, sp.coo_matrix(a.to_scipy()), symmetry="symmetric")


def read_matrix_market(path: str | PathLike[str]) -> SymSparseMatrix:
    """Read a Matrix Market file holding a symmetric matrix."""
    return SymSparseMatrix.from_scipy(sp.csr_matrix(scipy.io.mmread(path)))


@dataclass(frozen=True, eq=False)
class LdltFactorization:
    """``P A Pᵀ = L D Lᵀ`` with a recorded fill-reducing permutation."""

    order: int
    permutation: IntArray
    lower: sp.csc_matrix
    diagonal: FloatArray
    ordering: str
    _superlu: Any = field(repr=False)

    @property
    def negative_pivots(self) -> int:
        """Number of negative entries of D (Sylvester inertia)."""
        return int(np.count_nonzero(self.diagonal < 0.0))

    def solve(self, b: ArrayLike) -> FloatArray:
        """Forward and backward substitution; ``b`` may be a column block."""
        rhs = np.ascontiguousarray(b, dtype=np.float64)
        if rhs.shape[0] != self.order:
            raise DimensionError(
                f"right-hand side of length {rhs.shape[0]} "
                f"does not match order {self.order}"
            )
        return np.asarray(self._superlu.solve(rhs), dtype=np.float64)

    def reconstruct(self) -> sp.csr_matrix:
        """Rebuild ``A`` from its factors."""
        n = self.order
        index = np.arange(n)
        pr = sp.csc_matrix((np.ones(n), (self.permutation, index)), shape=(n, n))
        pc = sp.csc_matrix((np.ones(n), (index, self.permutation)), shape=(n, n))
        ldl = self.lower @ sp.diags(self.diagonal) @ self.lower.T
        return sp.csr_matrix(pr.T @ ldl @ pc.T)


def ldlt_factorize(
    a: SymSparseMatrix, ordering: str = DEFAULT_ORDERING
) -> LdltFactorization:
    """Factorize a symmetric, possibly indefinite, matrix without pivoting.

    SuperLU runs in symmetric mode with a zero pivot threshold, so the
    row permutation equals the column ordering and ``U = D Lᵀ``.
    """
    if ordering not in ORDERINGS:
        raise InvalidInputError(
            f"unknown ordering {ordering!r}; expected one of {', '.join(ORDERINGS)}"
        )
    csc = sp.csc_matrix(a.to_scipy())
    try:
        superlu = spla.splu(
            csc,
            permc_spec=ordering,
            diag_pivot_thresh=0.0,
            options={"SymmetricMode": True},
        )
    except RuntimeError as exc:
        raise ZeroPivotError(f"matrix is numerically singular ({exc})") from exc
    if not np.array_equal(superlu.perm_r, superlu.perm_c):
        raise ZeroPivotError("a zero diagonal pivot forced an off-diagonal pivot")
    diagonal = np.asarray(superlu.U.diagonal(), dtype=np.float64)
    scale = float(np.abs(csc.diagonal()).max(initial=0.0))
    if scale == 0.0:
        scale = float(np.abs(csc.data).max(initial=0.0))
    tolerance = a.order * np.finfo(np.float64).eps * scale
    tiny = np.flatnonzero(np.abs(diagonal) <= tolerance)
    if tiny.size:
        pivot = int(superlu.perm_c[tiny[0]])
        raise ZeroPivotError(
            f"zero pivot at row {pivot} (|d| <= {tolerance:.3e})", pivot=pivot
        )
    factor = LdltFactorization(
        order=a.order,
        permutation=_frozen(np.asarray(superlu.perm_c, dtype=np.intp).copy()),
        lower=sp.csc_matrix(superlu.L),
        diagonal=_frozen(diagonal.copy()),
        ordering=ordering,
        _superlu=superlu,
    )
    logger.debug(
        "LDLT of order %d with %s ordering: nnz(L)=%d, negative pivots=%d",
        a.order,
        ordering,
        factor.lower.nnz,
        factor.negative_pivots,
    )
    return factor


def ldlt_solve(factor: LdltFactorization, b: ArrayLike) -> FloatArray:
    """Solve ``A x = b`` with a stored factorization."""
    return factor.solve(b)
