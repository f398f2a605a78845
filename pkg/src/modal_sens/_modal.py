"""Eigenvalue and eigenvector derivatives with respect to one parameter."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from functools import cached_property
from typing import Protocol, runtime_checkable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numpy.typing import ArrayLike

from ._eigen import EigenPair
from ._errors import DimensionError, InvalidInputError, RepeatedEigenvalueError
from ._sparse import FloatArray, IntArray, SymSparseMatrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ParamDerivatives:
    """Global ``dK/dp_k`` and ``dM/dp_k``."""

    dK: SymSparseMatrix
    dM: SymSparseMatrix
    k: int = 0

    def __post_init__(self) -> None:
        if self.dK.order != self.dM.order:
            raise DimensionError(
                f"dK has order {self.dK.order} but dM has order {self.dM.order}"
            )

    @property
    def order(self) -> int:
        return self.dK.order


@dataclass(frozen=True, eq=False)
class ModeDerivative:
    dlambda: float
    dphi: FloatArray


@dataclass(frozen=True, eq=False)
class LocalDerivatives:
    """Dense derivative blocks on the DOF footprint of one parameter."""

    dofs: IntArray
    dk: FloatArray
    dm: FloatArray


@dataclass(frozen=True, eq=False)
class LocalDerivativeBatch:
    """Footprints of all parameters stacked as ``(q, m)`` and ``(q, m, m)``.

    Shorter footprints are padded with DOF 0 and zero blocks.
    """

    dofs: IntArray
    dk: FloatArray
    dm: FloatArray

    @property
    def count(self) -> int:
        return int(self.dofs.shape[0])

    def _gather(self, x: FloatArray, ks: slice | IntArray) -> FloatArray:
        return np.asarray(x, dtype=np.float64)[self.dofs[ks]]

    def dk_form(
        self, x: ArrayLike, y: ArrayLike, ks: slice | IntArray = slice(None)
    ) -> FloatArray:
        """Return ``x.T dK_k y`` for every selected ``k``."""
        return np.einsum(
            "ka,kab,kb->k", self._gather(x, ks), self.dk[ks], self._gather(y, ks)
        )

    def dm_form(
        self, x: ArrayLike, y: ArrayLike, ks: slice | IntArray = slice(None)
    ) -> FloatArray:
        """Return ``x.T dM_k y`` for every selected ``k``."""
        return np.einsum(
            "ka,kab,kb->k", self._gather(x, ks), self.dm[ks], self._gather(y, ks)
        )

    def columns(
        self, phi: ArrayLike, lam: float, ks: slice | IntArray, order: int
    ) -> FloatArray:
        """Return the ``(order, len(ks))`` block of ``(dK_k - lam dM_k) phi``."""
        local_phi = self._gather(phi, ks)
        local = np.einsum("kab,kb->ka", self.dk[ks] - lam * self.dm[ks], local_phi)
        dofs = self.dofs[ks]
        out = np.zeros((order, dofs.shape[0]))
        # padded slots repeat DOF 0
        np.add.at(out, (dofs, np.arange(dofs.shape[0])[:, None]), local)
        return out


@runtime_checkable
class DerivativeProvider(Protocol):
    """Source of ``dK/dp_k`` and ``dM/dp_k`` for every parameter ``k``."""

    @property
    def count(self) -> int: ...

    @property
    def order(self) -> int: ...

    def local(self, k: int) -> LocalDerivatives: ...

    def batch(self) -> LocalDerivativeBatch: ...

    def param_derivatives(self, k: int) -> ParamDerivatives: ...


class MatrixDerivatives:
    """Derivative provider backed by explicit global matrices."""

    def __init__(self, derivatives: Sequence[ParamDerivatives]) -> None:
        if not derivatives:
            raise InvalidInputError("at least one parameter derivative is required")
        orders = {pd.order for pd in derivatives}
        if len(orders) != 1:
            raise DimensionError(f"parameter derivatives have mixed orders {orders}")
        self._derivatives = tuple(derivatives)
        self._order = orders.pop()

    @property
    def count(self) -> int:
        return len(self._derivatives)

    @property
    def order(self) -> int:
        return self._order

    def param_derivatives(self, k: int) -> ParamDerivatives:
        if not 0 <= k < self.count:
            raise InvalidInputError(
                f"parameter index {k} out of range for {self.count} parameters"
            )
        return self._derivatives[k]

    def local(self, k: int) -> LocalDerivatives:
        pd = self.param_derivatives(k)
        dk = pd.dK.to_scipy()
        dm = pd.dM.to_scipy()
        dofs = np.union1d(
            np.unique(dk.nonzero()[0]), np.unique(dm.nonzero()[0])
        ).astype(np.intp)
        return LocalDerivatives(
            dofs=dofs,
            dk=dk[dofs][:, dofs].toarray(),
            dm=dm[dofs][:, dofs].toarray(),
        )

    @cached_property
    def _batch(self) -> LocalDerivativeBatch:
        locals_ = [self.local(k) for k in range(self.count)]
        width = max(1, max(loc.dofs.size for loc in locals_))
        dofs = np.zeros((self.count, width), dtype=np.intp)
        dk = np.zeros((self.count, width, width))
        dm = np.zeros((self.count, width, width))
        for k, loc in enumerate(locals_):
            m = loc.dofs.size
            dofs[k, :m] = loc.dofs
            dk[k, :m, :m] = loc.dk
            dm[k, :m, :m] = loc.dm
        return LocalDerivativeBatch(dofs=dofs, dk=dk, dm=dm)

    def batch(self) -> LocalDerivativeBatch:
        return self._batch


def _check_orders(*orders: int) -> None:
    if len(set(orders)) != 1:
        raise DimensionError(f"operands have mismatched orders {sorted(set(orders))}")


def _as_rhs(f: ArrayLike, order: int) -> FloatArray:
    rhs = np.array(f, dtype=np.float64)
    if rhs.shape[0] != order:
        raise DimensionError(
            f"right-hand side of length {rhs.shape[0]} does not match order {order}"
        )
    return rhs


def pivot_index(phi: ArrayLike) -> int:
    """Index of the largest ``|phi_j|``; ties go to the smallest index."""
    vector = np.asarray(phi, dtype=np.float64)
    if not np.any(vector):
        raise InvalidInputError("cannot pin a row of the zero vector")
    return int(np.argmax(np.abs(vector)))


class NelsonSystem:
    """``K - lambda M`` with row and column ``j`` pinned, factorized once.

    ``j`` is the position of the largest eigenvector entry, and the pinned
    diagonal takes ``K_jj``.
    """

    def __init__(self, k: SymSparseMatrix, m: SymSparseMatrix, pair: EigenPair) -> None:
        _check_orders(k.order, m.order, pair.order)
        self.pair = pair
        self.order = k.order
        self.pivot = pivot_index(pair.phi)
        self._m_phi = m.matvec(pair.phi)

        keep = np.ones(self.order)
        keep[self.pivot] = 0.0
        mask = sp.diags(keep)
        shifted = sp.csr_matrix(k.to_scipy() - pair.eigenvalue * m.to_scipy())
        pinned = mask @ shifted @ mask + sp.csr_matrix(
            ([k.diagonal()[self.pivot]], ([self.pivot], [self.pivot])),
            shape=(self.order, self.order),
        )
        try:
            self._lu = spla.splu(sp.csc_matrix(pinned))
        except RuntimeError as exc:
            raise RepeatedEigenvalueError(
                f"pinned system of mode {pair.index} is singular ({exc})"
            ) from exc
        logger.debug(
            "factorized pinned system of mode %d, pivot row %d", pair.index, self.pivot
        )

    def solve(self, f: ArrayLike) -> FloatArray:
        """Solve the pinned system with ``f_j`` zeroed."""
        rhs = _as_rhs(f, self.order)
        rhs[self.pivot] = 0.0
        return np.asarray(self._lu.solve(rhs), dtype=np.float64)

    def derivative(self, f: ArrayLike, half_dm: ArrayLike | float) -> FloatArray:
        """Return ``eta + c phi`` with ``c = -phi.T M eta - half_dm``.

        ``half_dm`` is ``phi.T dM phi / 2``, a scalar or one value per column.
        """
        eta = self.solve(f)
        c = -(self._m_phi @ eta) - np.asarray(half_dm, dtype=np.float64)
        phi = self.pair.phi if eta.ndim == 1 else self.pair.phi[:, None]
        return eta + c * phi


class BorderedSystem:
    """``[[K - lambda M, M phi], [phi.T M, 0]]`` factorized once."""

    def __init__(self, k: SymSparseMatrix, m: SymSparseMatrix, pair: EigenPair) -> None:
        _check_orders(k.order, m.order, pair.order)
        self.pair = pair
        self.order = k.order + 1
        m_phi = m.matvec(pair.phi)[:, None]
        shifted = k.to_scipy() - pair.eigenvalue * m.to_scipy()
        bordered = sp.bmat(
            [[shifted, sp.csr_matrix(m_phi)], [sp.csr_matrix(m_phi.T), None]],
            format="csc",
        )
        try:
            self._lu = spla.splu(bordered)
        except RuntimeError as exc:
            raise RepeatedEigenvalueError(
                f"bordered system of mode {pair.index} is singular ({exc})"
            ) from exc
        logger.debug("factorized bordered system of order %d", self.order)

    def solve(self, rhs: ArrayLike) -> FloatArray:
        return np.asarray(self._lu.solve(_as_rhs(rhs, self.order)), dtype=np.float64)


def eigenvalue_derivative(
    pair: EigenPair, pd: ParamDerivatives, m: SymSparseMatrix
) -> float:
    """Return ``phi.T (dK - lambda dM) phi`` for an M-normalized pair.

    >>> from modal_sens._sparse import SymSparseMatrix as S
    >>> pair = EigenPair(1, 4.0, [0.5])
    >>> pd = ParamDerivatives(S.identity(1), S.diagonal_matrix([0.0]))
    >>> eigenvalue_derivative(pair, pd, S.diagonal_matrix([4.0]))
    0.25
    """
    _check_orders(pair.order, pd.order, m.order)
    phi = pair.phi
    return pd.dK.bilinear(phi, phi) - pair.eigenvalue * pd.dM.bilinear(phi, phi)


def _forward_rhs(
    m: SymSparseMatrix, pair: EigenPair, pd: ParamDerivatives, dlambda: float
) -> FloatArray:
    phi = pair.phi
    return -(
        pd.dK.matvec(phi)
        - dlambda * m.matvec(phi)
        - pair.eigenvalue * pd.dM.matvec(phi)
    )


def nelson_eigvec_derivative(
    k: SymSparseMatrix,
    m: SymSparseMatrix,
    pair: EigenPair,
    pd: ParamDerivatives,
    dlambda: float,
    system: NelsonSystem | None = None,
) -> FloatArray:
    """Nelson's homogeneous-plus-particular eigenvector derivative."""
    _check_orders(k.order, m.order, pair.order, pd.order)
    if system is None:
        system = NelsonSystem(k, m, pair)
    half_dm = 0.5 * pd.dM.bilinear(pair.phi, pair.phi)
    return system.derivative(_forward_rhs(m, pair, pd, dlambda), half_dm)


def algebraic_eigvec_derivative(
    k: SymSparseMatrix,
    m: SymSparseMatrix,
    pair: EigenPair,
    pd: ParamDerivatives,
    system: BorderedSystem | None = None,
) -> ModeDerivative:
    """Solve the bordered system for both derivatives at once.

    The last unknown is ``-dlambda``.
    """
    _check_orders(k.order, m.order, pair.order, pd.order)
    if system is None:
        system = BorderedSystem(k, m, pair)
    phi = pair.phi
    rhs = np.empty(k.order + 1)
    rhs[:-1] = -(pd.dK.matvec(phi) - pair.eigenvalue * pd.dM.matvec(phi))
    rhs[-1] = -0.5 * pd.dM.bilinear(phi, phi)
    solution = system.solve(rhs)
    return ModeDerivative(dlambda=-float(solution[-1]), dphi=solution[:-1])


def derivative_residuals(
    k: SymSparseMatrix,
    m: SymSparseMatrix,
    pair: EigenPair,
    pd: ParamDerivatives,
    derivative: ModeDerivative,
) -> tuple[float, float]:
    """Return the differentiated eigen-equation residual and normalization gap."""
    phi = pair.phi
    lhs = k.matvec(derivative.dphi) - pair.eigenvalue * m.matvec(derivative.dphi)
    residual = lhs - _forward_rhs(m, pair, pd, derivative.dlambda)
    scale = max(float(np.linalg.norm(lhs)), float(np.linalg.norm(k.matvec(phi))))
    normalization = 2.0 * m.bilinear(phi, derivative.dphi) + pd.dM.bilinear(phi, phi)
    return float(np.linalg.norm(residual)) / scale, abs(float(normalization))
