"""Clamped rectangular plate built from 4-node plane-stress quadrilaterals."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.typing import ArrayLike

from ._errors import DimensionError, InvalidInputError
from ._modal import LocalDerivativeBatch, LocalDerivatives, ParamDerivatives
from ._sparse import FloatArray, IntArray, SymSparseMatrix

logger = logging.getLogger(__name__)

DOFS_PER_NODE = 2
NODES_PER_ELEMENT = 4
ELEMENT_DOFS = DOFS_PER_NODE * NODES_PER_ELEMENT
PENALTY_FACTOR = 1e8
STIFFNESS_EXPONENT = 3

_GAUSS = 1.0 / np.sqrt(3.0)
_GAUSS_POINTS = (
    (-_GAUSS, -_GAUSS),
    (_GAUSS, -_GAUSS),
    (_GAUSS, _GAUSS),
    (-_GAUSS, _GAUSS),
)
_NODE_XI = np.array([-1.0, 1.0, 1.0, -1.0])
_NODE_ETA = np.array([-1.0, -1.0, 1.0, 1.0])


@dataclass(frozen=True)
class Material:
    """Isotropic linear elastic material in plane stress."""

    youngs_modulus: float = 2e11
    poisson_ratio: float = 0.3
    density: float = 7800.0
    thickness: float = 1.0

    def __post_init__(self) -> None:
        if not self.youngs_modulus > 0:
            raise InvalidInputError(
                f"Young's modulus must be positive, got {self.youngs_modulus}"
            )
        if not 0 <= self.poisson_ratio < 0.5:
            raise InvalidInputError(
                f"Poisson's ratio must lie in [0, 0.5), got {self.poisson_ratio}"
            )
        if not self.density > 0:
            raise InvalidInputError(f"density must be positive, got {self.density}")
        if not self.thickness > 0:
            raise InvalidInputError(
                f"thickness must be positive, got {self.thickness}"
            )

    def plane_stress(self) -> FloatArray:
        """Return the 3x3 plane-stress constitutive matrix."""
        e, nu = self.youngs_modulus, self.poisson_ratio
        return (e / (1.0 - nu**2)) * np.array(
            [[1.0, nu, 0.0], [nu, 1.0, 0.0], [0.0, 0.0, (1.0 - nu) / 2.0]]
        )


@dataclass(frozen=True)
class ElementMatrices:
    """Unit-density stiffness ``ke`` and mass ``me`` of one element, in the
    element's local DOF order."""

    ke: FloatArray
    me: FloatArray


@dataclass(frozen=True, eq=False)
class DesignVector:
    """One pseudo-density per element, each in (0, 1]."""

    densities: FloatArray

    def __post_init__(self) -> None:
        rho = np.array(self.densities, dtype=np.float64).ravel()
        if rho.size == 0:
            raise InvalidInputError("design vector must not be empty")
        bad = np.flatnonzero(~((rho > 0.0) & (rho <= 1.0)))
        if bad.size:
            raise InvalidInputError(
                f"density of element {bad[0]} is {rho[bad[0]]}, expected 0 < rho <= 1"
            )
        rho.flags.writeable = False
        object.__setattr__(self, "densities", rho)

    @classmethod
    def uniform(cls, q: int, value: float = 1.0) -> DesignVector:
        """Return a design with every density equal to ``value``."""
        return cls(np.full(q, value, dtype=np.float64))

    def with_density(self, k: int, value: float) -> DesignVector:
        """Return a copy with element ``k`` set to ``value``."""
        rho = self.densities.copy()
        rho[k] = value
        return DesignVector(rho)

    def __len__(self) -> int:
        return int(self.densities.size)


def quad_element_matrices(
    coordinates: ArrayLike, material: Material
) -> ElementMatrices:
    """Integrate ``ke`` and the consistent ``me`` with 2x2 Gauss points.

    ``coordinates`` holds the four corner nodes counter-clockwise.
    """
    xy = np.asarray(coordinates, dtype=np.float64).reshape(NODES_PER_ELEMENT, 2)
    d = material.plane_stress()
    t = material.thickness
    ke = np.zeros((ELEMENT_DOFS, ELEMENT_DOFS))
    me = np.zeros((ELEMENT_DOFS, ELEMENT_DOFS))
    for xi, eta in _GAUSS_POINTS:
        shape = 0.25 * (1.0 + xi * _NODE_XI) * (1.0 + eta * _NODE_ETA)
        dshape = 0.25 * np.vstack(
            [_NODE_XI * (1.0 + eta * _NODE_ETA), _NODE_ETA * (1.0 + xi * _NODE_XI)]
        )
        jacobian = dshape @ xy
        det_j = float(np.linalg.det(jacobian))
        if det_j <= 0.0:
            raise InvalidInputError("element nodes must be ordered counter-clockwise")
        dshape_dx = np.linalg.solve(jacobian, dshape)

        b = np.zeros((3, ELEMENT_DOFS))
        b[0, 0::2] = dshape_dx[0]
        b[1, 1::2] = dshape_dx[1]
        b[2, 0::2] = dshape_dx[1]
        b[2, 1::2] = dshape_dx[0]
        n = np.zeros((2, ELEMENT_DOFS))
        n[0, 0::2] = shape
        n[1, 1::2] = shape

        # unit Gauss weights
        ke += t * det_j * (b.T @ d @ b)
        me += material.density * t * det_j * (n.T @ n)
    return ElementMatrices(ke=ke, me=me)


@dataclass(frozen=True)
class PlateModel:
    """Regular ``nx`` by ``ny`` grid of unit-square elements, corners clamped.

    Node ``iy * (nx + 1) + ix`` sits at ``(ix, iy)``; element ``iy * nx + ix``
    lists its nodes counter-clockwise from the lower left corner.
    """

    nx: int
    ny: int
    material: Material = Material()

    def __post_init__(self) -> None:
        if self.nx < 1 or self.ny < 1:
            raise InvalidInputError(
                f"plate needs at least one element per side, got {self.nx}x{self.ny}"
            )

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_dofs(self) -> int:
        return DOFS_PER_NODE * self.n_nodes

    @property
    def n_elements(self) -> int:
        return self.nx * self.ny

    @property
    def parameter_upper_bound(self) -> float:
        return 1.0

    @cached_property
    def coordinates(self) -> FloatArray:
        """Node coordinates, shape ``(n_nodes, 2)``."""
        iy, ix = np.divmod(np.arange(self.n_nodes), self.nx + 1)
        return np.column_stack([ix, iy]).astype(np.float64)

    @cached_property
    def connectivity(self) -> IntArray:
        """Element node lists, shape ``(n_elements, 4)``."""
        iy, ix = np.divmod(np.arange(self.n_elements), self.nx)
        first = iy * (self.nx + 1) + ix
        above = first + self.nx + 1
        return np.column_stack([first, first + 1, above + 1, above]).astype(np.intp)

    @cached_property
    def element_dofs(self) -> IntArray:
        """Global DOFs of every element, shape ``(n_elements, 8)``."""
        nodes = self.connectivity
        dofs = np.empty((self.n_elements, ELEMENT_DOFS), dtype=np.intp)
        dofs[:, 0::2] = DOFS_PER_NODE * nodes
        dofs[:, 1::2] = DOFS_PER_NODE * nodes + 1
        return dofs

    @cached_property
    def clamped_nodes(self) -> IntArray:
        corners = {0, self.nx, self.ny * (self.nx + 1), self.n_nodes - 1}
        return np.array(sorted(corners), dtype=np.intp)

    @cached_property
    def clamped_dofs(self) -> IntArray:
        nodes = self.clamped_nodes
        return np.sort(np.concatenate([2 * nodes, 2 * nodes + 1]))

    @cached_property
    def element(self) -> ElementMatrices:
        return quad_element_matrices(
            self.coordinates[self.connectivity[0]], self.material
        )

    @cached_property
    def penalty(self) -> float:
        """Clamping penalty from the unit-density stiffness diagonal."""
        diag = np.bincount(
            self.element_dofs.ravel(),
            weights=np.tile(np.diag(self.element.ke), self.n_elements),
            minlength=self.n_dofs,
        )
        return PENALTY_FACTOR * float(diag.max())

    def assemble(
        self, densities: ArrayLike | DesignVector
    ) -> tuple[SymSparseMatrix, SymSparseMatrix]:
        """Return ``(K, M)`` for a density vector."""
        design = densities if isinstance(densities, DesignVector) else DesignVector(
            np.asarray(densities, dtype=np.float64)
        )
        return assemble_global(self, design)


def build_plate(nx: int, ny: int, material: Material | None = None) -> PlateModel:
    """Return the clamped plate with ``2 (nx + 1) (ny + 1)`` DOFs.

    >>> build_plate(20, 10).n_dofs
    462
    """
    return PlateModel(nx, ny, Material() if material is None else material)


def element_matrices(model: PlateModel) -> ElementMatrices:
    """Return the element matrices shared by every element of the plate."""
    return model.element


def _check_design(model: PlateModel, design: DesignVector) -> None:
    if len(design) != model.n_elements:
        raise DimensionError(
            f"design has {len(design)} densities, plate has {model.n_elements} elements"
        )


def _check_element(model: PlateModel, k: int) -> None:
    if not 0 <= k < model.n_elements:
        raise InvalidInputError(
            f"element index {k} out of range for {model.n_elements} elements"
        )


def _scatter_upper(
    dofs: IntArray, blocks: FloatArray
) -> tuple[IntArray, IntArray, FloatArray]:
    """Flatten per-element blocks into upper-triangle coordinates."""
    rows = np.repeat(dofs, ELEMENT_DOFS, axis=1).ravel()
    cols = np.tile(dofs, (1, ELEMENT_DOFS)).ravel()
    values = blocks.reshape(dofs.shape[0], -1).ravel()
    upper = rows <= cols
    return rows[upper], cols[upper], values[upper]


def assemble_global(
    model: PlateModel, design: DesignVector
) -> tuple[SymSparseMatrix, SymSparseMatrix]:
    """Assemble ``K = sum rho^3 K_e`` and ``M = sum rho M_e``.

    Clamped DOFs receive a diagonal penalty on ``K`` only.
    """
    _check_design(model, design)
    rho = design.densities
    ke, me = model.element.ke, model.element.me
    dofs = model.element_dofs

    rows, cols, k_values = _scatter_upper(
        dofs, (rho**STIFFNESS_EXPONENT)[:, None, None] * ke
    )
    clamped = model.clamped_dofs
    stiffness = SymSparseMatrix.from_coo(
        model.n_dofs,
        np.concatenate([rows, clamped]),
        np.concatenate([cols, clamped]),
        np.concatenate([k_values, np.full(clamped.size, model.penalty)]),
    )
    _, _, m_values = _scatter_upper(dofs, rho[:, None, None] * me)
    mass = SymSparseMatrix.from_coo(model.n_dofs, rows, cols, m_values)
    logger.info(
        "assembled %dx%d plate: %d DOFs, %d elements, nnz(K)=%d",
        model.nx,
        model.ny,
        model.n_dofs,
        model.n_elements,
        stiffness.nnz,
    )
    return stiffness, mass


def _element_matrix(model: PlateModel, k: int, block: FloatArray) -> SymSparseMatrix:
    rows, cols, values = _scatter_upper(model.element_dofs[k : k + 1], block)
    return SymSparseMatrix.from_coo(model.n_dofs, rows, cols, values)


def stiffness_derivative(
    model: PlateModel, design: DesignVector, k: int
) -> SymSparseMatrix:
    """Return ``dK/drho_k = 3 rho_k^2 K_ek`` scattered to global indices."""
    _check_design(model, design)
    _check_element(model, k)
    scale = STIFFNESS_EXPONENT * design.densities[k] ** (STIFFNESS_EXPONENT - 1)
    return _element_matrix(model, k, scale * model.element.ke)


def mass_derivative(model: PlateModel, k: int) -> SymSparseMatrix:
    """Return ``dM/drho_k = M_ek``."""
    _check_element(model, k)
    return _element_matrix(model, k, model.element.me)


@dataclass(frozen=True, eq=False)
class PlateDerivatives:
    """Per-element derivatives of ``K`` and ``M`` for one design."""

    model: PlateModel
    design: DesignVector

    def __post_init__(self) -> None:
        _check_design(self.model, self.design)

    @property
    def count(self) -> int:
        return self.model.n_elements

    @property
    def order(self) -> int:
        return self.model.n_dofs

    def _stiffness_scale(self) -> FloatArray:
        rho = self.design.densities
        return STIFFNESS_EXPONENT * rho ** (STIFFNESS_EXPONENT - 1)

    def local(self, k: int) -> LocalDerivatives:
        _check_element(self.model, k)
        return LocalDerivatives(
            dofs=self.model.element_dofs[k],
            dk=self._stiffness_scale()[k] * self.model.element.ke,
            dm=self.model.element.me,
        )

    @cached_property
    def _batch(self) -> LocalDerivativeBatch:
        element = self.model.element
        q = self.count
        return LocalDerivativeBatch(
            dofs=self.model.element_dofs,
            dk=self._stiffness_scale()[:, None, None] * element.ke,
            dm=np.broadcast_to(element.me, (q, ELEMENT_DOFS, ELEMENT_DOFS)),
        )

    def batch(self) -> LocalDerivativeBatch:
        return self._batch

    def param_derivatives(self, k: int) -> ParamDerivatives:
        return ParamDerivatives(
            dK=stiffness_derivative(self.model, self.design, k),
            dM=mass_derivative(self.model, k),
            k=k,
        )
