"""Modal characteristics and their partial derivatives."""

from __future__ import annotations

import abc
import logging
from collections.abc import Mapping
from os import PathLike
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike

from ._errors import DimensionError, InvalidInputError
from ._fe import STIFFNESS_EXPONENT, PlateModel
from ._sparse import FloatArray, IntArray, SymSparseMatrix

logger = logging.getLogger(__name__)

CHARACTERISTICS = ("mac", "mse", "mf")

Partials = tuple[FloatArray, float, FloatArray]


def _vector(x: ArrayLike, what: str) -> FloatArray:
    vector = np.asarray(x, dtype=np.float64)
    if vector.ndim != 1:
        raise DimensionError(f"{what} must be a 1-D vector")
    if not np.any(vector):
        raise InvalidInputError(f"{what} must be nonzero")
    return vector


def mac_value(phi_j: ArrayLike, phi_i: ArrayLike) -> float:
    """Return the modal assurance criterion of two mode shapes.

    >>> round(mac_value([1.0, 0.0], [0.525731, 0.850651]), 6)
    0.276393
    """
    a = _vector(phi_j, "reference vector")
    b = _vector(phi_i, "mode shape")
    if a.size != b.size:
        raise DimensionError(f"vectors of length {a.size} and {b.size}")
    return float(np.dot(a, b) ** 2 / (np.dot(a, a) * np.dot(b, b)))


def mac_partials(phi_j: ArrayLike, phi_i: ArrayLike, q: int = 0) -> Partials:
    """MAC does not depend on ``p`` or ``lambda``; only the gradient in ``phi_i``."""
    a = _vector(phi_j, "reference vector")
    b = _vector(phi_i, "mode shape")
    if a.size != b.size:
        raise DimensionError(f"vectors of length {a.size} and {b.size}")
    aa, bb, ab = np.dot(a, a), np.dot(b, b), np.dot(a, b)
    gradient = 2.0 * (ab * a / (aa * bb) - ab**2 * b / (aa * bb**2))
    return np.zeros(q), 0.0, gradient


def mse_value(k_r: SymSparseMatrix, phi_i: ArrayLike) -> float:
    """Return ``phi.T K_r phi / 2``."""
    return 0.5 * k_r.bilinear(phi_i, phi_i)


def mse_partials(
    k_r: SymSparseMatrix,
    phi_i: ArrayLike,
    dk_r: Mapping[int, SymSparseMatrix] | None = None,
    q: int = 0,
) -> Partials:
    """Partials of the element strain energy.

    ``dk_r`` maps each parameter with a nonzero ``dK_r/dp_k`` to that matrix.
    """
    phi = np.asarray(phi_i, dtype=np.float64)
    dp = np.zeros(q)
    for k, matrix in (dk_r or {}).items():
        dp[k] = 0.5 * matrix.bilinear(phi, phi)
    return dp, 0.0, k_r.matvec(phi)


def mf_value(lam: float, phi_i: ArrayLike) -> float:
    """Return ``phi.T phi / lambda``.

    >>> round(mf_value(0.381966, [0.525731, 0.850651]), 5)
    2.61803
    """
    if not lam > 0:
        raise InvalidInputError(
            f"modal flexibility needs a positive eigenvalue, got {lam}; "
            "is the structure constrained?"
        )
    phi = np.asarray(phi_i, dtype=np.float64)
    return float(np.dot(phi, phi) / lam)


def mf_partials(lam: float, phi_i: ArrayLike, q: int = 0) -> Partials:
    """Partials of ``phi.T phi / lambda``; nothing depends on ``p`` directly."""
    mf_value(lam, phi_i)
    phi = np.asarray(phi_i, dtype=np.float64)
    return np.zeros(q), -float(np.dot(phi, phi)) / lam**2, 2.0 * phi / lam


class Characteristic(abc.ABC):
    """A scalar ``F(p, lambda, phi)`` of one mode and its partials."""

    name: str = ""

    @abc.abstractmethod
    def value(self, p: ArrayLike, lam: float, phi: ArrayLike) -> float:
        """Evaluate the characteristic."""

    @abc.abstractmethod
    def partial_p(self, p: ArrayLike, lam: float, phi: ArrayLike) -> FloatArray:
        """Explicit derivative in every parameter, length ``len(p)``."""

    @abc.abstractmethod
    def partial_lambda(self, p: ArrayLike, lam: float, phi: ArrayLike) -> float:
        """Derivative in the eigenvalue."""

    @abc.abstractmethod
    def partial_phi(self, p: ArrayLike, lam: float, phi: ArrayLike) -> FloatArray:
        """Gradient in the eigenvector."""

    def partials(self, p: ArrayLike, lam: float, phi: ArrayLike) -> Partials:
        return (
            self.partial_p(p, lam, phi),
            self.partial_lambda(p, lam, phi),
            self.partial_phi(p, lam, phi),
        )

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.name}>"


class MacCharacteristic(Characteristic):
    """MAC against a constant reference vector."""

    name = "mac"

    def __init__(self, reference: ArrayLike) -> None:
        reference = _vector(reference, "reference vector").copy()
        reference.flags.writeable = False
        self.reference = reference

    def value(self, p: ArrayLike, lam: float, phi: ArrayLike) -> float:
        return mac_value(self.reference, phi)

    def partial_p(self, p: ArrayLike, lam: float, phi: ArrayLike) -> FloatArray:
        return np.zeros(np.size(p))

    def partial_lambda(self, p: ArrayLike, lam: float, phi: ArrayLike) -> float:
        return 0.0

    def partial_phi(self, p: ArrayLike, lam: float, phi: ArrayLike) -> FloatArray:
        return mac_partials(self.reference, phi)[2]


class MseCharacteristic(Characteristic):
    """Strain energy of element ``element`` whose stiffness scales as ``p_r**exponent``.

    ``dofs`` and ``ke`` describe the unit-density element footprint.
    """

    name = "mse"

    def __init__(
        self,
        element: int,
        dofs: ArrayLike,
        ke: ArrayLike,
        order: int,
        exponent: float = STIFFNESS_EXPONENT,
    ) -> None:
        self.element = element
        self.dofs: IntArray = np.asarray(dofs, dtype=np.intp)
        self.ke: FloatArray = np.asarray(ke, dtype=np.float64)
        self.order = order
        self.exponent = exponent
        if self.ke.shape != (self.dofs.size, self.dofs.size):
            raise DimensionError(
                f"element block {self.ke.shape} does not match {self.dofs.size} DOFs"
            )

    @classmethod
    def for_plate(cls, model: PlateModel, element: int) -> MseCharacteristic:
        if not 0 <= element < model.n_elements:
            raise InvalidInputError(
                f"element index {element} out of range for {model.n_elements} elements"
            )
        return cls(
            element, model.element_dofs[element], model.element.ke, model.n_dofs
        )

    def _density(self, p: ArrayLike) -> float:
        rho = np.asarray(p, dtype=np.float64)
        if not 0 <= self.element < rho.size:
            raise InvalidInputError(
                f"element index {self.element} out of range for {rho.size} parameters"
            )
        return float(rho[self.element])

    def _unit_energy(self, phi: ArrayLike) -> float:
        local = np.asarray(phi, dtype=np.float64)[self.dofs]
        return 0.5 * float(local @ self.ke @ local)

    def element_matrix(self, p: ArrayLike) -> SymSparseMatrix:
        """Return ``K_r`` scattered to global indices."""
        scale = self._density(p) ** self.exponent
        rows = np.repeat(self.dofs, self.dofs.size)
        cols = np.tile(self.dofs, self.dofs.size)
        upper = rows <= cols
        return SymSparseMatrix.from_coo(
            self.order, rows[upper], cols[upper], (scale * self.ke).ravel()[upper]
        )

    def value(self, p: ArrayLike, lam: float, phi: ArrayLike) -> float:
        return self._density(p) ** self.exponent * self._unit_energy(phi)

    def partial_p(self, p: ArrayLike, lam: float, phi: ArrayLike) -> FloatArray:
        rho = self._density(p)
        out = np.zeros(np.size(p))
        out[self.element] = (
            self.exponent * rho ** (self.exponent - 1) * self._unit_energy(phi)
        )
        return out

    def partial_lambda(self, p: ArrayLike, lam: float, phi: ArrayLike) -> float:
        return 0.0

    def partial_phi(self, p: ArrayLike, lam: float, phi: ArrayLike) -> FloatArray:
        vector = np.asarray(phi, dtype=np.float64)
        if vector.size != self.order:
            raise DimensionError(
                f"mode shape of length {vector.size} does not match order {self.order}"
            )
        out = np.zeros(self.order)
        scale = self._density(p) ** self.exponent
        out[self.dofs] = scale * (self.ke @ vector[self.dofs])
        return out


class MfCharacteristic(Characteristic):
    """Modal flexibility ``phi.T phi / lambda``."""

    name = "mf"

    def value(self, p: ArrayLike, lam: float, phi: ArrayLike) -> float:
        return mf_value(lam, phi)

    def partial_p(self, p: ArrayLike, lam: float, phi: ArrayLike) -> FloatArray:
        return np.zeros(np.size(p))

    def partial_lambda(self, p: ArrayLike, lam: float, phi: ArrayLike) -> float:
        return mf_partials(lam, phi)[1]

    def partial_phi(self, p: ArrayLike, lam: float, phi: ArrayLike) -> FloatArray:
        return mf_partials(lam, phi)[2]


def load_reference_vector(path: str | PathLike[str]) -> FloatArray:
    """Read a reference mode shape from ``.npy`` or whitespace-separated text."""
    source = Path(path)
    if source.suffix == ".npy":
        vector = np.load(source)
    else:
        vector = np.loadtxt(source, dtype=np.float64)
    logger.debug("loaded reference vector of length %d from %s", vector.size, source)
    return np.asarray(vector, dtype=np.float64).ravel()


def make_characteristic(
    name: str,
    *,
    reference: ArrayLike | None = None,
    model: PlateModel | None = None,
    element: int | None = None,
) -> Characteristic:
    """Build a characteristic by name: ``mac``, ``mse`` or ``mf``."""
    if name == "mac":
        if reference is None:
            raise InvalidInputError("mac needs a reference vector")
        return MacCharacteristic(reference)
    if name == "mse":
        if model is None or element is None:
            raise InvalidInputError("mse needs a plate model and an element index")
        return MseCharacteristic.for_plate(model, element)
    if name == "mf":
        return MfCharacteristic()
    raise InvalidInputError(
        f"unknown characteristic {name!r}; expected one of {', '.join(CHARACTERISTICS)}"
    )
