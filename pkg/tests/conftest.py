"""Shared models for the test suite."""

from __future__ import annotations

from collections.abc import Callable

import numpy as np
import pytest
from numpy.typing import ArrayLike

from modal_sens._characteristic import Characteristic, MfCharacteristic
from modal_sens._eigen import ModalSolution, solve_modes
from modal_sens._engines import SensitivityProblem
from modal_sens._fe import DesignVector, PlateDerivatives, PlateModel, build_plate
from modal_sens._modal import MatrixDerivatives, ParamDerivatives
from modal_sens._sparse import SymSparseMatrix


class ChainModel:
    """Two springs in series with unit masses; ``p = [k1]``.

    ``K = [[k1 + 1, -1], [-1, 1]]`` and ``M = I``.
    """

    parameter_upper_bound = float("inf")

    def assemble(self, p: ArrayLike) -> tuple[SymSparseMatrix, SymSparseMatrix]:
        k1 = float(np.asarray(p, dtype=np.float64)[0])
        k = SymSparseMatrix.from_dense([[k1 + 1.0, -1.0], [-1.0, 1.0]])
        return k, SymSparseMatrix.identity(2)

    def derivatives(self) -> MatrixDerivatives:
        dk = SymSparseMatrix.from_coo(2, [0], [0], [1.0])
        dm = SymSparseMatrix.from_coo(2, [0], [0], [0.0])
        return MatrixDerivatives([ParamDerivatives(dk, dm, 0)])


@pytest.fixture
def chain() -> ChainModel:
    """The two-spring chain at ``k1 = 1``."""
    return ChainModel()


@pytest.fixture
def chain_modes(chain: ChainModel) -> ModalSolution:
    """Both modes of the chain."""
    k, m = chain.assemble([1.0])
    return solve_modes(k, m, 2)


def _chain_problem(
    chain: ChainModel, characteristic: Characteristic, mode: int = 1
) -> SensitivityProblem:
    k, m = chain.assemble([1.0])
    solution = solve_modes(k, m, 2)
    return SensitivityProblem(
        k=k,
        m=m,
        pair=solution.mode(mode),
        shifted=solution.shifted,
        derivatives=chain.derivatives(),
        characteristic=characteristic,
        params=np.array([1.0]),
        spectrum=solution.spectrum,
    )


@pytest.fixture
def chain_mf(chain: ChainModel) -> SensitivityProblem:
    """Modal flexibility of the first chain mode."""
    return _chain_problem(chain, MfCharacteristic())


@pytest.fixture
def small_plate() -> PlateModel:
    """A 4 by 2 plate: 30 DOFs and 8 elements."""
    return build_plate(4, 2)


@pytest.fixture
def graded_design(small_plate: PlateModel) -> DesignVector:
    """Densities strictly inside (0, 1) with no symmetry."""
    return DesignVector(np.linspace(0.55, 0.9, small_plate.n_elements))


@pytest.fixture
def small_plate_modes(
    small_plate: PlateModel, graded_design: DesignVector
) -> ModalSolution:
    """Three lowest modes of the graded plate."""
    k, m = small_plate.assemble(graded_design)
    return solve_modes(k, m, 3)


def _plate_problem(
    model: PlateModel,
    design: DesignVector,
    characteristic: Characteristic,
    mode: int = 1,
) -> SensitivityProblem:
    k, m = model.assemble(design)
    solution = solve_modes(k, m, mode + 1)
    return SensitivityProblem(
        k=k,
        m=m,
        pair=solution.mode(mode),
        shifted=solution.shifted,
        derivatives=PlateDerivatives(model, design),
        characteristic=characteristic,
        params=design.densities,
        spectrum=solution.spectrum,
    )


@pytest.fixture
def make_chain_problem(
    chain: ChainModel,
) -> Callable[..., SensitivityProblem]:
    """Factory of chain problems for a characteristic and mode."""
    return lambda characteristic, mode=1: _chain_problem(chain, characteristic, mode)


@pytest.fixture
def make_plate_problem() -> Callable[..., SensitivityProblem]:
    """Factory of plate problems: ``(model, design, characteristic, mode=1)``."""
    return _plate_problem
