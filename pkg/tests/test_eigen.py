"""Generalized eigensolver: values, normalization and failure modes."""

from __future__ import annotations

import numpy as np
import pytest

from modal_sens._eigen import ModalSolution, m_normalize, mode_residual, solve_modes
from modal_sens._errors import InvalidInputError, RepeatedEigenvalueError
from modal_sens._fe import DesignVector, PlateModel
from modal_sens._sparse import SymSparseMatrix


def test_chain_first_mode(chain_modes: ModalSolution) -> None:
    """The chain's first mode matches the closed form."""
    first = chain_modes.mode(1)
    assert first.eigenvalue == pytest.approx(0.381966, abs=1e-6)
    np.testing.assert_allclose(first.phi, [0.525731, 0.850651], atol=1e-6)
    assert first.index == 1


def test_chain_spectrum(chain_modes: ModalSolution) -> None:
    """Both eigenvalues, ascending."""
    np.testing.assert_allclose(
        chain_modes.spectrum, [(3 - np.sqrt(5)) / 2, (3 + np.sqrt(5)) / 2]
    )


def test_m_normalize_euclidean_case() -> None:
    """With ``M = I`` normalization is the Euclidean one."""
    assert m_normalize([2.0, 0.0], SymSparseMatrix.identity(2)).tolist() == [1.0, 0.0]


def test_m_normalize_makes_largest_entry_positive() -> None:
    """The sign convention puts the largest magnitude entry positive."""
    phi = m_normalize([0.1, -3.0], SymSparseMatrix.diagonal_matrix([1.0, 4.0]))
    assert phi[1] > 0
    assert phi @ np.diag([1.0, 4.0]) @ phi == pytest.approx(1.0)


def test_m_normalize_rejects_zero() -> None:
    """The zero vector has no M-norm."""
    with pytest.raises(InvalidInputError):
        m_normalize([0.0, 0.0], SymSparseMatrix.identity(2))


def _spring_chain(n: int) -> tuple[SymSparseMatrix, SymSparseMatrix]:
    rows = np.concatenate([np.arange(n), np.arange(n - 1)])
    cols = np.concatenate([np.arange(n), np.arange(1, n)])
    values = np.concatenate([np.full(n, 2.0), np.full(n - 1, -1.0)])
    k = SymSparseMatrix.from_coo(n, rows, cols, values)
    return k, SymSparseMatrix.diagonal_matrix(np.linspace(1.0, 2.0, n))


def test_lanczos_matches_dense() -> None:
    """Shift-invert Lanczos and dense eigh agree on a spring chain."""
    k, m = _spring_chain(40)
    lanczos = solve_modes(k, m, 4, method="lanczos")
    dense = solve_modes(k, m, 4, method="dense")
    np.testing.assert_allclose(lanczos.spectrum, dense.spectrum, rtol=1e-9)
    for a, b in zip(lanczos.pairs, dense.pairs):
        np.testing.assert_allclose(a.phi, b.phi, atol=1e-7)


def test_plate_residuals_and_orthogonality(
    small_plate: PlateModel, graded_design: DesignVector
) -> None:
    """Computed pairs satisfy the eigen equation and M-orthonormality."""
    k, m = small_plate.assemble(graded_design)
    solution = solve_modes(k, m, 3)
    basis = np.column_stack([pair.phi for pair in solution.pairs])
    np.testing.assert_allclose(basis.T @ m.matvec(basis), np.eye(3), atol=1e-8)
    for pair in solution.pairs:
        assert mode_residual(k, m, pair) < 1e-6


def test_repeated_eigenvalues_rejected() -> None:
    """Identical eigenvalues cannot be differentiated."""
    identity = SymSparseMatrix.identity(4)
    with pytest.raises(RepeatedEigenvalueError):
        solve_modes(identity, identity, 2, method="dense")


def test_shift_above_first_eigenvalue_rejected() -> None:
    """A shift above a requested mode is refused."""
    k = SymSparseMatrix.from_dense([[2.0, -1.0], [-1.0, 1.0]])
    with pytest.raises(InvalidInputError, match="shift"):
        solve_modes(k, SymSparseMatrix.identity(2), 1, mu=1.0)


@pytest.mark.parametrize("n_modes", [0, 3])
def test_mode_count_range(n_modes: int) -> None:
    """Between one and N modes."""
    k = SymSparseMatrix.from_dense([[2.0, -1.0], [-1.0, 1.0]])
    with pytest.raises(InvalidInputError):
        solve_modes(k, SymSparseMatrix.identity(2), n_modes)


def test_mode_lookup_out_of_range(chain_modes: ModalSolution) -> None:
    """Only computed modes can be looked up."""
    with pytest.raises(InvalidInputError, match="not computed"):
        chain_modes.mode(3)


def test_shifted_factorization_kept(chain_modes: ModalSolution) -> None:
    """The factorization of ``K - mu M`` solves with ``K`` at ``mu = 0``."""
    x = chain_modes.shifted.solve([1.0, 0.0])
    np.testing.assert_allclose(x, [1.0, 1.0])
