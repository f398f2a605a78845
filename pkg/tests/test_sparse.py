"""Symmetric sparse storage and the LDLᵀ factorization."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from modal_sens._errors import DimensionError, InvalidInputError, ZeroPivotError
from modal_sens._sparse import (
    ORDERINGS,
    SymSparseMatrix,
    assemble,
    ldlt_factorize,
    ldlt_solve,
    matvec,
    read_matrix_market,
    write_matrix_market,
)


def _laplacian(n: int) -> SymSparseMatrix:
    rows = np.concatenate([np.arange(n), np.arange(n - 1)])
    cols = np.concatenate([np.arange(n), np.arange(1, n)])
    values = np.concatenate([np.full(n, 2.0), np.full(n - 1, -1.0)])
    return SymSparseMatrix.from_coo(n, rows, cols, values)


def test_assemble_sums_duplicates() -> None:
    """Repeated positions add up."""
    a = assemble(2, [(0, 0, 1.0), (0, 0, 1.0), (0, 1, -1.0), (1, 1, 1.0)])
    assert a.to_dense().tolist() == [[2.0, -1.0], [-1.0, 1.0]]


def test_assemble_mirrors_lower_entries() -> None:
    """An entry given below the diagonal lands in the upper triangle."""
    a = assemble(2, [(1, 0, 3.0)])
    assert a.nnz == 1
    assert a.col_indices.tolist() == [1]
    assert a.to_dense().tolist() == [[0.0, 3.0], [3.0, 0.0]]


def test_assemble_rejects_out_of_range_index() -> None:
    """Indices beyond the order are refused."""
    with pytest.raises(InvalidInputError):
        assemble(2, [(0, 2, 1.0)])


def test_matvec_uses_full_symmetric_matrix() -> None:
    """The stored triangle implies the full product."""
    a = assemble(2, [(0, 0, 2.0), (0, 1, -1.0), (1, 1, 1.0)])
    np.testing.assert_allclose(matvec(a, [1.0, 1.0]), [1.0, 0.0])


def test_matvec_rejects_wrong_length() -> None:
    """A vector of the wrong length is a dimension error."""
    with pytest.raises(DimensionError):
        _laplacian(3).matvec(np.ones(4))


def test_bilinear_and_scaled() -> None:
    """``x.T A y`` and ``c A`` agree with the dense forms."""
    a = _laplacian(5)
    x = np.arange(5.0)
    y = np.ones(5)
    assert a.bilinear(x, y) == pytest.approx(x @ a.to_dense() @ y)
    np.testing.assert_allclose(a.scaled(-2.0).to_dense(), -2.0 * a.to_dense())


def test_add_requires_same_order() -> None:
    """Matrices of different orders cannot be added."""
    with pytest.raises(DimensionError):
        _laplacian(3) + _laplacian(4)


def test_stored_arrays_are_read_only() -> None:
    """The CSR arrays cannot be modified in place."""
    a = _laplacian(3)
    with pytest.raises(ValueError):
        a.values[0] = 1.0


@pytest.mark.parametrize("ordering", ORDERINGS)
def test_ldlt_solves_with_every_ordering(ordering: str) -> None:
    """All orderings give the same solution and reconstruct ``A``."""
    a = _laplacian(30)
    b = np.linspace(-1.0, 1.0, 30)
    factor = ldlt_factorize(a, ordering=ordering)
    x = ldlt_solve(factor, b)
    np.testing.assert_allclose(a.matvec(x), b, atol=1e-10)
    np.testing.assert_allclose(factor.reconstruct().toarray(), a.to_dense(), atol=1e-12)
    assert factor.ordering == ordering
    assert sorted(factor.permutation.tolist()) == list(range(30))


def test_ldlt_solves_column_blocks() -> None:
    """Several right-hand sides solve in one call."""
    a = _laplacian(10)
    b = np.random.default_rng(3).standard_normal((10, 4))
    x = ldlt_factorize(a).solve(b)
    np.testing.assert_allclose(a.to_dense() @ x, b, atol=1e-10)


def test_ldlt_indefinite_inertia() -> None:
    """A shifted matrix reports its eigenvalues below the shift."""
    a = _laplacian(20)
    eigenvalues = np.linalg.eigvalsh(a.to_dense())
    shift = 0.5 * (eigenvalues[2] + eigenvalues[3])
    factor = ldlt_factorize(a + SymSparseMatrix.identity(20).scaled(-shift))
    assert factor.negative_pivots == 3


def test_ldlt_zero_pivot() -> None:
    """A singular matrix raises ``ZeroPivotError``."""
    singular = SymSparseMatrix.from_dense([[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(ZeroPivotError):
        ldlt_factorize(singular, ordering="NATURAL")


def test_ldlt_unknown_ordering() -> None:
    """Only the supported orderings are accepted."""
    with pytest.raises(InvalidInputError, match="ordering"):
        ldlt_factorize(_laplacian(3), ordering="METIS")


def test_matrix_market_keeps_entries(tmp_path: Path) -> None:
    """A symmetric Matrix Market file reads back to the same matrix."""
    a = _laplacian(6)
    path = tmp_path / "a.mtx"
    write_matrix_market(a, path)
    assert "symmetric" in path.read_text().splitlines()[0]
    np.testing.assert_array_equal(read_matrix_market(path).to_dense(), a.to_dense())
