"""The five sensitivity engines and the rank-one corrected operator."""

from __future__ import annotations

import dataclasses
from collections.abc import Callable

import numpy as np
import pytest

from modal_sens._characteristic import (
    Characteristic,
    MacCharacteristic,
    MfCharacteristic,
    MseCharacteristic,
)
from modal_sens._eigen import (
    EigenPair,
    ModalSolution,
    ShiftedFactorization,
    solve_modes,
)
from modal_sens._engines import (
    ENGINE_LABELS,
    ENGINES,
    GOperator,
    SensitivityProblem,
    adjoint_state_algebraic,
    adjoint_state_nelson,
    assert_g_nonsingular,
    g_modal_projection,
    pm_state,
    run_engine,
)
from modal_sens._errors import (
    DimensionError,
    InvalidInputError,
    SingularOperatorError,
)
from modal_sens._fe import DesignVector, PlateModel
from modal_sens._modal import MatrixDerivatives, ParamDerivatives
from modal_sens._sparse import SymSparseMatrix, ldlt_factorize
from modal_sens._sqmr import SqmrConfig
from modal_sens._verification import fd_sensitivity, normalized_error

TIGHT = SqmrConfig(tolerance=1e-10)

ProblemFactory = Callable[..., SensitivityProblem]


def _plate_characteristic(name: str, model: PlateModel) -> Characteristic:
    if name == "mf":
        return MfCharacteristic()
    if name == "mse":
        return MseCharacteristic.for_plate(model, 5)
    k, m = model.assemble(DesignVector.uniform(model.n_elements, 0.7))
    return MacCharacteristic(solve_modes(k, m, 2).mode(1).phi)


@pytest.mark.parametrize("engine", list(ENGINES))
def test_chain_modal_flexibility(chain_mf: SensitivityProblem, engine: str) -> None:
    """Every engine gives ``dMF_1/dk1`` of the chain."""
    values = run_engine(engine, chain_mf, TIGHT).values
    assert values.shape == (1,)
    assert values[0] == pytest.approx(-1.894427, abs=1e-5)


@pytest.mark.parametrize("engine", list(ENGINES))
def test_chain_mac_matches_differences(
    make_chain_problem: ProblemFactory, chain: object, engine: str
) -> None:
    """MAC against a fixed shape agrees with the finite-difference oracle."""
    characteristic = MacCharacteristic([1.0, 0.0])
    problem = make_chain_problem(characteristic)
    reference = fd_sensitivity(chain, [1.0], characteristic, 1)
    values = run_engine(engine, problem, TIGHT).values
    np.testing.assert_allclose(values, reference, rtol=1e-5)


@pytest.mark.parametrize("engine", list(ENGINES))
def test_chain_second_mode(make_chain_problem: ProblemFactory, engine: str) -> None:
    """The engines also handle the top mode of the chain."""
    problem = make_chain_problem(MfCharacteristic(), mode=2)
    lam = (3 + np.sqrt(5)) / 2
    phi0_squared = problem.pair.phi[0] ** 2
    expected = -phi0_squared / lam**2
    values = run_engine(engine, problem, TIGHT).values
    assert values[0] == pytest.approx(expected, rel=1e-6)


@pytest.mark.parametrize("mode", [1, 2])
@pytest.mark.parametrize("name", ["mac", "mse", "mf"])
def test_plate_engines_agree(
    small_plate: PlateModel,
    graded_design: DesignVector,
    make_plate_problem: ProblemFactory,
    name: str,
    mode: int,
) -> None:
    """All engines agree with each other and, entry by entry, with finite
    differences to 0.1 %."""
    characteristic = _plate_characteristic(name, small_plate)
    problem = make_plate_problem(small_plate, graded_design, characteristic, mode)
    results = {engine: run_engine(engine, problem, TIGHT).values for engine in ENGINES}
    reference = results["fn"]
    oracle = fd_sensitivity(small_plate, graded_design, characteristic, mode)
    assert normalized_error(reference, oracle) < 0.1
    significant = np.abs(oracle) > 1e-2 * np.abs(oracle).max()
    assert significant.any()
    for engine, values in results.items():
        assert values.shape == (small_plate.n_elements,)
        assert normalized_error(values, reference) < 1e-3, engine
        relative = np.abs(values - oracle)[significant] / np.abs(oracle)[significant]
        assert relative.max() <= 1e-3, engine


def test_plate_second_mode(
    small_plate: PlateModel,
    graded_design: DesignVector,
    make_plate_problem: ProblemFactory,
) -> None:
    """A higher mode goes through the same engines."""
    problem = make_plate_problem(small_plate, graded_design, MfCharacteristic(), 2)
    pm = run_engine("pm", problem, TIGHT).values
    adam = run_engine("adam", problem, TIGHT).values
    assert normalized_error(pm, adam) < 1e-3


@pytest.mark.parametrize(
    ("engine", "factorizations", "solves"),
    [("fn", 1, 8), ("fa", 1, 8), ("adne", 1, 1), ("adam", 1, 1), ("pm", 0, 1)],
)
def test_solve_counts(
    small_plate: PlateModel,
    graded_design: DesignVector,
    make_plate_problem: ProblemFactory,
    engine: str,
    factorizations: int,
    solves: int,
) -> None:
    """Forward engines solve once per parameter, the others once in total."""
    problem = make_plate_problem(small_plate, graded_design, MfCharacteristic())
    counts = run_engine(engine, problem).counts
    assert counts["factorizations"] == factorizations
    assert counts["linear_solves"] == solves
    if engine == "pm":
        assert counts["krylov_iterations"] >= 1
        assert (
            counts["preconditioner_applications"] == counts["krylov_iterations"] + 1
        )
    else:
        assert counts["krylov_iterations"] == 0


def test_report_metadata(chain_mf: SensitivityProblem) -> None:
    """The report carries the method, a timing and the largest entry."""
    report = run_engine("adam", chain_mf)
    assert report.method == "adam"
    assert report.seconds >= 0.0
    assert report.argmax == 0
    assert report.linf == pytest.approx(-1.894427, abs=1e-5)
    assert set(ENGINE_LABELS) == set(ENGINES)


def test_unknown_engine(chain_mf: SensitivityProblem) -> None:
    """Only the five engines are known."""
    with pytest.raises(InvalidInputError, match="unknown engine"):
        run_engine("lanczos", chain_mf)


def test_adjoint_states_agree(
    small_plate: PlateModel,
    graded_design: DesignVector,
    make_plate_problem: ProblemFactory,
) -> None:
    """Nelson's and the bordered adjoint give the same vector and multiplier."""
    problem = make_plate_problem(
        small_plate, graded_design, MseCharacteristic.for_plate(small_plate, 2)
    )
    nelson = adjoint_state_nelson(problem)
    algebraic = adjoint_state_algebraic(problem)
    assert nelson.alpha == pytest.approx(algebraic.alpha, rel=1e-8)
    np.testing.assert_allclose(
        nelson.v, algebraic.v, atol=1e-6 * np.abs(algebraic.v).max()
    )


def test_pm_state_solves_g(
    small_plate: PlateModel,
    graded_design: DesignVector,
    make_plate_problem: ProblemFactory,
) -> None:
    """The Krylov solution satisfies ``G y = dF/dphi``."""
    problem = make_plate_problem(small_plate, graded_design, MfCharacteristic())
    state = pm_state(problem, TIGHT)
    assert state.sqmr.converged
    operator = GOperator(problem.k, problem.m, problem.pair)
    rhs = problem.partials()[2]
    residual = np.linalg.norm(operator(state.y) - rhs) / np.linalg.norm(rhs)
    assert residual <= 1e-8


def test_g_operator_dense_matches_apply(
    small_plate: PlateModel,
    graded_design: DesignVector,
    make_plate_problem: ProblemFactory,
) -> None:
    """The assembled ``G`` agrees with the matrix-free product."""
    problem = make_plate_problem(small_plate, graded_design, MfCharacteristic())
    operator = GOperator(problem.k, problem.m, problem.pair)
    x = np.random.default_rng(6).standard_normal((problem.order, 3))
    expected = operator.dense() @ x
    np.testing.assert_allclose(
        operator.apply(x), expected, atol=1e-9 * np.abs(expected).max()
    )
    linear = operator.as_linear_operator()
    np.testing.assert_allclose(linear.matvec(x[:, 0]), operator(x[:, 0]))


def test_g_maps_mode_to_mass_times_mode(chain_mf: SensitivityProblem) -> None:
    """``G phi = M phi`` for the analysed mode."""
    operator = GOperator(chain_mf.k, chain_mf.m, chain_mf.pair)
    phi = chain_mf.pair.phi
    np.testing.assert_allclose(operator(phi), phi, atol=1e-12)


def test_g_modal_projection(
    chain_mf: SensitivityProblem, chain_modes: ModalSolution
) -> None:
    """``Phi.T G Phi`` is diagonal with one in the analysed slot."""
    projection = g_modal_projection(chain_mf, chain_modes.pairs)
    np.testing.assert_allclose(projection, np.diag([1.0, np.sqrt(5.0)]), atol=1e-12)


def test_g_nonsingular_on_chain(chain_mf: SensitivityProblem) -> None:
    """Distinct eigenvalues give a well-posed ``G``."""
    diagnostic = assert_g_nonsingular(chain_mf)
    assert diagnostic.method == "dense"
    assert diagnostic.spectral_gap == pytest.approx(np.sqrt(5.0))
    assert diagnostic.relative_residual <= 1e-12


def test_g_nonsingular_on_plate(
    small_plate: PlateModel,
    graded_design: DesignVector,
    make_plate_problem: ProblemFactory,
) -> None:
    """The random solve with ``G`` leaves a small residual on the plate."""
    problem = make_plate_problem(small_plate, graded_design, MfCharacteristic(), 2)
    assert assert_g_nonsingular(problem).relative_residual <= 1e-5


def _dense_problem(
    k: SymSparseMatrix,
    m: SymSparseMatrix,
    pair: EigenPair,
    spectrum: np.ndarray | None,
) -> SensitivityProblem:
    zero = SymSparseMatrix.diagonal_matrix(np.zeros(k.order))
    return SensitivityProblem(
        k=k,
        m=m,
        pair=pair,
        shifted=ShiftedFactorization(0.0, ldlt_factorize(k)),
        derivatives=MatrixDerivatives([ParamDerivatives(zero, zero)]),
        characteristic=MfCharacteristic(),
        params=np.array([1.0]),
        spectrum=spectrum,
    )


def test_g_modal_projection_on_random_dense_system() -> None:
    """On a random SPD pencil ``Phi.T G Phi`` holds the eigenvalue gaps, and
    a solve with ``G`` leaves a round-off residual."""
    n = 40
    rng = np.random.default_rng(21)
    a = rng.standard_normal((n, n))
    b = rng.standard_normal((n, n))
    k = SymSparseMatrix.from_dense(a @ a.T + n * np.eye(n))
    m = SymSparseMatrix.from_dense(b @ b.T / n + np.eye(n))
    solution = solve_modes(k, m, n, method="dense")
    pair = solution.mode(10)
    problem = _dense_problem(k, m, pair, solution.spectrum)
    gaps = solution.spectrum - pair.eigenvalue
    gaps[9] = 1.0
    projection = g_modal_projection(problem, solution.pairs)
    scale = float(np.abs(solution.spectrum).max())
    np.testing.assert_allclose(projection, np.diag(gaps), atol=1e-8 * scale)
    assert assert_g_nonsingular(problem).relative_residual <= 1e-10


def test_repeated_eigenvalue_means_singular_g() -> None:
    """With ``K = M = I`` every eigenvalue repeats and ``G`` is singular."""
    identity = SymSparseMatrix.identity(3)
    pair = EigenPair(1, 1.0, [1.0, 0.0, 0.0])
    with pytest.raises(SingularOperatorError, match="repeated"):
        assert_g_nonsingular(_dense_problem(identity, identity, pair, np.ones(3)))
    # without a spectrum the solve itself finds the singularity
    with pytest.raises(SingularOperatorError):
        assert_g_nonsingular(_dense_problem(identity, identity, pair, None))


def test_problem_checks_parameter_count(chain_mf: SensitivityProblem) -> None:
    """One parameter value per derivative."""
    with pytest.raises(DimensionError):
        dataclasses.replace(chain_mf, params=np.array([1.0, 2.0]))


def test_problem_spectral_gap(chain_mf: SensitivityProblem) -> None:
    """Without a spectrum the gap is unbounded."""
    assert chain_mf.spectral_gap() == pytest.approx(np.sqrt(5.0))
    assert dataclasses.replace(chain_mf, spectrum=None).spectral_gap() == np.inf
    assert (chain_mf.q, chain_mf.order) == (1, 2)
