"""Public API of the modal-sens library."""

from ._bench import (
    BenchReport,
    EngineResult,
    emit,
    export_matrices,
    prepare,
    read_report,
    reference_shape,
    run,
    sweep,
)
from ._characteristic import (
    Characteristic,
    MacCharacteristic,
    MfCharacteristic,
    MseCharacteristic,
    load_reference_vector,
    mac_partials,
    mac_value,
    make_characteristic,
    mf_partials,
    mf_value,
    mse_partials,
    mse_value,
)
from ._config import (
    PLATE_GRID,
    CharacteristicSpec,
    ModelSpec,
    RunConfig,
    load_config,
    load_sweep,
)
from ._eigen import EigenPair, ModalSolution, m_normalize, mode_residual, solve_modes
from ._engines import (
    ENGINES,
    GDiagnostic,
    GOperator,
    SensitivityProblem,
    SensitivityReport,
    adjoint_algebraic,
    adjoint_nelson,
    assert_g_nonsingular,
    forward_algebraic,
    forward_nelson,
    g_modal_projection,
    pm_sensitivity,
    run_engine,
)
from ._errors import (
    ConvergenceError,
    DimensionError,
    InvalidInputError,
    ModalSensError,
    ModeCrossingError,
    RepeatedEigenvalueError,
    SingularOperatorError,
    SqmrBreakdownError,
    StageError,
    ZeroPivotError,
)
from ._fe import (
    DesignVector,
    Material,
    PlateDerivatives,
    PlateModel,
    assemble_global,
    build_plate,
    mass_derivative,
    stiffness_derivative,
)
from ._modal import (
    BorderedSystem,
    MatrixDerivatives,
    ModeDerivative,
    NelsonSystem,
    ParamDerivatives,
    algebraic_eigvec_derivative,
    eigenvalue_derivative,
    nelson_eigvec_derivative,
)
from ._sparse import (
    LdltFactorization,
    SymSparseMatrix,
    assemble,
    ldlt_factorize,
    ldlt_solve,
    matvec,
    read_matrix_market,
    write_matrix_market,
)
from ._sqmr import SolveCounter, SqmrConfig, SqmrResult, sqmr_solve
from ._verification import (
    ErrorReport,
    FdConfig,
    efficiency_ratio,
    fd_sensitivity,
    linf_entry,
    normalized_error,
    relative_error,
)

__all__ = (
    "PLATE_GRID",
    "ENGINES",
    # sparse core
    "SymSparseMatrix",
    "LdltFactorization",
    "assemble",
    "matvec",
    "ldlt_factorize",
    "ldlt_solve",
    "read_matrix_market",
    "write_matrix_market",
    # plate model
    "Material",
    "DesignVector",
    "PlateModel",
    "PlateDerivatives",
    "build_plate",
    "assemble_global",
    "stiffness_derivative",
    "mass_derivative",
    # eigenproblem
    "EigenPair",
    "ModalSolution",
    "solve_modes",
    "m_normalize",
    "mode_residual",
    # mode derivatives
    "ParamDerivatives",
    "MatrixDerivatives",
    "ModeDerivative",
    "NelsonSystem",
    "BorderedSystem",
    "eigenvalue_derivative",
    "nelson_eigvec_derivative",
    "algebraic_eigvec_derivative",
    # characteristics
    "Characteristic",
    "MacCharacteristic",
    "MseCharacteristic",
    "MfCharacteristic",
    "make_characteristic",
    "load_reference_vector",
    "mac_value",
    "mac_partials",
    "mse_value",
    "mse_partials",
    "mf_value",
    "mf_partials",
    # engines
    "SensitivityProblem",
    "SensitivityReport",
    "GOperator",
    "GDiagnostic",
    "forward_nelson",
    "forward_algebraic",
    "adjoint_nelson",
    "adjoint_algebraic",
    "pm_sensitivity",
    "run_engine",
    "g_modal_projection",
    "assert_g_nonsingular",
    "SolveCounter",
    "SqmrConfig",
    "SqmrResult",
    "sqmr_solve",
    # verification
    "FdConfig",
    "ErrorReport",
    "fd_sensitivity",
    "relative_error",
    "efficiency_ratio",
    "linf_entry",
    "normalized_error",
    # benchmark
    "ModelSpec",
    "CharacteristicSpec",
    "RunConfig",
    "BenchReport",
    "EngineResult",
    "load_config",
    "load_sweep",
    "prepare",
    "reference_shape",
    "run",
    "sweep",
    "emit",
    "read_report",
    "export_matrices",
    # errors
    "ModalSensError",
    "DimensionError",
    "InvalidInputError",
    "ZeroPivotError",
    "RepeatedEigenvalueError",
    "ConvergenceError",
    "SqmrBreakdownError",
    "SingularOperatorError",
    "ModeCrossingError",
    "StageError",
)
