"""Koopman-invariant subspace search by principal-vector pruning."""

from .data import (
    DictEntry,
    Dictionary,
    DuffingParams,
    TrajectoryDataset,
    build_dictionary,
    duffing_step,
    eval_dictionary,
    simulate,
)
from .edmd import (
    EdmdModel,
    EigenfunctionSet,
    GridSpec,
    LiftedData,
    consistency_eigendecomposition,
    evaluate_eigenfunction_on_grid,
    fit_edmd,
    koopman_eigenfunctions,
    lift,
)
from .eigupdate import DiagPlusRankOne, EigenPairs, ThinQr, incremental_qr_update, secular_eigen
from .errors import (
    ConvergenceError,
    DegenerateInputError,
    EvaluationError,
    InvalidInputError,
    KoopPruneError,
    NumericalAsymmetryError,
    NumericalDriftError,
    PreconditionError,
    PruningError,
    RankDeficiencyError,
)
from .geometry import (
    InnerProductSpec,
    PrincipalDecomposition,
    SubspaceBasis,
    alternate_characterization_check,
    invariance_proximity,
    principal_decomposition,
    worst_case_relative_error,
)
from .pruning import (
    METHODS,
    PrincipalState,
    PruneConfig,
    PruneReport,
    init_state,
    prune_step_naive,
    prune_step_rank1,
    prune_step_rfb,
    run_pruning,
    tune_epsilon,
)

__version__ = "0.1.0"
