"""Joint sparse precision-matrix inference over tree-coupled populations.

The estimator fits K gene networks at once: each population's precision
matrix is pulled toward a soft-threshold-and-invert map of its sample
covariance, exact l0 penalties prune off-diagonal entries, and quadratic
coupling along a tree hypergraph shares structure between neighboring
populations. Every off-diagonal coordinate is solved to global optimality
by dynamic programming over piecewise quadratics on the tree.
"""

__version__ = "0.1.0"

from .errors import (
    AllConfigurationsInfeasible,
    ComputationError,
    InsufficientZeroPositions,
    MismatchedGeneSets,
    NonFiniteInput,
    NotATree,
    NotPositiveDefinite,
    ShapeMismatch,
    SingularAfterJitter,
    TooLargeForOracle,
    ValidationError,
)
from .model import (
    CategoricalPrecisionSet,
    ExpressionMatrix,
    PrecisionSet,
    SolverConfig,
    TreeHypergraph,
)
from .covmap import (
    BackwardMapSet,
    SampleCovariance,
    backward_map,
    backward_map_set,
    sample_covariance,
    soft_threshold,
)
from .treesolve import (
    GeneralTreeProblem,
    ScalarTreeProblem,
    brute_force_offdiag,
    solve_diagonal,
    solve_offdiag_l0,
)
from .inference import elem0_infer, elem0_infer_from_maps, elem0_objective
from .categorical import (
    CategoricalProblem,
    categorical_infer,
    categorical_objective,
)
from .selection import (
    DEFAULT_GRID,
    ParameterGrid,
    SelectionResult,
    ebic_score,
    select_parameters,
)
from .synth import (
    GroundTruth,
    SynthSpec,
    generate,
    generate_categorical,
    generate_hypergraph,
    generate_network_cascade,
    mst_from_distances,
    sample_data,
)
from .evalkit import differential_edges, score
from . import benchmarks, fileio

__all__ = [
    "__version__",
    # errors
    "ValidationError", "ComputationError", "ShapeMismatch",
    "MismatchedGeneSets", "NotATree", "NonFiniteInput", "TooLargeForOracle",
    "SingularAfterJitter", "NotPositiveDefinite", "InsufficientZeroPositions",
    "AllConfigurationsInfeasible",
    # core types
    "ExpressionMatrix", "TreeHypergraph", "SolverConfig", "PrecisionSet",
    "CategoricalPrecisionSet",
    # covariance / backward map
    "SampleCovariance", "BackwardMapSet", "sample_covariance",
    "soft_threshold", "backward_map", "backward_map_set",
    # per-coordinate solver
    "GeneralTreeProblem", "ScalarTreeProblem", "solve_offdiag_l0",
    "brute_force_offdiag", "solve_diagonal",
    # inference
    "elem0_infer", "elem0_infer_from_maps", "elem0_objective",
    "CategoricalProblem", "categorical_infer", "categorical_objective",
    # selection
    "ParameterGrid", "DEFAULT_GRID", "SelectionResult", "ebic_score",
    "select_parameters",
    # synthetic benchmarks
    "SynthSpec", "GroundTruth", "generate", "generate_hypergraph",
    "generate_network_cascade", "generate_categorical", "mst_from_distances",
    "sample_data",
    # evaluation
    "score", "differential_edges",
    # submodules
    "benchmarks", "fileio",
]
