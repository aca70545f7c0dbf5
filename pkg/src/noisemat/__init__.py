"""Label-noise transition matrix estimation from nearest-neighbor label consensus."""

from .core import (
    ConfigError,
    ConsensusStats,
    DataError,
    EstimatorConfig,
    GenerationError,
    LabeledDataset,
    NumericalError,
    PriorVector,
    TransitionMatrix,
    TupleSet,
    cyclic_shift_matrix,
    l11_error,
    validate,
)
from .consensus import average_rounds, count_consensus, forward_model, forward_model_soft
from .knn import DistanceMetric, NeighborIndex, feasible_tuple_ratio, find_2nn, sample_tuples
from .local import CoveragePlan, LocalDataset, build_local_datasets, estimate_local
from .solver import (
    SolverResult,
    SolverState,
    estimate_transition_matrix,
    gradient,
    objective,
    solve,
)
from .synth import (
    ClusterSpec,
    NoiseSpec,
    apply_instance_noise,
    apply_matrix_noise,
    apply_soft_clusterability,
    apply_symmetric_noise,
    generate_features,
)
from .train import LinearModel, accuracy, train_ce, train_forward

__version__ = "0.1.0"

__all__ = [
    "ClusterSpec",
    "ConfigError",
    "ConsensusStats",
    "CoveragePlan",
    "DataError",
    "DistanceMetric",
    "EstimatorConfig",
    "GenerationError",
    "LabeledDataset",
    "LinearModel",
    "LocalDataset",
    "NeighborIndex",
    "NoiseSpec",
    "NumericalError",
    "PriorVector",
    "SolverResult",
    "SolverState",
    "TransitionMatrix",
    "TupleSet",
    "accuracy",
    "apply_instance_noise",
    "apply_matrix_noise",
    "apply_soft_clusterability",
    "apply_symmetric_noise",
    "average_rounds",
    "build_local_datasets",
    "count_consensus",
    "cyclic_shift_matrix",
    "estimate_local",
    "estimate_transition_matrix",
    "feasible_tuple_ratio",
    "find_2nn",
    "forward_model",
    "forward_model_soft",
    "generate_features",
    "gradient",
    "l11_error",
    "objective",
    "sample_tuples",
    "solve",
    "train_ce",
    "train_forward",
    "validate",
]
