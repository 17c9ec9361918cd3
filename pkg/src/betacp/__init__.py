"""betacp: beta-divergence factorization of sparse 3-way QoS tensors.

Predicts unobserved (user, service, time) quality values by fitting a
rank-R nonnegative CP model with per-mode biases to the observed entries
only. Training uses multiplicative update rules (nonnegativity without
projection); the divergence shape and the two penalty weights can either
be fixed or self-adapted by a particle swarm scored on validation RMSE.

A compiled extension handles the per-entry accumulation hot loops when
available; a NumPy fallback (selectable via BETACP_PURE_PYTHON=1)
produces results that match to the last few ulps. See
``betacp.kernels.backend()``.
"""

from .data import (
    DataSplit,
    ObservedTensor,
    Observation,
    generate_synthetic,
    load_observations,
    split,
    write_split_files,
)
from .errors import (
    BetacpError,
    DataError,
    ModelFormatError,
    TrainingDiverged,
    UsageError,
)
from .metrics import EvalResult, evaluate, mae, rmse
from .model import (
    FactorModel,
    PredictionCache,
    init_random,
    load_model,
    refresh_cache,
    save_model,
)
from .objective import (
    HyperParams,
    ObjectiveParts,
    divergence_array,
    divergence_scalar,
    grad_a,
    grad_b,
    grad_c,
    grad_s,
    grad_t,
    grad_u,
    objective,
    objective_parts,
)
from .swarm import (
    Particle,
    SwarmConfig,
    SwarmResult,
    SwarmRow,
    SwarmState,
    adapt_train,
    fitness,
    step_velocity_position,
    swarm_search,
    update_bests,
    write_swarm_csv,
)
from .trainer import (
    IterationRecord,
    TrainConfig,
    TrainReport,
    run_sweep,
    train,
    update_group_S,
    update_group_T,
    update_group_U,
    update_group_a,
    update_group_b,
    update_group_c,
)

__version__ = "0.1.0"

__all__ = [
    "BetacpError", "DataError", "DataSplit", "EvalResult", "FactorModel",
    "HyperParams", "IterationRecord", "ModelFormatError", "ObjectiveParts",
    "Observation", "ObservedTensor", "Particle", "PredictionCache",
    "SwarmConfig", "SwarmResult", "SwarmRow", "SwarmState", "TrainConfig",
    "TrainReport", "TrainingDiverged", "UsageError", "adapt_train",
    "divergence_array", "divergence_scalar", "evaluate", "fitness",
    "generate_synthetic", "grad_a", "grad_b", "grad_c", "grad_s", "grad_t",
    "grad_u", "init_random", "load_model", "load_observations", "mae",
    "objective", "objective_parts", "refresh_cache", "rmse", "run_sweep",
    "save_model", "split", "step_velocity_position", "swarm_search", "train",
    "update_bests", "update_group_S", "update_group_T", "update_group_U",
    "update_group_a", "update_group_b", "update_group_c", "write_split_files",
    "write_swarm_csv",
]
