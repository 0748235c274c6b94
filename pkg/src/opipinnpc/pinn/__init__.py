"""Payload-conditioned neural surrogate of the one-step dynamics."""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .losses import IdentifiedDynamics, LinearDynamics, data_loss, physics_loss, physics_residual, total_loss
from .mlp import (
    SURROGATE_SIZES,
    MlpModel,
    backward,
    forward,
    forward_batch,
    init_mlp,
    input_jacobian,
    time_derivative,
)
from .optim import Adam, lbfgs, strong_wolfe
from .train import (
    CollocationBoxes,
    CollocationPoint,
    TrainConfig,
    TrainHistory,
    TrainingError,
    fit_normalization,
    sample_collocation,
    sample_collocation_array,
    train,
)
