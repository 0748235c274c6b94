"""Receding-horizon control over the learned surrogate."""

from .controller import CompositeController
from .mpc import (
    AffineSurrogate,
    CallableSurrogate,
    LinearizedModel,
    ModelSurrogate,
    NmpcConfig,
    NmpcSolution,
    condense,
    increments_to_inputs,
    linearize_trajectory,
    nmpc_step,
    prediction_matrices,
)
from .qp import AdmmResult, AdmmSettings, QpProblem, admm_solve
