"""Dataset collection and surrogate training driven by a run configuration."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from ..pinn import (
    CollocationBoxes,
    IdentifiedDynamics,
    MlpModel,
    TrainHistory,
    init_mlp,
    sample_collocation_array,
    train,
)
from ..sim import Dataset, collect_dataset, payload_grid
from .config import RunConfig


def collect_from_config(cfg: RunConfig) -> Dataset:
    """Draw the payload instances named by ``[pinn]`` and record the training set."""
    p = cfg["pinn"]
    rng = np.random.default_rng([cfg.seed, 11])
    masses = rng.uniform(p["mass_min"], p["mass_max"], p["instances"])
    payloads = payload_grid(masses, seed=cfg.seed)
    return collect_dataset(payloads, cfg.robot_params(), cfg.dataset_config(), cfg.schedule(), cfg.reference())


def train_from_config(cfg: RunConfig, V: np.ndarray, Y: np.ndarray,
                      log_every: int = 0) -> tuple[MlpModel, TrainHistory]:
    """Train a fresh surrogate on ``(V, Y)`` with collocation points drawn around ``V``.

    ``log_every`` > 0 logs the loss every that many epochs; it does not change
    the result. Raises ``TrainingError`` (carrying the last finite model) if
    training diverges.
    """
    p = cfg["pinn"]
    boxes = CollocationBoxes.from_inputs(V, margin=p["collocation_margin"], T_range=(p["t_min"], p["t_max"]))
    tc = replace(cfg.train_config(), log_every=log_every)
    V_phy = sample_collocation_array(tc.n_collocation or len(V), boxes, seed=cfg.seed)
    model = init_mlp(cfg.surrogate_sizes(), seed=cfg.seed)
    dyn = IdentifiedDynamics(cfg.robot_params(), cfg.schedule())
    return train(model, V, Y, V_phy, dyn, tc)
