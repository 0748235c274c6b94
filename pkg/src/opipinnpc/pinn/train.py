"""Collocation sampling and the Adam then L-BFGS training schedule."""

from __future__ import annotations

import csv
import logging
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from ..model import N_LEGS, PayloadEstimate
from .losses import data_loss, physics_loss, total_loss
from .mlp import MlpModel, pack_inputs
from .optim import Adam, lbfgs

log = logging.getLogger(__name__)

TROT_PATTERNS = np.array([[True, False, False, True], [False, True, True, False]])


@dataclass
class TrainConfig:
    adam_lr: float = 1e-3
    adam_epochs: int = 5000
    batch_size: int = 256
    lbfgs_memory: int = 20
    lbfgs_max_iter: int = 200
    physics_weight: float = 1.0
    n_collocation: int | None = None
    seed: int = 0
    log_every: int = 0

    def __post_init__(self):
        if not self.adam_lr > 0:
            raise ValueError("learning rate must be positive")
        if self.adam_epochs < 0 or self.lbfgs_max_iter < 0:
            raise ValueError("epoch and iteration counts must be non-negative")
        if self.batch_size < 1 or self.lbfgs_memory < 1:
            raise ValueError("batch size and L-BFGS memory must be positive")
        if self.physics_weight < 0:
            raise ValueError("physics weight must be non-negative")


@dataclass
class CollocationPoint:
    x: np.ndarray
    u: np.ndarray
    T: float
    omega_hat: PayloadEstimate

    def to_vector(self) -> np.ndarray:
        return pack_inputs(self.x, self.u, self.T, self.omega_hat)


@dataclass
class CollocationBoxes:
    """Per-column bounds on the 29 surrogate inputs.

    ``contact_patterns`` optionally restricts which feet may carry force: each
    draw picks one pattern and zeroes the swing feet, which stays inside the
    box as long as zero lies in every force interval.
    """

    lower: np.ndarray
    upper: np.ndarray
    contact_patterns: np.ndarray | None = None

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.lower.shape != self.upper.shape:
            raise ValueError("box bounds differ in shape")
        if np.any(self.lower > self.upper):
            bad = np.flatnonzero(self.lower > self.upper)
            raise ValueError(f"collocation box is not well ordered in columns {bad.tolist()}")
        if self.contact_patterns is not None:
            self.contact_patterns = np.atleast_2d(np.asarray(self.contact_patterns, dtype=bool))
            u = slice(12, 24)
            if np.any(self.lower[u] > 0) or np.any(self.upper[u] < 0):
                raise ValueError("contact patterns need zero inside every force interval")

    @classmethod
    def from_inputs(cls, V, margin: float = 0.05, T_range=None, omega_range=None,
                    contact_patterns=TROT_PATTERNS) -> "CollocationBoxes":
        """Bounding box of observed inputs, widened by ``margin`` of each span."""
        V = np.asarray(V, dtype=float)
        lo, hi = V.min(axis=0), V.max(axis=0)
        pad = margin * (hi - lo)
        lo, hi = lo - pad, hi + pad
        lo[12:24] = np.minimum(lo[12:24], 0.0)
        hi[12:24] = np.maximum(hi[12:24], 0.0)
        if T_range is not None:
            lo[24], hi[24] = T_range
        else:
            lo[24] = max(lo[24], 1e-4)
        if omega_range is not None:
            lo[25:29], hi[25:29] = np.asarray(omega_range[0]), np.asarray(omega_range[1])
        return cls(lo, hi, contact_patterns)


def sample_collocation_array(count: int, boxes: CollocationBoxes, seed: int = 0) -> np.ndarray:
    """``count`` uniform i.i.d. draws from ``boxes`` as rows of surrogate inputs."""
    if count < 0:
        raise ValueError("count must be non-negative")
    rng = np.random.default_rng(seed)
    V = rng.uniform(boxes.lower, boxes.upper, size=(count, boxes.lower.size))
    if boxes.contact_patterns is not None and count:
        pick = rng.integers(0, len(boxes.contact_patterns), size=count)
        swing = ~boxes.contact_patterns[pick]
        F = V[:, 12:24].reshape(count, N_LEGS, 3)
        F[swing] = 0.0
        V[:, 12:24] = F.reshape(count, 12)
    return V


def sample_collocation(count: int, boxes: CollocationBoxes, seed: int = 0) -> list[CollocationPoint]:
    V = sample_collocation_array(count, boxes, seed)
    return [CollocationPoint(v[0:12].copy(), v[12:24].copy(), float(v[24]),
                             PayloadEstimate.from_vector(v[25:29])) for v in V]


def _stats(A, min_scale):
    s = A.std(axis=0)
    return A.mean(axis=0), np.where(s > min_scale, s, 1.0)


def fit_normalization(model: MlpModel, V, labels, loss_dt: float | None = None,
                      min_scale: float = 1e-8) -> MlpModel:
    """Set input, output and head statistics from training data (in place, returned).

    ``loss_dt`` defaults to the most frequent step length in the data.
    """
    V = np.asarray(V, dtype=float)
    labels = np.asarray(labels, dtype=float)
    model.in_mean, model.in_scale = _stats(V, min_scale)
    model.out_mean, model.out_scale = _stats(labels, min_scale)
    model.rate_mean, model.rate_scale = _stats(model.rate_from_labels(V, labels), min_scale)
    if model.residual:
        T = V[:, model.time_index]
        model.t_range = (float(T.min()), float(T.max()))
        if loss_dt is None:
            vals, counts = np.unique(np.round(T, 12), return_counts=True)
            loss_dt = float(vals[np.argmax(counts)])
    model.loss_dt = float(loss_dt) if loss_dt is not None else 1.0
    return model


@dataclass
class TrainHistory:
    epoch: list = field(default_factory=list)
    phase: list = field(default_factory=list)
    mse_data: list = field(default_factory=list)
    mse_phy: list = field(default_factory=list)
    total: list = field(default_factory=list)

    def append(self, epoch: int, phase: str, mse_data: float, mse_phy: float, total: float):
        self.epoch.append(epoch)
        self.phase.append(phase)
        self.mse_data.append(mse_data)
        self.mse_phy.append(mse_phy)
        self.total.append(total)

    @property
    def final_total(self) -> float:
        return self.total[-1]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "mse_data", "mse_phy", "total"])
            for row in zip(self.epoch, self.mse_data, self.mse_phy, self.total):
                w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


class TrainingError(RuntimeError):
    def __init__(self, message: str, last_good: MlpModel, history: TrainHistory):
        super().__init__(message)
        self.last_good = last_good
        self.history = history


def evaluate(model: MlpModel, V, labels, V_phy, dynamics, physics_weight: float = 1.0):
    """(total, mse_data, mse_phy) without gradients."""
    res = total_loss(model, V, labels, V_phy, dynamics, physics_weight, need_grad=False)
    return res.total, res.mse_data, res.mse_phy


def train(model: MlpModel, V, labels, V_phy, dynamics, config: TrainConfig | None = None,
          fit_norm: bool = True) -> tuple[MlpModel, TrainHistory]:
    """Adam on shuffled mini-batches, then full-batch L-BFGS.

    ``V``/``labels`` are training inputs and next states, ``V_phy`` the
    collocation inputs. Each Adam step pairs a data batch with a slice of the
    collocation set of proportional size. History rows: ``init`` and
    ``adam-end`` are full-set losses, ``adam`` rows the mean mini-batch losses
    of each epoch, ``lbfgs`` rows the full-set loss after each iteration. A
    non-finite loss aborts with ``TrainingError`` carrying the last finite
    model.
    """
    cfg = config or TrainConfig()
    V = np.asarray(V, dtype=float)
    labels = np.asarray(labels, dtype=float)
    V_phy = np.zeros((0, V.shape[1])) if V_phy is None else np.asarray(V_phy, dtype=float)
    if V.shape[0] == 0:
        raise ValueError("training set is empty")
    model = model.copy()
    if fit_norm:
        fit_normalization(model, V, labels)
    rng = np.random.default_rng([cfg.seed, 2])
    hist = TrainHistory()
    lam = cfg.physics_weight
    n, n_phy = V.shape[0], V_phy.shape[0]
    n_batches = max(1, int(np.ceil(n / cfg.batch_size)))
    phy_batch = int(np.ceil(n_phy / n_batches)) if n_phy else 0

    def note(epoch, phase, d, p):
        tot = d + lam * p
        hist.append(epoch, phase, d, p, tot)
        if cfg.log_every and (epoch % cfg.log_every == 0 or phase == "adam-end"):
            log.info("%s %d: data %.3e phy %.3e total %.3e", phase, epoch, d, p, tot)
        return tot

    def record(epoch, phase, m):
        _, d, p = evaluate(m, V, labels, V_phy, dynamics, lam)
        return note(epoch, phase, d, p)

    last_good = model.copy()
    if not np.isfinite(record(0, "init", model)):
        raise TrainingError("non-finite loss at initialisation", last_good, hist)

    opt = Adam(lr=cfg.adam_lr)
    theta = model.get_params()
    for epoch in range(1, cfg.adam_epochs + 1):
        perm = rng.permutation(n)
        perm_phy = rng.permutation(n_phy) if n_phy else None
        d_sum = p_sum = 0.0
        p_count = 0
        for b in range(n_batches):
            idx = perm[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            if idx.size == 0:
                continue
            dl = data_loss(model, V[idx], labels[idx])
            d_sum += dl.value * idx.size
            g = dl.flat()
            if phy_batch and lam > 0:
                jdx = perm_phy[b * phy_batch:(b + 1) * phy_batch]
                if jdx.size:
                    pl = physics_loss(model, V_phy[jdx], dynamics)
                    p_sum += pl.value * jdx.size
                    p_count += jdx.size
                    g = g + lam * pl.flat()
            theta = opt.step(theta, g)
            model.set_params(theta)
        tot = note(epoch, "adam", d_sum / n, p_sum / p_count if p_count else 0.0)
        if not (np.isfinite(tot) and np.all(np.isfinite(theta))):
            raise TrainingError(f"non-finite loss in Adam epoch {epoch}", last_good, hist)
        last_good = model.copy()
    if cfg.adam_epochs:
        if not np.isfinite(record(cfg.adam_epochs, "adam-end", model)):
            raise TrainingError("non-finite loss after Adam", last_good, hist)

    if cfg.lbfgs_max_iter > 0:
        probe = model.copy()
        # loss split of recent evaluations, so history rows need no extra pass
        seen = OrderedDict()

        def objective(p):
            probe.set_params(p)
            res = total_loss(probe, V, labels, V_phy, dynamics, lam)
            seen[p.tobytes()] = (res.mse_data, res.mse_phy)
            if len(seen) > 64:
                seen.popitem(last=False)
            if not np.isfinite(res.total):
                return np.inf, np.zeros_like(p)
            return res.total, res.grad

        def callback(it, p, f):
            split = seen.get(p.tobytes())
            if split is None:
                probe.set_params(p)
                record(offset + it, "lbfgs", probe)
            else:
                note(offset + it, "lbfgs", *split)

        offset = hist.epoch[-1]
        res = lbfgs(objective, model.get_params(), memory=cfg.lbfgs_memory,
                    max_iter=cfg.lbfgs_max_iter, callback=callback)
        model.set_params(res.x)
        if not np.isfinite(res.f):
            raise TrainingError("non-finite loss in L-BFGS", last_good, hist)
        log.info("L-BFGS stopped after %d iterations: %s", res.iterations, res.message)
    return model, hist
