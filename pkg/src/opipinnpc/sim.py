"""Scenario rollouts, reference generators and PINN dataset collection."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .control import ForceBounds, PidState, baseline_controller
from .model import (
    NU,
    NX,
    ControlInput,
    GaitSchedule,
    PayloadEstimate,
    PayloadTruth,
    RobotParams,
    contact_mask_at,
)
from .opi import IdentificationError, identify
from .plant import Plant

log = logging.getLogger(__name__)

ORIENTATION_AXES = ("roll", "pitch", "yaw")


def orientation_from_labels(values, order=("pitch", "yaw", "roll")) -> np.ndarray:
    """Reorder an orientation given in ``order`` into roll-pitch-yaw."""
    if sorted(order) != sorted(ORIENTATION_AXES):
        raise ValueError(f"orientation order must be a permutation of {ORIENTATION_AXES}, got {order}")
    lookup = dict(zip(order, np.asarray(values, dtype=float)))
    return np.array([lookup[a] for a in ORIENTATION_AXES])


@dataclass
class ReferenceGenerator:
    """Constant-velocity position reference with a fixed orientation.

    ``kind="stand"`` gives the identification reference (zero velocity).
    """

    kind: str = "trot"
    origin: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 0.38]))
    velocity: np.ndarray = field(default_factory=lambda: np.array([0.2, 0.0, 0.0]))
    orientation: np.ndarray = field(
        default_factory=lambda: orientation_from_labels((-0.05, 2.95, 0.0), ("pitch", "yaw", "roll")))

    def __post_init__(self):
        if self.kind not in ("trot", "stand"):
            raise ValueError(f"unknown reference kind {self.kind!r}")
        self.origin = np.asarray(self.origin, dtype=float).reshape(3)
        self.velocity = np.asarray(self.velocity, dtype=float).reshape(3)
        self.orientation = np.asarray(self.orientation, dtype=float).reshape(3)
        if self.kind == "stand":
            self.velocity = np.zeros(3)

    def shifted(self, offset) -> "ReferenceGenerator":
        return ReferenceGenerator(self.kind, self.origin + np.asarray(offset, dtype=float),
                                  self.velocity, self.orientation)


def reference_at(t: float, generator: ReferenceGenerator) -> tuple[np.ndarray, np.ndarray]:
    if t < 0:
        raise ValueError("time must be non-negative")
    return generator.origin + generator.velocity * t, generator.orientation.copy()


def full_reference(t: float, generator: ReferenceGenerator) -> np.ndarray:
    """Reference expanded to the 12-dim state layout (velocities included)."""
    pos, ori = reference_at(t, generator)
    return np.concatenate([pos, ori, generator.velocity, np.zeros(3)])


@dataclass
class Scenario:
    payload: PayloadTruth = field(default_factory=PayloadTruth)
    duration: float = 10.0
    T: float = 0.01
    reference: ReferenceGenerator = field(default_factory=ReferenceGenerator)
    seed: int = 0
    schedule: GaitSchedule = field(default_factory=GaitSchedule)
    hold_footholds: bool = False
    divergence_bound: float = 1e3

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("control timestep must be positive")
        if self.duration < self.T:
            raise ValueError("duration must be at least one timestep")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.T))


@dataclass
class StepContext:
    t: float
    x: np.ndarray
    contact: np.ndarray
    footholds: np.ndarray
    reference: np.ndarray
    reference_fn: Callable[[float], np.ndarray]
    schedule: GaitSchedule
    dt: float


class Controller(Protocol):
    def __call__(self, ctx: StepContext) -> tuple[ControlInput, dict]: ...


STAT_FIELDS = ("iterations", "primal_residual", "dual_residual", "objective")


@dataclass
class TrajectoryLog:
    t: np.ndarray
    x: np.ndarray
    reference: np.ndarray
    u: np.ndarray
    error: np.ndarray
    stats: np.ndarray
    footholds: np.ndarray
    failed: bool = False

    def __len__(self):
        return self.t.shape[0]


def pose_error(x, reference) -> np.ndarray:
    return np.asarray(x)[..., 0:6] - np.asarray(reference)[..., 0:6]


def run_scenario(scenario: Scenario, controller: Controller, params: RobotParams,
                 x0=None) -> TrajectoryLog:
    """Fixed-step closed-loop rollout, one log row per control step."""
    rng = np.random.default_rng(scenario.seed)
    ref_fn = lambda t: full_reference(t, scenario.reference)
    if x0 is None:
        x0 = ref_fn(0.0)
        x0[6:12] = 0.0
    plant = Plant(params, scenario.payload, scenario.schedule, x0=x0,
                  hold_footholds=scenario.hold_footholds, rng=rng)
    n = scenario.n_steps
    T = scenario.T
    rows = {k: [] for k in ("t", "x", "reference", "u", "stats", "footholds")}
    failed = False
    for k in range(n):
        t = k * T
        ctx = StepContext(t, plant.x.copy(), plant.contact.copy(), plant.footholds(), ref_fn(t),
                          ref_fn, scenario.schedule, T)
        u, stats = controller(ctx)
        u_vec = plant.applied(u)
        rows["t"].append(t)
        rows["x"].append(ctx.x)
        rows["reference"].append(ctx.reference)
        rows["u"].append(u_vec)
        rows["stats"].append([stats.get(f, np.nan) for f in STAT_FIELDS])
        rows["footholds"].append(ctx.footholds.reshape(-1))
        try:
            plant.step(u_vec, T)
        except FloatingPointError:
            failed = True
            break
        if not np.all(np.isfinite(plant.x)) or np.linalg.norm(plant.x) > scenario.divergence_bound:
            failed = True
            break
    arr = {k: np.asarray(v, dtype=float) for k, v in rows.items()}
    return TrajectoryLog(arr["t"], arr["x"], arr["reference"], arr["u"],
                         pose_error(arr["x"], arr["reference"]), arr["stats"].reshape(-1, len(STAT_FIELDS)),
                         arr["footholds"], failed)


class BaselineController:
    """Identified feedforward + PID, the comparison stand-in."""

    def __init__(self, params: RobotParams, omega_hat: PayloadEstimate, pid: PidState | None = None,
                 bounds: ForceBounds | None = None, excitation_std: float = 0.0,
                 rng: np.random.Generator | None = None):
        self.params = params
        self.omega_hat = omega_hat
        self.pid = pid if pid is not None else PidState()
        self.bounds = bounds or ForceBounds()
        self.excitation_std = excitation_std
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def __call__(self, ctx: StepContext):
        u = baseline_controller(ctx.x, ctx.reference, self.omega_hat, self.pid, self.params,
                                ctx.footholds, ctx.contact, self.bounds, ctx.dt)
        if self.excitation_std > 0:
            noisy = u.to_vector() + self.rng.normal(0.0, self.excitation_std, NU)
            lo, hi = self.bounds.for_contact(ctx.contact)
            u = ControlInput(np.clip(noisy, lo, hi), ctx.contact)
        return u, {}


class ConstantForceController:
    """Fixed stance forces; used for equilibrium and sag checks."""

    def __init__(self, forces):
        self.forces = np.asarray(forces, dtype=float).reshape(NU)

    def __call__(self, ctx: StepContext):
        return ControlInput(self.forces, ctx.contact), {}


@dataclass
class TrainingSample:
    x_k: np.ndarray
    u_k: np.ndarray
    T: float
    omega_hat: PayloadEstimate
    x_next: np.ndarray
    payload: PayloadTruth | None = None


@dataclass
class Dataset:
    """Column-stacked training samples.

    ``payload_mass`` and ``payload_offset`` record the true payload so the
    labels can be re-derived; they are not network inputs.
    """

    X: np.ndarray
    U: np.ndarray
    T: np.ndarray
    omega: np.ndarray
    Y: np.ndarray
    payload_mass: np.ndarray
    payload_offset: np.ndarray
    instance: np.ndarray
    skipped: list = field(default_factory=list)

    def __len__(self):
        return self.X.shape[0]

    def __getitem__(self, i) -> TrainingSample:
        return TrainingSample(self.X[i].copy(), self.U[i].copy(), float(self.T[i]),
                              PayloadEstimate.from_vector(self.omega[i]), self.Y[i].copy(),
                              PayloadTruth(float(self.payload_mass[i]), self.payload_offset[i]))

    def inputs(self) -> np.ndarray:
        return np.hstack([self.X, self.U, self.T[:, None], self.omega])

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.U[idx], self.T[idx], self.omega[idx], self.Y[idx],
                       self.payload_mass[idx], self.payload_offset[idx], self.instance[idx],
                       list(self.skipped))

    def split(self, fraction: float = 0.9, seed: int = 0) -> tuple["Dataset", "Dataset"]:
        idx = np.random.default_rng(seed).permutation(len(self))
        cut = int(round(fraction * len(self)))
        return self.subset(np.sort(idx[:cut])), self.subset(np.sort(idx[cut:]))

    @classmethod
    def concatenate(cls, parts: list["Dataset"]) -> "Dataset":
        cat = lambda name: np.concatenate([getattr(p, name) for p in parts])
        return cls(cat("X"), cat("U"), cat("T"), cat("omega"), cat("Y"), cat("payload_mass"),
                   cat("payload_offset"), cat("instance"), sum((p.skipped for p in parts), []))


@dataclass
class DatasetConfig:
    duration: float = 5.0
    T: float = 0.01
    jitter_fraction: float = 0.5
    T_range: tuple = (0.005, 0.05)
    excitation_std: float = 25.0
    start_x_range: tuple = (-0.5, 1.5)
    start_y_range: tuple = (-0.2, 0.2)
    offset_box: tuple = ((-0.05, 0.05), (-0.03, 0.03), (0.0, 0.1))
    seed: int = 0
    identify_kwargs: dict = field(default_factory=dict)


def payload_grid(masses, offsets=None, seed: int = 0, offset_box=DatasetConfig.offset_box) -> list[PayloadTruth]:
    """Payloads at the given masses; offsets drawn uniformly from ``offset_box`` unless given."""
    rng = np.random.default_rng([seed, 7919])
    lo = np.array([b[0] for b in offset_box])
    hi = np.array([b[1] for b in offset_box])
    out = []
    for i, m in enumerate(masses):
        r = rng.uniform(lo, hi) if offsets is None else np.asarray(offsets[i], dtype=float)
        out.append(PayloadTruth(float(m), r))
    return out


def identify_payload(params: RobotParams, payload: PayloadTruth, **kwargs):
    """Run the standing identification scenario on a fresh plant."""
    plant = Plant(params, payload, GaitSchedule.standing())
    return identify(plant, **kwargs)


def _collect_instance(i: int, payload: PayloadTruth, params: RobotParams, schedule: GaitSchedule,
                      cfg: DatasetConfig, reference: ReferenceGenerator) -> Dataset:
    rng = np.random.default_rng([cfg.seed, i])
    omega_hat = identify_payload(params, payload, **cfg.identify_kwargs).estimate
    offset = np.array([rng.uniform(*cfg.start_x_range), rng.uniform(*cfg.start_y_range), 0.0])
    ref = reference.shifted(offset)
    ref_fn = lambda t: full_reference(t, ref)
    x0 = ref_fn(0.0)
    x0[6:12] = 0.0
    plant = Plant(params, payload, schedule, x0=x0, rng=rng)
    ctrl = BaselineController(params, omega_hat, PidState(), excitation_std=cfg.excitation_std, rng=rng)
    n = int(round(cfg.duration / cfg.T))
    X, U, Ts, Y = np.empty((n, NX)), np.empty((n, NU)), np.empty(n), np.empty((n, NX))
    for k in range(n):
        t = k * cfg.T
        ctx = StepContext(t, plant.x.copy(), plant.contact.copy(), plant.footholds(), ref_fn(t),
                          ref_fn, schedule, cfg.T)
        u, _ = ctrl(ctx)
        u_vec = plant.applied(u)
        Tk = cfg.T
        if rng.uniform() < cfg.jitter_fraction:
            Tk = rng.uniform(*cfg.T_range)
        X[k], U[k], Ts[k] = ctx.x, u_vec, Tk
        Y[k] = plant.predict(ctx.x, u_vec, Tk)
        plant.step(u_vec, cfg.T)
    w = np.tile(omega_hat.to_vector(), (n, 1))
    return Dataset(X, U, Ts, w, Y, np.full(n, payload.m_p), np.tile(payload.r_p, (n, 1)),
                   np.full(n, i, dtype=int))


def collect_dataset(payloads: list[PayloadTruth], params: RobotParams | None = None,
                    cfg: DatasetConfig | None = None, schedule: GaitSchedule | None = None,
                    reference: ReferenceGenerator | None = None, shuffle: bool = True) -> Dataset:
    """Identify each payload, then trot under the baseline and record one sample per step.

    Per-instance random streams derive from ``(cfg.seed, index)`` so the
    result does not depend on execution order. Instances whose identification
    fails are skipped and listed in ``Dataset.skipped``.
    """
    if not payloads:
        raise ValueError("payload grid is empty")
    params = params or RobotParams()
    cfg = cfg or DatasetConfig()
    schedule = schedule or GaitSchedule()
    reference = reference or ReferenceGenerator()
    parts, skipped = [], []
    for i, payload in enumerate(payloads):
        try:
            parts.append(_collect_instance(i, payload, params, schedule, cfg, reference))
        except IdentificationError as exc:
            log.warning("skipping payload instance %d (m_p=%.2f): %s", i, payload.m_p, exc)
            skipped.append((i, payload.m_p, str(exc)))
    if not parts:
        raise IdentificationError("identification failed for every payload instance")
    data = Dataset.concatenate(parts)
    data.skipped = skipped
    if shuffle:
        data = data.subset(np.random.default_rng([cfg.seed, 104729]).permutation(len(data)))
        data.skipped = skipped
    return data


def mask_lookahead(t: float, n: int, dt: float, schedule: GaitSchedule) -> np.ndarray:
    """Contact masks for the ``n`` stages starting at ``t``."""
    return np.array([contact_mask_at(t + i * dt, schedule) for i in range(n)])
