"""PID feedback, wrench distribution, the composite controller and the
identified-feedforward baseline."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import N_LEGS, NU, ControlInput, PayloadEstimate, RobotParams, Z_AXIS


@dataclass
class ForceBounds:
    """Per-foot force box, replicated over the four feet."""

    lower: np.ndarray = field(default_factory=lambda: np.array([-400.0, -400.0, 0.0]))
    upper: np.ndarray = field(default_factory=lambda: np.array([400.0, 400.0, 1500.0]))

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float).reshape(3)
        self.upper = np.asarray(self.upper, dtype=float).reshape(3)
        if np.any(self.lower > self.upper):
            raise ValueError("force bounds are not well ordered")

    @property
    def lower12(self) -> np.ndarray:
        return np.tile(self.lower, N_LEGS)

    @property
    def upper12(self) -> np.ndarray:
        return np.tile(self.upper, N_LEGS)

    def for_contact(self, contact) -> tuple[np.ndarray, np.ndarray]:
        """Bounds with swing-leg channels pinned to zero."""
        lo, hi = self.lower12, self.upper12
        swing = np.repeat(~np.asarray(contact, dtype=bool), 3)
        lo[swing] = 0.0
        hi[swing] = 0.0
        return lo, hi


@dataclass
class PidState:
    """Six-axis pose PID (x, y, z, roll, pitch, yaw) producing a body wrench."""

    kp: np.ndarray = field(default_factory=lambda: np.array([200.0, 200.0, 200.0, 80.0, 80.0, 80.0]))
    ki: np.ndarray = field(default_factory=lambda: np.full(6, 10.0))
    kd: np.ndarray = field(default_factory=lambda: np.full(6, 20.0))
    integral_limit: np.ndarray = field(default_factory=lambda: np.full(6, 0.5))
    integral: np.ndarray = field(default_factory=lambda: np.zeros(6))
    prev_error: np.ndarray | None = None

    def __post_init__(self):
        for name in ("kp", "ki", "kd", "integral_limit", "integral"):
            v = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (6,)).copy()
            setattr(self, name, v)
        if np.any(self.kp < 0) or np.any(self.ki < 0) or np.any(self.kd < 0):
            raise ValueError("PID gains must be non-negative")

    def reset(self):
        self.integral = np.zeros(6)
        self.prev_error = None

    def copy(self) -> "PidState":
        return PidState(self.kp, self.ki, self.kd, self.integral_limit, self.integral.copy(),
                        None if self.prev_error is None else self.prev_error.copy())


def pid_feedback(x, reference, pid: PidState, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Advance the PID on the pose error ``reference - x`` and return (force, torque).

    The integral is clamped to ``pid.integral_limit`` (anti-windup). The
    derivative is a backward difference of the error, zero on the first call.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, dtype=float)
    reference = np.asarray(reference, dtype=float)
    e = reference[0:6] - x[0:6]
    pid.integral = np.clip(pid.integral + e * dt, -pid.integral_limit, pid.integral_limit)
    de = np.zeros(6) if pid.prev_error is None else (e - pid.prev_error) / dt
    pid.prev_error = e
    w = pid.kp * e + pid.ki * pid.integral + pid.kd * de
    return w[0:3], w[3:6]


def grasp_map(footholds, torso_position, contact) -> np.ndarray:
    feet = np.asarray(footholds, dtype=float).reshape(N_LEGS, 3)
    lever = feet - np.asarray(torso_position, dtype=float)[0:3]
    idx = np.flatnonzero(np.asarray(contact, dtype=bool))
    G = np.zeros((6, 3 * idx.size))
    for j, i in enumerate(idx):
        l = lever[i]
        G[0:3, 3 * j:3 * j + 3] = np.eye(3)
        G[3:6, 3 * j:3 * j + 3] = np.array([[0.0, -l[2], l[1]], [l[2], 0.0, -l[0]], [-l[1], l[0], 0.0]])
    return G


def distribute_wrench(force, torque, footholds, torso_position, contact,
                      return_rank: bool = False):
    """Minimum-norm foot forces reproducing a body wrench.

    Solves ``sum F_i = force`` and ``sum (p_i - r) x F_i = torque`` over the
    stance feet with the pseudo-inverse of the grasp map. With two feet the map
    has rank 5; the least-squares solution is returned and ``return_rank``
    exposes the deficiency.
    """
    contact = np.asarray(contact, dtype=bool)
    if contact.sum() < 2:
        raise ValueError("wrench distribution needs at least two stance feet")
    G = grasp_map(footholds, torso_position, contact)
    w = np.concatenate([np.asarray(force, dtype=float), np.asarray(torque, dtype=float)])
    sol, _, rank, _ = np.linalg.lstsq(G, w, rcond=None)
    out = np.zeros((N_LEGS, 3))
    out[contact] = sol.reshape(-1, 3)
    if return_rank:
        return out.reshape(NU), int(rank)
    return out.reshape(NU)


def clamp_input(u, bounds: ForceBounds, contact) -> ControlInput:
    lo, hi = bounds.for_contact(contact)
    return ControlInput(np.clip(np.asarray(u, dtype=float), lo, hi), contact)


def composite_control(u_opt, pid_wrench, footholds, torso_position, contact,
                      bounds: ForceBounds) -> ControlInput:
    """Optimal feedforward plus distributed PID correction, clamped to the bounds."""
    force, torque = pid_wrench
    if np.any(force) or np.any(torque):
        delta = distribute_wrench(force, torque, footholds, torso_position, contact)
    else:
        delta = np.zeros(NU)
    return clamp_input(np.asarray(u_opt, dtype=float) + delta, bounds, contact)


def feedforward_wrench(omega_hat: PayloadEstimate, params: RobotParams,
                       accel_ref=None) -> tuple[np.ndarray, np.ndarray]:
    """Static balance including the identified payload."""
    force = (params.supported_mass + omega_hat.m_p_hat) * params.g * Z_AXIS
    if accel_ref is not None:
        force = force + params.m_eff * np.asarray(accel_ref, dtype=float)
    torque = -params.leg_gravity_torque() - params.inertia @ omega_hat.p_hat
    return force, torque


def baseline_controller(x, reference, omega_hat: PayloadEstimate, pid: PidState,
                        params: RobotParams, footholds, contact, bounds: ForceBounds,
                        dt: float) -> ControlInput:
    """Identified feedforward plus PID, without prediction."""
    x = np.asarray(x, dtype=float)
    f_ff, t_ff = feedforward_wrench(omega_hat, params)
    f_fb, t_fb = pid_feedback(x, reference, pid, dt)
    u = distribute_wrench(f_ff + f_fb, t_ff + t_fb, footholds, x[0:3], contact)
    return clamp_input(u, bounds, contact)
