"""Single-rigid-body quadruped model with an attached payload.

State vector layout (12): ``[r, theta, r_dot, theta_dot]`` with ``theta`` as
roll-pitch-yaw under a small-angle model, so ``theta_dot`` is the body rate.
Input vector layout (12): the four ground-reaction forces stacked as
``[F_FL, F_FR, F_RL, F_RR]`` in the world frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

NX = 12
NU = 12
N_LEGS = 4
LEG_NAMES = ("FL", "FR", "RL", "RR")

Z_AXIS = np.array([0.0, 0.0, 1.0])


def _vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=float).reshape(3)
    return a.copy()


@dataclass
class RobotState:
    r: np.ndarray
    theta: np.ndarray
    r_dot: np.ndarray
    theta_dot: np.ndarray

    def __post_init__(self):
        self.r = _vec3(self.r)
        self.theta = _vec3(self.theta)
        self.r_dot = _vec3(self.r_dot)
        self.theta_dot = _vec3(self.theta_dot)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.r, self.theta, self.r_dot, self.theta_dot])

    @classmethod
    def from_vector(cls, x) -> "RobotState":
        x = np.asarray(x, dtype=float).reshape(NX)
        return cls(x[0:3], x[3:6], x[6:9], x[9:12])

    @classmethod
    def standing(cls, height: float = 0.38, theta=(0.0, 0.0, 0.0)) -> "RobotState":
        return cls(np.array([0.0, 0.0, height]), theta, np.zeros(3), np.zeros(3))


@dataclass
class ControlInput:
    """Per-foot ground-reaction forces and the contact mask they respect."""

    forces: np.ndarray
    contact: np.ndarray

    def __post_init__(self):
        self.forces = np.asarray(self.forces, dtype=float).reshape(N_LEGS, 3).copy()
        self.contact = np.asarray(self.contact, dtype=bool).reshape(N_LEGS).copy()
        self.forces[~self.contact] = 0.0

    def to_vector(self) -> np.ndarray:
        return self.forces.reshape(NU).copy()

    @classmethod
    def from_vector(cls, u, contact=None) -> "ControlInput":
        u = np.asarray(u, dtype=float).reshape(N_LEGS, 3)
        if contact is None:
            contact = np.any(u != 0.0, axis=1)
        return cls(u, contact)


@dataclass
class RobotParams:
    """Torso, leg and gravity constants.

    ``mass_divisor`` scales the linear acceleration; ``None`` means the torso
    mass ``m`` (the block-diagonal ``1/m`` of the state-space form).
    """

    m: float = 50.0
    inertia: np.ndarray = field(default_factory=lambda: np.diag([1.2, 3.0, 3.2]))
    leg_masses: np.ndarray = field(default_factory=lambda: np.full(N_LEGS, 1.0))
    hip_offsets: np.ndarray = field(
        default_factory=lambda: np.array(
            [[0.30, 0.15, 0.0], [0.30, -0.15, 0.0], [-0.30, 0.15, 0.0], [-0.30, -0.15, 0.0]]
        )
    )
    g: float = 9.81
    mass_divisor: float | None = None

    def __post_init__(self):
        self.inertia = np.asarray(self.inertia, dtype=float).reshape(3, 3)
        self.leg_masses = np.asarray(self.leg_masses, dtype=float).reshape(N_LEGS)
        self.hip_offsets = np.asarray(self.hip_offsets, dtype=float).reshape(N_LEGS, 3)
        if not self.m > 0:
            raise ValueError(f"torso mass must be positive, got {self.m}")
        if np.any(self.leg_masses < 0):
            raise ValueError("leg masses must be non-negative")
        if not self.g > 0:
            raise ValueError(f"g must be positive, got {self.g}")
        if not np.allclose(self.inertia, self.inertia.T):
            raise ValueError("inertia must be symmetric")
        if np.any(np.linalg.eigvalsh(self.inertia) <= 0):
            raise ValueError("inertia must be positive definite")
        self._inertia_inv = np.linalg.inv(self.inertia)

    @property
    def inertia_inv(self) -> np.ndarray:
        return self._inertia_inv

    @property
    def m_eff(self) -> float:
        return self.m if self.mass_divisor is None else float(self.mass_divisor)

    @property
    def supported_mass(self) -> float:
        """Torso plus legs, i.e. everything but the payload."""
        return self.m + float(self.leg_masses.sum())

    def leg_gravity_torque(self) -> np.ndarray:
        w = -self.leg_masses[:, None] * self.g * Z_AXIS
        return np.cross(self.hip_offsets, w).sum(axis=0)


@dataclass
class PayloadTruth:
    m_p: float = 0.0
    r_p: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.r_p = _vec3(self.r_p)
        if self.m_p < 0:
            raise ValueError(f"payload mass must be non-negative, got {self.m_p}")

    def torque(self, g: float) -> np.ndarray:
        return np.cross(self.r_p, -self.m_p * g * Z_AXIS)

    def omega(self, params: RobotParams) -> "PayloadEstimate":
        """The exact identification target ``[m_p, I^-1 (r_p x m_p g_vec)]``."""
        return PayloadEstimate(self.m_p, params.inertia_inv @ self.torque(params.g))


@dataclass
class PayloadEstimate:
    m_p_hat: float = 0.0
    p_hat: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.m_p_hat = float(self.m_p_hat)
        self.p_hat = _vec3(self.p_hat)
        if not (np.isfinite(self.m_p_hat) and np.all(np.isfinite(self.p_hat))):
            raise ValueError("payload estimate must be finite")

    def to_vector(self) -> np.ndarray:
        return np.concatenate([[self.m_p_hat], self.p_hat])

    @classmethod
    def from_vector(cls, w) -> "PayloadEstimate":
        w = np.asarray(w, dtype=float).reshape(4)
        return cls(w[0], w[1:4])


@dataclass
class GaitSchedule:
    """Periodic contact schedule.

    ``foothold_offsets`` are xy offsets from the torso; feet rest on the
    ground plane at ``ground_height`` (the z column is ignored).
    """

    period: float = 0.5
    duty: float = 0.5
    phase_offsets: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.5, 0.5, 0.0]))
    foothold_offsets: np.ndarray = field(
        default_factory=lambda: np.array(
            [[0.30, 0.15, -0.38], [0.30, -0.15, -0.38], [-0.30, 0.15, -0.38], [-0.30, -0.15, -0.38]]
        )
    )
    ground_height: float = 0.0

    def __post_init__(self):
        self.phase_offsets = np.asarray(self.phase_offsets, dtype=float).reshape(N_LEGS)
        self.foothold_offsets = np.asarray(self.foothold_offsets, dtype=float).reshape(N_LEGS, 3)
        if not self.period > 0:
            raise ValueError("gait period must be positive")
        # duty == 1 is the all-stance schedule used while standing
        if not 0.0 < self.duty <= 1.0:
            raise ValueError(f"duty factor must lie in (0, 1], got {self.duty}")
        if np.any(self.phase_offsets < 0) or np.any(self.phase_offsets >= 1):
            raise ValueError("phase offsets must lie in [0, 1)")

    @classmethod
    def standing(cls) -> "GaitSchedule":
        return cls(duty=1.0, phase_offsets=np.zeros(N_LEGS))


def _as_x(x) -> np.ndarray:
    if isinstance(x, RobotState):
        return x.to_vector()
    return np.asarray(x, dtype=float).reshape(NX)


def _as_u(u) -> np.ndarray:
    if isinstance(u, ControlInput):
        return u.to_vector()
    return np.asarray(u, dtype=float).reshape(NU)


def _check_finite(**arrays):
    for name, a in arrays.items():
        if not np.all(np.isfinite(a)):
            raise ValueError(f"non-finite {name}")


def _rigid_body_rhs(x, u, params: RobotParams, footholds, extra_mass, extra_torque):
    forces = u.reshape(N_LEGS, 3)
    lever = np.asarray(footholds, dtype=float).reshape(N_LEGS, 3) - x[0:3]
    g = params.g
    f_lin = forces.sum(axis=0) - (params.supported_mass + extra_mass) * g * Z_AXIS
    tau = np.cross(lever, forces).sum(axis=0) + params.leg_gravity_torque() + extra_torque
    dx = np.empty(NX)
    dx[0:6] = x[6:12]
    dx[6:9] = f_lin / params.m_eff
    dx[9:12] = params.inertia_inv @ tau
    return dx


def continuous_dynamics(x, u, params: RobotParams, payload: PayloadTruth, footholds) -> np.ndarray:
    """True plant derivative including torso weight and the payload."""
    x, u = _as_x(x), _as_u(u)
    _check_finite(state=x, input=u, footholds=np.asarray(footholds, dtype=float))
    return _rigid_body_rhs(x, u, params, footholds, payload.m_p, payload.torque(params.g))


def nominal_dynamics(x, u, params: RobotParams, footholds) -> np.ndarray:
    x, u = _as_x(x), _as_u(u)
    _check_finite(state=x, input=u, footholds=np.asarray(footholds, dtype=float))
    return _rigid_body_rhs(x, u, params, footholds, 0.0, np.zeros(3))


def payload_dynamics(omega: PayloadEstimate, params: RobotParams) -> np.ndarray:
    w = omega.to_vector()
    _check_finite(omega=w)
    dx = np.zeros(NX)
    dx[6:9] = -w[0] * params.g * Z_AXIS / params.m_eff
    dx[9:12] = w[1:4]
    return dx


def ground_footholds(r, schedule: GaitSchedule) -> np.ndarray:
    """Footholds directly under the nominal offsets of a torso at ``r``."""
    r = np.asarray(r, dtype=float)
    feet = np.empty((N_LEGS, 3))
    feet[:, 0:2] = r[0:2] + schedule.foothold_offsets[:, 0:2]
    feet[:, 2] = schedule.ground_height
    return feet


def identified_dynamics_batch(X, U, omega, params: RobotParams, schedule: GaitSchedule) -> np.ndarray:
    """Vectorised ``f_bar(x, u) + f_hat(omega)`` with footholds tracking the torso.

    ``X``, ``U`` have shape (n, 12) and ``omega`` (n, 4). Used by the physics loss,
    where footholds are not part of the surrogate input.
    """
    X = np.asarray(X, dtype=float)
    U = np.asarray(U, dtype=float)
    omega = np.asarray(omega, dtype=float)
    n = X.shape[0]
    F = U.reshape(n, N_LEGS, 3)
    lever = np.empty((n, N_LEGS, 3))
    lever[:, :, 0:2] = schedule.foothold_offsets[None, :, 0:2]
    lever[:, :, 2] = schedule.ground_height - X[:, 2:3]
    g = params.g
    dx = np.empty((n, NX))
    dx[:, 0:6] = X[:, 6:12]
    f_lin = F.sum(axis=1)
    f_lin[:, 2] -= (params.supported_mass + omega[:, 0]) * g
    dx[:, 6:9] = f_lin / params.m_eff
    tau = np.cross(lever, F).sum(axis=1) + params.leg_gravity_torque()
    dx[:, 9:12] = tau @ params.inertia_inv.T + omega[:, 1:4]
    return dx


def rk4_step(T: float, x, u, rhs: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> np.ndarray:
    """Classical fourth-order Runge-Kutta step with ``u`` held over ``[0, T]``."""
    if not T > 0:
        raise ValueError(f"timestep must be positive, got {T}")
    x = np.asarray(x, dtype=float)
    k1 = rhs(x, u)
    if not np.all(np.isfinite(k1)):
        raise FloatingPointError("non-finite derivative at RK4 stage 1")
    k2 = rhs(x + 0.5 * T * k1, u)
    if not np.all(np.isfinite(k2)):
        raise FloatingPointError("non-finite derivative at RK4 stage 2")
    k3 = rhs(x + 0.5 * T * k2, u)
    if not np.all(np.isfinite(k3)):
        raise FloatingPointError("non-finite derivative at RK4 stage 3")
    k4 = rhs(x + T * k3, u)
    if not np.all(np.isfinite(k4)):
        raise FloatingPointError("non-finite derivative at RK4 stage 4")
    x_next = x + (T / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(x_next)):
        raise FloatingPointError("non-finite state after RK4 update")
    return x_next


def contact_mask_at(t: float, schedule: GaitSchedule) -> np.ndarray:
    if t < 0:
        raise ValueError("time must be non-negative")
    if schedule.duty >= 1.0:
        return np.ones(N_LEGS, dtype=bool)
    phase = np.mod(t / schedule.period - schedule.phase_offsets, 1.0)
    # guard against phase landing a hair below 1 through rounding
    phase = np.where(phase > 1.0 - 1e-12, 0.0, phase)
    return phase < schedule.duty


def gait_contact_at(t: float, schedule: GaitSchedule, torso) -> tuple[np.ndarray, np.ndarray]:
    """Contact mask and world-frame footholds at time ``t``.

    Footholds sit at the nominal offsets under the current torso position.
    Holding them fixed through stance is handled by the simulator.
    """
    x = _as_x(torso)
    return contact_mask_at(t, schedule), ground_footholds(x[0:3], schedule)


def stance_forces(params: RobotParams, contact: Sequence[bool], extra_mass: float = 0.0) -> np.ndarray:
    """Equal vertical support shares for the feet in contact."""
    contact = np.asarray(contact, dtype=bool)
    n = int(contact.sum())
    u = np.zeros((N_LEGS, 3))
    if n:
        u[contact, 2] = (params.supported_mass + extra_mass) * params.g / n
    return u.reshape(NU)
