"""Online payload identification.

Mass comes from vertical force balance over a settled stance window. The
torque offset ``p = I^-1 (r_p x m_p g_vec)`` is identified with an
immersion-and-invariance estimator: the integrator state ``p_hat`` plus the
correction ``Psi = K x22`` forms the estimate, and the off-manifold
coordinate ``z = p_hat - p + Psi`` obeys ``z_dot = -K z``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .control import ForceBounds, clamp_input, distribute_wrench
from .model import PayloadEstimate, RobotParams, Z_AXIS
from .plant import Plant


class IdentificationError(RuntimeError):
    def __init__(self, message: str, final_error: np.ndarray | None = None, trace=None):
        super().__init__(message)
        self.final_error = final_error
        self.trace = trace


def _diag(v) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.ndim == 0:
        return a * np.eye(3)
    if a.ndim == 1:
        return np.diag(a)
    return a


@dataclass
class IdentifierState:
    p_hat: np.ndarray = field(default_factory=lambda: np.zeros(3))
    z: np.ndarray = field(default_factory=lambda: np.zeros(3))
    W: np.ndarray = field(default_factory=lambda: 0.6 * np.eye(3))
    V: np.ndarray = field(default_factory=lambda: 0.8 * np.eye(3))
    K: np.ndarray = field(default_factory=lambda: 1.7 * np.eye(3))
    e_threshold: float = 1e-3

    def __post_init__(self):
        self.p_hat = np.asarray(self.p_hat, dtype=float).reshape(3)
        self.z = np.asarray(self.z, dtype=float).reshape(3)
        for name in ("W", "V", "K"):
            M = _diag(getattr(self, name))
            if not np.allclose(M, np.diag(np.diag(M))) or np.any(np.diag(M) <= 0):
                raise ValueError(f"{name} must be diagonal with positive entries")
            setattr(self, name, M)
        if not self.e_threshold > 0:
            raise ValueError("e_threshold must be positive")

    def estimate(self, x22) -> np.ndarray:
        """Full estimate ``p_hat + K x22``."""
        return self.p_hat + self.K @ np.asarray(x22, dtype=float)


def estimate_mass(force_sums, accels, params: RobotParams, contacts=None,
                  min_denominator: float = 1e-3) -> float:
    """Payload mass from stance force balance, averaged over a window.

    ``force_sums`` holds the summed foot force per sample (shape (n, 3) or the
    vertical component (n,)); ``accels`` the matching torso accelerations.
    Samples not in full stance, or with ``g + a_z`` below ``min_denominator``
    (free fall), are discarded.
    """
    F = np.asarray(force_sums, dtype=float)
    A = np.asarray(accels, dtype=float)
    fz = F[:, 2] if F.ndim == 2 else F
    az = A[:, 2] if A.ndim == 2 else A
    keep = np.ones(fz.shape[0], dtype=bool)
    if contacts is not None:
        keep &= np.all(np.asarray(contacts, dtype=bool), axis=1)
    if not keep.any():
        raise ValueError("no all-stance samples to estimate payload mass from")
    g = params.g
    denom = g + az
    keep &= np.abs(denom) > min_denominator
    if not keep.any():
        raise ValueError("all stance samples are in free fall")
    num = fz - params.supported_mass * g - params.m_eff * az
    return max(0.0, float(np.mean(num[keep] / denom[keep])))


def auxiliary_control(x12, x22, x12_ref, ident: IdentifierState, k, full_estimate: bool = True) -> np.ndarray:
    """Angular-acceleration command for the identification phase.

    ``u = -k - p_est - W x22 - V e_bar`` with ``e_bar = x22 + W (x12 - x12_ref)``.
    ``p_est`` is ``p_hat + K x22`` unless ``full_estimate`` is False, in which
    case the bare integrator state is used (that variant is unstable for the
    default gains since ``K - V - W`` has positive trace).
    """
    x12, x22, x12_ref = (np.asarray(a, dtype=float) for a in (x12, x22, x12_ref))
    e_bar = x22 + ident.W @ (x12 - x12_ref)
    p_est = ident.estimate(x22) if full_estimate else ident.p_hat
    return -np.asarray(k, dtype=float) - p_est - ident.W @ x22 - ident.V @ e_bar


def update_law_step(ident: IdentifierState, u, k, x22, dt: float) -> IdentifierState:
    """One explicit-Euler step of ``p_hat_dot = -K (u + p_hat + K x22 + k)``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    u, k, x22 = (np.asarray(a, dtype=float) for a in (u, k, x22))
    psi = -ident.K @ (u + ident.p_hat + ident.K @ x22 + k)
    z = ident.z - dt * (ident.K @ ident.z)
    return replace(ident, p_hat=ident.p_hat + dt * psi, z=z)


@dataclass
class IdentificationTrace:
    t: list = field(default_factory=list)
    e_bar: list = field(default_factory=list)
    p_hat: list = field(default_factory=list)
    p_est: list = field(default_factory=list)
    z: list = field(default_factory=list)

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: np.asarray(v) for k, v in self.__dict__.items()}


@dataclass
class IdentificationResult:
    estimate: PayloadEstimate
    trace: IdentificationTrace
    iterations: int
    time: float
    converged: bool


def identify(plant: Plant, W=0.6, V=0.8, K=1.7, e_threshold: float = 1e-3,
             dt: float = 0.01, settle_time: float = 2.0, mass_window: float = 1.0,
             max_time: float = 30.0, height: float | None = None,
             bounds: ForceBounds | None = None, true_p=None,
             vertical_bandwidth: float = 5.0) -> IdentificationResult:
    """Identify ``[m_p, p]`` on a plant standing on all four feet.

    The torso holds height and horizontal position with a PID while the
    orientation channel runs the auxiliary control law and update law from the
    first step. The mass estimate averages the stance force balance over
    ``[settle_time, settle_time + mass_window]``; after that the loop runs
    until ``||e_bar|| <= e_threshold`` (at least one iteration) or ``max_time``.

    ``true_p`` only seeds the diagnostic ``z``; the control path never reads it.
    """
    params = plant.params
    bounds = bounds or ForceBounds(upper=np.array([400.0, 400.0, 3000.0]))
    ident = IdentifierState(W=W, V=V, K=K, e_threshold=e_threshold)
    x = plant.x
    theta_ref = x[3:6].copy()
    r_ref = x[0:3].copy()
    if height is not None:
        r_ref[2] = height
    if true_p is not None:
        ident = replace(ident, z=ident.p_hat - np.asarray(true_p, dtype=float) + ident.K @ x[9:12])
    k = params.inertia_inv @ params.leg_gravity_torque()

    # triple real pole at -lam for the height loop, in acceleration units
    lam = vertical_bandwidth
    kp, kd, ki = 3 * lam ** 2, 3 * lam, lam ** 3
    pos_int = np.zeros(3)

    trace = IdentificationTrace()
    mass_samples_f, mass_samples_a = [], []
    m_hat = None
    iterations = 0
    n_max = int(round(max_time / dt))
    e_bar = np.zeros(3)
    for step in range(n_max):
        t = step * dt
        x = plant.x
        x12, x22 = x[3:6], x[9:12]
        e_bar = x22 + ident.W @ (x12 - theta_ref)
        u_aux = auxiliary_control(x12, x22, theta_ref, ident, k)

        e_pos = x[0:3] - r_ref
        pos_int += e_pos * dt
        a_cmd = -kp * e_pos - kd * x[6:9] - ki * pos_int
        force = params.supported_mass * params.g * Z_AXIS + params.m_eff * a_cmd
        torque = params.inertia @ u_aux
        u = distribute_wrench(force, torque, plant.footholds(), x[0:3], plant.contact)
        u = clamp_input(u, bounds, plant.contact).to_vector()

        if m_hat is None and t >= settle_time:
            mass_samples_f.append(plant.measured_forces(u).reshape(4, 3).sum(axis=0))
            mass_samples_a.append(plant.acceleration(u))

        trace.t.append(t)
        trace.e_bar.append(e_bar.copy())
        trace.p_hat.append(ident.p_hat.copy())
        trace.p_est.append(ident.estimate(x22))
        trace.z.append(ident.z.copy())

        plant.step(u, dt)
        ident = update_law_step(ident, u_aux, k, x22, dt)

        if m_hat is None:
            if t + dt >= settle_time + mass_window - 1e-12:
                m_hat = estimate_mass(np.array(mass_samples_f), np.array(mass_samples_a), params)
            continue
        iterations += 1
        x = plant.x
        e_bar = x[9:12] + ident.W @ (x[3:6] - theta_ref)
        if np.linalg.norm(e_bar) <= e_threshold:
            est = PayloadEstimate(m_hat, ident.estimate(x[9:12]))
            return IdentificationResult(est, trace, iterations, plant.t, True)
    raise IdentificationError(
        f"identification did not converge within {max_time} s (|e_bar| = {np.linalg.norm(e_bar):.3g})",
        final_error=e_bar, trace=trace)
