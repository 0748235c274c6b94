"""Stateful ground-truth plant: RK4 over the payload-loaded rigid body."""

from __future__ import annotations

import numpy as np

from .model import (
    N_LEGS,
    NU,
    GaitSchedule,
    PayloadTruth,
    RobotParams,
    RobotState,
    continuous_dynamics,
    contact_mask_at,
    ground_footholds,
    rk4_step,
)


class Plant:
    """Force-controlled rigid body following a contact schedule.

    By default the feet track the nominal offsets under the torso, so the
    dynamics depend only on the 12-dim state and the forces. With
    ``hold_footholds`` the footholds are frozen at touchdown instead.
    """

    def __init__(self, params: RobotParams, payload: PayloadTruth, schedule: GaitSchedule,
                 x0=None, t0: float = 0.0, hold_footholds: bool = False,
                 noise_std: float = 0.0, rng: np.random.Generator | None = None):
        self.params = params
        self.payload = payload
        self.schedule = schedule
        self.x = RobotState.standing().to_vector() if x0 is None else np.asarray(
            x0.to_vector() if isinstance(x0, RobotState) else x0, dtype=float).copy()
        self.t = float(t0)
        self.hold_footholds = hold_footholds
        self.noise_std = noise_std
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self._held = ground_footholds(self.x[0:3], schedule)
        self._prev_contact = np.zeros(N_LEGS, dtype=bool)
        self._refresh_contacts()

    def _refresh_contacts(self):
        contact = contact_mask_at(self.t, self.schedule)
        if self.hold_footholds:
            fresh = contact & ~self._prev_contact
            under = ground_footholds(self.x[0:3], self.schedule)
            self._held[fresh] = under[fresh]
        self._prev_contact = contact
        self.contact = contact

    def footholds(self, x=None) -> np.ndarray:
        if self.hold_footholds:
            return self._held.copy()
        x = self.x if x is None else x
        return ground_footholds(x[0:3], self.schedule)

    def rhs(self, x, u) -> np.ndarray:
        return continuous_dynamics(x, u, self.params, self.payload, self.footholds(x))

    def applied(self, u) -> np.ndarray:
        u = np.asarray(u.to_vector() if hasattr(u, "to_vector") else u, dtype=float).reshape(N_LEGS, 3).copy()
        u[~self.contact] = 0.0
        return u.reshape(NU)

    def acceleration(self, u) -> np.ndarray:
        """Measured torso linear acceleration under ``u`` (noisy if configured)."""
        a = self.rhs(self.x, self.applied(u))[6:9]
        if self.noise_std > 0:
            a = a + self.rng.normal(0.0, self.noise_std, 3)
        return a

    def measured_forces(self, u) -> np.ndarray:
        f = self.applied(u)
        if self.noise_std > 0:
            f = f + self.rng.normal(0.0, self.noise_std, NU) * np.repeat(self.contact, 3)
        return f

    def step(self, u, T: float) -> np.ndarray:
        u = self.applied(u)
        self.x = rk4_step(T, self.x, u, self.rhs)
        self.t += T
        self._refresh_contacts()
        return self.x

    def predict(self, x, u, T: float) -> np.ndarray:
        """One RK4 step from ``x`` without touching the plant state."""
        u = np.asarray(u, dtype=float)
        if self.hold_footholds:
            feet = self._held.copy()
            rhs = lambda xx, uu: continuous_dynamics(xx, uu, self.params, self.payload, feet)
        else:
            rhs = self.rhs
        return rk4_step(T, x, u, rhs)
