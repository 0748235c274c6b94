"""NMPC feedforward plus PID feedback, as a closed-loop controller."""

from __future__ import annotations

import numpy as np

from ..control import ForceBounds, PidState, composite_control, distribute_wrench, feedforward_wrench, pid_feedback
from ..model import PayloadEstimate, RobotParams, contact_mask_at
from .mpc import NmpcConfig, NmpcSolution, nmpc_step


class CompositeController:
    """Receding-horizon optimal input plus distributed PID correction.

    The increment chain starts from the previous optimal input; on the first
    call it starts from the identified static feedforward for the current
    stance. Stage bounds follow the gait schedule over the horizon, so swing
    feet are pinned to zero force.
    """

    def __init__(self, surrogate, params: RobotParams, omega_hat: PayloadEstimate,
                 config: NmpcConfig | None = None, pid: PidState | None = None,
                 bounds: ForceBounds | None = None, use_pid: bool = True):
        self.surrogate = surrogate
        self.params = params
        self.omega_hat = omega_hat
        self.config = config or NmpcConfig()
        self.pid = pid if pid is not None else PidState()
        self.bounds = bounds or ForceBounds()
        self.use_pid = use_pid
        self.u_prev: np.ndarray | None = None
        self.previous: NmpcSolution | None = None

    def reset(self):
        self.u_prev = None
        self.previous = None
        self.pid.reset()

    def stage_bounds(self, t: float, schedule) -> tuple[np.ndarray, np.ndarray]:
        cfg = self.config
        lo, hi = [], []
        for i in range(cfg.horizon):
            l, h = self.bounds.for_contact(contact_mask_at(t + i * cfg.T, schedule))
            lo.append(np.maximum(l, cfg.u_min))
            hi.append(np.minimum(h, cfg.u_max))
        return np.array(lo), np.array(hi)

    def __call__(self, ctx):
        cfg = self.config
        if self.u_prev is None:
            f, tau = feedforward_wrench(self.omega_hat, self.params)
            self.u_prev = distribute_wrench(f, tau, ctx.footholds, ctx.x[0:3], ctx.contact)
        refs = np.array([ctx.reference_fn(ctx.t + (i + 1) * cfg.T) for i in range(cfg.horizon)])
        lo, hi = self.stage_bounds(ctx.t, ctx.schedule)
        sol = nmpc_step(self.surrogate, ctx.x, refs, self.omega_hat, cfg, self.u_prev,
                        self.previous, lo, hi)
        self.previous = sol
        self.u_prev = sol.u
        if self.use_pid:
            wrench = pid_feedback(ctx.x, ctx.reference, self.pid, ctx.dt)
        else:
            wrench = (np.zeros(3), np.zeros(3))
        u = composite_control(sol.u, wrench, ctx.footholds, ctx.x[0:3], ctx.contact, self.bounds)
        return u, sol.stats
