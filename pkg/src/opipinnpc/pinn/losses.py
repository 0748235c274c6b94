"""Data and physics losses with exact parameter gradients.

Both losses live in normalised output space: the data loss is the squared
prediction error divided per feature by ``out_scale``. The physics loss
penalises the continuous residual

    R = d phi / d T - f(phi, u, omega)

multiplied by ``loss_dt / out_scale``, i.e. the one-step state error a
derivative mismatch of size ``R`` causes over the nominal control period,
which keeps the two terms of the sum in the same units.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..model import N_LEGS, GaitSchedule, RobotParams, identified_dynamics_batch
from .mlp import (
    MlpModel,
    backward,
    forward_batch,
    network_backward,
    tangent_backward,
    time_derivative,
)


class IdentifiedDynamics:
    """``f_bar(x, u) + f_hat(omega)`` on batches, with its state vector-Jacobian product."""

    def __init__(self, params: RobotParams, schedule: GaitSchedule):
        self.params = params
        self.schedule = schedule

    def __call__(self, X, U, omega) -> np.ndarray:
        return identified_dynamics_batch(X, U, omega, self.params, self.schedule)

    def state_vjp(self, X, U, omega, G) -> np.ndarray:
        """``G @ df/dx`` row by row."""
        G = np.asarray(G, dtype=float)
        n = G.shape[0]
        out = np.zeros_like(G)
        out[:, 6:12] = G[:, 0:6]
        # the lever arm z component is ground - r_z, so d tau / d r_z = -z x sum F
        F = np.asarray(U, dtype=float).reshape(n, N_LEGS, 3).sum(axis=1)
        dtau = np.stack([F[:, 1], -F[:, 0], np.zeros(n)], axis=1)
        out[:, 2] = np.sum((G[:, 9:12] @ self.params.inertia_inv) * dtau, axis=1)
        return out


class LinearDynamics:
    """``x_dot = A x + B u + c``, a test system for the physics loss."""

    def __init__(self, A, B=None, c=None):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        n = self.A.shape[0]
        self.B = None if B is None else np.atleast_2d(np.asarray(B, dtype=float))
        self.c = np.zeros(n) if c is None else np.asarray(c, dtype=float).reshape(n)

    def __call__(self, X, U, omega) -> np.ndarray:
        out = X @ self.A.T + self.c
        if self.B is not None:
            out = out + U @ self.B.T
        return out

    def state_vjp(self, X, U, omega, G) -> np.ndarray:
        return np.asarray(G, dtype=float) @ self.A


def split_inputs(model: MlpModel, V):
    """(state, input, T, omega) column blocks of raw surrogate inputs."""
    n_out, ti = model.sizes[-1], model.time_index
    return V[:, :n_out], V[:, n_out:ti], V[:, ti], V[:, ti + 1:]


@dataclass
class LossResult:
    value: float
    dW: list
    db: list

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for pair in zip(self.dW, self.db) for p in pair])

    def __add__(self, other: "LossResult") -> "LossResult":
        return LossResult(self.value + other.value, [a + b for a, b in zip(self.dW, other.dW)],
                          [a + b for a, b in zip(self.db, other.db)])

    def scaled(self, w: float) -> "LossResult":
        return LossResult(w * self.value, [w * a for a in self.dW], [w * a for a in self.db])


def _zero_result(model: MlpModel) -> LossResult:
    return LossResult(0.0, [np.zeros_like(W) for W in model.weights],
                      [np.zeros_like(b) for b in model.biases])


def data_loss(model: MlpModel, V, labels, need_grad: bool = True) -> LossResult:
    """Mean over samples of the squared error in normalised output space."""
    V = np.atleast_2d(np.asarray(V, dtype=float))
    if V.shape[0] == 0:
        raise ValueError("data loss needs a non-empty batch")
    phi, cache = forward_batch(model, V, return_cache=True)
    diff = (phi - np.atleast_2d(labels)) / model.out_scale
    n = V.shape[0]
    value = float(np.sum(diff * diff) / n)
    if not need_grad:
        return LossResult(value, [], [])
    dW, db, _ = backward(model, cache, 2.0 * diff / model.out_scale / n)
    return LossResult(value, dW, db)


def residual_weight(model: MlpModel) -> np.ndarray:
    return model.loss_dt / model.out_scale


def physics_residual(model: MlpModel, V, dynamics) -> np.ndarray:
    """Normalised residual ``(d phi / d T - f(phi, u, omega)) * loss_dt / out_scale``."""
    V = np.atleast_2d(np.asarray(V, dtype=float))
    phi, dphi, _, _ = time_derivative(model, V)
    _, U, _, W = split_inputs(model, V)
    return (dphi - dynamics(phi, U, W)) * residual_weight(model)


def physics_loss(model: MlpModel, V, dynamics, need_grad: bool = True) -> LossResult:
    """Mean squared normalised physics residual at collocation inputs ``V``."""
    V = np.atleast_2d(np.asarray(V, dtype=float))
    n = V.shape[0]
    if n == 0:
        return _zero_result(model)
    phi, dphi, cache, tangents = time_derivative(model, V)
    _, U, T, W = split_inputs(model, V)
    w = residual_weight(model)
    Rn = (dphi - dynamics(phi, U, W)) * w
    value = float(np.sum(Rn * Rn) / n)
    if not need_grad:
        return LossResult(value, [], [])
    gR = 2.0 * Rn * w / n
    gphi = -dynamics.state_vjp(phi, U, W, gR)
    if model.residual:
        T = T[:, None]
        g_rate = gR + T * gphi
        g_drate = T * gR
    else:
        g_rate = gphi
        g_drate = gR
    dW, db, _ = network_backward(model, cache, g_rate * model.rate_scale)
    dW_t = tangent_backward(model, cache, tangents, g_drate * model.rate_scale)
    return LossResult(value, [a + b for a, b in zip(dW, dW_t)], db)


@dataclass
class TotalLoss:
    total: float
    mse_data: float
    mse_phy: float
    grad: np.ndarray | None


def total_loss(model: MlpModel, V, labels, V_phy, dynamics, physics_weight: float = 1.0,
               need_grad: bool = True) -> TotalLoss:
    d = data_loss(model, V, labels, need_grad)
    if V_phy is None or len(V_phy) == 0 or physics_weight == 0.0:
        p = _zero_result(model) if need_grad else LossResult(0.0, [], [])
    else:
        p = physics_loss(model, V_phy, dynamics, need_grad)
    total = d.value + physics_weight * p.value
    grad = (d + p.scaled(physics_weight)).flat() if need_grad else None
    return TotalLoss(total, d.value, p.value, grad)


def output_gradients(model: MlpModel, V, upstream):
    """Reverse-mode gradients of ``sum(upstream * phi)``; thin wrapper for callers."""
    _, cache = forward_batch(model, V, return_cache=True)
    return backward(model, cache, upstream)
