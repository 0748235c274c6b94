"""Receding-horizon control over a one-step surrogate.

Decision variables are the stacked input increments ``d_i = u_i - u_{i-1}``
over the horizon, with ``u_{-1}`` the previous optimal input. Each SQP
iteration linearises the surrogate along the nominal rollout, eliminates the
states, and solves the resulting QP with ADMM.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..model import NU, NX, identified_dynamics_batch
from ..pinn.mlp import MlpModel, forward_batch, input_jacobian
from .qp import AdmmResult, AdmmSettings, QpProblem, admm_solve

log = logging.getLogger(__name__)


def _diag(v, n, name, positive=False):
    a = np.asarray(v, dtype=float)
    if a.ndim == 2:
        if not np.allclose(a, np.diag(np.diag(a))):
            raise ValueError(f"{name} must be diagonal")
        a = np.diag(a)
    a = np.broadcast_to(a, (n,)).astype(float).copy()
    if positive and np.any(a <= 0):
        raise ValueError(f"{name} must have positive entries")
    if np.any(a < 0):
        raise ValueError(f"{name} must have non-negative entries")
    return a


def _vec(v, n, name):
    a = np.broadcast_to(np.asarray(v, dtype=float), (n,)).astype(float).copy()
    if np.any(np.isnan(a)):
        raise ValueError(f"{name} contains NaN")
    return a


DEFAULT_Q = np.array([2e4, 2e4, 5e4, 2e4, 2e4, 5e3, 1e2, 1e2, 1e2, 5e1, 5e1, 5e1])


@dataclass
class NmpcConfig:
    horizon: int = 10
    T: float = 0.01
    # None picks the quadruped defaults for 12 states/inputs, else unit weights
    # and an unbounded input box
    Q: np.ndarray | None = None
    R: np.ndarray | float = 1e-4
    u_min: np.ndarray | None = None
    u_max: np.ndarray | None = None
    du_min: np.ndarray | float = -np.inf
    du_max: np.ndarray | float = np.inf
    x_min: np.ndarray | float = -np.inf
    x_max: np.ndarray | float = np.inf
    state_penalty: float = 1e4
    sqp_iterations: int = 2
    admm: AdmmSettings = field(default_factory=AdmmSettings)
    nx: int = NX
    nu: int = NU

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if not self.T > 0:
            raise ValueError("sampling time must be positive")
        if self.sqp_iterations < 1:
            raise ValueError("at least one SQP iteration is required")
        nx, nu = self.nx, self.nu
        if self.Q is None:
            self.Q = DEFAULT_Q if nx == NX else 1.0
        if self.u_min is None:
            self.u_min = np.tile([-400.0, -400.0, 0.0], 4) if nu == NU else -np.inf
        if self.u_max is None:
            self.u_max = np.tile([400.0, 400.0, 1500.0], 4) if nu == NU else np.inf
        self.Q = _diag(self.Q, nx, "Q")
        self.R = _diag(self.R, nu, "R", positive=True)
        self.u_min, self.u_max = _vec(self.u_min, nu, "u_min"), _vec(self.u_max, nu, "u_max")
        self.du_min, self.du_max = _vec(self.du_min, nu, "du_min"), _vec(self.du_max, nu, "du_max")
        self.x_min, self.x_max = _vec(self.x_min, nx, "x_min"), _vec(self.x_max, nx, "x_max")
        for lo, hi, name in ((self.u_min, self.u_max, "input"), (self.du_min, self.du_max, "increment"),
                             (self.x_min, self.x_max, "state")):
            if np.any(lo > hi):
                raise ValueError(f"{name} bounds are not well ordered")


@dataclass
class LinearizedModel:
    A: np.ndarray
    B: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        nx = self.A.shape[0]
        if self.A.shape != (nx, nx) or self.B.shape[0] != nx or self.c.shape != (nx,):
            raise ValueError("linearised stage has inconsistent dimensions")


class AffineSurrogate:
    """``x+ = A x + B u + c``; exact for the toy systems and the LQ oracle."""

    def __init__(self, A, B, c=None):
        self.A = np.asarray(A, dtype=float)
        self.B = np.asarray(B, dtype=float)
        self.c = np.zeros(self.A.shape[0]) if c is None else np.asarray(c, dtype=float)

    def step_jacobians(self, X, U, T, omega):
        Xn = X @ self.A.T + U @ self.B.T + self.c
        n = X.shape[0]
        return Xn, np.broadcast_to(self.A, (n,) + self.A.shape), np.broadcast_to(self.B, (n,) + self.B.shape), False


class CallableSurrogate:
    """Wraps a step function ``f(x, u, T) -> x+`` with central-difference Jacobians."""

    def __init__(self, step, eps: float = 1e-6):
        self.step = step
        self.eps = eps

    def step_jacobians(self, X, U, T, omega):
        n, nx, nu = X.shape[0], X.shape[1], U.shape[1]
        Xn = np.array([self.step(x, u, T) for x, u in zip(X, U)])
        A = np.empty((n, nx, nx))
        B = np.empty((n, nx, nu))
        for k in range(n):
            for j in range(nx):
                e = np.zeros(nx)
                e[j] = self.eps
                A[k, :, j] = (self.step(X[k] + e, U[k], T) - self.step(X[k] - e, U[k], T)) / (2 * self.eps)
            for j in range(nu):
                e = np.zeros(nu)
                e[j] = self.eps * max(1.0, abs(U[k, j]))
                B[k, :, j] = (self.step(X[k], U[k] + e, T) - self.step(X[k], U[k] - e, T)) / (2 * e[j])
        return Xn, A, B, False


def _rollout(model, x0, U, T, omega):
    """Nominal states under ``U`` (N+1 rows) and whether the surrogate extrapolated."""
    N = U.shape[0]
    X = np.empty((N + 1, x0.size))
    X[0] = x0
    if isinstance(model, MlpModel):
        w = np.asarray(omega.to_vector() if hasattr(omega, "to_vector") else omega, dtype=float)
        for i in range(N):
            v = np.concatenate([X[i], U[i], [T], w])
            X[i + 1] = forward_batch(model, v[None, :])[0]
        lo, hi = model.t_range
        return X, not (lo - 1e-12 <= T <= hi + 1e-12)
    for i in range(N):
        X[i + 1] = model.step_jacobians(X[i:i + 1], U[i:i + 1], T, omega)[0][0]
    return X, False


def _jacobians(model, X, U, T, omega):
    if isinstance(model, MlpModel):
        w = np.asarray(omega.to_vector() if hasattr(omega, "to_vector") else omega, dtype=float)
        n = X.shape[0]
        V = np.hstack([X, U, np.full((n, 1), T), np.tile(w, (n, 1))])
        phi, J = input_jacobian(model, V)
        nx = model.sizes[-1]
        return phi, J[:, :, :nx], J[:, :, nx:model.time_index]
    Xn, A, B, _ = model.step_jacobians(X, U, T, omega)
    return Xn, np.asarray(A), np.asarray(B)


def linearize_trajectory(model, x_k, U_nom, omega_hat, T: float):
    """Roll the surrogate forward from ``x_k`` under ``U_nom`` and linearise each stage.

    Returns ``(stages, X_nom, extrapolating)`` with ``X_nom`` of shape (N+1, 12).
    """
    x_k = np.asarray(x_k, dtype=float)
    U_nom = np.atleast_2d(np.asarray(U_nom, dtype=float))
    if not (np.all(np.isfinite(x_k)) and np.all(np.isfinite(U_nom))):
        raise ValueError("non-finite state or nominal input")
    X, extrap = _rollout(model, x_k, U_nom, T, omega_hat)
    if not np.all(np.isfinite(X)):
        raise FloatingPointError("surrogate rollout produced non-finite states")
    Xn, A, B = _jacobians(model, X[:-1], U_nom, T, omega_hat)
    stages = [LinearizedModel(A[i].copy(), B[i].copy(), Xn[i] - A[i] @ X[i] - B[i] @ U_nom[i])
              for i in range(U_nom.shape[0])]
    if extrap:
        log.warning("surrogate queried at T=%g outside its training range", T)
    return stages, X, extrap


def prediction_matrices(stages: list[LinearizedModel]) -> np.ndarray:
    """Block lower-triangular ``G`` with ``dX[1:] = G dU`` for the stacked deviations."""
    N = len(stages)
    nx, nu = stages[0].B.shape
    G = np.zeros((N * nx, N * nu))
    for j in range(N):
        blk = stages[j].B
        G[j * nx:(j + 1) * nx, j * nu:(j + 1) * nu] = blk
        for i in range(j + 1, N):
            blk = stages[i].A @ blk
            G[i * nx:(i + 1) * nx, j * nu:(j + 1) * nu] = blk
    return G


def condense(stages: list[LinearizedModel], X_nom, U_nom, u_prev, references, config: NmpcConfig,
             u_lower=None, u_upper=None) -> QpProblem:
    """Dense QP in the stacked increments.

    ``references`` holds the targets for ``x_1..x_N``. ``u_lower``/``u_upper``
    (N, 12) override the per-stage input box (for contact-aware bounds).
    States outside ``[x_min, x_max]`` along the nominal rollout are pulled
    back with the quadratic ``state_penalty``.
    """
    N = len(stages)
    NX, NU = config.nx, config.nu
    X_nom = np.asarray(X_nom, dtype=float)
    U_nom = np.asarray(U_nom, dtype=float).reshape(N, -1)
    refs = np.asarray(references, dtype=float).reshape(N, -1)
    u_prev = np.asarray(u_prev, dtype=float).reshape(NU)
    if refs.shape != (N, NX):
        raise ValueError(f"reference window has shape {refs.shape}, expected {(N, NX)}")
    if X_nom.shape != (N + 1, NX) or U_nom.shape != (N, NU):
        raise ValueError("nominal trajectory does not match the horizon")
    if stages[0].B.shape != (NX, NU):
        raise ValueError(f"linearised stages are {stages[0].B.shape}, config expects {(NX, NU)}")
    G = prediction_matrices(stages)
    # u = 1 (x) u_prev + S d with S block lower-triangular identities, so G S is a
    # reverse cumulative sum of G's column blocks
    M = np.flip(np.cumsum(np.flip(G.reshape(N * NX, N, NU), axis=1), axis=1), axis=1).reshape(N * NX, N * NU)
    x_free = (X_nom[1:] - refs).reshape(-1) + G @ (np.tile(u_prev, N) - U_nom.reshape(-1))
    q_w = np.tile(config.Q, N)
    H = 2.0 * (M.T @ (q_w[:, None] * M)) + 2.0 * np.diag(np.tile(config.R, N))
    q = 2.0 * M.T @ (q_w * x_free)

    # soft state box on the nominal rollout
    Xs = X_nom[1:].reshape(-1)
    lo_x, hi_x = np.tile(config.x_min, N), np.tile(config.x_max, N)
    viol = (Xs < lo_x) | (Xs > hi_x)
    if np.any(viol):
        target = np.where(Xs < lo_x, lo_x, hi_x)[viol]
        Mv = M[viol]
        off = (X_nom[1:].reshape(-1) + G @ (np.tile(u_prev, N) - U_nom.reshape(-1)))[viol] - target
        H += 2.0 * config.state_penalty * Mv.T @ Mv
        q += 2.0 * config.state_penalty * Mv.T @ off
    H = 0.5 * (H + H.T)

    lo_u = np.tile(config.u_min, (N, 1)) if u_lower is None else np.maximum(np.asarray(u_lower, dtype=float), config.u_min)
    hi_u = np.tile(config.u_max, (N, 1)) if u_upper is None else np.minimum(np.asarray(u_upper, dtype=float), config.u_max)
    if np.any(lo_u > hi_u):
        raise ValueError("per-stage input bounds are not well ordered")
    nz = N * NU
    S = np.kron(np.tril(np.ones((N, N))), np.eye(NU))
    A = np.vstack([np.eye(nz), S])
    l = np.concatenate([np.tile(config.du_min, N), lo_u.reshape(-1) - np.tile(u_prev, N)])
    u = np.concatenate([np.tile(config.du_max, N), hi_u.reshape(-1) - np.tile(u_prev, N)])
    const = float(x_free @ (q_w * x_free))
    meta = {"horizon": N, "u_prev": u_prev.copy(), "x_free": x_free, "M": M, "constant": const}
    return QpProblem(H, q, A, l, u, meta)


def increments_to_inputs(d, u_prev) -> np.ndarray:
    u_prev = np.asarray(u_prev, dtype=float).reshape(-1)
    d = np.asarray(d, dtype=float).reshape(-1, u_prev.size)
    return np.asarray(u_prev, dtype=float) + np.cumsum(d, axis=0)


@dataclass
class NmpcSolution:
    u: np.ndarray
    U: np.ndarray
    increments: np.ndarray
    X_pred: np.ndarray
    stats: dict
    dual: np.ndarray | None = None


def nmpc_step(model, x_k, references, omega_hat, config: NmpcConfig, u_prev,
              previous: NmpcSolution | None = None, u_lower=None, u_upper=None) -> NmpcSolution:
    """One receding-horizon solve; returns the first-stage input and the plan.

    The warm start shifts the previous increment sequence by one stage and
    pads with zero, so the nominal inputs hold the last planned value.
    """
    x_k = np.asarray(x_k, dtype=float)
    if not np.all(np.isfinite(x_k)):
        raise ValueError("non-finite state passed to the controller")
    N, NU = config.horizon, config.nu
    u_prev = np.asarray(u_prev, dtype=float).reshape(NU)
    references = np.asarray(references, dtype=float).reshape(N, config.nx)
    lo = np.tile(config.u_min, (N, 1)) if u_lower is None else np.maximum(u_lower, config.u_min)
    hi = np.tile(config.u_max, (N, 1)) if u_upper is None else np.minimum(u_upper, config.u_max)
    if previous is not None:
        d = np.vstack([previous.increments[1:], np.zeros((1, NU))])
        y_ws = None
    else:
        d = np.zeros((N, NU))
        y_ws = None
    # keep the nominal inside the (contact-aware) box
    U_nom = np.clip(increments_to_inputs(d, u_prev), lo, hi)
    d = np.diff(np.vstack([u_prev, U_nom]), axis=0)

    stats = {"iterations": 0, "primal_residual": np.nan, "dual_residual": np.nan, "objective": np.nan,
             "inexact": False, "extrapolating": False, "sqp": 0}
    res: AdmmResult | None = None
    X_nom = None
    for sqp in range(config.sqp_iterations):
        stages, X_nom, extrap = linearize_trajectory(model, x_k, U_nom, omega_hat, config.T)
        qp = condense(stages, X_nom, U_nom, u_prev, references, config, lo, hi)
        z_ws = d.reshape(-1)
        ws_obj = qp.objective(z_ws) if qp.violation(z_ws) <= 1e-9 else np.inf
        res = admm_solve(qp, config.admm, z0=z_ws, y0=y_ws)
        z = res.z
        if res.objective > ws_obj:
            z = z_ws
        d = z.reshape(N, NU)
        U_nom = np.clip(increments_to_inputs(d, u_prev), lo, hi)
        d = np.diff(np.vstack([u_prev, U_nom]), axis=0)
        y_ws = res.y
        stats["iterations"] += res.iterations
        stats["primal_residual"] = res.primal_residual
        stats["dual_residual"] = res.dual_residual
        stats["objective"] = min(res.objective, ws_obj) + qp.meta["constant"]
        stats["inexact"] = stats["inexact"] or res.inexact
        stats["extrapolating"] = stats["extrapolating"] or extrap
        stats["sqp"] = sqp + 1
    X_pred, _ = _rollout(model, x_k, U_nom, config.T, omega_hat)
    return NmpcSolution(U_nom[0].copy(), U_nom, d, X_pred, stats, res.y if res is not None else None)


class ModelSurrogate:
    """RK4 over the identified rigid-body model, with batched central-difference Jacobians.

    This is the reference predictor the learned surrogate approximates; it
    reads the payload estimate passed at call time, never the true payload.
    """

    def __init__(self, params, schedule, eps: float = 1e-6):
        self.params = params
        self.schedule = schedule
        self.eps = eps

    def _rk4(self, X, U, T, W):
        f = identified_dynamics_batch
        p, s = self.params, self.schedule
        k1 = f(X, U, W, p, s)
        k2 = f(X + 0.5 * T * k1, U, W, p, s)
        k3 = f(X + 0.5 * T * k2, U, W, p, s)
        k4 = f(X + T * k3, U, W, p, s)
        return X + (T / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

    def step_jacobians(self, X, U, T, omega):
        w = np.asarray(omega.to_vector() if hasattr(omega, "to_vector") else omega, dtype=float)
        n, nx, nu = X.shape[0], X.shape[1], U.shape[1]
        E = np.eye(nx + nu)
        h = self.eps * np.concatenate([np.ones(nx), np.maximum(1.0, np.abs(U).max(axis=0))])
        # rows: base point, then +/- perturbations of every coordinate
        Z = np.hstack([X, U])
        P = np.concatenate([Z[:, None, :], Z[:, None, :] + h * E, Z[:, None, :] - h * E], axis=1)
        P = P.reshape(-1, nx + nu)
        out = self._rk4(P[:, :nx], P[:, nx:], T, np.tile(w, (P.shape[0], 1))).reshape(n, 1 + 2 * (nx + nu), nx)
        Xn = out[:, 0]
        m = nx + nu
        J = (out[:, 1:1 + m] - out[:, 1 + m:]) / (2 * h)[None, :, None]
        J = np.transpose(J, (0, 2, 1))
        return Xn, J[:, :, :nx], J[:, :, nx:], False
