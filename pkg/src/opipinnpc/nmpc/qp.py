"""Convex QP ``min 1/2 z'Hz + q'z  s.t.  l <= A z <= u`` by operator splitting.

The iteration is the standard ADMM splitting with relaxation: one cached
Cholesky solve per step, a projection onto the bounds, and a dual update.
The problem is equilibrated (Ruiz) before iterating, the penalty is
rebalanced from the residual ratio, and a final polishing step solves the
equality-constrained problem on the guessed active set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, lu_factor, lu_solve


@dataclass
class QpProblem:
    H: np.ndarray
    q: np.ndarray
    A: np.ndarray
    l: np.ndarray
    u: np.ndarray
    meta: dict | None = None

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        self.q = np.asarray(self.q, dtype=float).reshape(-1)
        n = self.q.size
        if self.H.shape != (n, n):
            raise ValueError(f"Hessian has shape {self.H.shape}, expected {(n, n)}")
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        m = self.A.shape[0]
        self.l = np.broadcast_to(np.asarray(self.l, dtype=float), (m,)).copy()
        self.u = np.broadcast_to(np.asarray(self.u, dtype=float), (m,)).copy()
        if np.any(self.l > self.u):
            raise ValueError("constraint bounds are not well ordered")
        if not (np.all(np.isfinite(self.H)) and np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.A))):
            raise ValueError("non-finite QP data")

    @classmethod
    def box(cls, H, q, lower, upper, meta=None) -> "QpProblem":
        n = np.asarray(q).size
        return cls(H, q, np.eye(n), lower, upper, meta)

    @property
    def n(self) -> int:
        return self.q.size

    def objective(self, z) -> float:
        return float(0.5 * z @ self.H @ z + self.q @ z)

    def violation(self, z) -> float:
        Az = self.A @ z
        return float(np.max(np.maximum(self.l - Az, 0.0).tolist() + np.maximum(Az - self.u, 0.0).tolist() + [0.0]))


@dataclass
class AdmmSettings:
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    eps_abs: float = 1e-6
    eps_rel: float = 1e-6
    max_iter: int = 4000
    adaptive_rho: bool = True
    adaptive_interval: int = 25
    adaptive_tolerance: float = 5.0
    scaling_iter: int = 10
    polish: bool = True
    polish_refine: int = 3
    eq_factor: float = 1e3
    check_interval: int = 5

    def __post_init__(self):
        if not (self.rho > 0 and self.sigma > 0 and 0 < self.alpha < 2):
            raise ValueError("invalid ADMM penalty or relaxation parameter")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if self.check_interval < 1:
            raise ValueError("check_interval must be positive")


@dataclass
class AdmmResult:
    z: np.ndarray
    y: np.ndarray
    iterations: int
    primal_residual: float
    dual_residual: float
    objective: float
    converged: bool
    polished: bool
    rho: float

    @property
    def inexact(self) -> bool:
        return not self.converged


def _ruiz(H, q, A, iters):
    n, m = H.shape[0], A.shape[0]
    D, E, c = np.ones(n), np.ones(m), 1.0
    Hs, qs, As = H.copy(), q.copy(), A.copy()
    for _ in range(iters):
        col = np.maximum(np.abs(Hs).max(axis=0), np.abs(As).max(axis=0) if m else 0.0)
        dx = 1.0 / np.sqrt(np.clip(col, 1e-4, 1e4))
        dz = 1.0 / np.sqrt(np.clip(np.abs(As).max(axis=1), 1e-4, 1e4)) if m else np.ones(0)
        Hs = dx[:, None] * Hs * dx[None, :]
        qs = dx * qs
        As = dz[:, None] * As * dx[None, :]
        D *= dx
        E *= dz
        gamma = 1.0 / np.clip(max(np.abs(Hs).max(axis=0).mean(), np.abs(qs).max(initial=0.0)), 1e-4, 1e4)
        Hs *= gamma
        qs *= gamma
        c *= gamma
    return Hs, qs, As, D, E, c


def _polish(qp: QpProblem, z, y, reg: float = 1e-9, refine: int = 3):
    """Solve the KKT system on the active set guessed from (z, y)."""
    Az = qp.A @ z
    lower = (Az - qp.l < -y) & np.isfinite(qp.l)
    upper = (qp.u - Az < y) & np.isfinite(qp.u)
    lower |= np.isclose(qp.l, qp.u) & np.isfinite(qp.l)
    upper &= ~lower
    act = lower | upper
    Aa = qp.A[act]
    ba = np.where(lower[act], qp.l[act], qp.u[act])
    n, k = qp.n, int(act.sum())
    K = np.zeros((n + k, n + k))
    K[:n, :n] = qp.H
    K[:n, n:] = Aa.T
    K[n:, :n] = Aa
    Kreg = K.copy()
    Kreg[:n, :n] += reg * np.eye(n)
    Kreg[n:, n:] -= reg * np.eye(k)
    rhs = np.concatenate([-qp.q, ba])
    try:
        lu = lu_factor(Kreg, check_finite=False)
    except (LinAlgError, ValueError):
        return None
    sol = lu_solve(lu, rhs)
    for _ in range(refine):
        sol = sol + lu_solve(lu, rhs - K @ sol)
    if not np.all(np.isfinite(sol)):
        return None
    zp = sol[:n]
    yp = np.zeros(qp.A.shape[0])
    yp[act] = sol[n:]
    return zp, yp


def _inverse(M):
    # problems here are small and dense: one explicit inverse beats a
    # triangular solve per iteration
    return cho_solve(cho_factor(M), np.eye(M.shape[0]))


def _residuals(qp: QpProblem, z, y):
    Az = qp.A @ z
    zc = np.clip(Az, qp.l, qp.u)
    Hz = qp.H @ z
    Aty = qp.A.T @ y
    prim = float(np.max(np.abs(Az - zc), initial=0.0))
    dual = float(np.max(np.abs(Hz + qp.q + Aty), initial=0.0))
    return prim, dual, Az, zc, Hz, Aty


def admm_solve(qp: QpProblem, settings: AdmmSettings | None = None, z0=None, y0=None) -> AdmmResult:
    """Solve ``qp``; ``z0``/``y0`` warm-start the primal and dual iterates.

    Hitting ``max_iter`` is not an error: the last iterate is returned with
    ``converged=False``. The returned primal always satisfies the bounds of
    pure box rows exactly when ``A`` is the identity (projection step).
    """
    s = settings or AdmmSettings()
    n, m = qp.n, qp.A.shape[0]
    Hs, qs, As, D, E, c = _ruiz(qp.H, qp.q, qp.A, s.scaling_iter)
    ls, us = E * qp.l, E * qp.u
    eq = np.isclose(qp.l, qp.u)
    free = ~np.isfinite(qp.l) & ~np.isfinite(qp.u)

    def rho_vec(rho):
        r = np.full(m, rho)
        r[eq] *= s.eq_factor
        r[free] = 1e-6
        return r

    rho = s.rho
    rv = rho_vec(rho)
    Kinv = _inverse(Hs + s.sigma * np.eye(n) + As.T @ (rv[:, None] * As))

    x = np.zeros(n) if z0 is None else np.asarray(z0, dtype=float) / D
    y = np.zeros(m) if y0 is None else E * np.asarray(y0, dtype=float) * c
    zz = np.clip(As @ x, ls, us)
    converged = False
    prim = dual = np.inf
    it = 0
    for it in range(1, s.max_iter + 1):
        rhs = s.sigma * x - qs + As.T @ (rv * zz - y)
        xt = Kinv @ rhs
        zt = As @ xt
        x = s.alpha * xt + (1 - s.alpha) * x
        z_prev = zz
        zr = s.alpha * zt + (1 - s.alpha) * z_prev
        zz = np.clip(zr + y / rv, ls, us)
        y = y + rv * (zr - zz)
        if it % s.check_interval and it < s.max_iter:
            continue

        # residuals in the original scaling
        xu = D * x
        yu = E * y / c
        Ax = qp.A @ xu
        zu = zz / E
        Hx = qp.H @ xu
        Aty = qp.A.T @ yu
        prim = float(np.max(np.abs(Ax - zu), initial=0.0))
        dual = float(np.max(np.abs(Hx + qp.q + Aty), initial=0.0))
        eps_p = s.eps_abs + s.eps_rel * max(np.max(np.abs(Ax), initial=0.0), np.max(np.abs(zu), initial=0.0))
        eps_d = s.eps_abs + s.eps_rel * max(np.max(np.abs(Hx)), np.max(np.abs(Aty), initial=0.0),
                                            np.max(np.abs(qp.q)))
        if prim <= eps_p and dual <= eps_d:
            converged = True
            break
        if s.adaptive_rho and it % s.adaptive_interval < s.check_interval and m:
            # residual balancing in the scaled space
            Axs = As @ x
            pn = np.max(np.abs(Axs - zz)) / max(np.max(np.abs(Axs)), np.max(np.abs(zz)), 1e-12)
            dn = np.max(np.abs(Hs @ x + qs + As.T @ y)) / max(np.max(np.abs(Hs @ x)), np.max(np.abs(As.T @ y)),
                                                            np.max(np.abs(qs)), 1e-12)
            new = float(np.clip(rho * np.sqrt(pn / max(dn, 1e-12)), 1e-6, 1e6))
            if new > s.adaptive_tolerance * rho or new < rho / s.adaptive_tolerance:
                rho = new
                rv = rho_vec(rho)
                Kinv = _inverse(Hs + s.sigma * np.eye(n) + As.T @ (rv[:, None] * As))

    z_out = D * x
    y_out = E * y / c
    # identity rows are bounds on z itself; clip them so they hold exactly
    unit = np.flatnonzero((np.count_nonzero(qp.A, axis=1) == 1) & np.isclose(qp.A.sum(axis=1), 1.0))
    cols = np.argmax(qp.A[unit] != 0, axis=1)
    lo, hi = np.full(n, -np.inf), np.full(n, np.inf)
    np.maximum.at(lo, cols, qp.l[unit])
    np.minimum.at(hi, cols, qp.u[unit])
    z_out = np.clip(z_out, lo, np.maximum(lo, hi))
    prim, dual, *_ = _residuals(qp, z_out, y_out)
    polished = False
    if s.polish and m:
        pol = _polish(qp, z_out, y_out, refine=s.polish_refine)
        if pol is not None:
            zp, yp = pol
            pp, dp, *_ = _residuals(qp, zp, yp)
            tol = s.eps_abs + 1e-9
            if pp <= max(prim, tol) and dp <= max(dual, tol) and np.all(np.isfinite(zp)):
                z_out, y_out, prim, dual = zp, yp, pp, dp
                polished = True
                converged = converged or (pp <= tol and dp <= tol)
    return AdmmResult(z_out, y_out, it, prim, dual, qp.objective(z_out), converged, polished, rho)
