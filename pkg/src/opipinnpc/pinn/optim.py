"""Adam and L-BFGS (two-loop recursion, strong-Wolfe line search) on flat vectors."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

Objective = Callable[[np.ndarray], tuple[float, np.ndarray]]


@dataclass
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    t: int = 0

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimiser of the cubic interpolating (a, fa, ga) and (b, fb, gb), or None."""
    d1 = ga + gb - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - ga * gb
    if disc < 0:
        return None
    d2 = np.sign(b - a) * np.sqrt(disc)
    x = b - (b - a) * (gb + d2 - d1) / (gb - ga + 2.0 * d2)
    return x if np.isfinite(x) else None


@dataclass
class LineSearchResult:
    step: float
    f: float
    g: np.ndarray
    evaluations: int
    success: bool


def strong_wolfe(fun: Objective, x, f0: float, g0: np.ndarray, d: np.ndarray,
                 step: float = 1.0, c1: float = 1e-4, c2: float = 0.9,
                 max_evals: int = 25, step_max: float = 1e10) -> LineSearchResult:
    """Bracketing then zoom line search for the strong Wolfe conditions."""
    dphi0 = float(g0 @ d)
    if dphi0 >= 0:
        raise ValueError("line search direction is not a descent direction")
    a_prev, f_prev, dphi_prev = 0.0, f0, dphi0
    g_prev = g0
    a = step
    evals = 0
    lo = hi = None
    while evals < max_evals:
        f, g = fun(x + a * d)
        evals += 1
        dphi = float(g @ d)
        if not np.isfinite(f):
            a = 0.5 * (a_prev + a)
            continue
        if f > f0 + c1 * a * dphi0 or (evals > 1 and f >= f_prev):
            lo, hi = (a_prev, f_prev, dphi_prev, g_prev), (a, f, dphi, g)
            break
        if abs(dphi) <= -c2 * dphi0:
            return LineSearchResult(a, f, g, evals, True)
        if dphi >= 0:
            lo, hi = (a, f, dphi, g), (a_prev, f_prev, dphi_prev, g_prev)
            break
        a_prev, f_prev, dphi_prev, g_prev = a, f, dphi, g
        a = min(2.0 * a, step_max)
    else:
        return LineSearchResult(a_prev, f_prev, g_prev, evals, False)

    # zoom: lo always satisfies sufficient decrease and has the lowest value
    best = lo
    while evals < max_evals:
        a_lo, f_lo, d_lo, _ = lo
        a_hi, f_hi, d_hi, _ = hi
        a = _cubic_min(a_lo, f_lo, d_lo, a_hi, f_hi, d_hi)
        left, right = min(a_lo, a_hi), max(a_lo, a_hi)
        margin = 0.1 * (right - left)
        if a is None or not (left + margin <= a <= right - margin):
            a = 0.5 * (a_lo + a_hi)
        f, g = fun(x + a * d)
        evals += 1
        dphi = float(g @ d)
        if not np.isfinite(f) or f > f0 + c1 * a * dphi0 or f >= f_lo:
            hi = (a, f, dphi, g)
        else:
            if abs(dphi) <= -c2 * dphi0:
                return LineSearchResult(a, f, g, evals, True)
            if dphi * (a_hi - a_lo) >= 0:
                hi = lo
            lo = (a, f, dphi, g)
            best = lo
        if abs(hi[0] - lo[0]) < 1e-16 * max(1.0, abs(lo[0])):
            break
    a, f, _, g = best
    return LineSearchResult(a, f, g, evals, a > 0 and f < f0)


@dataclass
class LbfgsResult:
    x: np.ndarray
    f: float
    iterations: int
    evaluations: int
    history: list = field(default_factory=list)
    message: str = ""


def lbfgs(fun: Objective, x0, memory: int = 20, max_iter: int = 200, c1: float = 1e-4,
          c2: float = 0.9, gtol: float = 1e-12, ftol: float = 1e-15,
          callback: Callable[[int, np.ndarray, float], None] | None = None) -> LbfgsResult:
    """Limited-memory BFGS minimisation of ``fun`` returning (value, gradient)."""
    x = np.asarray(x0, dtype=float).copy()
    f, g = fun(x)
    evals = 1
    if not np.isfinite(f):
        raise FloatingPointError("non-finite objective at the initial point")
    S, Y, rho = [], [], []
    history = [f]
    message = "max iterations reached"
    it = 0
    for it in range(1, max_iter + 1):
        if np.linalg.norm(g, np.inf) <= gtol:
            message = "gradient tolerance reached"
            it -= 1
            break
        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y, r in zip(reversed(S), reversed(Y), reversed(rho)):
            a = r * (s @ q)
            alphas.append(a)
            q -= a * y
        if S:
            q *= (S[-1] @ Y[-1]) / (Y[-1] @ Y[-1])
        else:
            q *= min(1.0, 1.0 / max(np.linalg.norm(g, 1), 1e-300))
        for (s, y, r), a in zip(zip(S, Y, rho), reversed(alphas)):
            b = r * (y @ q)
            q += s * (a - b)
        d = -q
        if g @ d >= 0:
            S, Y, rho = [], [], []
            d = -g / max(np.linalg.norm(g), 1e-300)
        ls = strong_wolfe(fun, x, f, g, d, 1.0, c1, c2)
        evals += ls.evaluations
        if not ls.success and S:
            # drop the curvature pairs and retry along the scaled gradient
            S, Y, rho = [], [], []
            d = -g / max(np.linalg.norm(g, 1), 1e-300)
            ls = strong_wolfe(fun, x, f, g, d, 1.0, c1, c2)
            evals += ls.evaluations
        if not ls.success and not (ls.step > 0 and ls.f < f):
            message = "line search failed"
            it -= 1
            break
        s = ls.step * d
        x_new = x + s
        y = ls.g - g
        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            S.append(s)
            Y.append(y)
            rho.append(1.0 / sy)
            if len(S) > memory:
                S.pop(0)
                Y.pop(0)
                rho.pop(0)
        f_old = f
        x, f, g = x_new, ls.f, ls.g
        history.append(f)
        if callback is not None:
            callback(it, x, f)
        if abs(f_old - f) <= ftol * max(1.0, abs(f)):
            message = "function tolerance reached"
            break
    return LbfgsResult(x, f, it, evals, history, message)
