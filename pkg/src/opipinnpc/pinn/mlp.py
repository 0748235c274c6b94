"""Fully connected ReLU network with hand-written reverse- and forward-mode passes.

The network maps raw inputs ``v`` to predictions through normalisation:

    y    = net((v - in_mean) / in_scale)
    rate = rate_mean + rate_scale * y
    phi  = v[:n_out] + v[time_index] * rate     (residual form)
    phi  = rate                                 (plain form)

In residual form the network learns the mean rate of change over a step of
length ``T``, so ``phi(T = 0)`` is exactly the input state. ``out_mean`` and
``out_scale`` are the per-feature statistics of the predicted state; losses
are measured in that normalised space.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

STATE_DIM = 12
INPUT_DIM = 12
TIME_INDEX = 24
OMEGA_DIM = 4
SURROGATE_SIZES = (29, 96, 96, 96, 12)


@dataclass
class MlpModel:
    sizes: tuple
    weights: list
    biases: list
    in_mean: np.ndarray
    in_scale: np.ndarray
    out_mean: np.ndarray
    out_scale: np.ndarray
    rate_mean: np.ndarray | None = None
    rate_scale: np.ndarray | None = None
    residual: bool = True
    time_index: int = TIME_INDEX
    t_range: tuple = (0.005, 0.05)
    loss_dt: float = 0.01

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        self.in_mean = np.asarray(self.in_mean, dtype=float).reshape(self.sizes[0])
        self.in_scale = np.asarray(self.in_scale, dtype=float).reshape(self.sizes[0])
        self.out_mean = np.asarray(self.out_mean, dtype=float).reshape(self.sizes[-1])
        self.out_scale = np.asarray(self.out_scale, dtype=float).reshape(self.sizes[-1])
        self.rate_mean = (self.out_mean if self.rate_mean is None else
                          np.asarray(self.rate_mean, dtype=float)).reshape(self.sizes[-1]).copy()
        self.rate_scale = (self.out_scale if self.rate_scale is None else
                           np.asarray(self.rate_scale, dtype=float)).reshape(self.sizes[-1]).copy()
        if len(self.weights) != len(self.sizes) - 1 or len(self.biases) != len(self.sizes) - 1:
            raise ValueError("layer count does not match sizes")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (self.sizes[i + 1], self.sizes[i]) or b.shape != (self.sizes[i + 1],):
                raise ValueError(f"layer {i} has shape {W.shape}/{b.shape}, expected "
                                 f"{(self.sizes[i + 1], self.sizes[i])}")
        if np.any(self.in_scale <= 0) or np.any(self.out_scale <= 0) or np.any(self.rate_scale <= 0):
            raise ValueError("normalisation scales must be strictly positive")
        if self.residual and not (self.sizes[-1] <= self.time_index < self.sizes[0]):
            raise ValueError("residual form needs the time input after the state inputs")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "MlpModel":
        return MlpModel(self.sizes, [W.copy() for W in self.weights], [b.copy() for b in self.biases],
                        self.in_mean.copy(), self.in_scale.copy(), self.out_mean.copy(),
                        self.out_scale.copy(), self.rate_mean.copy(), self.rate_scale.copy(),
                        self.residual, self.time_index, tuple(self.t_range), self.loss_dt)

    def get_params(self) -> np.ndarray:
        return np.concatenate([p.ravel() for pair in zip(self.weights, self.biases) for p in pair])

    def set_params(self, flat) -> None:
        flat = np.asarray(flat, dtype=float)
        k = 0
        for i in range(self.n_layers):
            W, b = self.weights[i], self.biases[i]
            self.weights[i] = flat[k:k + W.size].reshape(W.shape).copy()
            k += W.size
            self.biases[i] = flat[k:k + b.size].copy()
            k += b.size
        if k != flat.size:
            raise ValueError(f"parameter vector has {flat.size} entries, model needs {k}")

    @property
    def n_params(self) -> int:
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    # normalisation helpers
    def normalize_inputs(self, V):
        return (np.asarray(V, dtype=float) - self.in_mean) / self.in_scale

    def denormalize_inputs(self, Vn):
        return np.asarray(Vn, dtype=float) * self.in_scale + self.in_mean

    def normalize_outputs(self, X):
        return (np.asarray(X, dtype=float) - self.out_mean) / self.out_scale

    def denormalize_outputs(self, Xn):
        return np.asarray(Xn, dtype=float) * self.out_scale + self.out_mean

    def head_to_rate(self, y):
        return np.asarray(y, dtype=float) * self.rate_scale + self.rate_mean

    def rate_from_labels(self, V, labels) -> np.ndarray:
        """Head quantity (rate, or state in plain form) that makes ``phi(V) == labels``."""
        V = np.asarray(V, dtype=float)
        labels = np.asarray(labels, dtype=float)
        if self.residual:
            n = self.sizes[-1]
            return (labels - V[:, :n]) / V[:, self.time_index:self.time_index + 1]
        return labels


def init_mlp(sizes=SURROGATE_SIZES, seed: int = 0, residual: bool = True,
             time_index: int = TIME_INDEX) -> MlpModel:
    """He-initialised weights, zero biases, identity normalisation."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / n_in), (n_out, n_in)))
        biases.append(np.zeros(n_out))
    return MlpModel(tuple(sizes), weights, biases, np.zeros(sizes[0]), np.ones(sizes[0]),
                    np.zeros(sizes[-1]), np.ones(sizes[-1]), residual=residual, time_index=time_index)


@dataclass
class Cache:
    V: np.ndarray
    Vn: np.ndarray
    activations: list = field(default_factory=list)
    masks: list = field(default_factory=list)
    y: np.ndarray | None = None
    rate: np.ndarray | None = None


def network_forward(model: MlpModel, Vn) -> tuple[np.ndarray, list, list]:
    """Raw network on normalised inputs; returns output, layer inputs, ReLU masks."""
    h = Vn
    acts, masks = [h], []
    last = model.n_layers - 1
    for i, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ W.T + b
        if i < last:
            m = z > 0.0
            h = z * m
            acts.append(h)
            masks.append(m)
        else:
            h = z
    return h, acts, masks


def forward_batch(model: MlpModel, V, return_cache: bool = False):
    """Predictions for a batch of raw inputs of shape (n, n_in)."""
    V = np.atleast_2d(np.asarray(V, dtype=float))
    Vn = model.normalize_inputs(V)
    y, acts, masks = network_forward(model, Vn)
    rate = model.head_to_rate(y)
    if model.residual:
        n = model.sizes[-1]
        phi = V[:, :n] + V[:, model.time_index:model.time_index + 1] * rate
    else:
        phi = rate
    if return_cache:
        return phi, Cache(V, Vn, acts, masks, y, rate)
    return phi


def pack_inputs(x, u, T, omega) -> np.ndarray:
    omega = omega.to_vector() if hasattr(omega, "to_vector") else omega
    return np.concatenate([np.asarray(x, dtype=float).reshape(-1), np.asarray(u, dtype=float).reshape(-1),
                           [float(T)], np.asarray(omega, dtype=float).reshape(-1)])


def forward(model: MlpModel, x_k, u_k, T: float, omega_hat) -> tuple[np.ndarray, bool]:
    """One-step prediction ``x_hat_{k+1}`` and whether ``T`` is outside the training range."""
    v = pack_inputs(x_k, u_k, T, omega_hat)
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite surrogate input")
    lo, hi = model.t_range
    extrapolating = not (lo - 1e-12 <= T <= hi + 1e-12)
    return forward_batch(model, v[None, :])[0], extrapolating


def network_backward(model: MlpModel, cache: Cache, gy) -> tuple[list, list, np.ndarray]:
    """Reverse pass through the raw network for upstream ``dL/dy`` of shape (n, n_out).

    Returns weight grads, bias grads and ``dL/dVn``.
    """
    g = np.asarray(gy, dtype=float)
    dW = [None] * model.n_layers
    db = [None] * model.n_layers
    for i in range(model.n_layers - 1, -1, -1):
        dW[i] = g.T @ cache.activations[i]
        db[i] = g.sum(axis=0)
        g = g @ model.weights[i]
        if i > 0:
            g = g * cache.masks[i - 1]
    return dW, db, g


def backward(model: MlpModel, cache: Cache, upstream) -> tuple[list, list, np.ndarray]:
    """Gradients of ``sum(upstream * phi)`` w.r.t. weights, biases and raw inputs."""
    gphi = np.atleast_2d(np.asarray(upstream, dtype=float))
    n_out = model.sizes[-1]
    gV = np.zeros_like(cache.V)
    if model.residual:
        T = cache.V[:, model.time_index:model.time_index + 1]
        gV[:, :n_out] += gphi
        gV[:, model.time_index] += np.sum(gphi * cache.rate, axis=1)
        grate = gphi * T
    else:
        grate = gphi
    gy = grate * model.rate_scale
    dW, db, gVn = network_backward(model, cache, gy)
    gV += gVn / model.in_scale
    return dW, db, gV


def network_tangent(model: MlpModel, cache: Cache, direction) -> tuple[np.ndarray, list]:
    """Forward-mode derivative of the raw network along ``direction`` in normalised input space.

    ``direction`` is (n_in,) or (n, n_in). The ReLU masks come from ``cache``.
    Returns the output tangent and the hidden tangents (needed for its adjoint).
    """
    n = cache.Vn.shape[0]
    s = np.broadcast_to(np.asarray(direction, dtype=float), (n, model.sizes[0]))
    tangents = [s]
    for i, W in enumerate(model.weights):
        t = s @ W.T
        if i < model.n_layers - 1:
            s = t * cache.masks[i]
            tangents.append(s)
        else:
            s = t
    return s, tangents


def tangent_backward(model: MlpModel, cache: Cache, tangents: list, g_dy) -> list:
    """Weight gradients of ``sum(g_dy * dy)`` for the tangent from ``network_tangent``.

    Biases do not enter the tangent, and the masks are locally constant.
    """
    g = np.asarray(g_dy, dtype=float)
    dW = [None] * model.n_layers
    for i in range(model.n_layers - 1, -1, -1):
        dW[i] = g.T @ tangents[i]
        if i > 0:
            g = (g @ model.weights[i]) * cache.masks[i - 1]
    return dW


def time_derivative(model: MlpModel, V, cache: Cache | None = None) -> tuple[np.ndarray, np.ndarray, Cache, list]:
    """``(phi, d phi / d T)`` for a batch, the latter by one forward-mode sweep."""
    if cache is None:
        phi, cache = forward_batch(model, V, return_cache=True)
    else:
        phi = None
    d = np.zeros(model.sizes[0])
    d[model.time_index] = 1.0 / model.in_scale[model.time_index]
    dy, tangents = network_tangent(model, cache, d)
    drate = dy * model.rate_scale
    if model.residual:
        T = cache.V[:, model.time_index:model.time_index + 1]
        dphi = cache.rate + T * drate
        if phi is None:
            phi = cache.V[:, :model.sizes[-1]] + T * cache.rate
    else:
        dphi = drate
        if phi is None:
            phi = cache.rate
    return phi, dphi, cache, tangents


def input_jacobian(model: MlpModel, V) -> tuple[np.ndarray, np.ndarray]:
    """``(phi, d phi / d v)`` with shape ((n, n_out), (n, n_out, n_in)) by reverse mode.

    All output coordinates are swept at once by carrying an identity seed
    through the reverse pass.
    """
    phi, cache = forward_batch(model, V, return_cache=True)
    n, n_out = phi.shape[0], model.sizes[-1]
    if model.residual:
        T = cache.V[:, model.time_index]
        G = T[:, None, None] * np.diag(model.rate_scale)
    else:
        G = np.broadcast_to(np.diag(model.rate_scale), (n, n_out, n_out)).copy()
    for i in range(model.n_layers - 1, -1, -1):
        G = G @ model.weights[i]
        if i > 0:
            G = G * cache.masks[i - 1][:, None, :]
    J = G / model.in_scale
    if model.residual:
        J[:, :, :n_out] += np.eye(n_out)
        J[:, :, model.time_index] += cache.rate
    return phi, J
