import numpy as np
import pytest

from opipinnpc.pinn import MlpModel, backward, forward, forward_batch, init_mlp, input_jacobian, time_derivative


def random_model(sizes, rng, residual=True, time_index=None):
    ti = sizes[-1] if time_index is None else time_index
    m = init_mlp(sizes, seed=int(rng.integers(1 << 30)), residual=residual, time_index=ti)
    m.biases = [rng.normal(scale=0.3, size=b.shape) for b in m.biases]
    m.in_mean, m.in_scale = rng.normal(size=sizes[0]), rng.uniform(0.5, 2.0, sizes[0])
    m.out_mean, m.out_scale = rng.normal(size=sizes[-1]), rng.uniform(0.5, 2.0, sizes[-1])
    if residual:
        m.rate_mean, m.rate_scale = rng.normal(size=sizes[-1]), rng.uniform(0.5, 2.0, sizes[-1])
    else:
        # plain form: the head is the state, so it shares the output statistics
        m.rate_mean, m.rate_scale = m.out_mean.copy(), m.out_scale.copy()
    return m


def random_inputs(m, n, rng):
    V = rng.normal(size=(n, m.sizes[0]))
    if m.residual:
        V[:, m.time_index] = rng.uniform(0.005, 0.05, n)
    return V


def kink_margin(m, V):
    h = m.normalize_inputs(V)
    margin = np.inf
    for W, b in zip(m.weights[:-1], m.biases[:-1]):
        z = h @ W.T + b
        margin = min(margin, np.min(np.abs(z)))
        h = np.maximum(z, 0)
    return margin


def fd_check(m, V, c, h=1e-5):
    """Relative error of reverse-mode parameter and input gradients of sum(c * phi)."""
    phi, cache = forward_batch(m, V, return_cache=True)
    dW, db, dV = backward(m, cache, c)
    g = np.concatenate([np.concatenate([a.ravel(), b.ravel()]) for a, b in zip(dW, db)])
    f = lambda mm, VV: float(np.sum(c * forward_batch(mm, VV)))
    th = m.get_params()
    probe = m.copy()
    fd = np.empty_like(th)
    for i in range(th.size):
        t = th.copy(); t[i] += h; probe.set_params(t); fp = f(probe, V)
        t[i] -= 2 * h; probe.set_params(t); fm = f(probe, V)
        fd[i] = (fp - fm) / (2 * h)
    fdV = np.empty_like(V)
    for idx in np.ndindex(*V.shape):
        E = np.zeros_like(V); E[idx] = h
        fdV[idx] = (f(m, V + E) - f(m, V - E)) / (2 * h)
    rel = lambda a, b: np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12)
    return rel(g, fd), rel(dV, fdV), rel(dV[:, m.time_index], fdV[:, m.time_index]) if m.residual else 0.0


def test_parameter_and_input_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    checked = 0
    while checked < 10:
        m = random_model((5, 8, 8, 3), rng)
        V = random_inputs(m, 4, rng)
        if kink_margin(m, V) < 1e-3:
            continue
        c = rng.normal(size=(4, 3))
        ep, ei, et = fd_check(m, V, c)
        assert ep < 1e-5 and ei < 1e-5 and et < 1e-5
        checked += 1


def test_plain_form_gradients():
    rng = np.random.default_rng(1)
    m = random_model((6, 10, 4), rng, residual=False)
    V = random_inputs(m, 5, rng)
    assert kink_margin(m, V) > 1e-4
    ep, ei, _ = fd_check(m, V, rng.normal(size=(5, 4)))
    assert ep < 1e-5 and ei < 1e-5


def test_zero_final_layer_outputs_normalisation_mean():
    rng = np.random.default_rng(2)
    m = random_model((7, 9, 3), rng, residual=False)
    m.weights[-1][:] = 0.0
    m.biases[-1][:] = 0.0
    V = rng.normal(size=(6, 7))
    np.testing.assert_array_equal(forward_batch(m, V), np.tile(m.out_mean, (6, 1)))
    # residual form: the head collapses to its mean rate
    r = random_model((7, 9, 3), rng)
    r.weights[-1][:] = 0.0
    r.biases[-1][:] = 0.0
    V[:, r.time_index] = 0.02
    np.testing.assert_allclose(forward_batch(r, V), V[:, :3] + 0.02 * r.rate_mean, atol=1e-15)


def test_identity_network_passes_gradient_through():
    m = MlpModel((3, 3), [np.eye(3)], [np.zeros(3)], np.zeros(3), np.ones(3), np.zeros(3), np.ones(3),
                 residual=False)
    g = np.array([[1.0, -2.0, 0.5]])
    _, cache = forward_batch(m, np.array([[0.3, 0.1, -0.7]]), return_cache=True)
    _, _, dV = backward(m, cache, g)
    np.testing.assert_array_equal(dV, g)


def test_relu_blocks_gradient_for_negative_preactivation():
    W1 = np.array([[1.0], [-1.0]])
    m = MlpModel((1, 2, 1), [W1, np.ones((1, 2))], [np.zeros(2), np.zeros(1)], np.zeros(1), np.ones(1),
                 np.zeros(1), np.ones(1), residual=False)
    _, cache = forward_batch(m, np.array([[2.0]]), return_cache=True)
    dW, db, _ = backward(m, cache, np.ones((1, 1)))
    assert dW[0][1, 0] == 0.0 and db[0][1] == 0.0
    assert dW[0][0, 0] == 2.0


def test_forward_is_pure_and_flags_extrapolation():
    rng = np.random.default_rng(4)
    m = init_mlp(seed=1)
    x, u, w = rng.normal(size=12), rng.normal(size=12), rng.normal(size=4)
    a, flag = forward(m, x, u, 0.01, w)
    b, _ = forward(m, x, u, 0.01, w)
    assert a.tobytes() == b.tobytes() and not flag
    _, flag = forward(m, x, u, 0.2, w)
    assert flag
    with pytest.raises(ValueError):
        forward(m, x * np.nan, u, 0.01, w)


def test_normalisation_round_trip():
    rng = np.random.default_rng(5)
    m = random_model((29, 8, 12), rng, time_index=24)
    V = rng.normal(size=(10, 29))
    np.testing.assert_allclose(m.denormalize_inputs(m.normalize_inputs(V)), V, atol=1e-12)
    X = rng.normal(size=(10, 12))
    np.testing.assert_allclose(m.denormalize_outputs(m.normalize_outputs(X)), X, atol=1e-12)


def test_input_jacobian_and_time_derivative_agree():
    rng = np.random.default_rng(6)
    m = random_model((29, 16, 16, 12), rng, time_index=24)
    V = random_inputs(m, 5, rng)
    phi, J = input_jacobian(m, V)
    phi2, dphi, _, _ = time_derivative(m, V)
    np.testing.assert_array_equal(phi, phi2)
    np.testing.assert_allclose(dphi, J[:, :, 24], rtol=1e-12, atol=1e-12)
    h = 1e-6
    for j in (0, 13, 24, 27):
        E = np.zeros_like(V); E[:, j] = h
        fd = (forward_batch(m, V + E) - forward_batch(m, V - E)) / (2 * h)
        np.testing.assert_allclose(J[:, :, j], fd, atol=1e-6)


def test_model_validation():
    with pytest.raises(ValueError):
        MlpModel((2, 2), [np.eye(2)], [np.zeros(2)], np.zeros(2), np.zeros(2), np.zeros(2), np.ones(2))
    with pytest.raises(ValueError):
        MlpModel((2, 3), [np.eye(2)], [np.zeros(2)], np.zeros(2), np.ones(2), np.zeros(3), np.ones(3))
    m = init_mlp((4, 5, 2), time_index=2)
    with pytest.raises(ValueError):
        m.set_params(np.zeros(m.n_params + 1))
