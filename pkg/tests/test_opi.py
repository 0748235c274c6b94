import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from opipinnpc.model import GaitSchedule, PayloadTruth, RobotParams
from opipinnpc.opi import (
    IdentificationError,
    IdentifierState,
    auxiliary_control,
    estimate_mass,
    identify,
    update_law_step,
)
from opipinnpc.plant import Plant

PARAMS = RobotParams()


def test_mass_static_balance():
    fz = np.full(10, (50 + 4 + 50) * 9.81)
    assert estimate_mass(fz, np.zeros(10), PARAMS) == pytest.approx(50.0, abs=1e-12)
    fz0 = np.full(10, PARAMS.supported_mass * 9.81)
    assert estimate_mass(fz0, np.zeros(10), PARAMS) == pytest.approx(0.0, abs=1e-12)


def test_mass_noisy_forces():
    rng = np.random.default_rng(0)
    fz = (50 + 4 + 50) * 9.81 + rng.normal(0, 5, 100)
    assert abs(estimate_mass(fz, np.zeros(100), PARAMS) - 50) < 1


def test_mass_errors_and_discards():
    with pytest.raises(ValueError, match="all-stance"):
        estimate_mass(np.ones(3), np.zeros(3), PARAMS, contacts=np.zeros((3, 4), bool))
    with pytest.raises(ValueError, match="free fall"):
        estimate_mass(np.zeros(2), np.full(2, -9.81), PARAMS)
    # a free-fall sample is dropped, the rest are used
    fz = np.array([0.0, (54 + 10) * 9.81])
    az = np.array([-9.81, 0.0])
    assert estimate_mass(fz, az, PARAMS) == pytest.approx(10.0)


def test_auxiliary_control_examples():
    p = np.array([0.1, -0.3, 0.2])
    ident = IdentifierState(p_hat=p)
    u = auxiliary_control(np.zeros(3), np.zeros(3), np.zeros(3), ident, np.zeros(3))
    np.testing.assert_allclose(u, -p)
    np.testing.assert_allclose(u + 0 + p, 0.0)
    u0 = auxiliary_control(np.zeros(3), np.zeros(3), np.zeros(3), IdentifierState(), np.zeros(3))
    np.testing.assert_array_equal(u0, 0.0)
    u1 = auxiliary_control([0.1, 0, 0], np.zeros(3), np.zeros(3), IdentifierState(), np.zeros(3))
    np.testing.assert_allclose(u1, [-0.048, 0, 0], atol=1e-15)


def test_update_law_fixed_point():
    ident = IdentifierState(p_hat=[0.2, 0.1, -0.4])
    x22 = np.array([0.05, 0.0, 0.01])
    k = np.array([0.3, 0.0, 0.0])
    u = -(ident.p_hat + ident.K @ x22 + k)
    nxt = update_law_step(ident, u, k, x22, 0.01)
    np.testing.assert_allclose(nxt.p_hat, ident.p_hat, atol=1e-15)


def test_z_decay_matches_closed_form():
    ident = IdentifierState(z=np.ones(3))
    dt = 1e-4
    for _ in range(int(1.0 / dt)):
        ident = update_law_step(ident, np.zeros(3), np.zeros(3), np.zeros(3), dt)
    assert np.linalg.norm(ident.z) == pytest.approx(np.exp(-1.7) * np.sqrt(3), rel=1e-3)


def test_gain_validation():
    with pytest.raises(ValueError):
        IdentifierState(K=-1.0)
    with pytest.raises(ValueError):
        IdentifierState(W=np.ones((3, 3)))
    with pytest.raises(ValueError):
        IdentifierState(e_threshold=0)
    with pytest.raises(ValueError):
        update_law_step(IdentifierState(), np.zeros(3), np.zeros(3), np.zeros(3), 0.0)


def subsystem_closed_loop(p, T=0.01, seconds=5.0):
    """Angular channel theta_ddot = u + k + p integrated with RK4, law at the control rate."""
    ident = IdentifierState()
    k = np.zeros(3)
    x12, x22 = np.array([0.05, -0.02, 0.03]), np.zeros(3)
    for _ in range(int(round(seconds / T))):
        u = auxiliary_control(x12, x22, np.zeros(3), ident, k)
        f = lambda s: np.concatenate([s[3:6], u + k + p])
        s = np.concatenate([x12, x22])
        k1 = f(s); k2 = f(s + T / 2 * k1); k3 = f(s + T / 2 * k2); k4 = f(s + T * k3)
        s = s + T / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        ident = update_law_step(ident, u, k, x22, T)
        x12, x22 = s[0:3], s[3:6]
    e_bar = x22 + ident.W @ x12
    return ident.estimate(x22), e_bar


def test_subsystem_converges_example():
    p = np.array([0.0, 0.5, 0.0])
    est, _ = subsystem_closed_loop(p)
    assert np.linalg.norm(est - p) < 1e-3


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3))
def test_subsystem_converges_for_any_constant_p(p):
    p = np.array(p)
    est, e_bar = subsystem_closed_loop(p, seconds=15.0)
    assert np.linalg.norm(est - p) < 1e-3
    assert np.linalg.norm(e_bar) < 1e-3


def standing_plant(payload):
    return Plant(PARAMS, payload, GaitSchedule.standing())


def test_identify_example_payload():
    payload = PayloadTruth(50.0, [0.1, 0.0, 0.05])
    p_true = payload.omega(PARAMS).p_hat
    res = identify(standing_plant(payload), true_p=p_true)
    assert res.converged
    assert abs(res.estimate.m_p_hat - 50) < 0.5
    assert np.linalg.norm(res.estimate.p_hat - p_true) / np.linalg.norm(p_true) < 0.02
    tr = res.trace.arrays()
    z = np.linalg.norm(tr["z"], axis=1)
    assert z[0] > 1.0 and np.all(np.diff(z) <= 0)
    # the recorded diagnostic is the measured gap between estimate and truth
    np.testing.assert_allclose(z, np.linalg.norm(tr["p_est"] - p_true, axis=1), atol=1e-9)


def test_identify_zero_payload():
    res = identify(standing_plant(PayloadTruth()))
    assert res.converged
    assert abs(res.estimate.m_p_hat) < 1e-6
    assert np.linalg.norm(res.estimate.p_hat) < 1e-3


def test_identify_infinite_threshold_returns_after_one_iteration():
    res = identify(standing_plant(PayloadTruth(30.0, [0.05, 0, 0])), e_threshold=np.inf)
    assert res.iterations == 1


def test_identify_iteration_cap():
    with pytest.raises(IdentificationError) as info:
        identify(standing_plant(PayloadTruth(80.0, [0.1, 0.05, 0])), max_time=3.5, e_threshold=1e-12)
    assert info.value.final_error is not None
