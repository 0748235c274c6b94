import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from opipinnpc.model import (
    ControlInput,
    GaitSchedule,
    PayloadEstimate,
    PayloadTruth,
    RobotParams,
    RobotState,
    continuous_dynamics,
    contact_mask_at,
    gait_contact_at,
    ground_footholds,
    identified_dynamics_batch,
    nominal_dynamics,
    payload_dynamics,
    rk4_step,
    stance_forces,
)

PARAMS = RobotParams()
SYMMETRIC_FEET = np.array([[0.3, 0.15, 0.0], [0.3, -0.15, 0.0], [-0.3, 0.15, 0.0], [-0.3, -0.15, 0.0]])


def state_at(height=0.38):
    return RobotState.standing(height).to_vector()


def test_equilibrium_forces_give_zero_acceleration():
    payload = PayloadTruth(20.0, np.zeros(3))
    u = stance_forces(PARAMS, [True] * 4, payload.m_p)
    feet = SYMMETRIC_FEET.copy()
    dx = continuous_dynamics(state_at(), u, PARAMS, payload, feet)
    np.testing.assert_allclose(dx, 0.0, atol=1e-12)


def test_free_fall_without_legs_or_payload():
    p = RobotParams(leg_masses=np.zeros(4))
    dx = continuous_dynamics(state_at(), np.zeros(12), p, PayloadTruth(), SYMMETRIC_FEET)
    np.testing.assert_allclose(dx[6:9], [0.0, 0.0, -p.g])


def test_payload_torque_hand_cross_product():
    d = np.array([1.2, 3.0, 3.2])
    p = RobotParams(inertia=np.diag(d))
    payload = PayloadTruth(50.0, [0.1, 0.0, 0.0])
    np.testing.assert_allclose(payload.torque(9.81), [0.0, 49.05, 0.0], atol=1e-12)
    w = payload.omega(p)
    np.testing.assert_allclose(w.p_hat, [0.0, 49.05 / 3.0, 0.0], atol=1e-12)


def test_nominal_equals_continuous_without_payload():
    rng = np.random.default_rng(0)
    for _ in range(20):
        x, u = rng.normal(size=12), rng.normal(scale=100, size=12)
        np.testing.assert_array_equal(continuous_dynamics(x, u, PARAMS, PayloadTruth(), SYMMETRIC_FEET),
                                      nominal_dynamics(x, u, PARAMS, SYMMETRIC_FEET))


def test_nominal_equilibrium_leaves_only_kinematics():
    x = state_at()
    x[6:12] = [0.1, -0.2, 0.05, 0.3, 0.0, -0.1]
    u = stance_forces(PARAMS, [True] * 4)
    dx = nominal_dynamics(x, u, PARAMS, SYMMETRIC_FEET + np.r_[0, 0, 0])
    np.testing.assert_allclose(dx[0:6], x[6:12])
    np.testing.assert_allclose(dx[6:12], 0.0, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 100), st.lists(st.floats(-0.15, 0.15), min_size=3, max_size=3), st.integers(0, 2**31))
def test_decomposition_matches_true_payload_term(m_p, r_p, seed):
    rng = np.random.default_rng(seed)
    x, u = rng.normal(size=12), rng.normal(scale=200, size=12)
    feet = SYMMETRIC_FEET + rng.normal(scale=0.05, size=(4, 3))
    payload = PayloadTruth(m_p, r_p)
    diff = continuous_dynamics(x, u, PARAMS, payload, feet) - nominal_dynamics(x, u, PARAMS, feet)
    np.testing.assert_allclose(diff, payload_dynamics(payload.omega(PARAMS), PARAMS), atol=1e-12)


def test_angular_block_is_p_without_forces_or_legs():
    p = RobotParams(leg_masses=np.zeros(4))
    payload = PayloadTruth(40.0, [0.05, -0.1, 0.02])
    dx = continuous_dynamics(state_at(), np.zeros(12), p, payload, SYMMETRIC_FEET)
    np.testing.assert_array_equal(dx[9:12], payload.omega(p).p_hat)


def test_payload_dynamics_examples():
    np.testing.assert_array_equal(payload_dynamics(PayloadEstimate(), PARAMS), np.zeros(12))
    dx = payload_dynamics(PayloadEstimate(50.0, np.zeros(3)), PARAMS)
    assert np.flatnonzero(dx).tolist() == [8]
    assert dx[8] == pytest.approx(-50.0 * 9.81 / PARAMS.m)


def test_non_finite_inputs_rejected():
    x = state_at()
    x[3] = np.nan
    with pytest.raises(ValueError, match="non-finite state"):
        continuous_dynamics(x, np.zeros(12), PARAMS, PayloadTruth(), SYMMETRIC_FEET)
    with pytest.raises(ValueError):
        PayloadEstimate(np.inf, np.zeros(3))


def test_params_invariants():
    with pytest.raises(ValueError):
        RobotParams(m=0.0)
    with pytest.raises(ValueError):
        RobotParams(inertia=np.diag([1.0, -1.0, 1.0]))
    with pytest.raises(ValueError):
        RobotParams(leg_masses=[1, 1, -1, 1])
    with pytest.raises(ValueError):
        PayloadTruth(-1.0)


def test_control_input_zeroes_swing_feet():
    u = ControlInput(np.ones(12), [True, False, True, True])
    assert np.all(u.forces[1] == 0) and np.all(u.forces[[0, 2, 3]] == 1)
    assert ControlInput.from_vector(u.to_vector()).contact.tolist() == [True, False, True, True]


def test_rk4_double_integrator_exact():
    rhs = lambda x, u: np.array([x[1], u])
    x = rk4_step(0.01, np.zeros(2), 1.0, rhs)
    assert x[0] == pytest.approx(5e-5, abs=1e-18)
    assert x[1] == pytest.approx(0.01, abs=1e-18)


def test_rk4_zero_dynamics_and_bad_step():
    x0 = np.arange(12.0)
    np.testing.assert_array_equal(rk4_step(0.1, x0, None, lambda x, u: np.zeros_like(x)), x0)
    with pytest.raises(ValueError):
        rk4_step(0.0, x0, None, lambda x, u: x)
    with pytest.raises(FloatingPointError, match="stage 1"):
        rk4_step(0.1, x0, None, lambda x, u: np.full_like(x, np.nan))


def test_rk4_equilibrium_is_stationary():
    payload = PayloadTruth(30.0, np.zeros(3))
    u = stance_forces(PARAMS, [True] * 4, payload.m_p)
    x0 = state_at()
    feet = ground_footholds(x0[0:3], GaitSchedule())
    rhs = lambda x, uu: continuous_dynamics(x, uu, PARAMS, payload, feet)
    x = x0
    for _ in range(100):
        x = rk4_step(0.01, x, u, rhs)
    np.testing.assert_allclose(x, x0, atol=1e-13)


def test_rk4_fourth_order_convergence():
    # the rigid-body plant is linear in the state for fixed feet (RK4 would be
    # exact), so use a pendulum for the order check
    rhs = lambda x, u: np.array([x[1], -np.sin(x[0]) + u])
    x0 = np.array([1.0, 0.5])

    def fine(T, n=512):
        x = x0
        for _ in range(n):
            x = rk4_step(T / n, x, 0.2, rhs)
        return x

    e1 = np.linalg.norm(rk4_step(0.2, x0, 0.2, rhs) - fine(0.2))
    e2 = np.linalg.norm(rk4_step(0.1, x0, 0.2, rhs) - fine(0.1))
    assert e1 / e2 >= 8.0


def test_trot_schedule_examples():
    s = GaitSchedule()
    mask = contact_mask_at(0.25 * s.period, s)
    assert mask.tolist() == [True, False, False, True]
    assert contact_mask_at(0.75 * s.period, s).tolist() == [False, True, True, False]
    stand = GaitSchedule.standing()
    assert all(contact_mask_at(t, stand).all() for t in np.linspace(0, 3, 31))
    with pytest.raises(ValueError):
        GaitSchedule(duty=0.0)
    with pytest.raises(ValueError):
        GaitSchedule(phase_offsets=[0, 0.5, 1.0, 0])


def test_stance_fraction_equals_duty():
    s = GaitSchedule(period=0.5, duty=0.6, phase_offsets=[0.0, 0.5, 0.25, 0.75])
    dt = 0.001
    t = np.arange(0, s.period, dt)
    frac = np.mean([contact_mask_at(tt, s) for tt in t], axis=0)
    np.testing.assert_allclose(frac, s.duty, atol=dt / s.period + 1e-12)


def test_footholds_follow_torso():
    s = GaitSchedule()
    xs = []
    for t in np.arange(0, 2, 0.1):
        x = state_at()
        x[0] = 0.2 * t
        _, feet = gait_contact_at(t, s, x)
        xs.append(feet[:, 0])
        assert np.all(feet[:, 2] == s.ground_height)
    assert np.all(np.diff(np.array(xs), axis=0) > 0)


def test_batch_dynamics_matches_pointwise():
    rng = np.random.default_rng(3)
    s = GaitSchedule()
    X = rng.normal(size=(7, 12))
    U = rng.normal(scale=100, size=(7, 12))
    W = np.column_stack([rng.uniform(0, 80, 7), rng.normal(size=(7, 3))])
    got = identified_dynamics_batch(X, U, W, PARAMS, s)
    for i in range(7):
        feet = ground_footholds(X[i, 0:3], s)
        want = nominal_dynamics(X[i], U[i], PARAMS, feet) + payload_dynamics(PayloadEstimate.from_vector(W[i]), PARAMS)
        np.testing.assert_allclose(got[i], want, atol=1e-10)
