import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from aerothrow.errors import InvalidInputError
from aerothrow.model import (ArmState, VehicleParams, VehicleState, end_effector_to_quad, mixer_matrices,
                             quad_to_end_effector, quat_mul, quat_to_rot, rot_to_quat, rotational_derivatives,
                             rotor_map, skew, translational_accel)

unit_quats = st.lists(st.floats(-1, 1), min_size=4, max_size=4).filter(
    lambda v: np.linalg.norm(v) > 0.1).map(lambda v: np.asarray(v) / np.linalg.norm(v))
vec3 = st.lists(st.floats(-3, 3), min_size=3, max_size=3).map(np.asarray)


@pytest.fixture
def params():
    return VehicleParams()


def test_quat_to_rot_identity_and_pi_about_x():
    assert np.array_equal(quat_to_rot([1, 0, 0, 0]), np.eye(3))
    assert np.allclose(quat_to_rot([0, 1, 0, 0]), np.diag([1, -1, -1]), atol=1e-15)


def test_quat_to_rot_rejects_non_unit():
    with pytest.raises(InvalidInputError):
        quat_to_rot([1.0, 0.1, 0, 0])


@given(unit_quats)
def test_rotation_is_orthonormal_and_double_covered(q):
    R = quat_to_rot(q)
    assert np.allclose(R.T @ R, np.eye(3), atol=1e-9)
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-9)
    assert np.allclose(R, quat_to_rot(-q), atol=1e-15)


@given(unit_quats)
def test_rot_to_quat_round_trip(q):
    q2 = rot_to_quat(quat_to_rot(q))
    assert np.allclose(quat_to_rot(q2), quat_to_rot(q), atol=1e-9)


def test_quaternion_product_composes_rotations():
    rng = np.random.default_rng(1)
    a, b = (v / np.linalg.norm(v) for v in rng.standard_normal((2, 4)))
    assert np.allclose(quat_to_rot(quat_mul(a, b)), quat_to_rot(a) @ quat_to_rot(b), atol=1e-12)


def test_end_effector_static_offset():
    arm = ArmState(np.array([0.0, 0.0, -0.2]))
    p, v, a = end_effector_to_quad([1, 2, 1], [0.3, 0, 0], [0, 0.1, 0], arm, [1, 0, 0, 0], np.zeros(3),
                                   np.zeros(3))
    assert np.allclose(p, [1, 2, 1.2])
    assert np.allclose(v, [0.3, 0, 0])
    assert np.allclose(a, [0, 0.1, 0])


def test_end_effector_yaw_rate_velocity_term():
    arm = ArmState(np.array([0.1, 0.0, 0.0]))
    _, v, _ = end_effector_to_quad(np.zeros(3), np.zeros(3), np.zeros(3), arm, [1, 0, 0, 0], [0, 0, 1],
                                   np.zeros(3))
    assert np.allclose(v, [0.0, -0.1, 0.0])


def test_end_effector_zero_offset_is_identity():
    arm = ArmState(np.zeros(3))
    rng = np.random.default_rng(2)
    p, v, a = rng.standard_normal((3, 3))
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    out = end_effector_to_quad(p, v, a, arm, q, rng.standard_normal(3), rng.standard_normal(3))
    for x, y in zip(out, (p, v, a)):
        assert np.allclose(x, y)


def test_arm_reach_is_enforced():
    with pytest.raises(InvalidInputError):
        ArmState(np.array([0.0, 0.0, -0.3]))


def test_flatness_map_matches_rigid_motion():
    """Differentiate a rigidly rotating offset numerically and compare with the closed form."""
    r_b = np.array([0.05, -0.03, -0.2])
    omega_b = np.array([0.4, -0.7, 0.3])
    p_q = lambda t: np.array([t, 0.5 * t * t, np.sin(t)])

    def q_of(t):
        ang = np.linalg.norm(omega_b) * t
        axis = omega_b / np.linalg.norm(omega_b)
        return np.concatenate([[np.cos(ang / 2)], np.sin(ang / 2) * axis])

    p_e = lambda t: p_q(t) + quat_to_rot(q_of(t)) @ r_b
    t, h = 0.7, 1e-4
    v_e = (p_e(t + h) - p_e(t - h)) / (2 * h)
    a_e = (p_e(t + h) - 2 * p_e(t) + p_e(t - h)) / h ** 2
    pq, vq, aq = end_effector_to_quad(p_e(t), v_e, a_e, ArmState(r_b), q_of(t), omega_b, np.zeros(3))
    assert np.allclose(pq, p_q(t), atol=1e-10)
    assert np.allclose(vq, [1, t, np.cos(t)], atol=1e-7)
    assert np.allclose(aq, [0, 1, -np.sin(t)], atol=1e-4)
    pe2, ve2 = quad_to_end_effector(pq, vq, q_of(t), omega_b, r_b)
    assert np.allclose(pe2, p_e(t)) and np.allclose(ve2, v_e, atol=1e-7)


def test_translational_accel_examples(params):
    hover = VehicleState.hover([0, 0, 1])
    assert np.allclose(translational_accel(hover, params.m * 9.81, np.zeros(3), params), 0)
    assert np.allclose(translational_accel(hover, 0.0, np.zeros(3), params), [0, 0, -9.81])
    a = translational_accel(hover, 1.79 * 9.81, [0, 0, -0.2 * 9.81], params)
    assert np.allclose(a, 0, atol=1e-12)
    with pytest.raises(InvalidInputError):
        translational_accel(hover, -1.0, np.zeros(3), params)


def test_rotational_derivatives_rest_and_principal_spin():
    p = VehicleParams(inertia=np.diag([0.01, 0.02, 0.03]))
    qd, wd = rotational_derivatives([1, 0, 0, 0], np.zeros(3), np.zeros(3), np.zeros(3), p)
    assert not qd.any() and not wd.any()
    _, wd = rotational_derivatives([1, 0, 0, 0], [1, 0, 0], np.zeros(3), np.zeros(3), p)
    assert np.allclose(wd, 0)


def test_rotational_derivatives_match_integrated_oracle(params):
    """Torque-free motion integrated by scipy's adaptive RK45 conserves energy and momentum magnitude."""
    I = params.inertia
    w0 = np.array([0.3, -1.2, 2.0])

    def rhs(t, y):
        q = y[:4] / np.linalg.norm(y[:4])
        qd, wd = rotational_derivatives(q, y[4:], np.zeros(3), np.zeros(3), params)
        return np.concatenate([qd, wd])

    sol = solve_ivp(rhs, (0, 1.0), np.concatenate([[1, 0, 0, 0], w0]), rtol=1e-11, atol=1e-12)
    w1 = sol.y[4:, -1]
    q1 = sol.y[:4, -1] / np.linalg.norm(sol.y[:4, -1])
    assert w1 @ I @ w1 == pytest.approx(w0 @ I @ w0, rel=1e-8)
    # angular momentum is constant in the world frame
    assert np.allclose(quat_to_rot(q1) @ (I @ w1), I @ w0, atol=1e-7)


def test_spherical_inertia_energy_rk4():
    p = VehicleParams(inertia=np.eye(3) * 0.01)
    q = np.array([1.0, 0, 0, 0])
    w = np.array([1.0, 2.0, -0.5])
    e0 = w @ w
    dt = 1e-3
    f = lambda q, w: rotational_derivatives(q, w, np.zeros(3), np.zeros(3), p)
    for _ in range(1000):
        k1 = f(q, w)
        k2 = f(q + 0.5 * dt * k1[0], w + 0.5 * dt * k1[1])
        k3 = f(q + 0.5 * dt * k2[0], w + 0.5 * dt * k2[1])
        k4 = f(q + dt * k3[0], w + dt * k3[1])
        q = q + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        w = w + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        q /= np.linalg.norm(q)
    assert abs(w @ w - e0) < 1e-6


def test_rotor_map_examples(params):
    w = 900.0
    out = rotor_map(np.full(4, w), np.zeros(4), params)
    assert out.T == pytest.approx(4 * params.c_t * w * w)
    assert np.allclose(out.tau, 0, atol=1e-15)
    zero = rotor_map(np.zeros(4), np.zeros(4), params)
    assert zero.T == 0 and not zero.tau.any()
    one = rotor_map([w, 0, 0, 0], np.zeros(4), params)
    ct, cm = params.c_t, params.c_m
    assert one.T == pytest.approx(ct * w * w)
    assert np.allclose(one.tau, [params.l_y * ct * w * w, -params.l_x * ct * w * w, -cm * w * w])


def test_rotor_map_is_linear_in_squares_and_accelerations(params):
    rng = np.random.default_rng(3)
    G1, G2 = mixer_matrices(params)
    for _ in range(50):
        W = rng.uniform(0, 1500, 4)
        Wd = rng.normal(0, 2000, 4)
        full = rotor_map(W, Wd, params).as_vector()
        parts = rotor_map(W, np.zeros(4), params).as_vector() + G2 @ Wd
        assert np.allclose(full, parts, rtol=1e-12, atol=1e-12)
        assert np.allclose(full, G1 @ (W * W) + G2 @ Wd, rtol=1e-12, atol=1e-12)


def test_rotor_acceleration_yaw_reaction_has_drag_sign(params):
    """Spinning up a rotor must produce reaction torque in the same direction as its drag torque."""
    G1, G2 = mixer_matrices(params)
    assert np.all(np.sign(G2[3]) == np.sign(G1[3]))
    assert not G2[:3].any()


def test_params_validation():
    with pytest.raises(InvalidInputError):
        VehicleParams(m=-1)
    with pytest.raises(InvalidInputError):
        VehicleParams(inertia=np.array([[1, 0.5, 0], [0, 1, 0], [0, 0, 1]]))
    with pytest.raises(InvalidInputError):
        VehicleParams(c_t=0.0)


def test_skew_matches_cross():
    a, b = np.array([1.0, -2, 0.5]), np.array([0.3, 0.2, -1])
    assert np.allclose(skew(a) @ b, np.cross(a, b))
