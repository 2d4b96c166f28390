"""Physical types, frame conventions and rigid-body dynamics of the aerial manipulator.

Conventions
-----------
* World frame: z up, gravity ``(0, 0, -g_mag)``.
* Quaternions are Hamilton, scalar-first ``[qw, qx, qy, qz]``; ``quat_to_rot(q)``
  maps body-frame vectors into the world frame.
* Body rates ``omega`` are expressed in the body frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

GRAVITY = 9.81
E3 = np.array([0.0, 0.0, 1.0])


def gravity_vector(g_mag: float = GRAVITY) -> np.ndarray:
    return np.array([0.0, 0.0, -g_mag])


# ---------------------------------------------------------------------------
# Quaternion / SO(3) helpers
# ---------------------------------------------------------------------------

def skew(w) -> np.ndarray:
    return np.array([[0.0, -w[2], w[1]],
                     [w[2], 0.0, -w[0]],
                     [-w[1], w[0], 0.0]])


def quat_mul(a, b) -> np.ndarray:
    """Hamilton product ``a ⊗ b``."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conj(q) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q)


def _check_unit(q, tol):
    n = np.linalg.norm(q)
    if not np.all(np.isfinite(q)) or abs(n - 1.0) > tol:
        raise InvalidInputError(f"quaternion norm {n!r} is not 1 within {tol}")


def quat_to_rot(q, tol: float = 1e-6) -> np.ndarray:
    """Rotation matrix of a unit quaternion (body -> world)."""
    q = np.asarray(q, dtype=float)
    if q.shape != (4,):
        raise InvalidInputError("quaternion must have shape (4,)")
    _check_unit(q, tol)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def rot_to_quat(R) -> np.ndarray:
    """Unit quaternion (qw >= 0) of a rotation matrix (Shepperd's method)."""
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    if tr > 0.0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = np.array([0.25 * s,
                      (R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s,
                      (R[1, 0] - R[0, 1]) / s])
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = np.array([(R[2, 1] - R[1, 2]) / s, 0.25 * s,
                      (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s])
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = np.array([(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s,
                      0.25 * s, (R[1, 2] + R[2, 1]) / s])
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = np.array([(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s,
                      (R[1, 2] + R[2, 1]) / s, 0.25 * s])
    if q[0] < 0.0:
        q = -q
    return q / np.linalg.norm(q)


def attitude_from_thrust(thrust_vec, yaw: float = 0.0):
    """Attitude whose body z axis is along ``thrust_vec`` with the given yaw.

    Returns ``(q, R)``. A vanishing thrust vector falls back to level attitude.
    """
    t = np.asarray(thrust_vec, dtype=float)
    n = np.linalg.norm(t)
    z_b = t / n if n > 1e-9 else E3.copy()
    x_c = np.array([np.cos(yaw), np.sin(yaw), 0.0])
    y_b = np.cross(z_b, x_c)
    y_b /= np.linalg.norm(y_b)
    x_b = np.cross(y_b, z_b)
    R = np.column_stack([x_b, y_b, z_b])
    return rot_to_quat(R), R


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass
class VehicleState:
    """Rigid-body state of the quadrotor centre."""

    p_q: np.ndarray
    v_q: np.ndarray
    q: np.ndarray
    omega: np.ndarray

    @classmethod
    def hover(cls, position) -> "VehicleState":
        return cls(np.array(position, dtype=float), np.zeros(3),
                   np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    def as_nmpc_vector(self) -> np.ndarray:
        return np.concatenate([self.p_q, self.v_q, self.q])

    def is_finite(self) -> bool:
        return bool(all(np.all(np.isfinite(a)) for a in (self.p_q, self.v_q, self.q, self.omega)))


@dataclass
class ArmState:
    p_e_B: np.ndarray
    v_e_B: np.ndarray = field(default_factory=lambda: np.zeros(3))
    a_e_B: np.ndarray = field(default_factory=lambda: np.zeros(3))
    reach: float = 0.25

    def __post_init__(self):
        self.p_e_B = np.asarray(self.p_e_B, dtype=float)
        self.v_e_B = np.asarray(self.v_e_B, dtype=float)
        self.a_e_B = np.asarray(self.a_e_B, dtype=float)
        if np.linalg.norm(self.p_e_B) > self.reach + 1e-12:
            raise InvalidInputError(
                f"end-effector offset {self.p_e_B} exceeds arm reach {self.reach} m")


@dataclass
class VehicleParams:
    """Physical parameters of the platform.

    ``u_min``/``u_max`` bound the rotor speeds [rad/s]; ``motor_tau`` is the
    first-order rotor-speed time constant used by the plant and by INDI.
    """

    m: float = 1.59
    inertia: np.ndarray = field(default_factory=lambda: np.diag([8.5e-3, 8.5e-3, 1.5e-2]))
    l_x: float = 0.12
    l_y: float = 0.12
    c_t: float = 3.9e-6
    c_m: float = 6.24e-8
    I_r: float = 3.0e-5
    g_mag: float = GRAVITY
    u_min: float = 0.0
    u_max: float = 1800.0
    motor_tau: float = 0.03

    def __post_init__(self):
        self.inertia = np.asarray(self.inertia, dtype=float)
        if self.inertia.shape == (3,):
            self.inertia = np.diag(self.inertia)
        self.validate()

    def validate(self):
        I = self.inertia
        if self.m <= 0:
            raise InvalidInputError("mass must be positive")
        if I.shape != (3, 3) or not np.allclose(I, I.T) or np.min(np.linalg.eigvalsh(I)) <= 0:
            raise InvalidInputError("inertia must be symmetric positive-definite")
        for name in ("c_t", "c_m", "l_x", "l_y", "motor_tau"):
            if getattr(self, name) <= 0:
                raise InvalidInputError(f"{name} must be positive")
        if not 0 <= self.u_min < self.u_max:
            raise InvalidInputError("rotor speed bounds must satisfy 0 <= u_min < u_max")

    @property
    def gravity(self) -> np.ndarray:
        return gravity_vector(self.g_mag)

    def hover_rotor_speed(self, mass: float | None = None) -> float:
        mass = self.m if mass is None else mass
        return float(np.sqrt(mass * self.g_mag / (4.0 * self.c_t)))


@dataclass
class ControlWrench:
    T: float
    tau: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([[self.T], self.tau])


# ---------------------------------------------------------------------------
# Kinematics and dynamics
# ---------------------------------------------------------------------------

def end_effector_to_quad(p_e_W, v_e_W, a_e_W, arm: ArmState, q, omega, omega_dot):
    """Quadrotor-centre kinematics from end-effector kinematics.

    Rotation terms use the body rates mapped to the world frame, so every
    cross product acts on vectors of the same frame; at identity attitude
    this reduces to applying ``skew(omega)`` to the world offset directly.
    """
    R = quat_to_rot(q)
    w = R @ np.asarray(omega, dtype=float)
    wd = R @ np.asarray(omega_dot, dtype=float)
    r = R @ arm.p_e_B
    rd = R @ arm.v_e_B
    rdd = R @ arm.a_e_B
    p_q = np.asarray(p_e_W, dtype=float) - r
    v_q = np.asarray(v_e_W, dtype=float) - rd - np.cross(w, r)
    a_q = (np.asarray(a_e_W, dtype=float) - rdd - 2.0 * np.cross(w, rd)
           - np.cross(wd, r) - np.cross(w, np.cross(w, r)))
    return p_q, v_q, a_q


def quad_to_end_effector(p_q, v_q, q, omega, p_e_B, v_e_B=None):
    """End-effector world position and velocity (inverse of the map above)."""
    R = quat_to_rot(q, tol=1e-6)
    r = R @ np.asarray(p_e_B, dtype=float)
    v = np.asarray(v_q, dtype=float) + R @ np.cross(omega, p_e_B)
    if v_e_B is not None:
        v = v + R @ np.asarray(v_e_B, dtype=float)
    return np.asarray(p_q, dtype=float) + r, v


def translational_accel(state: VehicleState, T: float, f_ext, params: VehicleParams) -> np.ndarray:
    if T < 0:
        raise InvalidInputError("thrust must be non-negative")
    z_b = quat_to_rot(state.q)[:, 2]
    return (T * z_b + np.asarray(f_ext, dtype=float)) / params.m + params.gravity


def rotational_derivatives(q, omega, tau, tau_ext, params: VehicleParams):
    """Quaternion kinematics and Euler's rotation equation."""
    omega = np.asarray(omega, dtype=float)
    q_dot = 0.5 * quat_mul(q, np.concatenate([[0.0], omega]))
    I = params.inertia
    rhs = np.asarray(tau, dtype=float) - np.cross(omega, I @ omega) + np.asarray(tau_ext, dtype=float)
    return q_dot, np.linalg.solve(I, rhs)


def mixer_matrices(params: VehicleParams):
    """Rotor-speed to wrench maps (G1 acts on squared speeds, G2 on rotor accelerations)."""
    ct, cm, lx, ly, Ir = params.c_t, params.c_m, params.l_x, params.l_y, params.I_r
    G1 = np.array([[ct, ct, ct, ct],
                   [ly * ct, -ly * ct, -ly * ct, ly * ct],
                   [-lx * ct, -lx * ct, lx * ct, lx * ct],
                   [-cm, cm, -cm, cm]])
    G2 = np.zeros((4, 4))
    # reaction of a spinning-up rotor acts like its drag: same sign pattern as the c_m row
    G2[3] = [-Ir, Ir, -Ir, Ir]
    return G1, G2


def rotor_map(omega_rotors, omega_rotors_dot, params: VehicleParams) -> ControlWrench:
    w = np.asarray(omega_rotors, dtype=float)
    if np.any(w < 0):
        raise InvalidInputError("rotor speeds must be non-negative")
    G1, G2 = mixer_matrices(params)
    out = G1 @ (w * w) + G2 @ np.asarray(omega_rotors_dot, dtype=float)
    return ControlWrench(float(out[0]), out[1:])
