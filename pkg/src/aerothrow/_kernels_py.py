"""NumPy implementation of the hot kernels.

Mirrors ``_kernels.pyx`` function for function; used when the compiled
extension is unavailable or ``AEROTHROW_PURE=1``.

NMPC model state ``x = [p(3), v(3), q(4)]``, input ``u = [T, wx, wy, wz]``.
Plant state ``y = [p(3), v(3), q(4), w(3), rotor(4)]``; the plant parameter
vector layout is defined in :mod:`aerothrow.kernels`.
"""

import numpy as np

NX = 10
NU = 4


def _zb(q):
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return np.stack([2 * (x * z + w * y), 2 * (y * z - w * x), 1 - 2 * (x * x + y * y)], axis=-1)


def _qdot(q, w):
    qw, qx, qy, qz = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    wx, wy, wz = w[..., 0], w[..., 1], w[..., 2]
    return 0.5 * np.stack([
        -qx * wx - qy * wy - qz * wz,
        qw * wx + qy * wz - qz * wy,
        qw * wy + qz * wx - qx * wz,
        qw * wz + qx * wy - qy * wx,
    ], axis=-1)


def nmpc_f(X, U, f_ext, mass, g):
    """Continuous NMPC model, batched over leading axes."""
    X = np.asarray(X, dtype=float)
    U = np.asarray(U, dtype=float)
    out = np.empty_like(X)
    out[..., 0:3] = X[..., 3:6]
    acc = U[..., 0:1] / mass * _zb(X[..., 6:10]) + np.asarray(f_ext) / mass
    acc[..., 2] -= g
    out[..., 3:6] = acc
    out[..., 6:10] = _qdot(X[..., 6:10], U[..., 1:4])
    return out


def nmpc_jac(X, U, mass):
    """Jacobians ``(fx, fu)`` of the continuous model, batched over axis 0."""
    n = X.shape[0]
    q = X[:, 6:10]
    qw, qx, qy, qz = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    T = U[:, 0]
    wx, wy, wz = U[:, 1], U[:, 2], U[:, 3]
    fx = np.zeros((n, NX, NX))
    fx[:, 0, 3] = fx[:, 1, 4] = fx[:, 2, 5] = 1.0
    s = 2.0 * T / mass
    fx[:, 3, 6:10] = (s * np.stack([qy, qz, qw, qx])).T
    fx[:, 4, 6:10] = (s * np.stack([-qx, -qw, qz, qy])).T
    fx[:, 5, 6:10] = (s * np.stack([0 * qx, -2 * qx, -2 * qy, 0 * qx])).T
    zero = np.zeros(n)
    omega_r = 0.5 * np.stack([
        np.stack([zero, -wx, -wy, -wz], -1),
        np.stack([wx, zero, wz, -wy], -1),
        np.stack([wy, -wz, zero, wx], -1),
        np.stack([wz, wy, -wx, zero], -1),
    ], 1)
    fx[:, 6:10, 6:10] = omega_r
    fu = np.zeros((n, NX, NU))
    fu[:, 3:6, 0] = _zb(q) / mass
    fu[:, 6:10, 1:4] = 0.5 * np.stack([
        np.stack([-qx, -qy, -qz], -1),
        np.stack([qw, -qz, qy], -1),
        np.stack([qz, qw, -qx], -1),
        np.stack([-qy, qx, qw], -1),
    ], 1)
    return fx, fu


def rk4_rollout(x0, U, f_ext, mass, g, dt):
    U = np.asarray(U, dtype=float)
    N = U.shape[0]
    X = np.empty((N + 1, NX))
    X[0] = x0
    f_ext = np.asarray(f_ext, dtype=float)
    for k in range(N):
        x = X[k]
        u = U[k]
        k1 = nmpc_f(x, u, f_ext, mass, g)
        k2 = nmpc_f(x + 0.5 * dt * k1, u, f_ext, mass, g)
        k3 = nmpc_f(x + 0.5 * dt * k2, u, f_ext, mass, g)
        k4 = nmpc_f(x + dt * k3, u, f_ext, mass, g)
        X[k + 1] = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return X


def rk4_linearize(X, U, f_ext, mass, g, dt):
    """One RK4 step from every node with its sensitivities.

    Returns ``(Xn, A, B)`` with ``Xn[k] = F(X[k], U[k])``, ``A[k] = dF/dx``,
    ``B[k] = dF/du``. Nodes are independent, so the whole horizon is batched.
    """
    X = np.asarray(X, dtype=float)
    U = np.asarray(U, dtype=float)
    n = X.shape[0]
    eye = np.broadcast_to(np.eye(NX), (n, NX, NX))
    h2 = 0.5 * dt

    k1 = nmpc_f(X, U, f_ext, mass, g)
    fx, fu = nmpc_jac(X, U, mass)
    d1x, d1u = fx, fu

    x2 = X + h2 * k1
    k2 = nmpc_f(x2, U, f_ext, mass, g)
    fx, fu = nmpc_jac(x2, U, mass)
    d2x = fx @ (eye + h2 * d1x)
    d2u = fx @ (h2 * d1u) + fu

    x3 = X + h2 * k2
    k3 = nmpc_f(x3, U, f_ext, mass, g)
    fx, fu = nmpc_jac(x3, U, mass)
    d3x = fx @ (eye + h2 * d2x)
    d3u = fx @ (h2 * d2u) + fu

    x4 = X + dt * k3
    k4 = nmpc_f(x4, U, f_ext, mass, g)
    fx, fu = nmpc_jac(x4, U, mass)
    d4x = fx @ (eye + dt * d3x)
    d4u = fx @ (dt * d3u) + fu

    Xn = X + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    A = eye + dt / 6.0 * (d1x + 2 * d2x + 2 * d3x + d4x)
    B = dt / 6.0 * (d1u + 2 * d2u + 2 * d3u + d4u)
    return Xn, A, B


# ---------------------------------------------------------------------------
# Plant
# ---------------------------------------------------------------------------

def _rot(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def plant_deriv(y, cmd, prm):
    """Time derivative of the plant state for a held rotor-speed command.

    The payload is a point mass rigidly attached at body offset ``r``; the
    coupled translational/rotational equations are solved exactly.
    """
    y = np.asarray(y, dtype=float)
    m, g = prm[0], prm[1]
    I = prm[2:11].reshape(3, 3)
    lx, ly, ct, cm, Ir, mtau = prm[11], prm[12], prm[13], prm[14], prm[15], prm[16]
    wmin, wmax, mp = prm[17], prm[18], prm[19]
    r = prm[20:23]

    q = y[6:10]
    w = y[10:13]
    rot = y[13:17]
    cmd = np.clip(cmd, wmin, wmax)
    rot_dot = (cmd - rot) / mtau
    s = rot * rot
    T = ct * (s[0] + s[1] + s[2] + s[3])
    tau = np.array([
        ly * ct * (s[0] - s[1] - s[2] + s[3]),
        -lx * ct * (s[0] + s[1] - s[2] - s[3]),
        cm * (-s[0] + s[1] - s[2] + s[3]) + Ir * (-rot_dot[0] + rot_dot[1] - rot_dot[2] + rot_dot[3]),
    ])

    M = m + mp
    mu = mp * m / M
    Iw = I @ w
    www = np.cross(w, np.cross(w, r))
    rhs = tau - np.cross(w, Iw) - mu * np.cross(r, www) - (mp / M) * T * np.array([r[1], -r[0], 0.0])
    P = (r @ r) * np.eye(3) - np.outer(r, r)
    w_dot = np.linalg.solve(I + mu * P, rhs)
    R = _rot(q)
    grav_b = R.T @ np.array([0.0, 0.0, -g])
    a_b = (np.array([0.0, 0.0, T]) + M * grav_b - mp * www - mp * np.cross(w_dot, r)) / M

    out = np.empty(17)
    out[0:3] = y[3:6]
    out[3:6] = R @ a_b
    out[6:10] = _qdot(q, w)
    out[10:13] = w_dot
    out[13:17] = rot_dot
    return out


def plant_step(y, cmd, prm, dt):
    y = np.asarray(y, dtype=float)
    k1 = plant_deriv(y, cmd, prm)
    k2 = plant_deriv(y + 0.5 * dt * k1, cmd, prm)
    k3 = plant_deriv(y + 0.5 * dt * k2, cmd, prm)
    k4 = plant_deriv(y + dt * k3, cmd, prm)
    yn = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    yn[6:10] /= np.sqrt(yn[6:10] @ yn[6:10])
    return yn
