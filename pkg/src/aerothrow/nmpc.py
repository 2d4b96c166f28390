"""Receding-horizon tracking controller (Gauss-Newton real-time iteration).

State ``x = [p, v, q]`` of the quadrotor centre, input ``u = [T, omega_B]``.
Each tick linearizes the RK4-discretized model around the warm-started
multiple-shooting nodes, condenses the stage deviations onto the input
increments and solves the resulting box-constrained QP.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import InvalidConfigError, InvalidInputError, SimulationError
from .minco import SplineTrajectory
from .model import GRAVITY, VehicleParams
from .qp import solve_box_qp

NX, NU = kernels.NX, kernels.NU
NR = 9  # residual rows per stage: position, velocity, attitude error


@dataclass
class NmpcConfig:
    N: int = 25
    h: float = 0.5
    Q_p: tuple = (200.0, 200.0, 200.0)
    Q_v: tuple = (20.0, 20.0, 20.0)
    Q_q: tuple = (50.0, 50.0, 50.0)
    Q_u: tuple = (1.0, 10.0, 10.0, 10.0)
    terminal_scale: float = 2.0
    u_min: tuple = (2.0, -6.0, -6.0, -2.0)
    u_max: tuple = (45.0, 6.0, 6.0, 2.0)
    sqp_iterations: int = 1

    def __post_init__(self):
        self.validate()

    @property
    def dt(self) -> float:
        return self.h / self.N

    def validate(self):
        if self.N < 5:
            raise InvalidConfigError("horizon needs at least 5 steps")
        if self.h <= 0:
            raise InvalidConfigError("horizon length must be positive")
        for name in ("Q_p", "Q_v", "Q_q", "Q_u"):
            if np.any(np.asarray(getattr(self, name)) < 0):
                raise InvalidConfigError(f"{name} must be non-negative")
        if self.terminal_scale < 0:
            raise InvalidConfigError("terminal weight scale must be non-negative")
        if np.any(np.asarray(self.u_min) >= np.asarray(self.u_max)):
            raise InvalidConfigError("input bounds must be ordered")
        if self.sqp_iterations < 1:
            raise InvalidConfigError("need at least one SQP iteration per tick")
        return self

    def stage_weights(self) -> np.ndarray:
        return np.concatenate([self.Q_p, self.Q_v, self.Q_q]).astype(float)


@dataclass
class NmpcSolution:
    u0: np.ndarray
    predicted_states: np.ndarray   # (N+1, 10), row 0 is the measured state
    predicted_inputs: np.ndarray   # (N, 4)
    times: np.ndarray              # (N+1,)
    kkt_residual: float
    solve_time: float = 0.0
    degraded: bool = False


# ---------------------------------------------------------------------------
# Reference generation
# ---------------------------------------------------------------------------

def rot_to_quat_batch(R: np.ndarray) -> np.ndarray:
    """Rotation matrices ``(..., 3, 3)`` to unit quaternions with ``w >= 0``."""
    R = np.asarray(R, dtype=float)
    shp = R.shape[:-2]
    R = R.reshape(-1, 3, 3)
    tr = R[:, 0, 0] + R[:, 1, 1] + R[:, 2, 2]
    cand = np.stack([tr, R[:, 0, 0], R[:, 1, 1], R[:, 2, 2]], 1)
    k = np.argmax(cand, 1)
    q = np.empty((len(R), 4))
    for case in range(4):
        m = k == case
        if not np.any(m):
            continue
        r = R[m]
        if case == 0:
            s = 2.0 * np.sqrt(1.0 + tr[m])
            q[m] = np.stack([0.25 * s, (r[:, 2, 1] - r[:, 1, 2]) / s,
                             (r[:, 0, 2] - r[:, 2, 0]) / s, (r[:, 1, 0] - r[:, 0, 1]) / s], 1)
        elif case == 1:
            s = 2.0 * np.sqrt(1.0 + r[:, 0, 0] - r[:, 1, 1] - r[:, 2, 2])
            q[m] = np.stack([(r[:, 2, 1] - r[:, 1, 2]) / s, 0.25 * s,
                             (r[:, 0, 1] + r[:, 1, 0]) / s, (r[:, 0, 2] + r[:, 2, 0]) / s], 1)
        elif case == 2:
            s = 2.0 * np.sqrt(1.0 + r[:, 1, 1] - r[:, 0, 0] - r[:, 2, 2])
            q[m] = np.stack([(r[:, 0, 2] - r[:, 2, 0]) / s, (r[:, 0, 1] + r[:, 1, 0]) / s,
                             0.25 * s, (r[:, 1, 2] + r[:, 2, 1]) / s], 1)
        else:
            s = 2.0 * np.sqrt(1.0 + r[:, 2, 2] - r[:, 0, 0] - r[:, 1, 1])
            q[m] = np.stack([(r[:, 1, 0] - r[:, 0, 1]) / s, (r[:, 0, 2] + r[:, 2, 0]) / s,
                             (r[:, 1, 2] + r[:, 2, 1]) / s, 0.25 * s], 1)
    q[q[:, 0] < 0] *= -1.0
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    return q.reshape(shp + (4,))


def thrust_frames(f: np.ndarray):
    """Zero-yaw body frames whose z axis follows the rows of ``f``; returns ``(R, |f|)``."""
    f = np.atleast_2d(np.asarray(f, dtype=float))
    n = np.linalg.norm(f, axis=1)
    z = np.where(n[:, None] > 1e-9, f / np.maximum(n, 1e-12)[:, None], np.array([0.0, 0.0, 1.0]))
    y = np.cross(z, np.array([1.0, 0.0, 0.0]))
    y /= np.linalg.norm(y, axis=1, keepdims=True)
    x = np.cross(y, z)
    return np.stack([x, y, z], axis=2), n


@dataclass
class ReferenceTable:
    """Quadrotor-centre reference sampled on a uniform time grid.

    ``acc`` is the centre acceleration; thrust and attitude are rebuilt from it
    together with the current force estimate by :func:`compensated_reference`.
    """

    t0: float
    step: float
    pos: np.ndarray
    vel: np.ndarray
    acc: np.ndarray
    omega: np.ndarray
    ee_pos: np.ndarray
    ee_vel: np.ndarray
    g_mag: float = GRAVITY

    def index(self, t: float) -> int:
        return int(np.clip(round((t - self.t0) / self.step), 0, len(self.pos) - 1))

    def rows(self, t: float, n: int, stride: int) -> np.ndarray:
        i0 = (t - self.t0) / self.step
        idx = np.rint(i0 + stride * np.arange(n)).astype(int)
        return np.clip(idx, 0, len(self.pos) - 1)


def build_reference_table(traj: SplineTrajectory, arm_offset, t_start: float, t_end: float,
                          step: float, g_mag: float = GRAVITY) -> ReferenceTable:
    """Vectorized flatness map of an end-effector spline to quadrotor-centre references.

    Times outside ``[0, T_sigma]`` hold the endpoint. The constant arm offset is
    removed with the attitude implied by the centre acceleration (two passes).
    """
    n = int(round((t_end - t_start) / step)) + 1
    times = t_start + step * np.arange(n)
    inside = (times >= 0.0) & (times <= traj.total_duration)
    pe, ve, ae, je = (traj.sample(times, k) for k in range(4))
    for arr in (ve, ae, je):
        arr[~inside] = 0.0
    gvec = np.array([0.0, 0.0, -g_mag])
    r_b = np.asarray(arm_offset, dtype=float)

    acc = ae.copy()
    jerk = je.copy()
    for _ in range(2):
        R, fn = thrust_frames(acc - gvec)
        z = R[:, :, 2]
        hvec = (jerk - np.sum(z * jerk, 1, keepdims=True) * z) / np.maximum(fn, 1e-9)[:, None]
        omega_b = np.stack([-np.sum(hvec * R[:, :, 1], 1), np.sum(hvec * R[:, :, 0], 1), np.zeros(n)], 1)
        omega_w = np.einsum("nij,nj->ni", R, omega_b)
        wdot_w = np.gradient(omega_w, step, axis=0) if n > 2 else np.zeros_like(omega_w)
        r_w = np.einsum("nij,j->ni", R, r_b)
        acc = ae - np.cross(wdot_w, r_w) - np.cross(omega_w, np.cross(omega_w, r_w))
        # jerk of the centre: keep the end-effector value (offset terms are second order)
    pos = pe - r_w
    vel = ve - np.cross(omega_w, r_w)
    return ReferenceTable(t_start, step, pos, vel, acc, omega_b, pe, ve, g_mag)


def compensated_reference(table: ReferenceTable, rows: np.ndarray, mass: float, f_ext=(0.0, 0.0, 0.0)):
    """State and input references at ``rows`` with the force estimate folded into thrust/attitude."""
    gvec = np.array([0.0, 0.0, -table.g_mag])
    f = mass * (table.acc[rows] - gvec) - np.asarray(f_ext, dtype=float)
    R, T = thrust_frames(f)
    q = rot_to_quat_batch(R)
    x_r = np.concatenate([table.pos[rows], table.vel[rows], q], 1)
    u_r = np.concatenate([T[:, None], table.omega[rows]], 1)
    return x_r, u_r


def reference_from_trajectory(traj: SplineTrajectory, t: float, config: NmpcConfig, mass: float,
                              arm_offset=(0.0, 0.0, 0.0), g_mag: float = GRAVITY):
    """``(x_r (N+1, 10), u_r (N+1, 4))`` over the horizon starting at ``t``; endpoint held past T_sigma."""
    table = build_reference_table(traj, arm_offset, t - config.dt, t + config.h + config.dt, config.dt, g_mag)
    rows = np.arange(1, config.N + 2)
    return compensated_reference(table, rows, mass)


# ---------------------------------------------------------------------------
# Model helpers
# ---------------------------------------------------------------------------

def predict(x0, inputs, f_ext, dt: float, mass: float, g_mag: float = GRAVITY) -> np.ndarray:
    """RK4 rollout of the translational/attitude model from ``x0`` under ``inputs``."""
    x0 = np.asarray(x0, dtype=float)
    inputs = np.asarray(inputs, dtype=float)
    if not (np.all(np.isfinite(x0)) and np.all(np.isfinite(inputs))):
        raise SimulationError("non-finite state or input passed to predict", dump={"x0": x0.tolist()})
    X = kernels.rk4_rollout(x0, inputs, np.asarray(f_ext, dtype=float), float(mass), float(g_mag), float(dt))
    if not np.all(np.isfinite(X)):
        raise SimulationError("prediction diverged", dump={"x0": x0.tolist()})
    return X


def quat_error_matrix(q_r: np.ndarray) -> np.ndarray:
    """Rows ``(K, 3, 4)`` mapping ``q`` to the vector part of ``conj(q_r) * q``."""
    w = q_r[:, 0]
    v = q_r[:, 1:]
    E = np.zeros((len(q_r), 3, 4))
    E[:, :, 0] = -v
    E[:, :, 1:] = w[:, None, None] * np.eye(3)
    # minus skew(v)
    E[:, 0, 2] += v[:, 2]
    E[:, 0, 3] -= v[:, 1]
    E[:, 1, 1] -= v[:, 2]
    E[:, 1, 3] += v[:, 0]
    E[:, 2, 1] += v[:, 1]
    E[:, 2, 2] -= v[:, 0]
    return E


# ---------------------------------------------------------------------------
# Solver
# ---------------------------------------------------------------------------

class NmpcSolver:
    """RTI solver holding its own warm start; one instance per control loop."""

    def __init__(self, config: NmpcConfig, params: VehicleParams):
        self.cfg = config.validate()
        self.params = params
        self.mass = params.m
        N = config.N
        self.X = None
        self.U = None
        self.active = None
        self.t_last = None
        self.lb = np.tile(np.asarray(config.u_min, dtype=float), N)
        self.ub = np.tile(np.asarray(config.u_max, dtype=float), N)
        w = config.stage_weights()
        self.W = np.tile(w, (N + 1, 1))
        self.W[-1] *= config.terminal_scale
        self.Ru = np.tile(np.asarray(config.Q_u, dtype=float), N)

    def reset(self):
        self.X = self.U = self.active = self.t_last = None

    def _warm_start(self, x_now, x_r, u_r, t_now):
        cfg = self.cfg
        if self.U is None:
            self.U = np.clip(u_r[:cfg.N].copy(), cfg.u_min, cfg.u_max)
            self.X = x_r.copy()
            self.X[0] = x_now
            self.active = None
            return
        shift = 0.0 if t_now is None or self.t_last is None else (t_now - self.t_last) / cfg.dt
        if shift > 0:
            k = np.arange(cfg.N + 1) + shift
            base = np.arange(cfg.N + 1)
            self.X = np.stack([np.interp(k, base, self.X[:, j]) for j in range(NX)], 1)
            ku = np.arange(cfg.N) + shift
            baseu = np.arange(cfg.N)
            self.U = np.stack([np.interp(ku, baseu, self.U[:, j]) for j in range(NU)], 1)
            self.X[:, 6:] /= np.linalg.norm(self.X[:, 6:], axis=1, keepdims=True)

    def solve(self, x_now, x_r, u_r, f_ext=(0.0, 0.0, 0.0), t_now=None) -> NmpcSolution:
        """One or more Gauss-Newton RTI iterations from the current warm start.

        ``x_r`` is ``(N+1, 10)``; ``u_r`` has at least ``N`` rows.
        """
        t_start = time.perf_counter()
        cfg = self.cfg
        N, dt = cfg.N, cfg.dt
        x_now = np.asarray(x_now, dtype=float)
        x_r = np.asarray(x_r, dtype=float)
        u_r = np.asarray(u_r, dtype=float)[:N]
        if not np.all(np.isfinite(x_now)):
            raise SimulationError("non-finite state passed to NMPC", dump={"x": x_now.tolist()})
        if x_r.shape != (N + 1, NX) or u_r.shape != (N, NU):
            raise InvalidInputError("reference length must match the horizon")
        f_ext = np.asarray(f_ext, dtype=float)
        # align reference quaternions with the measured hemisphere
        x_r = x_r.copy()
        flip = x_r[:, 6:] @ x_now[6:] < 0
        x_r[flip, 6:] *= -1.0

        self._warm_start(x_now, x_r, u_r, t_now)
        self.t_last = t_now
        E = quat_error_matrix(x_r[:, 6:])
        kkt = np.inf
        degraded = False
        for _ in range(cfg.sqp_iterations):
            try:
                kkt = self._iterate(x_now, x_r, u_r, f_ext, E)
            except (np.linalg.LinAlgError, ArithmeticError):
                degraded = True
                break
        U = np.clip(self.U, cfg.u_min, cfg.u_max)
        if not np.all(np.isfinite(U)):
            degraded = True
            U = np.clip(u_r, cfg.u_min, cfg.u_max)
            self.reset()
        Xp = predict(x_now, U, f_ext, dt, self.mass, self.params.g_mag)
        t0 = 0.0 if t_now is None else t_now
        return NmpcSolution(U[0].copy(), Xp, U.copy(), t0 + dt * np.arange(N + 1), float(kkt),
                            time.perf_counter() - t_start, degraded)

    def _iterate(self, x_now, x_r, u_r, f_ext, E) -> float:
        cfg = self.cfg
        N = cfg.N
        X, U = self.X, self.U
        g_mag = self.params.g_mag
        Xn, A, B = kernels.rk4_linearize(X[:N], U, f_ext, self.mass, g_mag, cfg.dt)
        d = Xn - X[1:]

        # condensed sensitivities dx_k = G_k du + h_k
        G = np.zeros((N + 1, NX, NU * N))
        h = np.zeros((N + 1, NX))
        h[0] = x_now - X[0]
        for k in range(N):
            G[k + 1] = A[k] @ G[k]
            G[k + 1][:, NU * k:NU * (k + 1)] = B[k]
            h[k + 1] = A[k] @ h[k] + d[k]

        # residual rows r_k = J_k (X_k + dx_k) - c_k with J = diag(I, I, E_k)
        J = np.zeros((N + 1, NR, NX))
        J[:, 0:6, 0:6] = np.eye(6)
        J[:, 6:9, 6:10] = E
        Phi = np.matmul(J, G).reshape(-1, NU * N)
        base = X + h
        eps = np.concatenate([base[:, :6] - x_r[:, :6], np.matmul(E, base[:, 6:, None])[:, :, 0]], 1).ravel()
        Wphi = Phi * self.W.reshape(-1, 1)
        H = Wphi.T @ Phi
        H[np.diag_indices_from(H)] += self.Ru
        du_ref = (U - u_r).ravel()
        grad = Wphi.T @ eps + self.Ru * du_ref

        lb = self.lb - U.ravel()
        ub = self.ub - U.ravel()
        res = solve_box_qp(H, grad, lb, ub, x0=np.zeros(NU * N), active0=self.active)
        du = res.x
        self.active = res.active
        dx = G @ du + h
        self.U = U + du.reshape(N, NU)
        self.X = X + dx
        self.X[:, 6:] /= np.linalg.norm(self.X[:, 6:], axis=1, keepdims=True)
        return float(max(np.abs(du).max(), np.abs(d).max(), np.abs(h[0]).max()))
