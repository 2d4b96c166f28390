"""Airdrop trajectory optimization with a time-windowed landing-point penalty.

The decision vector holds the interior waypoints of a MINCO spline (planned
for the end-effector), one unconstrained variable per piece duration, and one
unconstrained variable for the release time ``t_r = T_sigma * sigmoid(eta)``.
The cost is control effort + ``rho * T_sigma`` + sampled feasibility penalties
+ the landing penalty ``L_mu(1 - |t - t_r| + tau) * ||P_l - p_t||^2`` integrated
along the trajectory; its gradient is analytic.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from .errors import InvalidConfigError
from .minco import MincoSystem, SplineTrajectory, basis, effort_matrix
from .model import GRAVITY
from .projectile import landing_errors_batch

log = logging.getLogger(__name__)

# smooth extension of the ballistic discriminant below this value [m^2/s^2]
DISC_FLOOR = 0.5
# minimum height above the target plane kept by a barrier [m]
Z_FLOOR = 0.05


@dataclass
class PlannerConfig:
    start: tuple = (0.0, 0.0, 1.0)
    goal: tuple = (4.0, 0.0, 1.0)
    target: tuple = (2.5, 0.0, 0.0)
    M: int = 6
    s: int = 4
    rho: float = 500.0
    mu: float = 0.02
    tau: float = 0.1
    K: int = 16
    K_land: int = 48
    v_max: float = 5.0
    a_max: float = 5.0
    omega_max: float = 4.0
    thrust_min: float = 2.0
    thrust_max: float = 18.0
    w_v: float = 1e3
    w_a: float = 1e3
    w_thrust: float = 1e3
    w_rate: float = 1e2
    w_corridor: float = 1e4
    corridor_lo: Optional[tuple] = None
    corridor_hi: Optional[tuple] = None
    w_land: float = 2e6
    w_window: float = 1e4
    window_margin: float = 0.3
    land_tol: float = 0.05
    max_iter: int = 3000
    gtol: float = 1e-5
    g_mag: float = GRAVITY
    init_speed: float = 2.0

    def validate(self):
        if self.rho <= 0:
            raise InvalidConfigError("rho must be positive")
        if not 0 < self.mu <= 0.5:
            raise InvalidConfigError("mu must lie in (0, 0.5]")
        if self.tau < 0:
            raise InvalidConfigError("tau must be non-negative")
        if self.K < 8:
            raise InvalidConfigError("need at least 8 samples per piece")
        if self.K_land < 8:
            raise InvalidConfigError("need at least 8 samples across the release window")
        if self.M < 1 or self.s < 2:
            raise InvalidConfigError("need M >= 1 and s >= 2")
        if (self.corridor_lo is None) != (self.corridor_hi is None):
            raise InvalidConfigError("corridor needs both bounds or neither")
        return self


@dataclass
class ReleaseWindow:
    t_r: float
    tau: float

    @property
    def interval(self):
        return (self.t_r - self.tau, self.t_r + self.tau)


@dataclass
class PlanResult:
    trajectory: SplineTrajectory
    window: ReleaseWindow
    converged: bool
    status: str
    grad_norm: float
    worst_window_error: float
    iterations: int
    cost: float
    decision: np.ndarray = field(repr=False, default=None)

    def to_json(self, cfg: PlannerConfig, arm_offset=None) -> str:
        return self.trajectory.to_json(
            t_r=self.window.t_r, tau=self.window.tau,
            target=list(cfg.target), converged=self.converged,
            worst_window_error=self.worst_window_error,
            arm_offset=None if arm_offset is None else list(arm_offset))


# ---------------------------------------------------------------------------
# Scalar building blocks
# ---------------------------------------------------------------------------

def smooth_step(x, mu: float):
    """Piecewise-cubic C1 ramp from 0 (x <= 1-2mu) to 1 (x > 1)."""
    return smooth_step_grad(x, mu)[0]


def smooth_step_grad(x, mu: float):
    x = np.asarray(x, dtype=float)
    val = np.zeros_like(x)
    der = np.zeros_like(x)
    c = 0.5 / mu ** 4
    b2 = (x > 1 - 2 * mu) & (x <= 1 - mu)
    b3 = (x > 1 - mu) & (x <= 1)
    val[x > 1] = 1.0
    u = x[b2] + 2 * mu - 1
    val[b2] = c * u ** 3 * (1 - x[b2])
    der[b2] = c * (3 * u ** 2 * (1 - x[b2]) - u ** 3)
    w = x[b3] - 1
    v = x[b3] + 2 * mu - 1
    val[b3] = c * w ** 3 * v + 1
    der[b3] = c * (3 * w ** 2 * v + w ** 3)
    if val.ndim == 0:
        return float(val), float(der)
    return val, der


def time_map(tv):
    """Positive, C2 map from an unconstrained variable to a duration."""
    tv = np.asarray(tv, dtype=float)
    pos = tv > 0
    out = np.empty_like(tv)
    out[pos] = (0.5 * tv[pos] + 1.0) * tv[pos] + 1.0
    neg = ~pos
    out[neg] = 1.0 / ((0.5 * tv[neg] - 1.0) * tv[neg] + 1.0)
    return out


def time_map_grad(tv):
    tv = np.asarray(tv, dtype=float)
    out = np.empty_like(tv)
    pos = tv > 0
    out[pos] = tv[pos] + 1.0
    neg = ~pos
    den = (0.5 * tv[neg] - 1.0) * tv[neg] + 1.0
    out[neg] = (1.0 - tv[neg]) / den ** 2
    return out


def time_map_inv(T):
    T = np.asarray(T, dtype=float)
    out = np.empty_like(T)
    big = T > 1
    out[big] = np.sqrt(2.0 * T[big] - 1.0) - 1.0
    small = ~big
    out[small] = 1.0 - np.sqrt(2.0 / T[small] - 1.0)
    return out


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


# ---------------------------------------------------------------------------
# Pointwise penalties (vectorised over samples)
# ---------------------------------------------------------------------------

def _landing_sq_error(p, v, target, g_mag):
    """Squared in-plane landing error (+ barrier) and its gradients in p, v."""
    z = p[..., 2] - target[2]
    zd = v[..., 2]
    D = zd * zd + 2.0 * g_mag * z
    low = D < DISC_FLOOR
    De = np.where(low, DISC_FLOOR * np.exp(np.clip(D - DISC_FLOOR, -30 * DISC_FLOOR, 0.0) / DISC_FLOOR), D)
    dDe = np.where(low & (D > -29 * DISC_FLOOR), De / DISC_FLOOR, np.where(low, 0.0, 1.0))
    sD = np.sqrt(De)
    Tf = (zd + sD) / g_mag
    # dTf/dD and then chain through D(z, zd)
    dTf_dD = 0.5 / sD * dDe / g_mag
    dTf_dz = dTf_dD * 2.0 * g_mag
    dTf_dzd = 1.0 / g_mag + dTf_dD * 2.0 * zd

    e = p[..., :2] + v[..., :2] * Tf[..., None] - np.asarray(target[:2])
    E = np.sum(e * e, axis=-1)
    ev = np.sum(e * v[..., :2], axis=-1)
    gp = np.zeros(p.shape)
    gv = np.zeros(v.shape)
    gp[..., :2] = 2 * e
    gv[..., :2] = 2 * e * Tf[..., None]
    gp[..., 2] = 2 * ev * dTf_dz
    gv[..., 2] = 2 * ev * dTf_dzd

    # barriers: keep the discriminant and the height away from the degenerate region
    hD = np.maximum(DISC_FLOOR - D, 0.0)
    hz = np.maximum(Z_FLOOR - z, 0.0)
    E = E + hD ** 2 + hz ** 2
    gp[..., 2] += -2 * hD * 2.0 * g_mag - 2 * hz
    gv[..., 2] += -2 * hD * 2.0 * zd
    return E, gp, gv


def landing_penalty_state(p, v, t, t_r, cfg: PlannerConfig):
    """Pointwise landing penalty at release state(s) ``(p, v)`` sampled at time(s) ``t``.

    Returns ``(cost, d/dp, d/dv, d/dt, d/dt_r)``.
    """
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    t = np.asarray(t, dtype=float)
    E, gp, gv = _landing_sq_error(p, v, np.asarray(cfg.target, dtype=float), cfg.g_mag)
    dt = t - t_r
    x = 1.0 - np.abs(dt) + cfg.tau
    L, dL = (np.asarray(a) for a in smooth_step_grad(x, cfg.mu))
    w = cfg.w_land
    cost = w * L * E
    dcost_dt = -w * dL * np.sign(dt) * E
    return (cost, (w * L)[..., None] * gp, (w * L)[..., None] * gv, dcost_dt, -dcost_dt)


def landing_penalty(traj: SplineTrajectory, t: float, t_r: float, cfg: PlannerConfig):
    """Landing penalty of releasing from ``traj`` at time ``t``.

    Returns the cost and its gradient with respect to the sampled end-effector
    position and velocity.
    """
    p = traj.eval(t, 0)
    v = traj.eval(t, 1)
    cost, gp, gv, _, _ = landing_penalty_state(p, v, t, t_r, cfg)
    return float(cost), gp, gv


def _hinge(gv):
    h = np.maximum(gv, 0.0)
    return h * h, 2.0 * h


def _feasibility_state(p, v, a, j, cfg: PlannerConfig):
    """Pointwise feasibility penalty and gradients wrt p, v, a, j."""
    gvec = np.array([0.0, 0.0, -cfg.g_mag])
    cost = np.zeros(p.shape[:-1])
    gp = np.zeros(p.shape)
    gvv = np.zeros(v.shape)
    ga = np.zeros(a.shape)
    gj = np.zeros(j.shape)

    val, d = _hinge(np.sum(v * v, -1) - cfg.v_max ** 2)
    cost += cfg.w_v * val
    gvv += (cfg.w_v * d)[..., None] * 2 * v

    val, d = _hinge(np.sum(a * a, -1) - cfg.a_max ** 2)
    cost += cfg.w_a * val
    ga += (cfg.w_a * d)[..., None] * 2 * a

    f = a - gvec
    ff = np.sum(f * f, -1)
    val, d = _hinge(ff - cfg.thrust_max ** 2)
    cost += cfg.w_thrust * val
    ga += (cfg.w_thrust * d)[..., None] * 2 * f
    val, d = _hinge(cfg.thrust_min ** 2 - ff)
    cost += cfg.w_thrust * val
    ga -= (cfg.w_thrust * d)[..., None] * 2 * f

    # body-rate proxy: |jerk| <= omega_max * |specific thrust|
    val, d = _hinge(np.sum(j * j, -1) - cfg.omega_max ** 2 * ff)
    cost += cfg.w_rate * val
    gj += (cfg.w_rate * d)[..., None] * 2 * j
    ga -= (cfg.w_rate * d * cfg.omega_max ** 2)[..., None] * 2 * f

    if cfg.corridor_lo is not None:
        lo = np.asarray(cfg.corridor_lo, dtype=float)
        hi = np.asarray(cfg.corridor_hi, dtype=float)
        val, d = _hinge(p - hi)
        cost += cfg.w_corridor * val.sum(-1)
        gp += cfg.w_corridor * d
        val, d = _hinge(lo - p)
        cost += cfg.w_corridor * val.sum(-1)
        gp -= cfg.w_corridor * d
    return cost, gp, gvv, ga, gj


# ---------------------------------------------------------------------------
# Sampled integral penalties
# ---------------------------------------------------------------------------

def _sampled_penalties(c, T, cfg: PlannerConfig):
    """Trapezoid-integrated feasibility penalty; returns ``(J, dJ/dc, dJ/dT)``."""
    M, n, D = c.shape
    K = cfg.K
    frac = np.arange(K + 1) / K
    tw = np.ones(K + 1)
    tw[0] = tw[-1] = 0.5
    tl = T[:, None] * frac[None, :]
    Bs = [basis(tl, k, n) for k in range(5)]
    der = [np.einsum("mjn,mnd->mjd", B, c) for B in Bs]
    wq = T[:, None] / K * tw[None, :]

    phi, *g = _feasibility_state(der[0], der[1], der[2], der[3], cfg)
    J = float(np.sum(wq * phi))
    gc = np.zeros_like(c)
    for k in range(4):
        gc += np.einsum("mjn,mjd->mnd", Bs[k] * wq[..., None], g[k])
    # d(phi)/d(local time): chain through the next derivative
    dphi_dt = sum(np.sum(g[k] * der[k + 1], -1) for k in range(4))
    gT = np.sum(tw[None, :] / K * phi, 1) + np.sum(wq * frac[None, :] * dphi_dt, 1)
    return J, gc, gT


def _window_nodes(cfg: PlannerConfig):
    """Offsets from ``t_r`` and quadrature weights (activation included) covering the active window."""
    half = cfg.tau + 2.0 * cfg.mu
    s = np.linspace(-1.0, 1.0, cfg.K_land + 1)
    off = half * s
    tw = np.full(cfg.K_land + 1, 2.0 * half / cfg.K_land)
    tw[0] = tw[-1] = half / cfg.K_land
    act = smooth_step(1.0 - np.abs(off) + cfg.tau, cfg.mu)
    return off, tw * act


def _window_landing(c, T, t_r, cfg: PlannerConfig, scale: float = 1.0):
    """Landing penalty integrated on nodes that travel with ``t_r``.

    Because the activation is a fixed function of ``t - t_r`` the weights do
    not depend on ``t_r``; only the sampled states move.  Returns
    ``(J, dJ/dc, dJ/dT, dJ/dt_r)``.
    """
    M, n, D = c.shape
    off, W = _window_nodes(cfg)
    W = W * cfg.w_land * scale
    keep = W > 0
    off, W = off[keep], W[keep]
    breaks = np.concatenate([[0.0], np.cumsum(T)])
    Ts = breaks[-1]
    t = t_r + off
    inside = (t >= 0.0) & (t <= Ts)
    past_end = t > Ts
    t = np.clip(t, 0.0, Ts)
    idx = np.clip(np.searchsorted(breaks, t, side="right") - 1, 0, M - 1)
    tl = t - breaks[idx]
    ci = c[idx]
    Bs = [basis(tl, k, n) for k in range(3)]
    p, v, a = (np.einsum("jn,jnd->jd", B, ci) for B in Bs)

    E, gp, gv = _landing_sq_error(p, v, np.asarray(cfg.target, dtype=float), cfg.g_mag)
    J = float(np.sum(W * E))
    gc = np.zeros_like(c)
    np.add.at(gc, idx, W[:, None, None] * (Bs[0][:, :, None] * gp[:, None, :]
                                          + Bs[1][:, :, None] * gv[:, None, :]))
    rate = (np.sum(gp * v, 1) + np.sum(gv * a, 1)) * W
    dEdt = np.where(inside, rate, 0.0)
    g_tr = float(np.sum(dEdt))
    # local time = t_r + off - start(idx); start depends on every earlier duration
    per_piece = np.bincount(idx, weights=dEdt, minlength=M)
    gT = -np.concatenate([np.cumsum(per_piece[::-1])[::-1][1:], [0.0]])
    # nodes clamped to the end sit at local time T_M
    gT[-1] += float(np.sum(rate[past_end]))
    return J, gc, gT, g_tr


def feasibility_penalties(traj: SplineTrajectory, cfg: PlannerConfig):
    """Sampled feasibility cost of a trajectory with gradients wrt coefficients and durations."""
    return _sampled_penalties(traj.coeffs, traj.durations, cfg)


# ---------------------------------------------------------------------------
# Problem / cost
# ---------------------------------------------------------------------------

def rest_boundary(point, s: int = 4) -> np.ndarray:
    bc = np.zeros((s, 3))
    bc[0] = point
    return bc


class PlannerProblem:
    """Holds the MINCO system and decision-vector layout for one configuration."""

    def __init__(self, cfg: PlannerConfig):
        self.cfg = cfg.validate()
        self.head = rest_boundary(cfg.start, cfg.s)
        self.tail = rest_boundary(cfg.goal, cfg.s)
        self.minco = MincoSystem(self.head, self.tail, cfg.M, cfg.s)
        self.nq = 3 * (cfg.M - 1)
        self.n = self.nq + cfg.M + 1
        self.weights = {"effort": 1.0, "time": 1.0, "feasibility": 1.0, "landing": 1.0, "window": 1.0}

    def unpack(self, z):
        z = np.asarray(z, dtype=float)
        q = z[:self.nq].reshape(self.cfg.M - 1, 3)
        tv = z[self.nq:self.nq + self.cfg.M]
        eta = float(z[-1])
        return q, tv, eta

    def pack(self, q, tv, eta):
        return np.concatenate([np.asarray(q, dtype=float).ravel(), np.asarray(tv, dtype=float), [eta]])

    def cost(self, z):
        """Total cost and full analytic gradient at decision vector ``z``."""
        cfg = self.cfg
        q, tv, eta = self.unpack(z)
        T = time_map(tv)
        Ts = float(T.sum())
        sig = float(_sigmoid(eta))
        t_r = Ts * sig
        c = self.minco.solve(q, T)

        gc = np.zeros_like(c)
        gT = np.zeros(cfg.M)
        g_tr = 0.0
        J = 0.0
        we = self.weights["effort"]
        if we:
            for i in range(cfg.M):
                Q = effort_matrix(T[i], cfg.s)
                dQ = effort_matrix(T[i], cfg.s, deriv=True)
                J += we * float(np.sum(c[i] * (Q @ c[i])))
                gc[i] += we * 2.0 * Q @ c[i]
                gT[i] += we * float(np.sum(c[i] * (dQ @ c[i])))
        J += self.weights["time"] * cfg.rho * Ts
        gT += self.weights["time"] * cfg.rho

        wf = self.weights["feasibility"]
        if wf:
            Jp, gcp, gTp = _sampled_penalties(c, T, cfg)
            J += wf * Jp
            gc += wf * gcp
            gT += wf * gTp
        wl = self.weights["landing"]
        if wl:
            Jp, gcp, gTp, gtrp = _window_landing(c, T, t_r, cfg, wl)
            J += Jp
            gc += gcp
            gT += gTp
            g_tr += gtrp

        ww = self.weights["window"] * cfg.w_window
        if ww:
            m = cfg.tau + cfg.window_margin
            h1 = max(m - t_r, 0.0)
            h2 = max(t_r + m - Ts, 0.0)
            J += ww * (h1 * h1 + h2 * h2)
            g_tr += ww * (-2 * h1 + 2 * h2)
            gT += ww * (-2 * h2)

        gq, gT = self.minco.propagate_grad(gc, gT)
        gT = gT + g_tr * sig
        g_eta = g_tr * Ts * sig * (1 - sig)
        g_tv = gT * time_map_grad(tv)
        return J, self.pack(gq, g_tv, g_eta)

    def decode(self, z):
        q, tv, eta = self.unpack(z)
        T = time_map(tv)
        traj = self.minco.trajectory(q, T)
        return traj, float(T.sum() * _sigmoid(eta))

    def initial_guess(self) -> np.ndarray:
        cfg = self.cfg
        start = np.asarray(cfg.start, dtype=float)
        goal = np.asarray(cfg.goal, dtype=float)
        target = np.asarray(cfg.target, dtype=float)
        frac = np.arange(1, cfg.M) / cfg.M
        q = start + frac[:, None] * (goal - start)
        dist = float(np.linalg.norm(goal - start))
        Ts = max(dist / cfg.init_speed, 2 * (cfg.tau + cfg.window_margin) + 0.5, 1.5)
        tv = time_map_inv(np.full(cfg.M, Ts / cfg.M))
        f = 0.5
        if dist > 1e-6:
            u = (goal - start) / dist
            h = max(float(start[2] - target[2]), 0.1)
            fall = np.sqrt(2 * h / cfg.g_mag)
            along = float((target - start) @ u) - cfg.init_speed * fall
            f = float(np.clip(along / dist, 0.15, 0.85))
        eta = float(np.log(f / (1 - f)))
        return self.pack(q, tv, eta)


def total_cost(q, tvars, eta, cfg: PlannerConfig):
    """Cost and gradient as functions of waypoints, time variables and release variable."""
    prob = PlannerProblem(cfg)
    J, g = prob.cost(prob.pack(q, tvars, eta))
    return J, g


def window_errors(traj: SplineTrajectory, t_r: float, tau: float, target, g_mag=GRAVITY, step=1e-3):
    """Landing errors at every ``step`` within ``[t_r - tau, t_r + tau]`` (end points included)."""
    n = int(np.floor(2 * tau / step + 1e-9))
    times = t_r - tau + step * np.arange(n + 1)
    if times[-1] < t_r + tau - 1e-12:
        times = np.append(times, t_r + tau)
    times = np.clip(times, 0.0, traj.total_duration)
    return times, landing_errors_batch(traj.sample(times, 0), traj.sample(times, 1), target, g_mag)


def optimize(cfg: PlannerConfig, z0=None) -> PlanResult:
    """L-BFGS descent on the total cost with a landing-weight continuation."""
    prob = PlannerProblem(cfg)
    z = prob.initial_guess() if z0 is None else np.asarray(z0, dtype=float)
    iters = 0
    res = None
    # gentle landing weight first so the coarse shape settles before the stiff term
    stages = [1e-2, 1e-1, 1.0]
    budget = cfg.max_iter
    for k, scale in enumerate(stages):
        prob.weights["landing"] = scale
        left = budget - iters
        if left <= 0:
            break
        maxiter = left if k == len(stages) - 1 else min(left, max(cfg.max_iter // 6, 50))
        res = minimize(prob.cost, z, jac=True, method="L-BFGS-B",
                       options={"maxiter": maxiter, "gtol": cfg.gtol, "ftol": 1e-15,
                                "maxcor": 20, "maxls": 40})
        z = res.x
        iters += int(res.nit)
    prob.weights["landing"] = 1.0
    J, g = prob.cost(z)
    traj, t_r = prob.decode(z)
    _, errs = window_errors(traj, t_r, cfg.tau, cfg.target, cfg.g_mag)
    worst = float(np.max(errs))
    gnorm = float(np.max(np.abs(g)))
    ok = worst <= cfg.land_tol
    status = "converged" if ok else "did-not-converge"
    log.info("planner %s: J=%.4g |g|=%.2e worst window error %.4f m after %d iterations",
             status, J, gnorm, worst, iters)
    return PlanResult(traj, ReleaseWindow(t_r, cfg.tau), ok, status, gnorm, worst, iters, float(J), z)


def release_window_duration(traj: SplineTrajectory, t_r: float, threshold: float, target,
                            g_mag: float = GRAVITY, step: float = 1e-3) -> float:
    """Length of the connected interval around ``t_r`` whose landing error stays within ``threshold``."""
    times = np.arange(0.0, traj.total_duration + 0.5 * step, step)
    errs = landing_errors_batch(traj.sample(times, 0), traj.sample(times, 1), target, g_mag)
    i0 = int(np.clip(round(t_r / step), 0, len(times) - 1))
    if not errs[i0] <= threshold:
        return 0.0
    lo = i0
    while lo > 0 and errs[lo - 1] <= threshold:
        lo -= 1
    hi = i0
    while hi < len(times) - 1 and errs[hi + 1] <= threshold:
        hi += 1
    return (hi - lo) * step
