import dataclasses
import json

import numpy as np
import pytest
from scipy.optimize import minimize

from aerothrow.errors import InvalidConfigError
from aerothrow.minco import MincoSystem
from aerothrow.planner import (PlannerConfig, PlannerProblem, feasibility_penalties, landing_penalty,
                               landing_penalty_state, optimize, release_window_duration, rest_boundary,
                               smooth_step, smooth_step_grad, time_map, time_map_grad, time_map_inv,
                               total_cost, window_errors)
from aerothrow.projectile import ReleaseState, landing_error


def relative_errors(analytic, fd):
    scale = np.maximum(np.abs(fd), max(1e-3 * np.abs(fd).max(), 1e-6))
    return np.abs(analytic - fd) / scale


def fd_gradient(f, z, h=1e-6):
    g = np.zeros_like(z)
    for i in range(len(z)):
        e = np.zeros_like(z)
        e[i] = h
        g[i] = (f(z + e) - f(z - e)) / (2 * h)
    return g


# -- relaxation -----------------------------------------------------------------

def test_smooth_step_examples():
    assert smooth_step(0.5, 0.1) == 0.0
    assert smooth_step(1.2, 0.1) == 1.0
    assert smooth_step(0.9, 0.1) == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("mu", [0.01, 0.05, 0.1, 0.3, 0.5])
def test_smooth_step_is_c1_and_monotone(mu):
    h = 1e-7
    for x0 in (1 - 2 * mu, 1 - mu, 1.0):
        left, right = smooth_step(x0 - 1e-12, mu), smooth_step(x0 + 1e-12, mu)
        assert abs(left - right) < 1e-6
        sl = (smooth_step(x0, mu) - smooth_step(x0 - h, mu)) / h
        sr = (smooth_step(x0 + h, mu) - smooth_step(x0, mu)) / h
        assert abs(sl - sr) < 1e-6 * max(1.0, 1 / mu)
    x = np.linspace(1 - 3 * mu, 1 + mu, 2001)
    v, d = smooth_step_grad(x, mu)
    assert np.all(np.diff(v) >= -1e-15) and np.all((v >= 0) & (v <= 1))
    fd = np.gradient(v, x)
    assert np.allclose(d[1:-1], fd[1:-1], atol=5e-3 / mu)


def test_activation_plateau_and_support():
    cfg = PlannerConfig(tau=0.1, mu=0.02, w_land=1.0)
    p, v = np.array([0.0, 0, 1.25]), np.array([2.0, 0, 0])
    e2 = landing_error(ReleaseState(p, v), cfg.target) ** 2
    for dt in np.linspace(-0.1, 0.1, 21):
        assert landing_penalty_state(p, v, 1.0 + dt, 1.0, cfg)[0] == pytest.approx(e2, rel=1e-12)
    for dt in (0.14, 0.2, -0.14, -1.0):
        c, gp, gv, *_ = landing_penalty_state(p, v, 1.0 + dt, 1.0, cfg)
        assert c == 0.0 and not gp.any() and not gv.any()


# -- landing penalty ------------------------------------------------------------

def test_landing_penalty_examples():
    p, v = np.array([0.0, 0, 1.25]), np.array([2.0, 0, 0])
    exact = 2 * np.sqrt(2 * 1.25 / 9.81)
    cfg = PlannerConfig(target=(exact, 0, 0), w_land=7.0)
    assert landing_penalty_state(p, v, 1.0, 1.0, cfg)[0] == pytest.approx(0.0, abs=1e-20)
    cfg = PlannerConfig(target=(0.9, 0, 0), w_land=7.0)
    assert landing_penalty_state(p, v, 1.0, 1.0, cfg)[0] == pytest.approx(7.0 * (exact - 0.9) ** 2, rel=1e-12)
    hover = np.array([2.5, 0, 1.0])
    assert landing_penalty_state(hover, np.zeros(3), 1.0, 1.0, PlannerConfig())[0] == 0.0


def test_landing_penalty_gradient_wrt_release_state():
    cfg = PlannerConfig(target=(1.3, 0.2, 0.0), w_land=1.0)
    rng = np.random.default_rng(0)
    for _ in range(10):
        p = np.array([*rng.normal(size=2), rng.uniform(0.3, 2)])
        v = rng.normal(size=3)
        _, gp, gv, _, _ = landing_penalty_state(p, v, 1.0, 1.0, cfg)
        f = lambda x: float(landing_penalty_state(x[:3], x[3:], 1.0, 1.0, cfg)[0])
        fd = fd_gradient(f, np.concatenate([p, v]))
        assert np.allclose(np.concatenate([gp, gv]), fd, rtol=1e-6, atol=1e-7)


def test_landing_penalty_on_trajectory_matches_state_form():
    P = np.array([2.5, 0.0, 1.0])
    traj = MincoSystem(rest_boundary(P), rest_boundary(P), 1).trajectory(np.zeros((0, 3)), [2.0])
    cost, gp, gv = landing_penalty(traj, 1.0, 1.0, PlannerConfig())
    assert cost == 0.0


def test_unreachable_release_is_penalised_not_raised():
    cfg = PlannerConfig(w_land=1.0)
    c_below, *_ = landing_penalty_state(np.array([0, 0, -0.5]), np.array([0, 0, -1.0]), 1.0, 1.0, cfg)
    c_above, *_ = landing_penalty_state(np.array([0, 0, 0.5]), np.zeros(3), 1.0, 1.0, cfg)
    assert np.isfinite(c_below) and c_below > c_above


# -- feasibility ----------------------------------------------------------------

def test_feasibility_zero_for_hover_and_positive_for_fast_line():
    P = np.array([0.0, 0.0, 1.0])
    hover = MincoSystem(rest_boundary(P), rest_boundary(P), 1).trajectory(np.zeros((0, 3)), [2.0])
    cfg = PlannerConfig(corridor_lo=(-1, -1, 0), corridor_hi=(1, 1, 2))
    assert feasibility_penalties(hover, cfg)[0] == 0.0

    cfg = PlannerConfig(v_max=5.0, a_max=1e3, thrust_max=1e3, omega_max=1e3)
    goal = np.array([4.0, 0.0, 1.0])
    sysm = MincoSystem(rest_boundary(P), rest_boundary(goal), 1)
    T = 35 / 16 * 4.0 / (1.5 * cfg.v_max)             # rest-to-rest septic peaks at 35/16 of mean speed
    traj = sysm.trajectory(np.zeros((0, 3)), [T])
    peak = np.abs(traj.sample(np.linspace(0, T, 2001), 1)[:, 0]).max()
    assert peak == pytest.approx(7.5, rel=1e-3)
    J, gc, gT = feasibility_penalties(traj, cfg)
    assert J > 0
    _, gT_total = sysm.propagate_grad(gc, gT)
    assert gT_total[0] < 0                              # longer duration lowers the penalty


def test_corridor_term_disabled_when_unset():
    P = np.array([5.0, 5.0, 5.0])
    hover = MincoSystem(rest_boundary(P), rest_boundary(P), 1).trajectory(np.zeros((0, 3)), [1.0])
    assert feasibility_penalties(hover, PlannerConfig())[0] == 0.0
    assert feasibility_penalties(hover, PlannerConfig(corridor_lo=(0, 0, 0), corridor_hi=(1, 1, 1)))[0] > 0


# -- cost and gradient ----------------------------------------------------------

def test_pure_time_cost_for_stationary_single_piece():
    cfg = PlannerConfig(start=(0, 0, 1), goal=(0, 0, 1), M=1, rho=3.0)
    prob = PlannerProblem(cfg)
    for k in ("feasibility", "landing", "window"):
        prob.weights[k] = 0.0
    tv = np.array([0.7])
    J, _ = prob.cost(prob.pack(np.zeros((0, 3)), tv, 0.0))
    assert J == pytest.approx(3.0 * float(time_map(tv)[0]), rel=1e-12)


def test_time_map_round_trip_and_derivative():
    tv = np.linspace(-3, 3, 61)
    T = time_map(tv)
    assert np.all(T > 0)
    assert np.allclose(time_map_inv(T), tv, atol=1e-10)
    fd = (time_map(tv + 1e-6) - time_map(tv - 1e-6)) / 2e-6
    assert np.allclose(time_map_grad(tv), fd, rtol=1e-6)


def test_total_cost_gradient_spot_check():
    cfg = PlannerConfig()
    prob = PlannerProblem(cfg)
    rng = np.random.default_rng(42)
    z0 = prob.initial_guess()
    for _ in range(3):
        z = z0 + rng.normal(0, 0.1, z0.size)
        _, g = prob.cost(z)
        fd = fd_gradient(lambda x: prob.cost(x)[0], z)
        assert relative_errors(g, fd).max() <= 1e-4
    q, tv, eta = prob.unpack(z)
    J, g2 = total_cost(q, tv, eta, cfg)
    assert J == pytest.approx(prob.cost(z)[0]) and np.allclose(g2, prob.cost(z)[1])


def test_doubling_rho_shortens_the_trajectory():
    def duration(rho):
        cfg = PlannerConfig(rho=rho)
        prob = PlannerProblem(cfg)
        prob.weights["landing"] = prob.weights["window"] = 0.0
        res = minimize(prob.cost, prob.initial_guess(), jac=True, method="L-BFGS-B",
                       options={"maxiter": 2000, "gtol": 1e-8})
        return prob.decode(res.x)[0].total_duration

    d = [duration(r) for r in (50.0, 100.0, 200.0)]
    assert d[0] > d[1] > d[2]


# -- optimizer and window -------------------------------------------------------

@pytest.fixture(scope="module")
def drop_plan():
    cfg = PlannerConfig(start=(0, 0, 1.2), goal=(0, 0, 1.2), target=(0, 0, 0), tau=0.3, M=4)
    return cfg, optimize(cfg)


def test_drop_plan_meets_window_tolerance(drop_plan):
    cfg, res = drop_plan
    assert res.converged
    lo, hi = res.window.interval
    assert 0 < lo and hi < res.trajectory.total_duration
    _, errs = window_errors(res.trajectory, res.window.t_r, cfg.tau, cfg.target)
    assert errs.max() <= 0.05
    # a stationary release is valid along the whole hover
    assert release_window_duration(res.trajectory, res.window.t_r, 0.05, cfg.target) == pytest.approx(
        res.trajectory.total_duration, abs=2e-3)
    assert release_window_duration(res.trajectory, res.window.t_r, 0.0, cfg.target) >= 0.0


def test_plan_json_export(drop_plan):
    cfg, res = drop_plan
    d = json.loads(res.to_json(cfg, (0, 0.05, -0.2)))
    assert {"pieces", "durations", "s", "D", "t_r", "tau"} <= set(d)
    assert d["t_r"] == res.window.t_r


def test_zero_width_window_checks_single_instant():
    P = np.array([0.0, 0.0, 1.0])
    traj = MincoSystem(rest_boundary(P), rest_boundary(P), 1).trajectory(np.zeros((0, 3)), [1.0])
    times, errs = window_errors(traj, 0.5, 0.0, (0, 0, 0))
    assert len(times) == 1 and times[0] == 0.5 and errs[0] == 0.0


def test_window_duration_zero_threshold_on_moving_pass():
    P, Q = np.array([0.0, 0, 1]), np.array([4.0, 0, 1])
    traj = MincoSystem(rest_boundary(P), rest_boundary(Q), 1).trajectory(np.zeros((0, 3)), [3.0])
    assert release_window_duration(traj, 1.5, 0.0, (2.5, 0.3, 0)) == 0.0


def test_config_validation():
    with pytest.raises(InvalidConfigError):
        PlannerConfig(rho=0).validate()
    with pytest.raises(InvalidConfigError):
        PlannerConfig(mu=0).validate()
    with pytest.raises(InvalidConfigError):
        PlannerConfig(K=4).validate()
    with pytest.raises(InvalidConfigError):
        dataclasses.replace(PlannerConfig(), tau=-0.1).validate()
