"""Deterministic closed-loop flight simulation.

Planner -> reference table -> NMPC (control rate) -> rate loop + allocation
(sensor rate) -> rigid-body plant with rotor lag (simulation rate). The
payload rides rigidly at the end-effector offset until release and then
follows a drag-free ballistic arc to the target plane.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .config import ScenarioConfig
from .disturbance import IndiController, ModelRateController, ObserverState, ndob_update
from .errors import AerothrowError, SimulationError
from .minco import SplineTrajectory
from .model import VehicleParams, quat_to_rot
from .nmpc import NmpcSolver, build_reference_table, compensated_reference
from .planner import PlanResult, optimize
from .projectile import NoCrossingError, ReleaseState, landing_point
from .release import NominalTrigger, ReleaseDecision, predicted_landing_errors, reassess

log = logging.getLogger(__name__)


@dataclass
class WorldState:
    y: np.ndarray                  # plant vector [p, v, q, omega, rotor speeds]
    payload_attached: bool
    payload_mass: float
    clock: float
    payload_release: Optional[ReleaseState] = None

    @property
    def rotor_speeds(self) -> np.ndarray:
        return self.y[13:17]


@dataclass
class FlightResult:
    scenario_id: str
    seed: int
    trigger_mode: str
    ablation: str
    failed: bool = False
    reason: str = ""
    landing_point: np.ndarray = field(default_factory=lambda: np.full(3, np.nan))
    landing_error: float = float("nan")
    release_time: float = float("nan")
    trigger_time: float = float("nan")
    v_release: float = float("nan")
    tracking_rmse: float = float("nan")
    planned_release_time: float = float("nan")
    observer_trace: list = field(default_factory=list)    # (t, fx, fy, fz)
    decision_trace: list = field(default_factory=list)    # (t, k*, lead, t_r, triggered)
    state_log: list = field(default_factory=list)         # (t, p, v, q, body rate): 14 columns

    def summary(self) -> dict:
        return {"scenario_id": self.scenario_id, "seed": self.seed, "trigger_mode": self.trigger_mode,
                "ablation": self.ablation, "v_release": self.v_release,
                "landing_error_m": self.landing_error, "release_time_s": self.release_time,
                "tracking_rmse_m": self.tracking_rmse, "failed": self.failed}


# ---------------------------------------------------------------------------
# Planning (cached per planner configuration)
# ---------------------------------------------------------------------------

def _planner_key(cfg) -> str:
    from .config import _to_plain
    return hashlib.sha256(json.dumps(_to_plain(cfg), sort_keys=True).encode()).hexdigest()


_PLAN_CACHE: dict = {}


def plan_for(scenario: ScenarioConfig) -> PlanResult:
    key = _planner_key(scenario.planner)
    if key not in _PLAN_CACHE:
        _PLAN_CACHE[key] = optimize(scenario.planner)
    return _PLAN_CACHE[key]


# ---------------------------------------------------------------------------
# Plant
# ---------------------------------------------------------------------------

def plant_params(params: VehicleParams, world: WorldState, offset) -> np.ndarray:
    mp = world.payload_mass if world.payload_attached else 0.0
    return kernels.pack_plant_params(params, mp, offset)


def step_plant(world: WorldState, Omega_d, dt_sim: float, prm: np.ndarray) -> WorldState:
    """Advance the rigid body and rotors by one step under a held rotor-speed command."""
    if dt_sim > 0.002 + 1e-12:
        raise SimulationError("simulation step must not exceed 2 ms")
    y = kernels.plant_step(world.y, np.asarray(Omega_d, dtype=float), prm, dt_sim)
    if not np.all(np.isfinite(y)):
        raise SimulationError("plant state became non-finite",
                              dump={"t": world.clock, "y": world.y.tolist(), "cmd": list(map(float, Omega_d))})
    world.y = y
    world.clock += dt_sim
    return world


def end_effector_state(y: np.ndarray, offset) -> tuple:
    """World position and velocity of the body-fixed point ``offset``."""
    R = quat_to_rot(y[6:10], tol=1e-6)
    r = np.asarray(offset, dtype=float)
    return y[0:3] + R @ r, y[3:6] + R @ np.cross(y[10:13], r)


def _predicted_ee(X: np.ndarray, U: np.ndarray, offset) -> tuple:
    """End-effector states along an NMPC prediction (input ``k`` supplies the body rate of state ``k``)."""
    q = X[:, 6:10] / np.linalg.norm(X[:, 6:10], axis=1, keepdims=True)
    w, x, y, z = q.T
    R = np.empty((len(q), 3, 3))
    R[:, 0, 0] = 1 - 2 * (y * y + z * z)
    R[:, 0, 1] = 2 * (x * y - w * z)
    R[:, 0, 2] = 2 * (x * z + w * y)
    R[:, 1, 0] = 2 * (x * y + w * z)
    R[:, 1, 1] = 1 - 2 * (x * x + z * z)
    R[:, 1, 2] = 2 * (y * z - w * x)
    R[:, 2, 0] = 2 * (x * z - w * y)
    R[:, 2, 1] = 2 * (y * z + w * x)
    R[:, 2, 2] = 1 - 2 * (x * x + y * y)
    r = np.asarray(offset, dtype=float)
    omega = np.vstack([U[:, 1:4], U[-1:, 1:4]])
    P = X[:, 0:3] + R @ r
    V = X[:, 3:6] + np.einsum("nij,nj->ni", R, np.cross(omega, r))
    return P, V


# ---------------------------------------------------------------------------
# Flight
# ---------------------------------------------------------------------------

def run_flight(scenario: ScenarioConfig, plan: Optional[PlanResult] = None, keep_logs: bool = True) -> FlightResult:
    """Fly one scenario end to end; failures are reported in the result, not raised."""
    sc = scenario.validate()
    res = FlightResult(sc.scenario_id, int(sc.seed), sc.trigger, sc.ablation)
    try:
        plan = plan_for(sc) if plan is None else plan
    except AerothrowError as exc:
        res.failed, res.reason = True, f"planner error: {exc}"
        return res
    if not plan.converged:
        res.failed, res.reason = True, f"planner did not converge (worst window error {plan.worst_window_error:.3f} m)"
        return res
    try:
        _fly(sc, plan, res, keep_logs)
    except SimulationError as exc:
        res.failed, res.reason = True, f"simulation error: {exc}"
    return res


def _fly(sc: ScenarioConfig, plan: PlanResult, res: FlightResult, keep_logs: bool):
    params = sc.vehicle
    traj: SplineTrajectory = plan.trajectory
    t_r_plan = plan.window.t_r
    res.planned_release_time = t_r_plan
    target = np.asarray(sc.planner.target, dtype=float)
    offset = np.asarray(sc.payload.offset, dtype=float)
    g_mag = params.g_mag
    gvec = np.array([0.0, 0.0, -g_mag])

    dt_sim = 1.0 / sc.rates.sim_hz
    sub_sensor = sc.rates.sim_hz // sc.rates.sensor_hz
    sub_ctrl = sc.rates.sim_hz // sc.rates.control_hz
    dt_sensor = 1.0 / sc.rates.sensor_hz
    dt_ctrl = 1.0 / sc.rates.control_hz
    ncfg = sc.nmpc
    stride = int(round(ncfg.dt / dt_ctrl))

    t_begin = -sc.pre_hover
    T_sigma = traj.total_duration
    table = build_reference_table(traj, offset, t_begin - dt_ctrl, T_sigma + ncfg.h + sc.timeout + dt_ctrl,
                                  dt_ctrl, g_mag)
    omega_dot_tab = np.gradient(table.omega, dt_ctrl, axis=0)

    ss = np.random.SeedSequence(int(sc.seed))
    rng_imu, rng_state, rng_rotor = (np.random.default_rng(s) for s in ss.spawn(3))

    # start hovering at the initial reference, rotors at the nominal hover speed
    i0 = table.index(t_begin)
    y = np.zeros(17)
    y[0:3] = table.pos[i0]
    y[6] = 1.0
    y[13:17] = params.hover_rotor_speed()
    world = WorldState(y, True, sc.payload.mass, t_begin)
    prm = plant_params(params, world, offset)

    solver = NmpcSolver(ncfg, params)
    obs = ObserverState(c=sc.observer.c, f_cut=sc.observer.f_cut, f_s=sc.rates.sensor_hz)
    if sc.uses_indi:
        rate = IndiController(params, sc.rate_loop, Omega0=y[13:17])
    else:
        rate = ModelRateController(params, sc.rate_loop)
    nominal = NominalTrigger(t_r_plan)
    decision = ReleaseDecision(t_r_plan)
    trigger_at = None
    release_at = None

    Omega_cmd = y[13:17].copy()
    u0 = np.array([params.m * g_mag, 0.0, 0.0, 0.0])
    omega_dot_ref = np.zeros(3)
    sq_err, n_err = 0.0, 0
    k = 0
    t_end = t_begin + sc.timeout

    while True:
        t = t_begin + k * dt_sim
        # control tick
        if k % sub_ctrl == 0:
            x_now = world.y[0:10].copy()
            x_now[0:3] += rng_state.normal(0.0, sc.noise.pos_std, 3)
            x_now[3:6] += rng_state.normal(0.0, sc.noise.vel_std, 3)
            f_hat = obs.f_ext_hat if sc.uses_ndob else np.zeros(3)
            rows = table.rows(t, ncfg.N + 1, stride)
            x_r, u_r = compensated_reference(table, rows, params.m, f_hat)
            sol = solver.solve(x_now, x_r, u_r[:ncfg.N], f_hat, t_now=t)
            u0 = sol.u0
            omega_dot_ref = omega_dot_tab[rows[0]]
            if 0.0 <= t <= T_sigma:
                e = world.y[0:3] - table.pos[rows[0]]
                sq_err += float(e @ e)
                n_err += 1
            if keep_logs:
                res.observer_trace.append((t, *map(float, obs.f_ext_hat)))
                res.state_log.append((t, *map(float, world.y[0:13])))

            if trigger_at is None:
                if sc.trigger == "nominal":
                    if nominal(t):
                        trigger_at = t
                else:
                    P, V = _predicted_ee(sol.predicted_states, sol.predicted_inputs, offset)
                    errs = predicted_landing_errors(P[1:], V[1:], target, g_mag)
                    reassess(decision, errs, t, ncfg.dt, ncfg.h, sc.delay_compensation)
                    if keep_logs:
                        res.decision_trace.append((t, decision.k_star, decision.k_star * ncfg.dt,
                                                   decision.t_r_current, decision.triggered))
                    if decision.triggered:
                        trigger_at = t
                    elif t > t_r_plan + ncfg.h:
                        # window passed without a trigger: release now rather than never
                        trigger_at = t
                        decision.triggered = True
                        decision.trigger_time = t
                        decision.t_r_current = t
                if trigger_at is not None:
                    res.trigger_time = trigger_at
                    # electromagnet command: the chosen instant, shifted earlier by the known delay
                    cmd_at = trigger_at
                    if sc.trigger == "reassess":
                        cmd_at = max(trigger_at, decision.t_r_current - sc.delay_compensation)
                    release_at = cmd_at + sc.actuator_delay

        # release event (electromagnet opens after the actuator delay)
        if world.payload_attached and release_at is not None and t >= release_at - 1e-12:
            p_e, v_e = end_effector_state(world.y, offset)
            world.payload_attached = False
            world.payload_release = ReleaseState(p_e, v_e, t)
            prm = plant_params(params, world, offset)
            res.release_time = t
            res.v_release = float(np.linalg.norm(v_e))
            try:
                land = landing_point(world.payload_release, target[2], g_mag)
                res.landing_point = land.point
                res.landing_error = float(np.hypot(*(land.point[:2] - target[:2])))
            except NoCrossingError as exc:
                raise SimulationError(f"payload released below the target plane: {exc}") from exc

        # sensor / rate-loop tick
        if k % sub_sensor == 0:
            acc = kernels.plant_deriv(world.y, Omega_cmd, prm)[3:6]
            a_meas = acc + rng_imu.normal(0.0, sc.noise.accel_std, 3)
            gyro = world.y[10:13] + rng_imu.normal(0.0, sc.noise.gyro_std, 3)
            Omega_meas = world.y[13:17] + (rng_rotor.normal(0.0, sc.noise.rotor_std, 4)
                                           if sc.noise.rotor_std > 0 else 0.0)
            T_meas = params.c_t * float(np.sum(Omega_meas * Omega_meas))
            z_b = quat_to_rot(world.y[6:10], tol=1e-6)[:, 2]
            ndob_update(obs, a_meas, T_meas, z_b, params.m, gvec, dt_sensor)
            Omega_cmd = rate.update(gyro, Omega_meas, float(u0[0]), u0[1:4], omega_dot_ref)

        if not world.payload_attached and t >= T_sigma:
            goal = table.pos[table.index(T_sigma)]
            if np.linalg.norm(world.y[0:3] - goal) <= sc.return_tolerance:
                break
        if t >= t_end:
            if world.payload_attached:
                raise SimulationError("timeout before release")
            break
        step_plant(world, Omega_cmd, dt_sim, prm)
        k += 1

    res.tracking_rmse = float(np.sqrt(sq_err / max(n_err, 1)))
