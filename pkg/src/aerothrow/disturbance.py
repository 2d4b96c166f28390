"""Disturbance compensation: force observer, low-pass filters, INDI rate loop, rotor allocation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidConfigError, InvalidInputError
from .model import VehicleParams, mixer_matrices


# ---------------------------------------------------------------------------
# Second-order Butterworth low-pass
# ---------------------------------------------------------------------------

def butterworth2_coefficients(f_cut: float, f_s: float):
    """Bilinear-transform biquad ``(b, a)`` with ``a[0] = 1`` and unity DC gain."""
    if not 0.0 < f_cut < 0.5 * f_s:
        raise InvalidConfigError(f"cutoff {f_cut} Hz must lie in (0, {0.5 * f_s}) Hz")
    k = np.tan(np.pi * f_cut / f_s)
    q = np.sqrt(2.0)
    norm = 1.0 / (1.0 + q * k + k * k)
    b0 = k * k * norm
    b = np.array([b0, 2.0 * b0, b0])
    a = np.array([1.0, 2.0 * (k * k - 1.0) * norm, (1.0 - q * k + k * k) * norm])
    return b, a


@dataclass
class Butterworth2:
    """Vector-valued biquad in transposed direct form II."""

    f_cut: float
    f_s: float
    dim: int = 1
    b: np.ndarray = field(init=False, repr=False)
    a: np.ndarray = field(init=False, repr=False)
    z1: np.ndarray = field(init=False, repr=False)
    z2: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.b, self.a = butterworth2_coefficients(self.f_cut, self.f_s)
        self.z1 = np.zeros(self.dim)
        self.z2 = np.zeros(self.dim)

    def reset(self, value=0.0):
        """Set the memories to the steady state of a constant input ``value``."""
        x = np.broadcast_to(np.asarray(value, dtype=float), (self.dim,))
        b, a = self.b, self.a
        self.z2 = (b[2] - a[2]) * x
        self.z1 = (b[1] - a[1]) * x + self.z2
        return self

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        b, a = self.b, self.a
        y = b[0] * x + self.z1
        self.z1 = b[1] * x - a[1] * y + self.z2
        self.z2 = b[2] * x - a[2] * y
        return y


def butterworth2(filter_state: Optional[Butterworth2], x, f_cut: float, f_s: float):
    """Functional form: returns ``(filter_state, y)``; a fresh filter starts at rest."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if filter_state is None:
        filter_state = Butterworth2(f_cut, f_s, dim=x.size)
    return filter_state, filter_state(x)


# ---------------------------------------------------------------------------
# Nonlinear disturbance observer
# ---------------------------------------------------------------------------

@dataclass
class ObserverState:
    c: float = 40.0
    f_cut: float = 50.0
    f_s: float = 500.0
    filtered: bool = True
    f_raw: np.ndarray = field(default_factory=lambda: np.zeros(3))
    f_ext_hat: np.ndarray = field(default_factory=lambda: np.zeros(3))
    filt: Optional[Butterworth2] = field(default=None, repr=False)

    def __post_init__(self):
        if self.c <= 0:
            raise InvalidConfigError("observer gain must be positive")
        self.f_raw = np.asarray(self.f_raw, dtype=float)
        self.f_ext_hat = np.asarray(self.f_ext_hat, dtype=float)
        if self.filt is None and self.filtered:
            self.filt = Butterworth2(self.f_cut, self.f_s, dim=3).reset(self.f_raw)


def ndob_update(obs: ObserverState, a_meas, T: float, z_B, m: float, g, dt: float) -> ObserverState:
    """One observer step: relax the raw estimate toward the force residual, then low-pass it.

    ``g`` is the gravity vector (negative z) and ``a_meas`` the measured world acceleration.
    """
    if dt <= 0:
        raise InvalidInputError("sensor period must be positive")
    a_meas = np.asarray(a_meas, dtype=float)
    residual = m * a_meas - m * np.asarray(g, dtype=float) - T * np.asarray(z_B, dtype=float)
    obs.f_raw = obs.f_raw + (obs.c / m) * (residual - obs.f_raw) * dt
    obs.f_ext_hat = obs.filt(obs.f_raw) if obs.filtered else obs.f_raw.copy()
    return obs


# ---------------------------------------------------------------------------
# INDI
# ---------------------------------------------------------------------------

def angular_accel_setpoint(omega_ref, omega_dot_ref, omega_f, K) -> np.ndarray:
    K = np.asarray(K, dtype=float)
    err = np.asarray(omega_ref, dtype=float) - np.asarray(omega_f, dtype=float)
    gain = K @ err if K.ndim == 2 else K * err
    return gain + np.asarray(omega_dot_ref, dtype=float)


def indi_torque(tau_f, inertia, omega_dot_d, omega_dot_f) -> np.ndarray:
    return np.asarray(tau_f, dtype=float) + np.asarray(inertia, dtype=float) @ (
        np.asarray(omega_dot_d, dtype=float) - np.asarray(omega_dot_f, dtype=float))


@dataclass
class Allocation:
    omega_d: np.ndarray
    saturated: bool


def allocate(T_d: float, tau_d, Omega_r, Omega_f, params: VehicleParams, delta_t_motor: float) -> Allocation:
    """Rotor-speed commands reproducing the wrench, including the rotor-inertia yaw term."""
    if delta_t_motor <= 0:
        raise InvalidInputError("motor time constant must be positive")
    G1, G2 = mixer_matrices(params)
    wrench = np.concatenate([[T_d], np.asarray(tau_d, dtype=float)])
    rotor_term = G2 @ (np.asarray(Omega_r, dtype=float) - np.asarray(Omega_f, dtype=float)) / delta_t_motor
    sq = np.linalg.solve(G1, wrench - rotor_term)
    saturated = bool(np.any(sq < 0.0))
    w = np.sqrt(np.maximum(sq, 0.0))
    clipped = np.clip(w, params.u_min, params.u_max)
    saturated |= bool(np.any(clipped != w))
    return Allocation(clipped, saturated)


def allocate_implicit(T_d: float, tau_d, Omega_f, params: VehicleParams, delta_t_motor: float,
                      iterations: int = 4) -> Allocation:
    """Allocation whose rotor-acceleration term uses the new command itself.

    Solves ``G1 W^2 + G2 (W - Omega_f) / dt = wrench`` by Newton's method from
    the static solution. Feeding back the previous command instead closes a
    loop whose gain is ``I_r / (dt * 2 c_m Omega)``, far above one for typical
    propellers.
    """
    if delta_t_motor <= 0:
        raise InvalidInputError("motor time constant must be positive")
    G1, G2 = mixer_matrices(params)
    Omega_f = np.asarray(Omega_f, dtype=float)
    wrench = np.concatenate([[T_d], np.asarray(tau_d, dtype=float)])
    w = allocate(T_d, tau_d, Omega_f, Omega_f, params, delta_t_motor).omega_d
    lo = max(params.u_min, 1.0)
    for _ in range(iterations):
        F = G1 @ (w * w) + G2 @ (w - Omega_f) / delta_t_motor - wrench
        J = G1 * (2.0 * np.maximum(w, lo))[None, :] + G2 / delta_t_motor
        w = np.clip(w - np.linalg.solve(J, F), params.u_min, params.u_max)
    F = G1 @ (w * w) + G2 @ (w - Omega_f) / delta_t_motor - wrench
    saturated = bool(np.any(w <= params.u_min) or np.any(w >= params.u_max)
                     or np.abs(F).max() > 1e-6 * max(1.0, abs(T_d)))
    return Allocation(w, saturated)


def feedback_torque(Omega_f, Omega_dot_f, params: VehicleParams) -> np.ndarray:
    """Torque produced by the (filtered) rotor speeds."""
    G1, G2 = mixer_matrices(params)
    Omega_f = np.asarray(Omega_f, dtype=float)
    return (G1 @ (Omega_f * Omega_f) + G2 @ np.asarray(Omega_dot_f, dtype=float))[1:]


@dataclass
class RateLoopConfig:
    K: tuple = (25.0, 25.0, 12.0)
    f_cut: float = 30.0
    f_s: float = 500.0
    ki: float = 0.0           # integral gain of the model-based fallback loop [N m / rad]

    def validate(self):
        if np.any(np.asarray(self.K) <= 0):
            raise InvalidConfigError("rate-loop gains must be positive")
        if self.ki < 0:
            raise InvalidConfigError("integral gain must be non-negative")
        return self


@dataclass
class IndiState:
    K: np.ndarray
    delta_t_motor: float
    omega_f: np.ndarray = field(default_factory=lambda: np.zeros(3))
    omega_dot_f: np.ndarray = field(default_factory=lambda: np.zeros(3))
    tau_f: np.ndarray = field(default_factory=lambda: np.zeros(3))
    Omega_f: np.ndarray = field(default_factory=lambda: np.zeros(4))

    def __post_init__(self):
        self.K = np.asarray(self.K, dtype=float)
        if np.any(self.K <= 0) or self.delta_t_motor <= 0:
            raise InvalidConfigError("INDI gains and motor time constant must be positive")


class IndiController:
    """Incremental rate loop: torque is built from filtered measured torque and acceleration error.

    Body rate and rotor speeds pass through matching filters so their delays cancel.
    """

    def __init__(self, params: VehicleParams, cfg: RateLoopConfig, omega0=None, Omega0=None):
        self.params = params
        self.cfg = cfg.validate()
        self.dt = 1.0 / cfg.f_s
        omega0 = np.zeros(3) if omega0 is None else np.asarray(omega0, dtype=float)
        Omega0 = np.full(4, params.hover_rotor_speed()) if Omega0 is None else np.asarray(Omega0, dtype=float)
        self.f_omega = Butterworth2(cfg.f_cut, cfg.f_s, 3).reset(omega0)
        self.f_Omega = Butterworth2(cfg.f_cut, cfg.f_s, 4).reset(Omega0)
        self.state = IndiState(np.asarray(cfg.K, dtype=float), params.motor_tau, omega0.copy(),
                               np.zeros(3), np.zeros(3), Omega0.copy())
        self.Omega_r = Omega0.copy()
        self.saturated = False

    def update(self, gyro, Omega_meas, T_d: float, omega_ref, omega_dot_ref) -> np.ndarray:
        st = self.state
        omega_f = self.f_omega(gyro)
        Omega_f = self.f_Omega(Omega_meas)
        st.omega_dot_f = (omega_f - st.omega_f) / self.dt
        Omega_dot_f = (Omega_f - st.Omega_f) / self.dt
        st.omega_f, st.Omega_f = omega_f, Omega_f
        st.tau_f = feedback_torque(Omega_f, Omega_dot_f, self.params)
        wd = angular_accel_setpoint(omega_ref, omega_dot_ref, omega_f, st.K)
        tau_d = indi_torque(st.tau_f, self.params.inertia, wd, st.omega_dot_f)
        alloc = allocate_implicit(T_d, tau_d, Omega_f, self.params, st.delta_t_motor)
        self.Omega_r = alloc.omega_d
        self.saturated = alloc.saturated
        return alloc.omega_d


class ModelRateController:
    """Non-incremental rate loop used when INDI is disabled.

    Dynamic inversion of the nominal rigid body plus an optional integral term;
    the allocation is static (no rotor-acceleration term).
    """

    def __init__(self, params: VehicleParams, cfg: RateLoopConfig, omega0=None):
        self.params = params
        self.cfg = cfg.validate()
        self.dt = 1.0 / cfg.f_s
        omega0 = np.zeros(3) if omega0 is None else np.asarray(omega0, dtype=float)
        self.f_omega = Butterworth2(cfg.f_cut, cfg.f_s, 3).reset(omega0)
        self.K = np.asarray(cfg.K, dtype=float)
        self.integral = np.zeros(3)
        self.saturated = False

    def update(self, gyro, Omega_meas, T_d: float, omega_ref, omega_dot_ref) -> np.ndarray:
        I = self.params.inertia
        omega_f = self.f_omega(gyro)
        err = np.asarray(omega_ref, dtype=float) - omega_f
        wd = angular_accel_setpoint(omega_ref, omega_dot_ref, omega_f, self.K)
        tau_d = I @ wd + np.cross(omega_f, I @ omega_f) + self.cfg.ki * self.integral
        if not self.saturated:
            self.integral += err * self.dt
        zero = np.zeros(4)
        alloc = allocate(T_d, tau_d, zero, zero, self.params, self.params.motor_tau)
        self.saturated = alloc.saturated
        return alloc.omega_d
