"""Release timing: prediction-based reassessment and the fixed-time baseline."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .model import GRAVITY
from .projectile import landing_errors_batch


@dataclass
class ReleaseDecision:
    t_r_current: float
    triggered: bool = False
    error_sequence: np.ndarray = field(default_factory=lambda: np.zeros(0))
    k_star: int = -1
    trigger_time: float = float("nan")


def predicted_landing_errors(ee_positions, ee_velocities, target, g_mag: float = GRAVITY) -> np.ndarray:
    """Landing error of releasing from each predicted end-effector state (``inf`` if it never lands)."""
    P = np.asarray(ee_positions, dtype=float)
    if P.ndim != 2 or len(P) == 0:
        raise InvalidInputError("need a non-empty sequence of predicted states")
    return landing_errors_batch(P, ee_velocities, target, g_mag)


def reassess(decision: ReleaseDecision, errors, t_now: float, dt: float, h: float,
             delay: float = 0.0) -> ReleaseDecision:
    """One reassessment tick.

    ``errors[i]`` belongs to the state ``i + 1`` steps ahead (``k = 1..N``).
    Only active while the planned release lies within ``h`` of now. The
    trigger fires once the best instant is no more than ``max(dt, delay)``
    ahead, so a known actuator delay is absorbed by releasing early.
    """
    if decision.triggered:
        return decision
    if abs(decision.t_r_current - t_now) > h:
        return decision
    errors = np.asarray(errors, dtype=float)
    decision.error_sequence = errors
    if errors.size == 0 or not np.any(np.isfinite(errors)):
        return decision
    k_star = int(np.argmin(errors)) + 1       # argmin returns the first (earliest) minimum
    lead = k_star * dt
    decision.k_star = k_star
    decision.t_r_current = t_now + lead
    if lead <= max(dt, delay) + 1e-12:
        decision.triggered = True
        decision.trigger_time = t_now
    return decision


@dataclass
class NominalTrigger:
    """Fires exactly once: on the first tick at or after the planned release time."""

    t_r_planned: float
    fired: bool = False

    def __call__(self, t_now: float) -> bool:
        if self.fired or t_now < self.t_r_planned:
            return False
        self.fired = True
        return True


def nominal_trigger(t_now: float, t_r_planned: float, dt: float, already_fired: bool = False) -> bool:
    """Stateless form; ``already_fired`` carries the one-shot latch."""
    return (not already_fired) and t_now >= t_r_planned
