"""Drag-free ballistic prediction of the payload after release."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoCrossingError
from .model import GRAVITY


@dataclass
class ReleaseState:
    p: np.ndarray
    v: np.ndarray
    t_release: float = 0.0

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        self.v = np.asarray(self.v, dtype=float)


@dataclass
class LandingPrediction:
    point: np.ndarray
    fall_time: float
    error: float = float("nan")


def fall_time(z_rel: float, z_dot: float, g_mag: float = GRAVITY) -> float:
    """Time for a body at height ``z_rel`` above the plane, vertical speed ``z_dot``, to reach it."""
    disc = z_dot * z_dot + 2.0 * g_mag * z_rel
    if disc < 0.0:
        raise NoCrossingError(f"payload never reaches the plane (z={z_rel}, zdot={z_dot})")
    t = (z_dot + np.sqrt(disc)) / g_mag
    if -1e-12 < t < 0.0:    # at the plane moving down; round-off in the square root
        t = 0.0
    if t < 0.0:
        # below the plane and moving down: the crossing is in the past
        raise NoCrossingError(f"plane crossing lies in the past (z={z_rel}, zdot={z_dot})")
    return float(t)


def landing_point(release: ReleaseState, target_plane_z: float, g_mag: float = GRAVITY) -> LandingPrediction:
    t_r = fall_time(release.p[2] - target_plane_z, release.v[2], g_mag)
    point = release.p + release.v * t_r
    point[2] = target_plane_z
    return LandingPrediction(point, t_r)


def landing_error(release: ReleaseState, target, g_mag: float = GRAVITY) -> float:
    target = np.asarray(target, dtype=float)
    pred = landing_point(release, target[2], g_mag)
    return float(np.hypot(*(pred.point[:2] - target[:2])))


def landing_errors_batch(P, V, target, g_mag: float = GRAVITY) -> np.ndarray:
    """Vectorised landing error for rows of release positions/velocities.

    Rows that never reach the plane get ``+inf``.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    V = np.atleast_2d(np.asarray(V, dtype=float))
    target = np.asarray(target, dtype=float)
    z = P[:, 2] - target[2]
    zd = V[:, 2]
    disc = zd * zd + 2.0 * g_mag * z
    ok = disc >= 0.0
    t = np.full(len(P), np.inf)
    t[ok] = (zd[ok] + np.sqrt(disc[ok])) / g_mag
    t[ok & (t < 0.0) & (t > -1e-12)] = 0.0
    ok &= t >= 0.0
    err = np.full(len(P), np.inf)
    land = P[ok, :2] + V[ok, :2] * t[ok, None]
    err[ok] = np.hypot(land[:, 0] - target[0], land[:, 1] - target[1])
    return err
