"""Piecewise-polynomial flat-output splines and the MINCO parameterization.

A trajectory has ``M`` pieces of degree ``2s-1``; piece ``i`` is
``p_i(t) = c_i^T beta(t)`` on local time ``t in [0, T_i]`` with the natural
basis ``beta(t) = [1, t, ..., t^(2s-1)]``.  ``MincoSystem`` maps interior
waypoints and durations to the unique minimum-control-effort coefficients by
solving a banded linear system, and back-propagates coefficient gradients to
waypoint and duration gradients through the adjoint of the same system.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from math import factorial

import numpy as np
from scipy.linalg import solve_banded

from .errors import ConditioningError, InvalidInputError, OutOfRangeError


_FALLING = {}


def _falling(order: int, n_coef: int) -> np.ndarray:
    key = (order, n_coef)
    if key not in _FALLING:
        _FALLING[key] = np.array([factorial(n) / factorial(n - order) if n >= order else 0.0
                                  for n in range(n_coef)])
    return _FALLING[key]


def basis(t, order: int, n_coef: int) -> np.ndarray:
    """``order``-th derivative of the natural basis at times ``t`` (shape ``t.shape + (n_coef,)``)."""
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape + (n_coef,))
    if order >= n_coef:
        return out
    k = n_coef - order
    pw = np.ones(t.shape + (k,))
    for j in range(1, k):
        pw[..., j] = pw[..., j - 1] * t
    out[..., order:] = pw * _falling(order, n_coef)[order:]
    return out


def derivative_table(t: float, n_coef: int) -> np.ndarray:
    """Rows ``k = 0..n_coef-1`` hold ``beta^(k)(t)`` for a scalar ``t``."""
    key = ("table", n_coef)
    if key not in _FALLING:
        F = np.array([_falling(k, n_coef) for k in range(n_coef)])
        E = np.maximum(np.arange(n_coef)[None, :] - np.arange(n_coef)[:, None], 0)
        _FALLING[key] = (F, E)
    F, E = _FALLING[key]
    return F * float(t) ** E


def effort_matrix(T: float, s: int, deriv: bool = False) -> np.ndarray:
    """Gram matrix of ``int_0^T beta^(s) beta^(s)^T dt`` (or its derivative in ``T``)."""
    n = 2 * s
    f = _falling(s, n)[s:]
    i = np.arange(s)
    e = i[:, None] + i[None, :] + 1
    Q = np.zeros((n, n))
    Q[s:, s:] = np.outer(f, f) * (T ** (e - 1) if deriv else T ** e / e)
    return Q


@dataclass
class SplineTrajectory:
    coeffs: np.ndarray      # (M, 2s, D)
    durations: np.ndarray   # (M,)
    s: int = 4

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        self.durations = np.asarray(self.durations, dtype=float)
        if np.any(self.durations <= 0):
            raise InvalidInputError("piece durations must be positive")
        if self.coeffs.shape[:2] != (len(self.durations), 2 * self.s):
            raise InvalidInputError("coefficient array does not match durations / order")
        self._breaks = np.concatenate([[0.0], np.cumsum(self.durations)])

    @property
    def M(self) -> int:
        return len(self.durations)

    @property
    def D(self) -> int:
        return self.coeffs.shape[2]

    @property
    def total_duration(self) -> float:
        return float(self._breaks[-1])

    @property
    def breakpoints(self) -> np.ndarray:
        return self._breaks.copy()

    def _locate(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self._breaks, t, side="right") - 1
        idx = np.clip(idx, 0, self.M - 1)
        return idx, t - self._breaks[idx]

    def eval(self, t: float, order: int = 0) -> np.ndarray:
        """Derivative ``order`` of the trajectory at ``t``; right-continuous at junctions."""
        T = self.total_duration
        if not (0.0 <= t <= T):
            raise OutOfRangeError(f"t={t} outside [0, {T}]")
        i, tl = self._locate(t)
        return basis(tl, order, 2 * self.s) @ self.coeffs[i]

    def sample(self, times, order: int = 0) -> np.ndarray:
        """Vectorised evaluation; times are clamped to ``[0, T_sigma]``."""
        times = np.clip(np.asarray(times, dtype=float), 0.0, self.total_duration)
        i, tl = self._locate(times)
        B = basis(tl, order, 2 * self.s)
        return np.einsum("...n,...nd->...d", B, self.coeffs[i])

    def control_effort(self) -> float:
        return float(sum(np.trace(c.T @ effort_matrix(T, self.s) @ c)
                         for c, T in zip(self.coeffs, self.durations)))

    def to_dict(self) -> dict:
        return {"s": self.s, "D": self.D,
                "durations": self.durations.tolist(),
                "pieces": [c.tolist() for c in self.coeffs]}

    @classmethod
    def from_dict(cls, d: dict) -> "SplineTrajectory":
        return cls(np.array(d["pieces"], dtype=float), np.array(d["durations"], dtype=float), int(d["s"]))

    def to_json(self, **extra) -> str:
        d = self.to_dict()
        d.update(extra)
        return json.dumps(d, indent=1)


class MincoSystem:
    """Banded MINCO map for fixed boundary conditions.

    ``head`` and ``tail`` are ``(s, D)`` arrays holding position, velocity, ...
    up to order ``s-1`` at the start and end of the trajectory.
    """

    def __init__(self, head, tail, M: int, s: int = 4):
        self.head = np.atleast_2d(np.asarray(head, dtype=float))
        self.tail = np.atleast_2d(np.asarray(tail, dtype=float))
        if M < 1:
            raise InvalidInputError("need at least one piece")
        if self.head.shape[0] != s or self.tail.shape != self.head.shape:
            raise InvalidInputError("boundary conditions must be (s, D) arrays")
        self.M, self.s = M, s
        self.D = self.head.shape[1]
        self.n = 2 * s
        size = self.n * M
        self.size = size
        rows, cols = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
        band = np.abs(rows - cols) <= s
        self._bi, self._bj = rows[band], cols[band]
        self._A = None
        self._c = None
        self._T = None

    def _assemble(self, T):
        s, n, M = self.s, self.n, self.M
        A = np.zeros((self.size, self.size))
        for k in range(s):
            A[k, k] = factorial(k)
        for i in range(1, M):
            r0 = s + n * (i - 1)
            prev = slice(n * (i - 1), n * i)
            A[r0:r0 + n - 1, prev] = derivative_table(T[i - 1], n)[:n - 1]
            for k in range(1, n - 1):
                A[r0 + k, n * i + k] = -factorial(k)
            A[r0 + n - 1, n * i] = 1.0
        last = slice(n * (M - 1), n * M)
        A[self.size - s:, last] = derivative_table(T[M - 1], n)[:s]
        return A

    def _rhs(self, q):
        s, n, M = self.s, self.n, self.M
        b = np.zeros((self.size, self.D))
        b[:s] = self.head
        for i in range(1, M):
            r0 = s + n * (i - 1)
            b[r0] = q[i - 1]
            b[r0 + n - 1] = q[i - 1]
        b[self.size - s:] = self.tail
        return b

    def _banded(self, A):
        ab = np.zeros((2 * self.s + 1, self.size))
        ab[self.s + self._bi - self._bj, self._bj] = A[self._bi, self._bj]
        return ab

    def solve(self, q, T) -> np.ndarray:
        """Coefficients ``(M, 2s, D)`` for waypoints ``q`` ``(M-1, D)`` and durations ``T``."""
        T = np.asarray(T, dtype=float)
        q = np.asarray(q, dtype=float).reshape(self.M - 1, self.D)
        if T.shape != (self.M,) or np.any(T <= 0) or not np.all(np.isfinite(T)):
            raise InvalidInputError("durations must be M positive finite numbers")
        A = self._assemble(T)
        try:
            c = solve_banded((self.s, self.s), self._banded(A), self._rhs(q), check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise ConditioningError("MINCO system is singular") from exc
        if not np.all(np.isfinite(c)):
            raise ConditioningError("MINCO system is numerically degenerate")
        self._A, self._T = A, T
        self._c = c.reshape(self.M, self.n, self.D)
        return self._c.copy()

    def trajectory(self, q, T) -> SplineTrajectory:
        return SplineTrajectory(self.solve(q, T), np.asarray(T, dtype=float), self.s)

    def propagate_grad(self, grad_c, grad_T):
        """Chain coefficient gradients through the map solved last.

        ``grad_c`` is ``dJ/dc`` ``(M, 2s, D)`` and ``grad_T`` the explicit
        ``dJ/dT``; returns total ``(dJ/dq, dJ/dT)``.
        """
        if self._A is None:
            raise RuntimeError("solve() must be called first")
        s, n, M = self.s, self.n, self.M
        lam = solve_banded((s, s), self._banded(self._A.T), grad_c.reshape(self.size, self.D),
                           check_finite=False)
        gT = np.array(grad_T, dtype=float, copy=True)
        gq = np.zeros((M - 1, self.D))
        for i in range(M):
            c = self._c[i]
            Ti = self._T[i]
            if i < M - 1:
                r0 = s + n * i
                nrows = n - 1
                gq[i] = lam[r0] + lam[r0 + n - 1]
            else:
                r0 = self.size - s
                nrows = s
            dB = derivative_table(Ti, n)[1:nrows + 1]
            gT[i] -= np.sum(lam[r0:r0 + nrows] * (dB @ c))
        return gq, gT
