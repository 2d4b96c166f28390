"""Primal active-set solver for box-constrained convex QPs.

    minimize 0.5 x^T H x + g^T x   subject to   lb <= x <= ub

``H`` must be symmetric positive definite.  The solver accepts a warm-start
point and working set, which makes consecutive RTI subproblems cheap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConditioningError, InvalidInputError

FREE, LOWER, UPPER = 0, -1, 1


@dataclass
class QPResult:
    x: np.ndarray
    active: np.ndarray      # FREE / LOWER / UPPER per variable
    iterations: int
    kkt: float              # max violation of stationarity, bounds and multiplier signs
    converged: bool


def _kkt(H, g, x, lb, ub, active):
    grad = H @ x + g
    stat = np.where(active == FREE, np.abs(grad), 0.0)
    sign = np.where(active == LOWER, np.maximum(-grad, 0.0), 0.0)
    sign += np.where(active == UPPER, np.maximum(grad, 0.0), 0.0)
    feas = np.maximum(np.maximum(lb - x, x - ub), 0.0)
    return float(max(stat.max(initial=0.0), sign.max(initial=0.0), feas.max(initial=0.0)))


def solve_box_qp(H, g, lb, ub, x0=None, active0=None, max_iter: int = 200, tol: float = 1e-10) -> QPResult:
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    n = len(g)
    if H.shape != (n, n) or lb.shape != (n,) or ub.shape != (n,):
        raise InvalidInputError("QP dimensions disagree")
    if np.any(lb > ub):
        raise InvalidInputError("QP bounds are inconsistent")

    x = np.zeros(n) if x0 is None else np.clip(np.asarray(x0, dtype=float), lb, ub)
    active = np.full(n, FREE, dtype=int) if active0 is None else np.asarray(active0, dtype=int).copy()
    # working set must agree with the (projected) starting point
    active[(active == LOWER) & (x > lb)] = FREE
    active[(active == UPPER) & (x < ub)] = FREE
    x[active == LOWER] = lb[active == LOWER]
    x[active == UPPER] = ub[active == UPPER]

    it = 0
    for it in range(1, max_iter + 1):
        free = active == FREE
        fixed = ~free
        if np.any(free):
            Hff = H[np.ix_(free, free)]
            rhs = -(g[free] + H[np.ix_(free, fixed)] @ x[fixed])
            try:
                target = cho_solve(cho_factor(Hff, check_finite=False), rhs, check_finite=False)
            except np.linalg.LinAlgError as exc:
                raise ConditioningError("QP Hessian is not positive definite") from exc
            step = target - x[free]
            xf = x[free]
            # longest feasible fraction of the step
            alpha = 1.0
            block = -1
            lo_free, hi_free = lb[free], ub[free]
            with np.errstate(divide="ignore", invalid="ignore"):
                a_lo = np.where(step < 0, (lo_free - xf) / step, np.inf)
                a_hi = np.where(step > 0, (hi_free - xf) / step, np.inf)
            a = np.minimum(a_lo, a_hi)
            j = int(np.argmin(a))
            if a[j] < 1.0:
                alpha = max(a[j], 0.0)
                block = j
            x[free] = xf + alpha * step
            if block >= 0:
                idx = np.flatnonzero(free)[block]
                if a_lo[block] <= a_hi[block]:
                    active[idx], x[idx] = LOWER, lb[idx]
                else:
                    active[idx], x[idx] = UPPER, ub[idx]
                continue
        grad = H @ x + g
        # multipliers: at a lower bound the gradient must be >= 0, at an upper bound <= 0
        viol = np.where(active == LOWER, -grad, 0.0) + np.where(active == UPPER, grad, 0.0)
        j = int(np.argmax(viol))
        if viol[j] <= tol:
            return QPResult(x, active, it, _kkt(H, g, x, lb, ub, active), True)
        active[j] = FREE
    return QPResult(x, active, it, _kkt(H, g, x, lb, ub, active), False)
