"""Dense bounded-variable revised simplex.

Solves  min c.x  s.t.  A x <= b,  lower <= x <= upper  (entries may be
infinite). Slack variables complete the basis; nonbasic variables rest on a
finite bound, or at zero when free. Pivoting uses Dantzig's rule for a
bounded number of iterations and then switches to Bland's rule, which cannot
cycle, so the outcome is deterministic for identical input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_AT_LOWER, _AT_UPPER, _FREE_AT_ZERO, _BASIC = 0, 1, 2, 3
_REFACTOR_EVERY = 64


@dataclass
class SimplexResult:
    status: str  # "optimal" | "unbounded" | "needs_phase1" | "iteration_limit"
    objective: float
    x: np.ndarray | None
    iterations: int


def solve_simplex(
    c: np.ndarray,
    A: np.ndarray,
    b: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    max_iterations: int | None = None,
) -> SimplexResult:
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    m, n = A.shape

    # append slack columns: W = [A | I], slacks in [0, inf)
    total = n + m
    W = np.hstack([A, np.eye(m)])
    cost = np.concatenate([c, np.zeros(m)])
    lo = np.concatenate([lower, np.zeros(m)])
    hi = np.concatenate([upper, np.full(m, math.inf)])

    tol_d = 1e-10 * (1.0 + np.abs(cost).max())
    tol_piv = 1e-11 * (1.0 + np.abs(W).max())
    if max_iterations is None:
        max_iterations = 2000 + 200 * (m + n)
    dantzig_budget = 50 + 10 * (m + n)

    status = np.empty(total, dtype=np.int8)
    x = np.zeros(total)
    for j in range(n):
        if math.isfinite(lo[j]):
            status[j], x[j] = _AT_LOWER, lo[j]
        elif math.isfinite(hi[j]):
            status[j], x[j] = _AT_UPPER, hi[j]
        else:
            status[j], x[j] = _FREE_AT_ZERO, 0.0
    basis = np.arange(n, n + m)
    status[basis] = _BASIC

    x[basis] = b - A @ x[:n]
    feas_tol = 1e-9 * (1.0 + np.abs(b).max())
    if (x[basis] < -feas_tol).any():
        return SimplexResult("needs_phase1", math.nan, None, 0)
    B_inv = np.eye(m)

    def refactor():
        nonlocal B_inv
        B_inv = np.linalg.inv(W[:, basis])
        mask = np.ones(total, dtype=bool)
        mask[basis] = False
        x[basis] = B_inv @ (b - W[:, mask] @ x[mask])

    pivots_since_refactor = 0
    for iteration in range(max_iterations):
        y = cost[basis] @ B_inv
        d = cost - y @ W
        nonbasic = status != _BASIC
        can_increase = nonbasic & ((status == _AT_LOWER) | (status == _FREE_AT_ZERO)) & (d < -tol_d)
        can_decrease = nonbasic & ((status == _AT_UPPER) | (status == _FREE_AT_ZERO)) & (d > tol_d)
        eligible = can_increase | can_decrease
        if not eligible.any():
            if pivots_since_refactor > 0:
                # certify optimality on a fresh factorization only; eta
                # updates drift on badly scaled problems
                refactor()
                pivots_since_refactor = 0
                continue
            obj = float(cost[:n] @ x[:n])
            return SimplexResult("optimal", obj, x[:n].copy(), iteration)

        idx = np.flatnonzero(eligible)
        if iteration < dantzig_budget:
            j = int(idx[np.argmax(np.abs(d[idx]))])  # argmax ties -> lowest index
        else:
            j = int(idx[0])  # Bland
        direction = 1.0 if can_increase[j] else -1.0

        w = B_inv @ W[:, j]
        delta = direction * w
        xb = x[basis]
        # step limits: basic variables hitting a bound, then the entering
        # variable flipping to its own opposite bound
        ratios = np.full(m, math.inf)
        grows = delta > tol_piv
        ratios[grows] = (xb[grows] - lo[basis][grows]) / delta[grows]
        shrinks = delta < -tol_piv
        ratios[shrinks] = (hi[basis][shrinks] - xb[shrinks]) / (-delta[shrinks])
        np.maximum(ratios, 0.0, out=ratios)
        t_flip = hi[j] - lo[j] if math.isfinite(hi[j]) and math.isfinite(lo[j]) else math.inf
        t_best = min(float(ratios.min(initial=math.inf)), t_flip)
        if not math.isfinite(t_best):
            return SimplexResult("unbounded", -math.inf, None, iteration)
        leave_pos = -1
        tie = 1e-9 * (1.0 + abs(t_best))
        if t_best < t_flip - tie:
            near = np.flatnonzero(ratios <= t_best + tie)
            if iteration < dantzig_budget:
                # largest pivot among near-ties for stability
                leave_pos = int(near[np.argmax(np.abs(delta[near]))])
            else:
                # smallest variable index (Bland-safe, cannot cycle)
                leave_pos = int(near[np.argmin(basis[near])])
            t_best = float(ratios[leave_pos])

        x[basis] = xb - t_best * delta
        x[j] = x[j] + direction * t_best
        if leave_pos < 0:
            # bound flip: entering variable crossed to its other bound
            status[j] = _AT_UPPER if direction > 0 else _AT_LOWER
            continue

        leaving = int(basis[leave_pos])
        went_down = delta[leave_pos] > 0
        status[leaving] = _AT_LOWER if went_down else _AT_UPPER
        x[leaving] = lo[leaving] if went_down else hi[leaving]
        basis[leave_pos] = j
        status[j] = _BASIC

        piv = w[leave_pos]
        B_inv[leave_pos] /= piv
        others = np.arange(m) != leave_pos
        B_inv[others] -= np.outer(w[others], B_inv[leave_pos])
        pivots_since_refactor += 1
        small_pivot = abs(piv) < 1e-7 * (1.0 + float(np.abs(w).max()))
        if pivots_since_refactor >= _REFACTOR_EVERY or small_pivot:
            refactor()
            pivots_since_refactor = 0

    return SimplexResult("iteration_limit", math.nan, None, max_iterations)
