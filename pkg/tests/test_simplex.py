import math

import numpy as np
import pytest
from scipy.optimize import linprog

from esarb.simplex import solve_simplex


def random_bounded_lp(rng, m, n):
    # x = 0 is strictly feasible, matching the shape of detector LPs
    A = rng.normal(size=(m, n))
    b = rng.uniform(0.1, 2.0, m)
    c = rng.normal(size=n)
    lower = np.zeros(n)
    upper = rng.uniform(1.0, 3.0, n)
    return c, A, b, lower, upper


def test_agrees_with_scipy_on_random_lps():
    rng = np.random.default_rng(11)
    for trial in range(60):
        m = int(rng.integers(1, 12))
        n = int(rng.integers(1, 10))
        c, A, b, lower, upper = random_bounded_lp(rng, m, n)
        mine = solve_simplex(c, A, b, lower, upper)
        ref = linprog(c, A_ub=A, b_ub=b, bounds=list(zip(lower, upper)), method="highs")
        assert mine.status == "optimal", trial
        assert ref.status == 0
        assert mine.objective == pytest.approx(ref.fun, abs=1e-8 * (1 + abs(ref.fun)))
        assert np.all(mine.x >= lower - 1e-9)
        assert np.all(mine.x <= upper + 1e-9)
        assert np.all(A @ mine.x <= b + 1e-8 * (1 + np.abs(b)))


def test_free_variables_supported():
    # min x0 + x1 s.t. x0 + x1 >= -3 encoded as -x0 - x1 <= 3, x free/bounded
    c = np.array([1.0, 1.0])
    A = np.array([[-1.0, -1.0]])
    b = np.array([3.0])
    lower = np.array([-math.inf, -1.0])
    upper = np.array([math.inf, 5.0])
    res = solve_simplex(c, A, b, lower, upper)
    assert res.status == "optimal"
    assert res.objective == pytest.approx(-3.0, abs=1e-9)


def test_unbounded_detected():
    c = np.array([-1.0])
    A = np.array([[0.0]])
    b = np.array([1.0])
    res = solve_simplex(c, A, b, np.array([0.0]), np.array([math.inf]))
    assert res.status == "unbounded"


def test_initial_infeasibility_reported():
    # slack basis infeasible when b < 0 and nonbasic x cannot help at its bound
    c = np.array([1.0])
    A = np.array([[1.0]])
    b = np.array([-1.0])
    res = solve_simplex(c, A, b, np.array([0.0]), np.array([2.0]))
    assert res.status == "needs_phase1"


def test_deterministic_given_input():
    rng = np.random.default_rng(3)
    c, A, b, lower, upper = random_bounded_lp(rng, 8, 6)
    r1 = solve_simplex(c, A, b, lower, upper)
    r2 = solve_simplex(c, A, b, lower, upper)
    assert r1.objective == r2.objective
    assert np.array_equal(r1.x, r2.x)


def test_degenerate_ties_terminate():
    # many identical rows create massive ratio-test ties
    A = np.vstack([np.ones((12, 3)), -np.eye(3)])
    b = np.concatenate([np.ones(12), np.zeros(3)])
    c = -np.ones(3)
    res = solve_simplex(c, A, b, np.zeros(3), np.full(3, 10.0))
    assert res.status == "optimal"
    assert res.objective == pytest.approx(-1.0, abs=1e-9)


def test_wide_magnitude_spread():
    # columns spanning five orders of magnitude must still verify cleanly
    rng = np.random.default_rng(17)
    n, m = 8, 14
    scales = 10.0 ** rng.integers(-2, 3, n)
    A = rng.normal(size=(m, n)) * scales
    b = rng.uniform(0.1, 100.0, m)
    c = rng.normal(size=n) * scales
    res = solve_simplex(c, A, b, np.zeros(n), np.ones(n))
    ref = linprog(c, A_ub=A, b_ub=b, bounds=[(0, 1)] * n, method="highs")
    assert res.status == "optimal"
    assert res.objective == pytest.approx(ref.fun, abs=1e-7 * (1 + abs(ref.fun)))
