"""ES_p-arbitrage detection: hinge LP construction, solvers, verdicts, bisection.

The detection LP minimizes alpha + (1/p) sum w_i u_i over (alpha, x, u) with
u_i >= -f(Omega_i).x - alpha, u_i >= 0, prices.x <= cost_cap and box bounds
on x; its optimum is the least expected shortfall reachable at non-positive
cost. Verdicts use a two-phase rule: a strictly negative optimum is an
arbitrage outright, an optimum at the zero boundary is confirmed by a second
LP maximizing expected payoff subject to the linearized ES <= 0 rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sparse
from scipy.optimize import linprog

from .market import MarketSnapshot, Portfolio, WeightedSample
from .risk import RiskLevel, es_p, var_p

_SMALL_ROWS = 600
_SMALL_VARS = 4000
_SMALL_CELLS = 200_000
_CUT_LEGS = 64
_HIGHS_OPTS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}
_GAP_TOL = 1e-10
_MAX_CUTS = 2000


class SolverError(RuntimeError):
    """Raised when no solver path produces a certified solution."""


@dataclass(frozen=True)
class LpProblem:
    """The materializable LP plus the structured blocks it was built from.

    Variable layout: index 0 is alpha (free), the next n_legs entries are the
    portfolio block, the remaining n_scenarios entries are the hinge
    auxiliaries (lower bound 0). Rows: one cost row then one hinge row per
    scenario; for kind "max_expected" an ES row is appended.
    """

    kind: str  # "min_es" | "max_expected"
    payoffs: np.ndarray  # n_scenarios x n_legs
    weights: np.ndarray
    prices: np.ndarray
    level: RiskLevel
    cost_cap: float
    upper_bound: float

    @property
    def n_legs(self) -> int:
        return self.payoffs.shape[1]

    @property
    def n_scenarios(self) -> int:
        return self.payoffs.shape[0]

    @property
    def n_variables(self) -> int:
        return 1 + self.n_legs + self.n_scenarios

    @cached_property
    def objective(self) -> np.ndarray:
        n_s = self.n_scenarios
        if self.kind == "min_es":
            return np.concatenate([[1.0], np.zeros(self.n_legs), self.weights / self.level.p])
        # maximize expected payoff == minimize its negation
        return np.concatenate([[0.0], -(self.payoffs.T @ self.weights), np.zeros(n_s)])

    @cached_property
    def constraint_matrix(self) -> sparse.csr_matrix:
        n_s, n_l = self.n_scenarios, self.n_legs
        cost = sparse.csr_matrix(
            (self.prices, (np.zeros(n_l, dtype=int), 1 + np.arange(n_l))),
            shape=(1, self.n_variables),
        )
        hinge = sparse.hstack(
            [
                sparse.csr_matrix(-np.ones((n_s, 1))),
                sparse.csr_matrix(-self.payoffs),
                -sparse.eye(n_s, format="csr"),
            ],
            format="csr",
        )
        blocks = [cost, hinge]
        if self.kind == "max_expected":
            es_row = np.concatenate([[1.0], np.zeros(n_l), self.weights / self.level.p])
            blocks.append(sparse.csr_matrix(es_row[None, :]))
        return sparse.vstack(blocks, format="csr")

    @cached_property
    def rhs(self) -> np.ndarray:
        extra = 1 if self.kind == "max_expected" else 0
        b = np.zeros(1 + self.n_scenarios + extra)
        b[0] = self.cost_cap
        return b

    @cached_property
    def lower_bounds(self) -> np.ndarray:
        lo = np.zeros(self.n_variables)
        lo[0] = -math.inf
        return lo

    @cached_property
    def upper_bounds(self) -> np.ndarray:
        hi = np.full(self.n_variables, math.inf)
        hi[1 : 1 + self.n_legs] = self.upper_bound
        return hi


@dataclass(frozen=True)
class LpSolution:
    status: str  # "optimal" | "infeasible" | "unbounded"
    optimal_value: float
    x: np.ndarray | None
    method: str


@dataclass(frozen=True)
class Confirmation:
    max_expected_payoff: float


@dataclass(frozen=True)
class DetectionResult:
    level: RiskLevel
    min_es: float
    portfolio: Portfolio
    alpha_star: float
    arbitrage: bool
    confirmation: Confirmation | None


@dataclass(frozen=True)
class MinPResult:
    p_star: float | None
    status: str  # "found" | "none in bracket" | "at or below bracket"
    evaluations: int


def _merged_blocks(market: MarketSnapshot, merge: bool):
    payoffs = market.payoff_matrix() + 0.0  # normalize -0.0 so merging sees it
    weights = market.scenarios.weights
    if merge and payoffs.shape[0] > 1:
        uniq, inverse = np.unique(payoffs, axis=0, return_inverse=True)
        merged_w = np.bincount(inverse, weights=weights, minlength=uniq.shape[0])
        keep = merged_w > 0
        if keep.any():
            payoffs, weights = uniq[keep], merged_w[keep]
    return payoffs, weights


def build_lp(
    market: MarketSnapshot,
    level: RiskLevel | float,
    cost_cap: float = 0.0,
    merge_scenarios: bool = True,
) -> LpProblem:
    """Assemble the hinge LP for the market at the given level.

    Scenarios with identical payoff rows are merged by summing their weights
    (identical hinge rows share one auxiliary variable, which is exact); pass
    merge_scenarios=False to keep the raw one-row-per-scenario form.
    """
    level = level if isinstance(level, RiskLevel) else RiskLevel(float(level))
    payoffs, weights = _merged_blocks(market, merge_scenarios)
    return LpProblem(
        kind="min_es",
        payoffs=payoffs,
        weights=weights,
        prices=market.prices(),
        level=level,
        cost_cap=float(cost_cap),
        upper_bound=market.upper_bound,
    )


def _confirmation_lp(problem: LpProblem) -> LpProblem:
    return LpProblem(
        kind="max_expected",
        payoffs=problem.payoffs,
        weights=problem.weights,
        prices=problem.prices,
        level=problem.level,
        cost_cap=problem.cost_cap,
        upper_bound=problem.upper_bound,
    )


def _tail_envelope(values: np.ndarray, weights: np.ndarray, p: float):
    """ES of the sample and the envelope point q attaining it (dual argmax)."""
    order = np.argsort(values, kind="stable")
    cum = np.cumsum(weights[order])
    take = np.clip(p - (cum - weights[order]), 0.0, weights[order])
    es = -float(values[order] @ take) / p
    q = np.zeros_like(weights)
    q[order] = take / p
    return es, q


def _full_vector(problem: LpProblem, x: np.ndarray) -> np.ndarray:
    """Assemble (alpha, x, u) with alpha at the attaining quantile."""
    y = problem.payoffs @ x
    sample = WeightedSample(y, problem.weights)
    alpha = var_p(sample, problem.level)
    u = np.maximum(-y - alpha, 0.0)
    return np.concatenate([[alpha], x, u])


def _check_residuals(problem: LpProblem, v: np.ndarray) -> None:
    A = problem.constraint_matrix
    resid = A @ v - problem.rhs
    scale = 1.0 + np.abs(problem.rhs) + abs(A) @ np.abs(v)
    worst = float((resid / scale).max(initial=0.0))
    lo, hi = problem.lower_bounds, problem.upper_bounds
    bound_viol = max(
        float((lo - v).max(initial=0.0)), float((v - hi).max(initial=0.0))
    )
    if worst > 1e-9 or bound_viol > 1e-9 * (1.0 + float(np.abs(v).max())):
        raise SolverError(
            f"numerical failure: residual {worst:.3e}, bound violation {bound_viol:.3e}"
        )


def _solve_small_simplex(problem: LpProblem) -> LpSolution | None:
    from .simplex import solve_simplex

    A = problem.constraint_matrix.toarray()
    result = solve_simplex(
        problem.objective,
        A,
        problem.rhs,
        problem.lower_bounds,
        problem.upper_bounds,
    )
    if result.status == "optimal":
        return LpSolution("optimal", result.objective, result.x, "simplex")
    if result.status == "unbounded":
        return LpSolution("unbounded", -math.inf, None, "simplex")
    return None  # needs_phase1 / iteration_limit: let a fallback handle it


def _solve_highs(problem: LpProblem) -> LpSolution:
    bounds = list(zip(problem.lower_bounds, problem.upper_bounds))
    bounds = [
        (None if math.isinf(lo) else lo, None if math.isinf(hi) else hi)
        for lo, hi in bounds
    ]
    for opts in (dict(_HIGHS_OPTS), {}):
        res = linprog(
            problem.objective,
            A_ub=problem.constraint_matrix,
            b_ub=problem.rhs,
            bounds=bounds,
            method="highs",
            options=opts,
        )
        if res.status == 2:
            return LpSolution("infeasible", math.nan, None, "highs")
        if res.status == 3:
            return LpSolution("unbounded", -math.inf, None, "highs")
        if res.status == 0:
            return LpSolution("optimal", float(res.fun), res.x, "highs")
    raise SolverError(f"numerical failure: HiGHS status {res.status}: {res.message}")


def _master_solve(c, A, b, bounds):
    """One cut-master solve, or None when HiGHS breaks down numerically.

    The masters are feasible by construction (x = 0 satisfies every cut), so
    any failure here is conditioning, not geometry: retry once at stock
    tolerances, then hand the whole problem back to the full-LP fallback."""
    for opts in (dict(_HIGHS_OPTS), {}):
        res = linprog(c, A_ub=A, b_ub=b, bounds=bounds, method="highs", options=opts)
        if res.status == 0:
            return res
    return None


def _master_min_es(cut_g, cut_h, problem: LpProblem):
    n_l = problem.n_legs
    G = np.asarray(cut_g)
    A = np.vstack(
        [
            np.hstack([G, -np.ones((len(cut_h), 1))]),
            np.concatenate([problem.prices, [0.0]]),
        ]
    )
    b = np.concatenate([-np.asarray(cut_h), [problem.cost_cap]])
    res = _master_solve(
        np.concatenate([np.zeros(n_l), [1.0]]),
        A,
        b,
        [(0.0, problem.upper_bound)] * n_l + [(None, None)],
    )
    if res is None:
        return None
    return float(res.fun), res.x[:n_l]


def _solve_min_es_cuts(problem: LpProblem) -> LpSolution | None:
    """Cutting planes on the portfolio block: each cut is one tail evaluation.

    Every cut is the support line of ES at the current iterate, built from an
    envelope point q; the master dual therefore mixes envelope points into a
    dual-feasible certificate, so best - lower_bound bounds the true gap.
    """
    F, w, p = problem.payoffs, problem.weights, problem.level.p
    x = np.zeros(problem.n_legs)
    cut_g, cut_h = [], []
    best, best_x = math.inf, x
    for _ in range(_MAX_CUTS):
        es, q = _tail_envelope(F @ x, w, p)
        if es < best:
            best, best_x = es, x
        g = -(F.T @ q)
        cut_g.append(g)
        cut_h.append(es - g @ x)
        step = _master_min_es(cut_g, cut_h, problem)
        if step is None:
            return None
        lower, x = step
        if best - lower <= _GAP_TOL * max(1.0, abs(best)):
            v = _full_vector(problem, best_x)
            return LpSolution("optimal", float(problem.objective @ v), v, "cutting_plane")
    return None


def _solve_max_expected_cuts(problem: LpProblem) -> LpSolution | None:
    """Outer linearization of the ES <= 0 constraint for the confirmation LP."""
    F, w, p = problem.payoffs, problem.weights, problem.level.p
    n_l = problem.n_legs
    expected = F.T @ w
    scale = 1.0 + float(np.abs(F).max(initial=0.0)) * problem.upper_bound
    cut_g, cut_h = [], []
    x = np.zeros(n_l)
    for _ in range(_MAX_CUTS):
        es, q = _tail_envelope(F @ x, w, p)
        if es <= 1e-10 * scale:
            v = _full_vector(problem, x)
            return LpSolution("optimal", -float(expected @ x), v, "cutting_plane")
        g = -(F.T @ q)
        cut_g.append(g)
        cut_h.append(float(g @ x) - es)  # g.x' <= g.x - es
        A = np.vstack([np.asarray(cut_g), problem.prices])
        b = np.concatenate([np.asarray(cut_h), [problem.cost_cap]])
        res = _master_solve(-expected, A, b, [(0.0, problem.upper_bound)] * n_l)
        if res is None:
            return None
        x = res.x
    return None


def solve_lp(problem: LpProblem, solver: str = "auto") -> LpSolution:
    """Solve the LP to a certified optimum (objective within 1e-9, residuals
    within 1e-9 relative), deterministically.

    solver: "auto" picks the dense simplex for small instances, the
    cutting-plane path for many-scenario markets with few legs (its master
    LPs stay tiny), and sparse HiGHS for everything else; "simplex",
    "highs" and "cuts" force a path.
    """
    rows = problem.n_scenarios + 1
    small = (
        rows <= _SMALL_ROWS
        and problem.n_variables <= _SMALL_VARS
        and rows * problem.n_variables <= _SMALL_CELLS
    )
    lean = problem.n_legs <= _CUT_LEGS
    solution: LpSolution | None = None
    if solver == "simplex" or (solver == "auto" and small):
        solution = _solve_small_simplex(problem)
    elif solver == "cuts" or (solver == "auto" and lean):
        if problem.kind == "min_es":
            solution = _solve_min_es_cuts(problem)
        else:
            solution = _solve_max_expected_cuts(problem)
    if solution is None or solver == "highs":
        solution = _solve_highs(problem)
    if solution.status == "optimal":
        _check_residuals(problem, solution.x)
    return solution


def arbitrage_epsilon(market: MarketSnapshot) -> float:
    """Strict-negativity threshold: 1e-6 of the market's payoff scale."""
    biggest = max((float(np.abs(leg.payoff).max(initial=0.0)) for leg in market.legs), default=0.0)
    return 1e-6 * max(market.spot, biggest)


def detect(
    market: MarketSnapshot,
    level: RiskLevel | float,
    cost_cap: float = 0.0,
    solver: str = "auto",
) -> DetectionResult:
    """Decide whether the market admits an ES_p-arbitrage at the given level.

    Phase 1 minimizes ES at non-positive cost; a strictly negative optimum
    settles the verdict (ES_p >= E[-X], so negative ES forces positive
    expected payoff). A boundary optimum within epsilon of zero is passed to
    the confirmation LP, which maximizes expected payoff subject to ES <= 0;
    arbitrage holds iff that maximum is positive. When the verdict comes from
    the confirmation phase, the reported portfolio is the confirmation
    maximizer so that it always witnesses the verdict.
    """
    level = level if isinstance(level, RiskLevel) else RiskLevel(float(level))
    problem = build_lp(market, level, cost_cap=cost_cap)
    solution = solve_lp(problem, solver=solver)
    if solution.status != "optimal":
        raise SolverError(f"detection LP ended with status {solution.status}")
    eps = arbitrage_epsilon(market)
    n_l = problem.n_legs
    min_es = solution.optimal_value
    alpha_star = float(solution.x[0])
    quantities = np.clip(solution.x[1 : 1 + n_l], 0.0, market.upper_bound)
    confirmation = None
    if min_es < -eps:
        arbitrage = True
    else:
        conf = solve_lp(_confirmation_lp(problem), solver=solver)
        if conf.status != "optimal":
            raise SolverError(f"confirmation LP ended with status {conf.status}")
        max_expected = -conf.optimal_value
        confirmation = Confirmation(max_expected_payoff=max_expected)
        arbitrage = max_expected > eps
        if arbitrage:
            quantities = np.clip(conf.x[1 : 1 + n_l], 0.0, market.upper_bound)
    return DetectionResult(
        level=level,
        min_es=min_es,
        portfolio=Portfolio(quantities, upper_bound=market.upper_bound),
        alpha_star=alpha_star,
        arbitrage=arbitrage,
        confirmation=confirmation,
    )


def min_p(
    market: MarketSnapshot,
    bracket: tuple[float, float] = (1e-4, 0.5),
    tol: float = 1e-4,
    cost_cap: float = 0.0,
) -> MinPResult:
    """Bisect for the smallest level in the bracket admitting arbitrage.

    The arbitrage predicate is monotone in p (ES_p' <= ES_p for p' >= p), so
    bisection brackets the threshold; the returned level is the upper end of
    the final bracket, which is guaranteed to exhibit arbitrage and lies
    within tol of the true threshold.
    """
    lo, hi = bracket
    if not (0.0 < lo < hi < 1.0):
        raise ValueError(f"invalid bracket {bracket}")
    if tol <= 0:
        raise ValueError("tol must be > 0")
    evals = 0

    def has_arbitrage(p: float) -> bool:
        nonlocal evals
        evals += 1
        return detect(market, p, cost_cap=cost_cap).arbitrage

    if has_arbitrage(lo):
        return MinPResult(p_star=lo, status="at or below bracket", evaluations=evals)
    if not has_arbitrage(hi):
        return MinPResult(p_star=None, status="none in bracket", evaluations=evals)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if has_arbitrage(mid):
            hi = mid
        else:
            lo = mid
    return MinPResult(p_star=hi, status="found", evaluations=evals)
