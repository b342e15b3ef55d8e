"""Single-level bilevel program: a leader QP constrained by a convex follower's KKT system.

Decision layout is ``[u_y, u_o, lam_low, lam_up, (sigma)]``. Every follower
row i contributes two complementarity pairs: (lam_low_i, f_i - f_low_i) and
(lam_up_i, f_up_i - f_i). Pairs are indexed 0..n_rows-1 for the lower side
and n_rows..2*n_rows-1 for the upper side.

Branch-and-bound fixes pairs to ZERO (multiplier = 0) or ACTIVE (row at its
bound) and relaxes complementarity on the rest.
"""
import heapq
import itertools
from dataclasses import dataclass, field

import numpy as np

from config.settings import COMPLEMENTARITY_TOL, MPEC_NODE_BUDGET, PSD_SHIFT, SLACK_PENALTY
from solver import InfeasibleError, NodeBudgetError
from solver.qp import DenseQP, QpSolution, solve_qp
from utils.logger import setup_logger

logger = setup_logger()

ZERO = 0
ACTIVE = 1

_PRUNE_TOL = 1e-7
_FOLLOWER_PD_TOL = 1e-9


@dataclass
class MpecProblem:
    leader_H: np.ndarray          # over [u_y, u_o]
    leader_g: np.ndarray
    leader_const: float
    n_y: int
    follower_H: np.ndarray        # follower objective 1/2 u_o'Hu_o + g'u_o
    follower_g: np.ndarray
    F: np.ndarray                 # follower rows f = F u_o + f_off
    f_off: np.ndarray
    f_low: np.ndarray
    f_up: np.ndarray
    A_lead: np.ndarray            # leader rows over [u_y, u_o]
    lb_lead: np.ndarray
    ub_lead: np.ndarray
    A_couple: np.ndarray          # coupling rows A_couple x <= ub_couple
    ub_couple: np.ndarray
    soft: bool = False
    penalty: float = SLACK_PENALTY
    follower_decoupled: bool = True
    fixed_violations: int = 0     # coupling rows with no decision dependence, already violated

    @property
    def n_o(self) -> int:
        return self.F.shape[1]

    @property
    def n_rows(self) -> int:
        return self.F.shape[0]

    @property
    def n_pairs(self) -> int:
        return 2 * self.n_rows

    @property
    def n_vars(self) -> int:
        return self.n_y + self.n_o + 2 * self.n_rows + (1 if self.soft else 0)

    def split(self, x: np.ndarray):
        n_y, n_o, n_r = self.n_y, self.n_o, self.n_rows
        u_y = x[:n_y]
        u_o = x[n_y:n_y + n_o]
        lam_low = x[n_y + n_o:n_y + n_o + n_r]
        lam_up = x[n_y + n_o + n_r:n_y + n_o + 2 * n_r]
        sigma = float(x[-1]) if self.soft else 0.0
        return u_y, u_o, lam_low, lam_up, sigma

    def follower_qp(self) -> DenseQP:
        return DenseQP(
            H=self.follower_H, g=self.follower_g,
            A_ineq=self.F, lb=self.f_low - self.f_off, ub=self.f_up - self.f_off,
        )

    def leader_objective(self, x: np.ndarray) -> float:
        n_lead = self.n_y + self.n_o
        w = x[:n_lead]
        value = 0.5 * w @ self.leader_H @ w + self.leader_g @ w + self.leader_const
        if self.soft:
            value += self.penalty * x[-1] ** 2
        return float(value)

    def products(self, x: np.ndarray) -> np.ndarray:
        """Complementarity products of all pairs (lower side first)."""
        _, u_o, lam_low, lam_up, _ = self.split(x)
        f = self.F @ u_o + self.f_off
        with np.errstate(invalid="ignore"):
            low_gap = np.where(np.isfinite(self.f_low), f - self.f_low, 0.0)
            up_gap = np.where(np.isfinite(self.f_up), self.f_up - f, 0.0)
        return np.abs(np.concatenate([lam_low * low_gap, lam_up * up_gap]))


@dataclass
class MpecSolution:
    u_y: np.ndarray
    u_o: np.ndarray
    lam_lower: np.ndarray
    lam_upper: np.ndarray
    sigma: float
    pattern: np.ndarray
    objective: float
    nodes: int
    status: str
    certified: bool = False
    soft: bool = False
    max_complementarity: float = 0.0
    qp_iterations: int = 0


@dataclass
class _Search:
    problem: MpecProblem
    budget: int
    nodes: int = 0
    qp_iterations: int = 0
    incumbent: tuple | None = None      # (objective, x, pattern)
    counter: itertools.count = field(default_factory=itertools.count)

    def exhausted(self) -> bool:
        return self.nodes >= self.budget

    def evaluate(self, fixed: dict[int, int]) -> QpSolution | None:
        self.nodes += 1
        if _conflicting(self.problem, fixed):
            return None
        sol = solve_qp(node_qp(self.problem, fixed))
        self.qp_iterations += sol.iterations
        return sol if sol.ok else None

    def offer(self, sol: QpSolution, fixed: dict[int, int]) -> bool:
        """Record sol as incumbent if it satisfies complementarity and improves."""
        x = sol.u_star
        products = self.problem.products(x)
        if products.size and products.max() > COMPLEMENTARITY_TOL:
            return False
        value = self.problem.leader_objective(x)
        if self.incumbent is None or value < self.incumbent[0]:
            self.incumbent = (value, x.copy(), _pattern_of(self.problem, x, fixed))
        return True

    def prunable(self, bound: float) -> bool:
        if self.incumbent is None:
            return False
        best = self.incumbent[0]
        return bound >= best - _PRUNE_TOL * max(1.0, abs(best))


def implied_fixes(problem: MpecProblem) -> dict[int, int]:
    """Pairs decided before any search: infinite bounds and constant rows with positive slack."""
    fixed = {}
    n_r = problem.n_rows
    constant = ~np.any(problem.F != 0.0, axis=1)
    for i in range(n_r):
        for pair, bound, sign in ((i, problem.f_low[i], 1.0), (n_r + i, problem.f_up[i], -1.0)):
            if not np.isfinite(bound):
                fixed[pair] = ZERO
            elif constant[i] and sign * (problem.f_off[i] - bound) > COMPLEMENTARITY_TOL:
                fixed[pair] = ZERO
    return fixed


def _with_implications(problem: MpecProblem, fixed: dict[int, int]) -> dict[int, int]:
    n_r = problem.n_rows
    out = dict(fixed)
    for pair, state in fixed.items():
        if state != ACTIVE:
            continue
        row = pair % n_r
        if problem.f_up[row] > problem.f_low[row]:
            sibling = row + n_r if pair < n_r else row
            out.setdefault(sibling, ZERO)
    return out


def _conflicting(problem: MpecProblem, fixed: dict[int, int]) -> bool:
    n_r = problem.n_rows
    for row in range(n_r):
        if fixed.get(row) == ACTIVE and fixed.get(row + n_r) == ACTIVE:
            if problem.f_up[row] > problem.f_low[row]:
                return True
    return False


def _pattern_of(problem: MpecProblem, x: np.ndarray, fixed: dict[int, int]) -> np.ndarray:
    """Full pattern of a solution: fixed pairs as fixed, others ACTIVE where the multiplier dominates."""
    _, u_o, lam_low, lam_up, _ = problem.split(x)
    f = problem.F @ u_o + problem.f_off
    with np.errstate(invalid="ignore"):
        low_gap = np.where(np.isfinite(problem.f_low), f - problem.f_low, np.inf)
        up_gap = np.where(np.isfinite(problem.f_up), problem.f_up - f, np.inf)
    pattern = np.where(np.concatenate([lam_low > low_gap, lam_up > up_gap]), ACTIVE, ZERO).astype(np.int8)
    for pair, state in fixed.items():
        pattern[pair] = state
    return pattern


def node_qp(problem: MpecProblem, fixed: dict[int, int]) -> DenseQP:
    """Convex relaxation with the given pairs fixed and complementarity dropped elsewhere."""
    n_y, n_o, n_r = problem.n_y, problem.n_o, problem.n_rows
    n_lead = n_y + n_o
    n = problem.n_vars
    lam0 = n_lead

    H = np.zeros((n, n))
    H[:n_lead, :n_lead] = problem.leader_H
    # tiny multiplier regularisation keeps the relaxation's multiplier set bounded
    H[lam0:lam0 + 2 * n_r, lam0:lam0 + 2 * n_r] = PSD_SHIFT * np.eye(2 * n_r)
    g = np.zeros(n)
    g[:n_lead] = problem.leader_g
    if problem.soft:
        H[-1, -1] = 2.0 * problem.penalty

    blocks, lbs, ubs = [], [], []

    if problem.A_lead.shape[0]:
        rows = np.zeros((problem.A_lead.shape[0], n))
        rows[:, :n_lead] = problem.A_lead
        blocks.append(rows)
        lbs.append(problem.lb_lead)
        ubs.append(problem.ub_lead)

    if problem.A_couple.shape[0]:
        rows = np.zeros((problem.A_couple.shape[0], n))
        rows[:, :n_lead] = problem.A_couple
        if problem.soft:
            rows[:, -1] = -1.0
        blocks.append(rows)
        lbs.append(np.full(problem.A_couple.shape[0], -np.inf))
        ubs.append(problem.ub_couple)

    f_rows = np.zeros((n_r, n))
    f_rows[:, n_y:n_lead] = problem.F
    f_lb = problem.f_low - problem.f_off
    f_ub = problem.f_up - problem.f_off
    for i in range(n_r):
        if fixed.get(i) == ACTIVE:
            f_ub[i] = f_lb[i]
        elif fixed.get(n_r + i) == ACTIVE:
            f_lb[i] = f_ub[i]
    blocks.append(f_rows)
    lbs.append(f_lb)
    ubs.append(f_ub)

    lam_rows = np.zeros((2 * n_r, n))
    lam_rows[:, lam0:lam0 + 2 * n_r] = np.eye(2 * n_r)
    lam_ub = np.array([0.0 if fixed.get(j) == ZERO else np.inf for j in range(2 * n_r)])
    blocks.append(lam_rows)
    lbs.append(np.zeros(2 * n_r))
    ubs.append(lam_ub)

    if problem.soft:
        sigma_row = np.zeros((1, n))
        sigma_row[0, -1] = 1.0
        blocks.append(sigma_row)
        lbs.append(np.zeros(1))
        ubs.append(np.full(1, np.inf))

    # follower stationarity: H_f u_o + g_f + F'(lam_up - lam_low) = 0
    A_eq = np.zeros((n_o, n))
    A_eq[:, n_y:n_lead] = problem.follower_H
    A_eq[:, lam0:lam0 + n_r] = -problem.F.T
    A_eq[:, lam0 + n_r:lam0 + 2 * n_r] = problem.F.T

    return DenseQP(
        H=H, g=g,
        A_ineq=np.vstack(blocks), lb=np.concatenate(lbs), ub=np.concatenate(ubs),
        A_eq=A_eq, b_eq=-problem.follower_g,
    )


def follower_pattern(problem: MpecProblem, sol: QpSolution) -> np.ndarray:
    """Complementarity pattern read off a direct follower solve."""
    u_o = sol.u_star
    f = problem.F @ u_o + problem.f_off
    with np.errstate(invalid="ignore"):
        low_gap = np.where(np.isfinite(problem.f_low), f - problem.f_low, np.inf)
        up_gap = np.where(np.isfinite(problem.f_up), problem.f_up - f, np.inf)
    active = np.concatenate([sol.lam_lower > low_gap, sol.lam_upper > up_gap])
    return np.where(active, ACTIVE, ZERO).astype(np.int8)


def _pattern_fixes(problem: MpecProblem, pattern, base: dict[int, int]) -> dict[int, int]:
    fixed = {j: int(state) for j, state in enumerate(np.asarray(pattern).ravel())}
    fixed.update(base)
    return fixed


def _follower_is_strictly_convex(problem: MpecProblem) -> bool:
    if problem.n_o == 0:
        return True
    return float(np.min(np.linalg.eigvalsh(0.5 * (problem.follower_H + problem.follower_H.T)))) > _FOLLOWER_PD_TOL


def _solution(problem: MpecProblem, search: _Search, status: str, certified: bool = False) -> MpecSolution:
    value, x, pattern = search.incumbent
    u_y, u_o, lam_low, lam_up, sigma = problem.split(x)
    products = problem.products(x)
    return MpecSolution(
        u_y=u_y.copy(), u_o=u_o.copy(), lam_lower=lam_low.copy(), lam_upper=lam_up.copy(),
        sigma=sigma, pattern=pattern, objective=value, nodes=search.nodes, status=status,
        certified=certified, soft=problem.soft,
        max_complementarity=float(products.max()) if products.size else 0.0,
        qp_iterations=search.qp_iterations,
    )


def solve_mpec(problem: MpecProblem, warm_pattern=None, node_budget: int = MPEC_NODE_BUDGET, certify: bool = True) -> MpecSolution:
    """Best-first complementarity branch-and-bound.

    Dives first on ``warm_pattern``. When the follower does not depend on the
    leader and is strictly convex, its own KKT pattern is dived next: every
    feasible point of the bilevel program shares that pattern, so a
    complementary solution there is globally optimal and an infeasible node
    proves the whole program infeasible.
    """
    search = _Search(problem=problem, budget=node_budget)
    base = implied_fixes(problem)

    dives = []
    certificate = None
    if certify and problem.follower_decoupled and _follower_is_strictly_convex(problem):
        follower_sol = solve_qp(problem.follower_qp())
        search.qp_iterations += follower_sol.iterations
        if not follower_sol.ok:
            raise InfeasibleError(f"follower problem has no solution (status={follower_sol.status})")
        certificate = _pattern_fixes(problem, follower_pattern(problem, follower_sol), base)
    if warm_pattern is not None and len(warm_pattern) == problem.n_pairs:
        warm = _with_implications(problem, _pattern_fixes(problem, warm_pattern, base))
        if warm != certificate:
            dives.append((warm, False))
    if certificate is not None:
        dives.append((certificate, True))

    for fixed, certifies in dives:
        sol = search.evaluate(fixed)
        if sol is None:
            if certifies:
                raise InfeasibleError(f"bilevel program infeasible (certified after {search.nodes} nodes)")
            continue
        if search.offer(sol, fixed) and certifies:
            # the certified node's value is the global optimum; a warm dive cannot beat it
            search.incumbent = (problem.leader_objective(sol.u_star), sol.u_star.copy(), _pattern_of(problem, sol.u_star, fixed))
            logger.debug(f"MPEC certified by follower pattern after {search.nodes} node(s)")
            return _solution(problem, search, "optimal", certified=True)

    root = search.evaluate(base)
    if root is None:
        if search.incumbent is not None:
            return _solution(problem, search, "optimal")
        raise InfeasibleError(f"bilevel relaxation infeasible after {search.nodes} nodes")

    heap = [(root.objective, 0, next(search.counter), base, root)]
    budget_hit = False
    while heap:
        bound, neg_depth, _, fixed, sol = heapq.heappop(heap)
        if search.prunable(bound):
            break
        x = sol.u_star
        products = problem.products(x)
        free = [j for j in range(problem.n_pairs) if j not in fixed]
        if not free or products[free].max(initial=0.0) <= COMPLEMENTARITY_TOL:
            search.offer(sol, fixed)
            continue

        # round the relaxation to a full pattern as an incumbent candidate
        if not search.exhausted():
            rounded = _with_implications(problem, _pattern_fixes(problem, _pattern_of(problem, x, fixed), fixed))
            candidate = search.evaluate(rounded)
            if candidate is not None:
                search.offer(candidate, rounded)

        branch = max(free, key=lambda j: products[j])
        for state in (ZERO, ACTIVE):
            if search.exhausted():
                budget_hit = True
                break
            child = _with_implications(problem, {**fixed, branch: state})
            child_sol = search.evaluate(child)
            if child_sol is None or search.prunable(child_sol.objective):
                continue
            heapq.heappush(heap, (child_sol.objective, neg_depth - 1, next(search.counter), child, child_sol))
        if budget_hit:
            break

    if search.incumbent is None:
        if budget_hit:
            raise NodeBudgetError(f"node budget {node_budget} exhausted without a complementary solution")
        raise InfeasibleError(f"no complementarity pattern is feasible ({search.nodes} nodes)")
    if budget_hit:
        logger.warning(f"MPEC node budget {node_budget} exhausted; returning incumbent")
        return _solution(problem, search, "budget")
    return _solution(problem, search, "optimal")


def enumerate_patterns(problem: MpecProblem) -> MpecSolution:
    """Exhaustive oracle: solve every complementarity pattern and keep the best leader objective."""
    base = implied_fixes(problem)
    n_r = problem.n_rows
    choices = []
    for row in range(n_r):
        low, up = row, row + n_r
        options = []
        for low_state in ((base[low],) if low in base else (ZERO, ACTIVE)):
            for up_state in ((base[up],) if up in base else (ZERO, ACTIVE)):
                if low_state == ACTIVE and up_state == ACTIVE and problem.f_up[row] > problem.f_low[row]:
                    continue
                options.append({low: low_state, up: up_state})
        choices.append(options)

    search = _Search(problem=problem, budget=np.iinfo(np.int64).max)
    for combo in itertools.product(*choices):
        fixed = {}
        for part in combo:
            fixed.update(part)
        sol = search.evaluate(fixed)
        if sol is not None:
            search.offer(sol, fixed)
    if search.incumbent is None:
        raise InfeasibleError(f"no feasible pattern among {search.nodes}")
    return _solution(problem, search, "optimal")
