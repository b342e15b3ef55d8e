"""Chance-constrained longitudinal MPC.

The OV acceleration is Gaussian with mean a_o*(k|t) from the lateral game
and a variance from the driver-response curve. Mean and covariance of
[s_x, v, v_o] are propagated through the linear model; the covariance does
not depend on the EV input, so each chance row becomes a linear row on the
mean tightened by a quantile margin.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfinv

from config.settings import (
    ACCEL_MAX,
    ACCEL_MIN,
    DEFAULT_BETA,
    EV_SPEED_LIMIT,
    HORIZON,
    LONGITUDINAL_P_X,
    LONGITUDINAL_Q_X,
    SLACK_PENALTY,
)
from controller import SharedSequences
from controller.lateral import LateralOutput
from models.occupancy import OccupancyParams, active_phase, anchor_x, line_for_phase
from models.vehicle import SimParams, WorldState, longitudinal_model
from solver import InfeasibleError
from solver.condense import CondensedSystem, condense_longitudinal
from solver.qp import DenseQP, solve_qp
from utils.fallback import soften_on_infeasible
from utils.logger import setup_logger

logger = setup_logger()

_ROW_TOL = 1e-9


@dataclass
class GaussianMoments:
    Pi_seq: np.ndarray       # (N+1, 3) means of [s_x, v, v_o]
    Sigma_seq: np.ndarray    # (N+1, 3, 3)


@dataclass
class ChanceSpec:
    beta: float
    k_x_seq: np.ndarray      # k_hat per predicted step 1..N
    b_x_seq: np.ndarray      # s_y*(k|t) - b_hat per step
    margins: np.ndarray
    phases: list[int]


@dataclass(frozen=True)
class LongitudinalWeights:
    P_x: float = LONGITUDINAL_P_X
    Q_x: tuple = LONGITUDINAL_Q_X

    def validate(self):
        if not self.P_x > 0:
            raise ValueError(f"P_x must be positive, got {self.P_x}")
        if len(self.Q_x) != 2 or min(self.Q_x) <= 0:
            raise ValueError(f"Q_x must have two positive entries, got {self.Q_x}")


@dataclass(frozen=True)
class LongitudinalConfig:
    N: int = HORIZON
    weights: LongitudinalWeights = field(default_factory=LongitudinalWeights)
    beta: float = DEFAULT_BETA
    v_max: float = EV_SPEED_LIMIT
    a_min: float = ACCEL_MIN
    a_max: float = ACCEL_MAX
    slack_penalty: float = SLACK_PENALTY

    def validate(self):
        self.weights.validate()
        _check_beta(self.beta)
        if self.N < 1:
            raise ValueError(f"horizon must be at least 1, got {self.N}")
        if self.a_min > self.a_max:
            raise ValueError(f"acceleration bounds inverted: [{self.a_min}, {self.a_max}]")


@dataclass
class LongitudinalProblem:
    qp: DenseQP
    chance: ChanceSpec
    system: CondensedSystem
    moments_sigma: np.ndarray    # covariance sequence, control independent
    soft_rows: int
    soft: bool


@dataclass
class LongitudinalOutput:
    a_star_seq: np.ndarray       # N
    v_star_seq: np.ndarray       # N+1
    s_x_mean_seq: np.ndarray     # N+1
    margins: np.ndarray
    phases: list[int]
    soft: bool
    soft_rows: int
    iterations: int
    objective: float


def _check_beta(beta: float):
    if not 0.0 < beta < 0.5:
        raise ValueError(f"beta must lie in (0, 0.5), got {beta}")


def propagate_moments(x0, u_seq, a_o_star_seq, sigma2_seq, params: SimParams) -> GaussianMoments:
    """Mean and covariance of [s_x, v, v_o] under w(k) ~ N(a_o*(k), sigma2(k)); Sigma(0) = 0."""
    u = np.asarray(u_seq, dtype=float).ravel()
    w = np.asarray(a_o_star_seq, dtype=float).ravel()
    s2 = np.asarray(sigma2_seq, dtype=float).ravel()
    N = len(u)
    if len(w) < N or len(s2) < N:
        raise ValueError(f"disturbance sequences shorter than the horizon {N}")
    if np.any(s2[:N] < 0):
        raise ValueError("variance sequence has negative entries")

    A, B, E = longitudinal_model(params)
    Pi = np.zeros((N + 1, 3))
    Sigma = np.zeros((N + 1, 3, 3))
    Pi[0] = np.asarray(x0, dtype=float).ravel()
    EEt = E @ E.T
    for k in range(N):
        Pi[k + 1] = A @ Pi[k] + B[:, 0] * u[k] + E[:, 0] * w[k]
        Sigma[k + 1] = A @ Sigma[k] @ A.T + s2[k] * EEt
    return GaussianMoments(Pi_seq=Pi, Sigma_seq=Sigma)


def covariance_sequence(sigma2_seq, params: SimParams) -> np.ndarray:
    N = len(sigma2_seq)
    return propagate_moments(np.zeros(3), np.zeros(N), np.zeros(N), sigma2_seq, params).Sigma_seq


def chance_margin(beta: float, sigma_k: float) -> float:
    """Tightening that makes k_x*mean <= b_x - margin equivalent to Pr{k_x*x <= b_x} >= 1 - beta."""
    _check_beta(beta)
    if sigma_k < 0:
        raise ValueError(f"standard deviation must be non-negative, got {sigma_k}")
    return math.sqrt(2.0) * float(erfinv(1.0 - 2.0 * beta)) * sigma_k


def build_longitudinal_qp(
    state: WorldState,
    lateral_out: LateralOutput,
    shared: SharedSequences,
    sigma2_seq,
    sim: SimParams,
    occ: OccupancyParams,
    cfg: LongitudinalConfig,
    soft: bool = False,
) -> LongitudinalProblem:
    if lateral_out is None:
        raise ValueError("longitudinal step needs the lateral output of the same iteration")
    N = cfg.N
    if len(lateral_out.s_x_pred_seq) < N + 1:
        raise ValueError(f"lateral output covers {len(lateral_out.s_x_pred_seq) - 1} steps, horizon is {N}")
    sigma2 = np.asarray(sigma2_seq, dtype=float).ravel()
    if len(sigma2) < N:
        raise ValueError(f"variance sequence has {len(sigma2)} entries, horizon is {N}")

    system = condense_longitudinal([state.s_x, state.v, state.v_o], lateral_out.a_o_star_seq, N, sim)
    Sigma = covariance_sequence(sigma2[:N], sim)
    w = cfg.weights

    # -P_x * sum s_x(k) + sum q_v (v - v_o(t))^2 + q_a a^2
    H, g, _ = system.tracking((0.0, w.Q_x[0], w.Q_x[1]), [0.0, state.v_o, 0.0])
    g = g - w.P_x * system.B_tilde[3::3].sum(axis=0)

    rows, lbs, ubs = [], [], []
    f_low = np.tile([0.0, cfg.a_min], N + 1)
    f_up = np.tile([cfg.v_max, cfg.a_max], N + 1)
    keep = np.any(system.Df != 0.0, axis=1)
    rows.append(system.Df[keep])
    lbs.append(f_low[keep] - system.f_const[keep])
    ubs.append(f_up[keep] - system.f_const[keep])

    ev_speeds = shared.ev_speeds(N)
    k_hat = np.zeros(N)
    b_x = np.zeros(N)
    margins = np.zeros(N)
    phases = []
    chance_rows, chance_ub = [], []
    soft_rows = 0
    x_const = system.x_const
    for k in range(1, N + 1):
        p = active_phase(lateral_out.s_x_pred_seq[k], occ)
        # s_Xe (p = 3 only) anchors on the fresh OV plan v_o*(k|t)
        s_Xa, s_Xe = anchor_x(ev_speeds[k - 1], lateral_out.v_o_star_seq[k], occ)
        line = line_for_phase(p, s_Xa, s_Xe, occ)
        phases.append(p)
        k_hat[k - 1] = line.k
        b_x[k - 1] = lateral_out.s_y_star_seq[k] - line.b
        margins[k - 1] = chance_margin(cfg.beta, abs(line.k) * math.sqrt(max(Sigma[k, 0, 0], 0.0)))
        coeff = line.k * system.B_tilde[3 * k]
        rhs = b_x[k - 1] - margins[k - 1] - line.k * x_const[3 * k]
        if not np.any(coeff != 0.0):
            if rhs < -_ROW_TOL:
                soft_rows += 1
            continue
        chance_rows.append(coeff)
        chance_ub.append(rhs)

    n = N + (1 if soft else 0)
    A_bounds = np.vstack(rows)
    A_chance = np.array(chance_rows).reshape(-1, N)
    if soft:
        H = np.pad(H, ((0, 1), (0, 1)))
        H[-1, -1] = 2.0 * cfg.slack_penalty
        g = np.append(g, 0.0)
        A_bounds = np.hstack([A_bounds, np.zeros((A_bounds.shape[0], 1))])
        A_chance = np.hstack([A_chance, -np.ones((A_chance.shape[0], 1))])
        sigma_row = np.zeros((1, n))
        sigma_row[0, -1] = 1.0
    A_ineq = np.vstack([A_bounds, A_chance] + ([sigma_row] if soft else []))
    lb = np.concatenate(lbs + [np.full(A_chance.shape[0], -np.inf)] + ([np.zeros(1)] if soft else []))
    ub = np.concatenate(ubs + [np.array(chance_ub)] + ([np.full(1, np.inf)] if soft else []))

    return LongitudinalProblem(
        qp=DenseQP(H=H, g=g, A_ineq=A_ineq, lb=lb, ub=ub),
        chance=ChanceSpec(beta=cfg.beta, k_x_seq=k_hat, b_x_seq=b_x, margins=margins, phases=phases),
        system=system,
        moments_sigma=Sigma,
        soft_rows=soft_rows,
        soft=soft or soft_rows > 0,
    )


def longitudinal_step(
    state: WorldState,
    lateral_out: LateralOutput,
    shared: SharedSequences,
    sigma2_now: float,
    sim: SimParams,
    occ: OccupancyParams,
    cfg: LongitudinalConfig,
    soft: bool = False,
) -> LongitudinalOutput:
    """Solve the chance-constrained QP with sigma^2 held at sigma2_now over the horizon."""
    if not state.is_finite():
        raise ValueError(f"non-finite measurement: {state}")
    problem = build_longitudinal_qp(state, lateral_out, shared, np.full(cfg.N, sigma2_now), sim, occ, cfg, soft=soft)
    sol = solve_qp(problem.qp)
    if not sol.ok:
        raise InfeasibleError(f"longitudinal QP {sol.status}: {sol.message or 'no feasible acceleration plan'}")
    a_star = sol.u_star[:cfg.N]
    states = problem.system.states(a_star)
    if problem.soft_rows:
        logger.warning(f"{problem.soft_rows} constant chance row(s) violated by the lateral plan; step flagged soft")
    return LongitudinalOutput(
        a_star_seq=a_star.copy(),
        v_star_seq=states[:, 1].copy(),
        s_x_mean_seq=states[:, 0].copy(),
        margins=problem.chance.margins,
        phases=problem.chance.phases,
        soft=problem.soft,
        soft_rows=problem.soft_rows,
        iterations=sol.iterations,
        objective=sol.objective,
    )


def empirical_violation_rate(problem: LongitudinalProblem, a_star_seq, sigma2_seq, n_samples: int = 10_000, seed: int = 0) -> np.ndarray:
    """Monte Carlo frequency of k_x*s_x(k) > b_x(k) per predicted step, OV accelerations drawn from the model."""
    system = problem.system
    N = system.N
    rng = np.random.default_rng(seed)
    std = np.sqrt(np.asarray(sigma2_seq, dtype=float).ravel()[:N])
    draws = system.exo[None, :] + rng.standard_normal((n_samples, N)) * std[None, :]

    sx_rows = np.arange(1, N + 1) * 3
    base = system.A_tilde[sx_rows] @ system.x0 + system.B_tilde[sx_rows] @ np.asarray(a_star_seq, dtype=float)
    s_x = base[None, :] + draws @ system.E_tilde[sx_rows].T
    lhs = s_x * problem.chance.k_x_seq[None, :]
    return np.mean(lhs > problem.chance.b_x_seq[None, :], axis=0)


class LongitudinalController:
    def __init__(self, sim: SimParams, occ: OccupancyParams, cfg: LongitudinalConfig | None = None):
        self.sim = sim
        self.occ = occ
        self.cfg = cfg or LongitudinalConfig()
        self.cfg.validate()

    @soften_on_infeasible(logger=logger)
    def step(self, state: WorldState, lateral_out: LateralOutput, shared: SharedSequences, sigma2_now: float, soft: bool = False) -> LongitudinalOutput:
        return longitudinal_step(state, lateral_out, shared, sigma2_now, self.sim, self.occ, self.cfg, soft=soft)
