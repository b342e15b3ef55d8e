"""Stackelberg lateral MPC: the OV follower subgame, the EV leader subgame and their MPEC.

The follower predicts how the overtaken vehicle (OV) answers the ego vehicle's
(EV) motion; the leader plans steering anticipating that answer. Both are
condensed over N steps and coupled through the phase-selected boundary line
k*s_x + b <= s_y at every predicted step.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from config.settings import (
    ACCEL_MAX,
    ACCEL_MIN,
    COUPLING_BUFFER,
    HEADING_LIMIT,
    HORIZON,
    LATERAL_Q_O,
    LATERAL_Q_Y,
    MPEC_NODE_BUDGET,
    SLACK_PENALTY,
    STEER_LIMIT,
    TARGET_HEADWAY_TIME,
)
from controller import SharedSequences
from models.occupancy import BoundaryLine, OccupancyParams, active_phase, anchor_x, line_for_phase, road_bounds
from models.vehicle import SimParams, WorldState, lateral_ltv
from solver.condense import CondensedSystem, condense_lateral, condense_ov
from solver.mpec import MpecProblem, MpecSolution, solve_mpec
from solver.qp import DenseQP, polish, solve_qp
from utils.fallback import soften_on_infeasible
from utils.logger import setup_logger

logger = setup_logger()

_ROW_TOL = 1e-9


@dataclass(frozen=True)
class LateralConfig:
    N: int = HORIZON
    Q_y: tuple = LATERAL_Q_Y
    Q_o: tuple = LATERAL_Q_O
    t_target: float = TARGET_HEADWAY_TIME
    steer_limit: float = STEER_LIMIT
    heading_limit: float = HEADING_LIMIT
    a_o_min: float = ACCEL_MIN
    a_o_max: float = ACCEL_MAX
    coupling_buffer: float = COUPLING_BUFFER
    slack_penalty: float = SLACK_PENALTY
    node_budget: int = MPEC_NODE_BUDGET
    certify: bool = True

    def validate(self):
        if self.N < 1:
            raise ValueError(f"horizon must be at least 1, got {self.N}")
        if len(self.Q_y) != 3 or min(self.Q_y) <= 0:
            raise ValueError(f"Q_y must have three positive entries, got {self.Q_y}")
        if len(self.Q_o) != 3 or min(self.Q_o) < 0:
            raise ValueError(f"Q_o must have three non-negative entries, got {self.Q_o}")
        if self.steer_limit <= 0 or self.heading_limit <= 0:
            raise ValueError("steering and heading limits must be positive")
        if self.steer_limit >= math.pi / 2:
            raise ValueError(f"steering limit must be below 90 degrees, got {self.steer_limit} rad")
        if self.a_o_min > self.a_o_max:
            raise ValueError(f"OV acceleration bounds inverted: [{self.a_o_min}, {self.a_o_max}]")
        if self.coupling_buffer < 0:
            raise ValueError(f"coupling buffer must be non-negative, got {self.coupling_buffer}")


@dataclass
class FollowerSpec:
    Q_o: np.ndarray               # 3x3, [s_x, v_o, a_o]
    z_ref_o: np.ndarray           # [s~_x, v_o(t), 0]
    f_low: np.ndarray             # per-step bounds on [v_o, a_o]
    f_up: np.ndarray
    headway_gate: bool
    t_target: float
    system: CondensedSystem
    lines: list[BoundaryLine] = field(default_factory=list)   # coupling line of predicted steps 1..N
    s_x_pred: np.ndarray | None = None

    @property
    def s_x_ref(self) -> float:
        return float(self.z_ref_o[0])


@dataclass
class LeaderSpec:
    Q_y: np.ndarray               # 3x3, [s_y, psi, delta]
    z_ref_y: np.ndarray           # [s~_y, 0, 0]
    f_low: np.ndarray             # per-step bounds on [s_y, psi, delta]
    f_up: np.ndarray
    system: CondensedSystem

    @property
    def s_y_ref(self) -> float:
        return float(self.z_ref_y[0])


@dataclass
class LateralOutput:
    delta_star_seq: np.ndarray    # N
    a_o_star_seq: np.ndarray      # N
    v_o_star_seq: np.ndarray      # N+1
    s_y_star_seq: np.ndarray      # N+1
    s_x_pred_seq: np.ndarray      # N+1
    psi_star_seq: np.ndarray      # N+1
    s_y_ref: float
    headway_gate: bool
    phases: list[int]
    solution: MpecSolution
    follower: FollowerSpec
    soft_rows: int = 0            # measurement-fixed coupling rows already violated

    @property
    def soft(self) -> bool:
        return self.solution.soft or self.soft_rows > 0


def _stacked_bounds(system: CondensedSystem, low, up, widen: bool):
    """Per-step bounds tiled over the f-stack; rows fixed by the measurement are flagged constant."""
    f_low = np.tile(np.asarray(low, dtype=float), system.N + 1)
    f_up = np.tile(np.asarray(up, dtype=float), system.N + 1)
    if f_low.shape[0] != system.Df.shape[0]:
        raise ValueError(f"{len(low)} bounds per step do not match the output stack of {system.Df.shape[0]} rows")
    constant = ~np.any(system.Df != 0.0, axis=1)
    if widen:
        f_const = system.f_const
        f_low[constant] = np.minimum(f_low[constant], f_const[constant])
        f_up[constant] = np.maximum(f_up[constant], f_const[constant])
    return f_low, f_up, constant


def follower_rows(follower: FollowerSpec):
    """(F, f_off, f_low, f_up) of the follower's bound rows, constant rows widened to the measured value."""
    system = follower.system
    f_low, f_up, _ = _stacked_bounds(system, follower.f_low, follower.f_up, widen=True)
    return system.Df, system.f_const, f_low, f_up


def follower_qp(follower: FollowerSpec) -> DenseQP:
    H, g, _ = follower.system.tracking(np.diag(follower.Q_o), follower.z_ref_o)
    F, f_off, f_low, f_up = follower_rows(follower)
    return DenseQP(H=H, g=g, A_ineq=F, lb=f_low - f_off, ub=f_up - f_off)


def build_follower(state: WorldState, shared: SharedSequences, sim: SimParams, occ: OccupancyParams, cfg: LateralConfig) -> FollowerSpec:
    """OV subgame: headway/speed tracking with effort penalty, driven by the EV speed plan.

    The coupling lines come from the follower's own predicted positions: s_Xa
    from v*(k|t-1) and s_Xe from v_o*(k|t-1) for predicted step k.
    """
    N = cfg.N
    u_e = shared.ev_speeds(N)
    v_o_prev = shared.ov_speeds(N)

    s_x_ref = occ.d_X0 + state.v_o * cfg.t_target
    gate = occ.s_Xd <= state.s_x <= s_x_ref
    Q_o = np.diag(np.asarray(cfg.Q_o, dtype=float))
    if not gate:
        Q_o[0, 0] = 0.0

    system = condense_ov([state.s_x, state.v_o], u_e, N, sim)
    follower = FollowerSpec(
        Q_o=Q_o,
        z_ref_o=np.array([s_x_ref, state.v_o, 0.0]),
        f_low=np.array([sim.v_o_min, cfg.a_o_min]),
        f_up=np.array([sim.v_o_max, cfg.a_o_max]),
        headway_gate=gate,
        t_target=cfg.t_target,
        system=system,
    )

    response = solve_qp(follower_qp(follower))
    if response.ok:
        s_x_pred = system.states(response.u_star)[:, 0]
    else:
        logger.warning(f"Follower prediction failed ({response.status}); phases from the free response")
        s_x_pred = system.states(np.zeros(N))[:, 0]
    follower.s_x_pred = s_x_pred

    lines = []
    for k in range(1, N + 1):
        s_Xa, s_Xe = anchor_x(u_e[k - 1], v_o_prev[k - 1], occ)
        lines.append(line_for_phase(active_phase(s_x_pred[k], occ), s_Xa, s_Xe, occ))
    follower.lines = lines
    return follower


def planned_heading_limit(cfg: LateralConfig) -> float:
    """Heading bound for the small-angle model, shrunk by delta/tan(delta) at full lock.

    The plant turns with tan(delta) and the model with delta, so a plan at the
    model bound would overshoot the limit on the plant.
    """
    return cfg.heading_limit * cfg.steer_limit / math.tan(cfg.steer_limit)


def build_leader(state: WorldState, shared: SharedSequences, sim: SimParams, occ: OccupancyParams, cfg: LateralConfig) -> LeaderSpec:
    """EV subgame: track the lane reference chosen from the measured s_x with heading and steering effort."""
    N = cfg.N
    ltv = lateral_ltv(shared.ev_speeds(N), sim, N)
    system = condense_lateral([state.s_y, state.psi], ltv, N)
    s_y_ref = occ.W_l if occ.s_Xb <= state.s_x <= occ.s_Xd else 0.0
    y_min, y_max = road_bounds(occ)
    psi_max = planned_heading_limit(cfg)
    return LeaderSpec(
        Q_y=np.diag(np.asarray(cfg.Q_y, dtype=float)),
        z_ref_y=np.array([s_y_ref, 0.0, 0.0]),
        f_low=np.array([y_min, -psi_max, -cfg.steer_limit]),
        f_up=np.array([y_max, psi_max, cfg.steer_limit]),
        system=system,
    )


def assemble_mpec(
    leader: LeaderSpec,
    follower: FollowerSpec,
    include_coupling: bool = True,
    soft: bool = False,
    buffer: float = COUPLING_BUFFER,
    penalty: float = SLACK_PENALTY,
) -> MpecProblem:
    """Leader QP over [u_y, u_o] constrained by the follower's KKT system and the coupling rows."""
    ly, fo = leader.system, follower.system
    if ly.N != fo.N:
        raise ValueError(f"leader horizon {ly.N} differs from follower horizon {fo.N}")
    if include_coupling and len(follower.lines) != ly.N:
        raise ValueError(f"follower carries {len(follower.lines)} coupling lines, horizon is {ly.N}")
    n_y, n_o = ly.B_tilde.shape[1], fo.B_tilde.shape[1]

    H_y, g_y, c_y = ly.tracking(np.diag(leader.Q_y), leader.z_ref_y)
    leader_H = np.zeros((n_y + n_o, n_y + n_o))
    leader_H[:n_y, :n_y] = H_y
    leader_g = np.concatenate([g_y, np.zeros(n_o)])

    f_low, f_up, constant = _stacked_bounds(ly, leader.f_low, leader.f_up, widen=False)
    keep = ~constant & (np.isfinite(f_low) | np.isfinite(f_up))
    A_lead = np.hstack([ly.Df[keep], np.zeros((int(keep.sum()), n_o))])
    f_const = ly.f_const[keep]

    rows, rhs, fixed_violations = [], [], 0
    if include_coupling:
        # rows k = 1..N: k*s_x(k) + b + buffer - s_y(k) <= 0
        x_y, x_o = ly.x_const, fo.x_const
        for k, line in enumerate(follower.lines, start=1):
            row = np.concatenate([-ly.B_tilde[2 * k], line.k * fo.B_tilde[2 * k]])
            bare = x_y[2 * k] - line.k * x_o[2 * k] - line.b
            if not np.any(row != 0.0):
                # fixed by the measurement: checked against the bare line, never buffered
                if bare < -_ROW_TOL:
                    fixed_violations += 1
                continue
            rows.append(row)
            rhs.append(bare - buffer)
    A_couple = np.array(rows).reshape(len(rows), n_y + n_o)
    ub_couple = np.array(rhs, dtype=float)

    H_o, g_o, _ = fo.tracking(np.diag(follower.Q_o), follower.z_ref_o)
    F, f_off, fo_low, fo_up = follower_rows(follower)
    return MpecProblem(
        leader_H=leader_H, leader_g=leader_g, leader_const=c_y, n_y=n_y,
        follower_H=H_o, follower_g=g_o,
        F=F, f_off=f_off, f_low=fo_low, f_up=fo_up,
        A_lead=A_lead, lb_lead=f_low[keep] - f_const, ub_lead=f_up[keep] - f_const,
        A_couple=A_couple, ub_couple=ub_couple,
        soft=soft and include_coupling, penalty=penalty,
        fixed_violations=fixed_violations,
    )


def follower_audit(follower: FollowerSpec, a_o_star_seq) -> float:
    """Max |u_o - u_o*| between an independent follower solve and the MPEC's follower decisions."""
    qp = follower_qp(follower)
    sol = solve_qp(qp)
    if not sol.ok:
        return float("inf")
    return float(np.max(np.abs(polish(qp, sol) - np.asarray(a_o_star_seq, dtype=float))))


def extract_output(leader: LeaderSpec, follower: FollowerSpec, solution: MpecSolution, soft_rows: int = 0) -> LateralOutput:
    ev = leader.system.states(solution.u_y)
    ov = follower.system.states(solution.u_o)
    return LateralOutput(
        delta_star_seq=solution.u_y.copy(),
        a_o_star_seq=solution.u_o.copy(),
        v_o_star_seq=ov[:, 1].copy(),
        s_y_star_seq=ev[:, 0].copy(),
        s_x_pred_seq=ov[:, 0].copy(),
        psi_star_seq=ev[:, 1].copy(),
        s_y_ref=leader.s_y_ref,
        headway_gate=follower.headway_gate,
        phases=[line.p for line in follower.lines],
        solution=solution,
        follower=follower,
        soft_rows=soft_rows,
    )


def lateral_step(
    state: WorldState,
    shared: SharedSequences,
    sim: SimParams,
    occ: OccupancyParams,
    cfg: LateralConfig,
    warm_pattern=None,
    soft: bool = False,
) -> LateralOutput:
    if not state.is_finite():
        raise ValueError(f"non-finite measurement: {state}")
    follower = build_follower(state, shared, sim, occ, cfg)
    leader = build_leader(state, shared, sim, occ, cfg)
    problem = assemble_mpec(
        leader, follower, soft=soft, buffer=cfg.coupling_buffer, penalty=cfg.slack_penalty,
    )
    if problem.fixed_violations:
        logger.warning(f"{problem.fixed_violations} constant coupling row(s) violated by the measurement; step flagged soft")
    solution = solve_mpec(problem, warm_pattern=warm_pattern, node_budget=cfg.node_budget, certify=cfg.certify)
    logger.debug(
        f"Lateral step: nodes={solution.nodes}, objective={solution.objective:.4f}, "
        f"certified={solution.certified}, soft={solution.soft}, sigma={solution.sigma:.2e}"
    )
    return extract_output(leader, follower, solution, soft_rows=problem.fixed_violations)


class LateralController:
    """Owns the warm-start pattern across iterations; one caller at a time."""

    def __init__(self, sim: SimParams, occ: OccupancyParams, cfg: LateralConfig | None = None):
        self.sim = sim
        self.occ = occ
        self.cfg = cfg or LateralConfig()
        self.cfg.validate()
        self.warm_pattern = None

    def step(self, state: WorldState, shared: SharedSequences) -> LateralOutput:
        out = self._solve(state, shared)
        self.warm_pattern = out.solution.pattern
        return out

    @soften_on_infeasible(logger=logger)
    def _solve(self, state: WorldState, shared: SharedSequences, soft: bool = False) -> LateralOutput:
        return lateral_step(state, shared, self.sim, self.occ, self.cfg, warm_pattern=self.warm_pattern, soft=soft)
