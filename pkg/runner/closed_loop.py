import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd

from config.scenario import ScenarioConfig
from config.settings import APP_VERSION, FOLLOWER_AUDIT_TOL
from controller import SharedSequences
from controller.lateral import LateralConfig, LateralController, follower_audit
from controller.longitudinal import LongitudinalConfig, LongitudinalController, LongitudinalWeights
from dataset.tracks import headway_time
from dataset.variance import default_curve, load_curve
from models.occupancy import OccupancyParams, active_phase, constraint_margin, derive_params, polygons_overlap
from models.vehicle import ControlInput, SimParams, WorldState, step_plant
from sim.ov_simulator import OvBehavior, OvSimulator, SpeedProfile, load_speed_profile
from solver import SolverError
from utils.logger import setup_logger

# list-valued StepRecord fields; CSV traces store them space-joined
SEQUENCE_FIELDS = (
    "v_star_prev", "v_star_plan", "v_o_star_plan", "delta_plan", "a_plan",
    "s_y_star_plan", "s_x_pred_plan", "chance_margins",
)


@dataclass
class StepRecord:
    step: int
    t: float
    s_x: float
    s_y: float
    psi: float
    v: float
    v_o: float
    a: float
    delta: float
    a_o: float
    saturated: bool
    s_y_ref: float
    phase: int
    headway_gate: bool
    margin: float
    overlap: bool
    sigma2: float
    mpec_nodes: int
    mpec_certified: bool
    lateral_soft: bool
    longitudinal_soft: bool
    soft_rows: int
    qp_iterations: int
    follower_gap: float
    ov_interacting: bool
    ov_fallback: bool
    wall_time: float
    v_star_prev: list = field(default_factory=list)
    v_star_plan: list = field(default_factory=list)
    v_o_star_plan: list = field(default_factory=list)
    delta_plan: list = field(default_factory=list)
    a_plan: list = field(default_factory=list)
    s_y_star_plan: list = field(default_factory=list)
    s_x_pred_plan: list = field(default_factory=list)
    chance_margins: list = field(default_factory=list)


@dataclass
class TraceLog:
    records: list[StepRecord] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    aborted: bool = False
    reason: str = ""

    def __len__(self) -> int:
        return len(self.records)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(r) for r in self.records])


@dataclass
class ClosedLoopSetup:
    sim: SimParams
    occ: OccupancyParams
    lateral: LateralConfig
    longitudinal: LongitudinalConfig
    steer_limit: float
    a_min: float
    a_max: float


def build_setup(config: ScenarioConfig) -> ClosedLoopSetup:
    veh, lim = config.vehicle, config.limits
    sim = SimParams(
        dt=config.sim.dt, l=veh.wheelbase, T_total=config.sim.T_total,
        v_o_min=lim.v_o_min, v_o_max=lim.v_o_max,
    )
    sim.validate()
    heading = math.radians(lim.heading_deg)
    steer = math.radians(lim.steer_deg)
    occ = derive_params(L_v=veh.L_v, W_v=veh.W_v, psi_max=heading, d_X0=veh.d_X0, t_min=veh.t_min, W_l=veh.W_l)
    lateral = LateralConfig(
        N=config.sim.N, Q_y=tuple(config.lateral.Q_y), Q_o=tuple(config.lateral.Q_o),
        t_target=veh.t_target, steer_limit=steer, heading_limit=heading,
        a_o_min=lim.a_min, a_o_max=lim.a_max,
        coupling_buffer=config.lateral.coupling_buffer,
        node_budget=config.lateral.node_budget, certify=config.lateral.certify,
    )
    longitudinal = LongitudinalConfig(
        N=config.sim.N,
        weights=LongitudinalWeights(P_x=config.longitudinal.P_x, Q_x=tuple(config.longitudinal.Q_x)),
        beta=config.longitudinal.beta, v_max=lim.v_max, a_min=lim.a_min, a_max=lim.a_max,
    )
    return ClosedLoopSetup(sim=sim, occ=occ, lateral=lateral, longitudinal=longitudinal, steer_limit=steer, a_min=lim.a_min, a_max=lim.a_max)


def _ov_simulator(config: ScenarioConfig, setup: ClosedLoopSetup, curve) -> OvSimulator:
    ov = config.ov
    profile_path = config.resolve(ov.profile)
    if profile_path is not None:
        profile = load_speed_profile(profile_path, v_max=config.limits.v_o_max)
    else:
        profile = SpeedProfile.constant(config.initial.v_o)
    behavior = OvBehavior.preset(ov.mode, profile, target_speed=config.limits.v_o_max, t_target=config.vehicle.t_target, pre_react=ov.pre_react)
    for name in ("headway_weight", "speed_weight", "effort_weight"):
        value = getattr(ov, name)
        if value >= 0:
            setattr(behavior, name, value)
    return OvSimulator(
        behavior, setup.sim, setup.occ, N=config.sim.N,
        noise_curve=curve if ov.noise else None, seed=config.seed,
        a_min=setup.a_min, a_max=setup.a_max,
    )


def run_closed_loop(config: ScenarioConfig, log_level=logging.INFO) -> TraceLog:
    """Receding-horizon loop: lateral game, then longitudinal SMPC, then plant and OV step."""
    logger = setup_logger(level=log_level)
    config.validate()
    setup = build_setup(config)
    sim, occ, N = setup.sim, setup.occ, config.sim.N

    curve_path = config.resolve(config.variance.curve)
    curve = load_curve(curve_path) if curve_path is not None else default_curve()
    ov_sim = _ov_simulator(config, setup, curve)
    lateral = LateralController(sim, occ, setup.lateral)
    longitudinal = LongitudinalController(sim, occ, setup.longitudinal)

    init = config.initial
    state = WorldState(s_x=init.s_x, s_y=init.s_y, psi=init.psi, v=init.v, v_o=init.v_o)
    shared = SharedSequences.bootstrap(state, N)
    trace = TraceLog(
        config=config.to_dict(),
        meta={"scenario": config.name, "version": APP_VERSION, "steps_planned": sim.N_T, "dt": sim.dt},
    )

    logger.info(f"Closed loop '{config.name}' started: {sim.N_T} steps, OV mode={config.ov.mode}, seed={config.seed}")
    start_time = time.time()
    audit_failures = 0
    for step in range(sim.N_T):
        t = step * sim.dt
        tick = time.perf_counter()
        try:
            lat_out = lateral.step(state, shared)
            sigma2 = float(curve(headway_time(state.s_x, state.v_o)))
            lon_out = longitudinal.step(state, lat_out, shared, sigma2)
        except (SolverError, ValueError) as e:
            logger.error(f"Controller failed at step {step} (t={t:.1f}s): {e}")
            trace.aborted = True
            trace.reason = f"controller failure at step {step}: {e}"
            break
        wall = time.perf_counter() - tick

        delta = float(np.clip(lat_out.delta_star_seq[0], -setup.steer_limit, setup.steer_limit))
        a = float(np.clip(lon_out.a_star_seq[0], setup.a_min, setup.a_max))
        saturated = delta != float(lat_out.delta_star_seq[0]) or a != float(lon_out.a_star_seq[0])
        gap = follower_audit(lat_out.follower, lat_out.a_o_star_seq)
        if gap > FOLLOWER_AUDIT_TOL:
            audit_failures += 1
            logger.warning(f"Follower audit at step {step}: |u_o - u_o*| = {gap:.2e}")
        ov = ov_sim.step(state, t)

        trace.records.append(StepRecord(
            step=step, t=round(t, 10),
            s_x=state.s_x, s_y=state.s_y, psi=state.psi, v=state.v, v_o=state.v_o,
            a=a, delta=delta, a_o=ov.a_o, saturated=saturated,
            s_y_ref=lat_out.s_y_ref, phase=active_phase(state.s_x, occ), headway_gate=lat_out.headway_gate,
            margin=constraint_margin(state.s_x, state.s_y, state.v, state.v_o, occ),
            overlap=polygons_overlap((state.s_x, state.s_y), occ),
            sigma2=sigma2,
            mpec_nodes=lat_out.solution.nodes, mpec_certified=lat_out.solution.certified,
            lateral_soft=lat_out.soft, longitudinal_soft=lon_out.soft, soft_rows=lat_out.soft_rows + lon_out.soft_rows,
            qp_iterations=lat_out.solution.qp_iterations + lon_out.iterations,
            follower_gap=gap, ov_interacting=ov.interacting, ov_fallback=ov.fallback,
            wall_time=wall,
            v_star_prev=shared.v_star.tolist(),
            v_star_plan=lon_out.v_star_seq.tolist(),
            v_o_star_plan=lat_out.v_o_star_seq.tolist(),
            delta_plan=lat_out.delta_star_seq.tolist(),
            a_plan=lon_out.a_star_seq.tolist(),
            s_y_star_plan=lat_out.s_y_star_seq.tolist(),
            s_x_pred_plan=lat_out.s_x_pred_seq.tolist(),
            chance_margins=np.asarray(lon_out.margins).tolist(),
        ))
        if trace.records[-1].overlap:
            logger.warning(f"Arc-polygon overlap at step {step}: s_x={state.s_x:.3f}, s_y={state.s_y:.3f}")

        try:
            state = step_plant(state, ControlInput(a=a, delta=delta), ov.a_o, sim)
        except ValueError as e:
            logger.error(f"Plant rejected step {step}: {e}")
            trace.aborted = True
            trace.reason = f"plant failure at step {step}: {e}"
            break
        shared = SharedSequences(v_star=lon_out.v_star_seq, v_o_star=lat_out.v_o_star_seq)

    elapsed = time.time() - start_time
    trace.meta.update({"steps": len(trace), "elapsed_s": round(elapsed, 3), "aborted": trace.aborted, "reason": trace.reason})
    logger.info("Closed Loop Summary")
    logger.info(f"Steps completed: {len(trace)}/{sim.N_T}")
    logger.info(f"Follower audit failures: {audit_failures}")
    logger.info(f"Run duration: {elapsed:.2f} seconds")
    return trace
