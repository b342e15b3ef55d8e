"""Ground-truth overtaken-vehicle behaviour for closed-loop runs.

Interactive modes solve a short-horizon tracking QP of the same form as the
follower subgame; outside the interaction window every mode plays back the
base speed profile.
"""
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from config.settings import ACCEL_MAX, ACCEL_MIN, HORIZON, OV_SPEED_LIMIT, TARGET_HEADWAY_TIME
from controller.lateral import FollowerSpec, follower_qp
from dataset.tracks import headway_time
from dataset.variance import VarianceCurve
from models.occupancy import OccupancyParams
from models.vehicle import SimParams, WorldState
from solver.condense import condense_ov
from solver.qp import solve_qp
from utils.logger import setup_logger

logger = setup_logger()

NON_INTERACTIVE = "non_interactive"
POLITE = "polite"
AGGRESSIVE = "aggressive"
MODES = (NON_INTERACTIVE, POLITE, AGGRESSIVE)

# (headway tracking, speed tracking, effort)
_PRESET_WEIGHTS = {
    NON_INTERACTIVE: (0.0, 0.0, 1.0),
    POLITE: (0.5, 0.05, 1.0),
    AGGRESSIVE: (0.005, 1.0, 0.5),
}


class SpeedProfile:
    """Piecewise-linear speed over time, held constant past either end."""

    def __init__(self, times, speeds, v_max: float = OV_SPEED_LIMIT):
        self.times = np.asarray(times, dtype=float).ravel()
        self.speeds = np.asarray(speeds, dtype=float).ravel()
        if self.times.size == 0:
            raise ValueError("speed profile is empty")
        if self.times.shape != self.speeds.shape:
            raise ValueError("speed profile needs one speed per time stamp")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("speed profile time stamps must be strictly increasing")
        if np.any(self.speeds < 0):
            raise ValueError("speed profile contains negative speeds")
        self.speeds = np.clip(self.speeds, 0.0, v_max)

    @classmethod
    def constant(cls, speed: float) -> "SpeedProfile":
        return cls([0.0], [speed])

    def __call__(self, t: float) -> float:
        return float(np.interp(t, self.times, self.speeds))


def load_speed_profile(path, v_max: float = OV_SPEED_LIMIT) -> SpeedProfile:
    """Two-column CSV (time s, speed m/s); a header row is optional."""
    try:
        df = pd.read_csv(path, header=None, comment="#")
    except pd.errors.EmptyDataError:
        raise ValueError(f"{path}: speed profile is empty")
    df = df.apply(pd.to_numeric, errors="coerce").dropna()
    if df.empty:
        raise ValueError(f"{path}: speed profile is empty")
    if df.shape[1] < 2:
        raise ValueError(f"{path}: expected two columns (time, speed)")
    return SpeedProfile(df.iloc[:, 0].to_numpy(), df.iloc[:, 1].to_numpy(), v_max=v_max)


@dataclass
class OvBehavior:
    mode: str
    headway_weight: float
    speed_weight: float
    effort_weight: float
    profile: SpeedProfile
    target_speed: float = OV_SPEED_LIMIT
    t_target: float = TARGET_HEADWAY_TIME
    pre_react: bool = False

    @classmethod
    def preset(cls, mode: str, profile: SpeedProfile, **overrides) -> "OvBehavior":
        if mode not in MODES:
            raise ValueError(f"unknown OV mode {mode!r}; expected one of {MODES}")
        headway, speed, effort = _PRESET_WEIGHTS[mode]
        return cls(mode=mode, headway_weight=headway, speed_weight=speed, effort_weight=effort, profile=profile, **overrides)

    def validate(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown OV mode {self.mode!r}")
        if min(self.headway_weight, self.speed_weight) < 0 or self.effort_weight <= 0:
            raise ValueError("OV weights must be non-negative with a positive effort weight")

    def in_window(self, s_x: float, v_o: float, occ: OccupancyParams) -> bool:
        if self.mode == NON_INTERACTIVE:
            return False
        start = occ.s_Xb if (self.pre_react and self.mode == POLITE) else occ.s_Xd
        return start <= s_x <= occ.d_X0 + v_o * self.t_target


@dataclass
class OvResponse:
    a_o: float
    interacting: bool
    fallback: bool = False


def _track_profile(v_o: float, t: float, behavior: OvBehavior, params: SimParams, a_min: float, a_max: float) -> float:
    return float(np.clip((behavior.profile(t + params.dt) - v_o) / params.dt, a_min, a_max))


def ov_step(
    ov_speed: float,
    relative_state: tuple,
    t: float,
    behavior: OvBehavior,
    params: SimParams,
    occ: OccupancyParams,
    N: int = HORIZON,
    a_min: float = ACCEL_MIN,
    a_max: float = ACCEL_MAX,
) -> OvResponse:
    """One OV acceleration. ``relative_state`` is (s_x, v_ev)."""
    s_x, v_ev = relative_state
    if not behavior.in_window(s_x, ov_speed, occ):
        return OvResponse(a_o=_track_profile(ov_speed, t, behavior, params, a_min, a_max), interacting=False)

    # aggressive drivers chase the speed limit once the EV cuts in
    v_ref = behavior.target_speed if behavior.mode == AGGRESSIVE else behavior.profile(t)
    spec = FollowerSpec(
        Q_o=np.diag([behavior.headway_weight, behavior.speed_weight, behavior.effort_weight]),
        z_ref_o=np.array([occ.d_X0 + ov_speed * behavior.t_target, v_ref, 0.0]),
        f_low=np.array([params.v_o_min, a_min]),
        f_up=np.array([params.v_o_max, a_max]),
        headway_gate=True,
        t_target=behavior.t_target,
        system=condense_ov([s_x, ov_speed], np.full(N, v_ev), N, params),
    )
    sol = solve_qp(follower_qp(spec))
    if not sol.ok:
        logger.warning(f"OV behaviour QP {sol.status} at t={t:.1f}s; tracking the speed profile")
        return OvResponse(a_o=_track_profile(ov_speed, t, behavior, params, a_min, a_max), interacting=True, fallback=True)
    return OvResponse(a_o=float(np.clip(sol.u_star[0], a_min, a_max)), interacting=True)


class OvSimulator:
    """One per scenario run; owns the seeded generator for the optional acceleration noise."""

    def __init__(
        self,
        behavior: OvBehavior,
        params: SimParams,
        occ: OccupancyParams,
        N: int = HORIZON,
        noise_curve: VarianceCurve | None = None,
        seed: int = 0,
        a_min: float = ACCEL_MIN,
        a_max: float = ACCEL_MAX,
    ):
        behavior.validate()
        self.behavior = behavior
        self.params = params
        self.occ = occ
        self.N = N
        self.noise_curve = noise_curve
        self.a_min = a_min
        self.a_max = a_max
        self.rng = np.random.default_rng(seed)

    def step(self, state: WorldState, t: float) -> OvResponse:
        response = ov_step(
            state.v_o, (state.s_x, state.v), t, self.behavior, self.params, self.occ,
            N=self.N, a_min=self.a_min, a_max=self.a_max,
        )
        if self.noise_curve is not None and response.interacting:
            sigma2 = self.noise_curve(headway_time(state.s_x, state.v_o))
            noisy = response.a_o + self.rng.normal(0.0, math.sqrt(sigma2))
            response.a_o = float(np.clip(noisy, self.a_min, self.a_max))
        return response
