"""Plant stepping and the linear prediction models shared by both controllers.

All states live in the moving frame centred on the overtaken vehicle (OV):
``s_x``/``s_y`` locate the ego vehicle (EV) centre, ``psi`` is the EV heading
relative to the road axis.
"""
import math
from dataclasses import dataclass, replace

import numpy as np

from config.settings import (
    GRAVITY,
    OV_SPEED_LIMIT,
    OV_SPEED_MIN,
    SAMPLE_TIME,
    SIM_TIME,
    WHEELBASE,
)


@dataclass(frozen=True)
class WorldState:
    s_x: float
    s_y: float
    psi: float
    v: float
    v_o: float

    def as_array(self) -> np.ndarray:
        return np.array([self.s_x, self.s_y, self.psi, self.v, self.v_o], dtype=float)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.as_array())))


@dataclass(frozen=True)
class ControlInput:
    a: float
    delta: float


@dataclass(frozen=True)
class SimParams:
    dt: float = SAMPLE_TIME
    l: float = WHEELBASE
    T_total: float = SIM_TIME
    g: float = GRAVITY  # unused by the planar models
    v_o_min: float = OV_SPEED_MIN
    v_o_max: float = OV_SPEED_LIMIT

    @property
    def N_T(self) -> int:
        return int(round(self.T_total / self.dt))

    def validate(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.l > 0:
            raise ValueError(f"wheelbase must be positive, got {self.l}")
        if self.v_o_min > self.v_o_max:
            raise ValueError(f"OV speed bounds inverted: [{self.v_o_min}, {self.v_o_max}]")


@dataclass(frozen=True)
class LtvLateralModel:
    A_seq: np.ndarray  # (N, 2, 2)
    B_seq: np.ndarray  # (N, 2, 1)

    @property
    def N(self) -> int:
        return self.A_seq.shape[0]


def step_plant(state: WorldState, control: ControlInput, ov_accel: float, params: SimParams) -> WorldState:
    """Nonlinear forward-Euler update of the coupled EV/OV kinematics.

    The OV speed is clamped to [v_o_min, v_o_max] and the EV speed at zero
    after the update.
    """
    params.validate()
    if not state.is_finite():
        raise ValueError(f"non-finite state: {state}")
    if not all(math.isfinite(x) for x in (control.a, control.delta, ov_accel)):
        raise ValueError(f"non-finite input: {control}, ov_accel={ov_accel}")
    if abs(state.psi) > math.pi / 2:
        raise ValueError(f"heading {state.psi:.4f} rad outside [-pi/2, pi/2]")

    dt = params.dt
    s_x = state.s_x + (state.v * math.cos(state.psi) - state.v_o) * dt
    s_y = state.s_y + state.v * math.sin(state.psi) * dt
    psi = state.psi + state.v * math.tan(control.delta) / params.l * dt
    v = max(state.v + control.a * dt, 0.0)
    v_o = min(max(state.v_o + ov_accel * dt, params.v_o_min), params.v_o_max)
    return WorldState(s_x=s_x, s_y=s_y, psi=psi, v=v, v_o=v_o)


def lateral_ltv(v_star_seq, params: SimParams, N: int | None = None) -> LtvLateralModel:
    """LTV lateral model driven by an exogenous EV speed sequence, one (A, B) pair per step."""
    params.validate()
    speeds = np.asarray(v_star_seq, dtype=float).ravel()
    N = len(speeds) if N is None else N
    if len(speeds) < N:
        raise ValueError(f"speed sequence has {len(speeds)} entries, horizon needs {N}")
    speeds = speeds[:N]

    dt, l = params.dt, params.l
    A_seq = np.tile(np.eye(2), (N, 1, 1))
    A_seq[:, 0, 1] = speeds * dt
    B_seq = np.zeros((N, 2, 1))
    B_seq[:, 1, 0] = speeds * dt / l
    return LtvLateralModel(A_seq=A_seq, B_seq=B_seq)


def ov_model(params: SimParams):
    """Relative-position/OV-speed model: state [s_x, v_o], input a_o, exogenous EV speed."""
    params.validate()
    dt = params.dt
    A_o = np.array([[1.0, -dt], [0.0, 1.0]])
    B_o = np.array([[0.0], [dt]])
    E_o = np.array([[dt], [0.0]])
    return A_o, B_o, E_o


def longitudinal_model(params: SimParams):
    """EV longitudinal model: state [s_x, v, v_o], input a, disturbance a_o."""
    params.validate()
    dt = params.dt
    A_x = np.array([[1.0, dt, -dt], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    B_x = np.array([[0.0], [dt], [0.0]])
    E_x = np.array([[0.0], [0.0], [dt]])
    return A_x, B_x, E_x


def _linear_step(state: WorldState, control: ControlInput, ov_accel: float, params: SimParams) -> WorldState:
    dt = params.dt
    return replace(
        state,
        s_x=state.s_x + (state.v - state.v_o) * dt,
        s_y=state.s_y + state.v * state.psi * dt,
        psi=state.psi + state.v * control.delta / params.l * dt,
        v=state.v + control.a * dt,
        v_o=state.v_o + ov_accel * dt,
    )


def linearization_report(state: WorldState, input_seq, params: SimParams, N: int, ov_accel_seq=None) -> dict:
    """Roll out the nonlinear plant and the decoupled linear model side by side.

    Returns the max absolute divergence per state over the N steps.
    """
    controls = list(input_seq)
    if len(controls) < N:
        raise ValueError(f"input sequence has {len(controls)} entries, need {N}")
    ov_accels = np.zeros(N) if ov_accel_seq is None else np.asarray(ov_accel_seq, dtype=float)

    nonlinear = state
    linear = state
    worst = np.zeros(5)
    for k in range(N):
        nonlinear = step_plant(nonlinear, controls[k], ov_accels[k], params)
        linear = _linear_step(linear, controls[k], ov_accels[k], params)
        worst = np.maximum(worst, np.abs(nonlinear.as_array() - linear.as_array()))
    return dict(zip(("s_x", "s_y", "psi", "v", "v_o"), worst.tolist()))
