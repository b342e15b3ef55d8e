"""Comfort, efficiency and safety metrics of a closed-loop trace.

Works on a TraceLog or on any DataFrame with the documented trace columns,
so traces of other controllers can be scored the same way.
"""
import math
from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd

from config.settings import MIN_OV_SPEED, SAMPLE_TIME, SETTLE_TOLERANCE, WHEELBASE
from dataset.tracks import headway_time
from models.occupancy import OccupancyParams, derive_params, polygons_overlap

REQUIRED_COLUMNS = ("t", "s_x", "s_y", "psi", "v", "v_o", "delta")


@dataclass
class Metrics:
    rms_psi_deg: float | None
    rms_ay: float | None
    lane_occupancy_time: float
    min_headway_time: float | None        # None when the EV never merged back
    min_lateral_distance: float | None    # None when the vehicles never overlapped longitudinally
    collision: bool
    overtake_completed: bool
    mean_wall_time: float | None
    max_wall_time: float | None
    soft_steps: int
    saturation_steps: int
    cut_in_start: float | None
    cut_in_end: float | None
    steps: int

    def to_dict(self) -> dict:
        return asdict(self)


def _as_frame(trace) -> pd.DataFrame:
    df = trace if isinstance(trace, pd.DataFrame) else trace.to_frame()
    missing = [c for c in REQUIRED_COLUMNS if c not in df.columns]
    if missing:
        raise ValueError(f"trace lacks columns {missing}")
    if df.empty:
        raise ValueError("trace has no records")
    return df.reset_index(drop=True)


def _sample_time(t: np.ndarray) -> float:
    if len(t) < 2:
        return SAMPLE_TIME
    return float(np.median(np.diff(t)))


def lane_reference(s_x: np.ndarray, occ: OccupancyParams) -> np.ndarray:
    return np.where((s_x >= occ.s_Xb) & (s_x <= occ.s_Xd), occ.W_l, 0.0)


def cut_in_window(df: pd.DataFrame, occ: OccupancyParams, settle: float = SETTLE_TOLERANCE) -> tuple[int, int] | None:
    """Index range [start, end] of the cut-in phase.

    Starts at the first step after the pass where the lane reference drops
    back to 0, ends where |s_y| first falls within ``settle`` (or at the last
    record when it never settles).
    """
    ref = df["s_y_ref"].to_numpy() if "s_y_ref" in df.columns else lane_reference(df["s_x"].to_numpy(), occ)
    s_x = df["s_x"].to_numpy()
    switched = np.flatnonzero((ref[:-1] > 0) & (ref[1:] == 0) & (s_x[1:] > 0)) + 1
    if switched.size == 0:
        return None
    start = int(switched[0])
    settled = np.flatnonzero(np.abs(df["s_y"].to_numpy()[start:]) < settle)
    end = start + int(settled[0]) if settled.size else len(df) - 1
    return start, end


def _merged_back(s_x: np.ndarray, s_y: np.ndarray, W_l: float) -> np.ndarray:
    entered = np.maximum.accumulate(s_y > W_l / 2)
    return entered & (s_y < W_l / 2) & (s_x > 0)


def compute_metrics(trace, occ: OccupancyParams | None = None, wheelbase: float = WHEELBASE) -> Metrics:
    occ = occ or derive_params()
    df = _as_frame(trace)
    t = df["t"].to_numpy(dtype=float)
    s_x = df["s_x"].to_numpy(dtype=float)
    s_y = df["s_y"].to_numpy(dtype=float)
    v = df["v"].to_numpy(dtype=float)
    v_o = df["v_o"].to_numpy(dtype=float)
    dt = _sample_time(t)

    window = cut_in_window(df, occ)
    rms_psi = rms_ay = cut_start = cut_end = None
    if window is not None:
        i, j = window
        psi = df["psi"].to_numpy(dtype=float)[i:j + 1]
        a_y = v[i:j + 1] ** 2 * df["delta"].to_numpy(dtype=float)[i:j + 1] / wheelbase
        rms_psi = math.degrees(float(np.sqrt(np.mean(psi ** 2))))
        rms_ay = float(np.sqrt(np.mean(a_y ** 2)))
        cut_start, cut_end = float(t[i]), float(t[j])

    merged = _merged_back(s_x, s_y, occ.W_l)
    min_headway = None
    if merged.any():
        min_headway = float(np.min(headway_time(s_x[merged], v_o[merged], MIN_OV_SPEED)))

    alongside = np.abs(s_x) <= occ.L_v
    min_lateral = float(np.min(np.abs(s_y[alongside]) - occ.W_v)) if alongside.any() else None

    collision = any(polygons_overlap((x, y), occ) for x, y in zip(s_x, s_y))

    mean_wall = max_wall = None
    if "wall_time" in df.columns:
        mean_wall = float(df["wall_time"].mean())
        max_wall = float(df["wall_time"].max())

    soft_cols = [c for c in ("lateral_soft", "longitudinal_soft") if c in df.columns]
    soft_steps = int(df[soft_cols].astype(bool).any(axis=1).sum()) if soft_cols else 0
    saturation_steps = int(df["saturated"].astype(bool).sum()) if "saturated" in df.columns else 0

    return Metrics(
        rms_psi_deg=rms_psi,
        rms_ay=rms_ay,
        lane_occupancy_time=float(np.count_nonzero(s_y > occ.W_l / 2)) * dt,
        min_headway_time=min_headway,
        min_lateral_distance=min_lateral,
        collision=bool(collision),
        overtake_completed=bool(merged.any()),
        mean_wall_time=mean_wall,
        max_wall_time=max_wall,
        soft_steps=soft_steps,
        saturation_steps=saturation_steps,
        cut_in_start=cut_start,
        cut_in_end=cut_end,
        steps=len(df),
    )
