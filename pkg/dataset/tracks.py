"""Overtaking samples from naturalistic trajectory files (highD track schema by default)."""
from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd

from config.settings import HEADWAY_BAND, MIN_OV_SPEED
from utils.logger import setup_logger

logger = setup_logger()


@dataclass(frozen=True)
class TrackSchema:
    frame: str = "frame"
    vehicle: str = "id"
    x: str = "x"
    lane: str = "laneId"
    velocity: str = "xVelocity"
    acceleration: str = "xAcceleration"


def headway_time(s_x, v_o, eps: float = MIN_OV_SPEED):
    """Longitudinal headway time s_x / v_o; +inf where the OV is slower than eps."""
    s_x = np.asarray(s_x, dtype=float)
    v_o = np.asarray(v_o, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_x = np.where(v_o > eps, s_x / np.where(v_o > eps, v_o, 1.0), np.inf)
    return float(t_x) if t_x.ndim == 0 else t_x


def _load(path, schema: TrackSchema) -> pd.DataFrame:
    df = pd.read_csv(path)
    columns = asdict(schema)
    missing = [col for col in columns.values() if col not in df.columns]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")
    df = df[list(columns.values())].rename(columns={v: k for k, v in columns.items()})
    df = df.apply(pd.to_numeric, errors="coerce")
    bad = df.isna().any(axis=1)
    if bad.any():
        logger.warning(f"Skipped {int(bad.sum())} malformed row(s) in {path}")
        df = df[~bad]

    # fold both driving directions onto increasing x
    direction = np.where(df["velocity"] < 0, -1.0, 1.0)
    df = df.assign(
        direction=direction,
        x=df["x"] * direction,
        velocity=df["velocity"] * direction,
        acceleration=df["acceleration"] * direction,
    )
    return df


def ingest_tracks(path, schema: TrackSchema | None = None, window=HEADWAY_BAND, eps: float = MIN_OV_SPEED) -> pd.DataFrame:
    """(t_x, a_o) samples of overtaken vehicles.

    A pair qualifies when a vehicle in an adjacent lane of the same direction
    starts behind the other vehicle and ends ahead of it. Every shared frame
    of the pair with t_x inside ``window`` yields one sample.
    Returns a frame with columns t_x, a_o, overtaker, overtaken, frame.
    """
    df = _load(path, schema or TrackSchema())
    pairs = df.merge(df, on=["frame", "direction"], suffixes=("_ev", "_ov"))
    pairs = pairs[(pairs["vehicle_ev"] != pairs["vehicle_ov"]) & ((pairs["lane_ev"] - pairs["lane_ov"]).abs() == 1)]
    if pairs.empty:
        raise ValueError(f"{path}: no vehicle pairs in adjacent lanes")

    pairs = pairs.assign(gap=pairs["x_ev"] - pairs["x_ov"]).sort_values("frame")
    grouped = pairs.groupby(["vehicle_ev", "vehicle_ov"])["gap"]
    passed = (grouped.transform("first") < 0) & (grouped.transform("last") > 0)
    pairs = pairs[passed]

    t_x = headway_time(pairs["gap"].to_numpy(), pairs["velocity_ov"].to_numpy(), eps)
    samples = pd.DataFrame({
        "t_x": t_x,
        "a_o": pairs["acceleration_ov"].to_numpy(),
        "overtaker": pairs["vehicle_ev"].to_numpy(),
        "overtaken": pairs["vehicle_ov"].to_numpy(),
        "frame": pairs["frame"].to_numpy(),
    })
    lo, hi = window
    samples = samples[(samples["t_x"] >= lo) & (samples["t_x"] <= hi)].reset_index(drop=True)
    if samples.empty:
        raise ValueError(f"{path}: no overtaking samples inside the headway window {window}")
    logger.info(
        f"Ingested {len(samples)} samples from {samples[['overtaker', 'overtaken']].drop_duplicates().shape[0]} overtaking pair(s) in {path}"
    )
    return samples
