"""Invariant suite for a written trace, run by ``main.py validate``."""
import math
from dataclasses import fields

import numpy as np
import pandas as pd

from config.scenario import ScenarioConfig, config_from_dict
from config.settings import FOLLOWER_AUDIT_TOL
from models.occupancy import constraint_margin, polygons_overlap
from runner.closed_loop import StepRecord, build_setup
from runner.metrics import compute_metrics
from utils.logger import setup_logger

logger = setup_logger()

_TOL = 1e-9


def _fail(reasons, msg, logger=None):
    if logger: logger.info(msg)
    if reasons is not None: reasons.append(msg)


def _close(a, b, tol: float = _TOL) -> bool:
    if a is None or b is None:
        return a is None and b is None
    if isinstance(a, bool) or isinstance(b, bool):
        return bool(a) == bool(b)
    if isinstance(a, (int, float)) and isinstance(b, (int, float)):
        if math.isinf(a) or math.isinf(b):
            return a == b
        return math.isclose(a, b, rel_tol=1e-9, abs_tol=tol)
    return a == b


def validate_trace(df: pd.DataFrame, summary: dict | None = None, logger=None) -> list[str]:
    """Every broken invariant as a human-readable reason; an empty list means the trace is consistent."""
    reasons: list[str] = []
    summary = summary or {}
    if df.empty:
        _fail(reasons, "trace has no records", logger)
        return reasons
    missing = [f.name for f in fields(StepRecord) if f.name not in df.columns]
    if missing:
        _fail(reasons, f"trace lacks columns {missing}", logger)
        return reasons

    config = config_from_dict(summary["config"]) if summary.get("config") else ScenarioConfig()
    setup = build_setup(config)
    occ = setup.occ
    meta = summary.get("meta", {})

    if meta and not meta.get("aborted", False) and len(df) != meta.get("steps_planned", len(df)):
        _fail(reasons, f"record count {len(df)} differs from the planned {meta['steps_planned']} steps", logger)

    t = df["t"].to_numpy(dtype=float)
    if np.any(np.diff(t) <= 0):
        _fail(reasons, f"timestamps not strictly increasing at step {int(np.argmax(np.diff(t) <= 0)) + 1}", logger)

    for row in df.itertuples(index=False):
        if row.delta_plan:
            expected = float(np.clip(row.delta_plan[0], -setup.steer_limit, setup.steer_limit))
            if abs(row.delta - expected) > _TOL:
                _fail(reasons, f"step {row.step}: applied delta {row.delta} is not the first plan element {expected}", logger)
        if row.a_plan:
            expected = float(np.clip(row.a_plan[0], setup.a_min, setup.a_max))
            if abs(row.a - expected) > _TOL:
                _fail(reasons, f"step {row.step}: applied a {row.a} is not the first plan element {expected}", logger)
        if bool(row.overlap) != polygons_overlap((row.s_x, row.s_y), occ):
            _fail(reasons, f"step {row.step}: logged overlap flag disagrees with the oracle", logger)
        margin = constraint_margin(row.s_x, row.s_y, row.v, row.v_o, occ)
        if abs(margin - row.margin) > 1e-6:
            _fail(reasons, f"step {row.step}: logged margin {row.margin:.6f} differs from {margin:.6f}", logger)
        if row.follower_gap > FOLLOWER_AUDIT_TOL:
            _fail(reasons, f"step {row.step}: follower audit gap {row.follower_gap:.2e} above {FOLLOWER_AUDIT_TOL:.0e}", logger)

    # v*(.|t-1) consumed at t is exactly what the longitudinal step produced at t-1
    first = df.iloc[0]
    if len(first["v_star_prev"]) and not np.allclose(first["v_star_prev"], first["v"], rtol=0.0, atol=_TOL):
        _fail(reasons, "step 0: bootstrap speed sequence does not hold the measured speed", logger)
    for prev, cur in zip(df.itertuples(index=False), list(df.itertuples(index=False))[1:]):
        if list(cur.v_star_prev) != list(prev.v_star_plan):
            _fail(reasons, f"step {cur.step}: shared speed sequence is not the previous longitudinal plan", logger)

    logged = summary.get("metrics")
    if logged:
        recomputed = compute_metrics(df, occ, wheelbase=setup.sim.l).to_dict()
        for key, value in recomputed.items():
            if key in logged and not _close(value, logged[key]):
                _fail(reasons, f"metric {key}: logged {logged[key]} but the trace gives {value}", logger)

    return reasons
