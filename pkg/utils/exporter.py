import json
import os
import platform
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pandas as pd
import scipy
from openpyxl import Workbook
from openpyxl.styles import Font, PatternFill
from openpyxl.utils.dataframe import dataframe_to_rows

from config.settings import APP_VERSION, OUTPUT_DIR
from runner.closed_loop import SEQUENCE_FIELDS, TraceLog
from utils.logger import setup_logger

logger = setup_logger()

TRACE_CSV = "trace.csv"
TRACE_JSON = "trace.json"
SUMMARY_JSON = "summary.json"

GREEN = PatternFill(start_color="C6EFCE", end_color="C6EFCE", fill_type="solid")
RED = PatternFill(start_color="FFC7CE", end_color="FFC7CE", fill_type="solid")


def _join(seq) -> str:
    return " ".join(repr(float(x)) for x in seq)


def _split(cell) -> list:
    if isinstance(cell, list):
        return cell
    if cell is None or (isinstance(cell, float) and np.isnan(cell)) or str(cell).strip() == "":
        return []
    return [float(x) for x in str(cell).split()]


def versions() -> dict:
    return {
        "app": APP_VERSION,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
    }


def export_trace(trace: TraceLog, out_dir=OUTPUT_DIR, fmt: str = "csv") -> Path:
    """One row per step; list-valued columns are space-joined in CSV."""
    os.makedirs(out_dir, exist_ok=True)
    if fmt == "csv":
        df = trace.to_frame()
        for col in SEQUENCE_FIELDS:
            if col in df.columns:
                df[col] = df[col].map(_join)
        path = Path(out_dir) / TRACE_CSV
        df.to_csv(path, index=False)
    elif fmt == "json":
        path = Path(out_dir) / TRACE_JSON
        doc = {"meta": trace.meta, "records": trace.to_frame().to_dict(orient="records")}
        path.write_text(json.dumps(doc, indent=1))
    else:
        raise ValueError(f"unknown trace format {fmt!r}; expected csv or json")
    logger.info(f"Exported trace ({len(trace)} steps) to {path}")
    return path


def solver_stats(df: pd.DataFrame) -> dict:
    if df.empty:
        return {}
    stats = {
        "mpec_nodes_median": float(df["mpec_nodes"].median()),
        "mpec_nodes_max": int(df["mpec_nodes"].max()),
        "qp_iterations_total": int(df["qp_iterations"].sum()),
        "certified_steps": int(df["mpec_certified"].astype(bool).sum()),
        "follower_gap_max": float(df["follower_gap"].max()),
        "ov_fallback_steps": int(df["ov_fallback"].astype(bool).sum()),
    }
    return stats


def write_summary(trace: TraceLog, metrics: dict, out_dir=OUTPUT_DIR) -> Path:
    os.makedirs(out_dir, exist_ok=True)
    path = Path(out_dir) / SUMMARY_JSON
    doc = {
        "written": datetime.now(timezone.utc).strftime("%Y-%m-%d %H:%M:%S %Z"),
        "meta": trace.meta,
        "metrics": metrics,
        "solver": solver_stats(trace.to_frame()),
        "config": trace.config,
        "versions": versions(),
    }
    try:
        path.write_text(json.dumps(doc, indent=2))
        logger.info(f"Wrote run summary to {path}")
    except OSError as e:
        logger.error(f"Failed to write run summary: {e}")
        raise
    return path


def load_trace(path) -> tuple[pd.DataFrame, dict]:
    """Trace table plus the run summary found next to it ({} when absent)."""
    path = Path(path)
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        df = pd.DataFrame(doc.get("records", []))
    else:
        df = pd.read_csv(path)
        for col in SEQUENCE_FIELDS:
            if col in df.columns:
                df[col] = df[col].map(_split)
    summary_path = path.parent / SUMMARY_JSON
    summary = json.loads(summary_path.read_text()) if summary_path.exists() else {}
    return df, summary


def export_sweep_results(results: list[dict], out_dir=OUTPUT_DIR, stamp: datetime | None = None) -> tuple[Path, Path | None]:
    """Sweep table to CSV and Excel; Excel rows are red inside the critical zone, green outside."""
    os.makedirs(out_dir, exist_ok=True)
    stamp = stamp or datetime.now(timezone.utc)
    rows = []
    for record in results:
        row = {f"{key}": value for key, value in record["point"].items()}
        for col in ("failed", "critical", "min_headway_time", "min_lateral_distance", "collision", "overtake_completed", "error"):
            row[col] = record.get(col)
        rows.append(row)
    df = pd.DataFrame(rows)

    base = f"sweep_{stamp.strftime('%Y-%m-%d_%H%M%S')}"
    csv_path = Path(out_dir) / f"{base}.csv"
    df.to_csv(csv_path, index=False)
    logger.info(f"Exported sweep results to CSV: {csv_path}")

    wb = Workbook()
    ws = wb.active
    ws.title = "Pareto Sweep"
    for r_idx, row in enumerate(dataframe_to_rows(df, index=False, header=True), start=1):
        ws.append(row)
        if r_idx == 1:
            for cell in ws[r_idx]:
                cell.font = Font(bold=True)
            continue
        record = df.loc[r_idx - 2]
        if record["failed"]:
            continue
        fill = RED if record["critical"] else GREEN
        for cell in ws[r_idx]:
            cell.fill = fill

    xlsx_path = Path(out_dir) / f"{base}.xlsx"
    try:
        wb.save(xlsx_path)
        logger.info(f"Exported sweep results to Excel: {xlsx_path}")
    except Exception as e:
        logger.error(f"Failed to save Excel file: {e}")
        return csv_path, None
    return csv_path, xlsx_path
