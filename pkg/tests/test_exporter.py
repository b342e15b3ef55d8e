import json
from datetime import datetime, timezone

import pytest
from openpyxl import load_workbook

from config.scenario import ScenarioConfig
from runner.closed_loop import run_closed_loop
from runner.metrics import compute_metrics
from utils.exporter import export_sweep_results, export_trace, load_trace, solver_stats, write_summary


@pytest.fixture(scope="module")
def trace():
    config = ScenarioConfig(name="export")
    config.sim.T_total = 1.0
    config.sim.N = 5
    return run_closed_loop(config.validate())


def test_csv_trace_keeps_plans(tmp_path, trace):
    path = export_trace(trace, tmp_path, fmt="csv")
    assert path.name == "trace.csv"
    df, summary = load_trace(path)
    assert summary == {}
    assert len(df) == len(trace)
    original = trace.records[3]
    assert df.loc[3, "delta_plan"] == original.delta_plan
    assert df.loc[3, "v_star_prev"] == original.v_star_prev


def test_json_trace(tmp_path, trace):
    path = export_trace(trace, tmp_path, fmt="json")
    doc = json.loads(path.read_text())
    assert doc["meta"]["scenario"] == "export"
    df, _ = load_trace(path)
    assert df.loc[0, "a_plan"] == trace.records[0].a_plan


def test_unknown_format(tmp_path, trace):
    with pytest.raises(ValueError, match="unknown trace format"):
        export_trace(trace, tmp_path, fmt="parquet")


def test_summary_sits_next_to_trace(tmp_path, trace):
    export_trace(trace, tmp_path)
    metrics = compute_metrics(trace).to_dict()
    write_summary(trace, metrics, tmp_path)
    _, summary = load_trace(tmp_path / "trace.csv")
    assert summary["metrics"] == json.loads(json.dumps(metrics))
    assert summary["config"]["sim"]["N"] == 5
    assert summary["solver"]["certified_steps"] <= len(trace)
    assert {"app", "numpy", "scipy"} <= set(summary["versions"])


def test_solver_stats(trace):
    stats = solver_stats(trace.to_frame())
    assert stats["mpec_nodes_max"] >= 1
    assert stats["qp_iterations_total"] > 0


def test_sweep_export_colours_rows(tmp_path):
    results = [
        {"point": {"longitudinal.P_x": 0.5}, "failed": False, "critical": False,
         "min_headway_time": 1.4, "min_lateral_distance": 1.8, "collision": False, "overtake_completed": True},
        {"point": {"longitudinal.P_x": 2.0}, "failed": False, "critical": True,
         "min_headway_time": 0.6, "min_lateral_distance": 1.8, "collision": False, "overtake_completed": True},
        {"point": {"longitudinal.P_x": 4.0}, "failed": True, "error": "beta out of range"},
    ]
    stamp = datetime(2024, 5, 1, 12, 0, 0, tzinfo=timezone.utc)
    csv_path, xlsx_path = export_sweep_results(results, tmp_path, stamp)
    assert csv_path.name == "sweep_2024-05-01_120000.csv"
    assert xlsx_path is not None and xlsx_path.exists()

    ws = load_workbook(xlsx_path).active
    assert ws.title == "Pareto Sweep"
    assert ws.cell(row=1, column=1).value == "longitudinal.P_x"
    assert ws.cell(row=1, column=1).font.bold
    assert ws.cell(row=2, column=1).fill.start_color.rgb.endswith("C6EFCE")
    assert ws.cell(row=3, column=1).fill.start_color.rgb.endswith("FFC7CE")
    assert ws.cell(row=4, column=1).fill.fill_type is None
