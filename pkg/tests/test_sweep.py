import logging
from unittest.mock import patch

import pytest

from config.scenario import apply_overrides
from runner.closed_loop import run_closed_loop
from runner.metrics import compute_metrics
from runner.sweep import expand_grid, is_critical, load_grid, pareto_sweep, run_point


def test_expand_grid_cartesian_product():
    grid = expand_grid({"longitudinal.P_x": [0.5, 1.0], "ov.mode": ["polite", "aggressive"]})
    assert len(grid) == 4
    assert grid[0] == {"longitudinal.P_x": 0.5, "ov.mode": "polite"}
    assert grid[-1] == {"longitudinal.P_x": 1.0, "ov.mode": "aggressive"}


def test_scalar_axis():
    assert expand_grid({"seed": 3}) == [{"seed": 3}]


def test_empty_grid():
    with pytest.raises(ValueError, match="empty"):
        expand_grid({})
    with pytest.raises(ValueError, match="without values"):
        expand_grid({"seed": []})


def test_load_grid_flattens_nested_tables(tmp_path):
    path = tmp_path / "grid.toml"
    path.write_text('[grid]\n"longitudinal.P_x" = [0.5, 2.0]\n[grid.lateral]\ncoupling_buffer = [0.0, 0.1]\n')
    grid = load_grid(path)
    assert len(grid) == 4
    assert set(grid[0]) == {"longitudinal.P_x", "lateral.coupling_buffer"}


def test_load_grid_without_table(tmp_path):
    path = tmp_path / "grid.toml"
    path.write_text("seed = 1\n")
    with pytest.raises(ValueError, match=r"no \[grid\] table"):
        load_grid(path)


@pytest.mark.parametrize("headway, lateral, collision, expected", [
    (1.5, 1.5, False, False),
    (0.5, 1.5, False, True),
    (1.5, 0.5, False, True),
    (None, None, False, False),
    (None, None, True, True),
])
def test_is_critical(headway, lateral, collision, expected):
    assert is_critical(headway, lateral, collision) is expected


def test_bad_override_is_recorded_as_failure(short_scenario):
    record = run_point(short_scenario, {"longitudinal.beta": 0.9})
    assert record["failed"]
    assert "beta" in record["error"]
    assert record["point"] == {"longitudinal.beta": 0.9}


def test_sweep_continues_past_failures(short_scenario):
    ok = {"point": {"seed": 1}, "failed": False, "min_headway_time": 1.2, "min_lateral_distance": 1.5, "critical": False}
    bad = {"point": {"seed": 2}, "failed": True, "error": "boom"}
    with patch("runner.sweep.run_point", side_effect=[ok, bad]) as run:
        results = pareto_sweep(short_scenario, [{"seed": 1}, {"seed": 2}], jobs=1)
    assert results == [ok, bad]
    assert run.call_count == 2


def test_sweep_rejects_empty_grid(short_scenario):
    with pytest.raises(ValueError, match="empty"):
        pareto_sweep(short_scenario, [], jobs=1)


def test_single_point_runs_inline(short_scenario):
    results = pareto_sweep(short_scenario, [{"longitudinal.P_x": 2.0}], jobs=1, log_level=logging.WARNING)
    assert len(results) == 1
    assert not results[0]["failed"]
    assert results[0]["metrics"]["steps"] == 30


def test_single_point_matches_solo_run(short_scenario):
    point = {"longitudinal.P_x": 2.0}
    record = pareto_sweep(short_scenario, [point], jobs=1, log_level=logging.WARNING)[0]
    solo = compute_metrics(run_closed_loop(apply_overrides(short_scenario, point))).to_dict()
    for key in ("min_headway_time", "min_lateral_distance", "collision", "lane_occupancy_time", "steps"):
        assert record["metrics"][key] == solo[key]
