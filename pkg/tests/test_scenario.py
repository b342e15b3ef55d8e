from pathlib import Path

import pytest

from config.scenario import ScenarioConfig, apply_overrides, config_from_dict, load_scenario

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"


def test_defaults_validate(scenario):
    assert scenario.sim.N == 20
    assert scenario.initial.v == scenario.initial.v_o
    assert scenario.ov.mode == "polite"


@pytest.mark.parametrize("name", ["polite", "aggressive", "non_interactive"])
def test_shipped_scenarios_load(name):
    config = load_scenario(SCENARIOS / f"{name}.toml")
    assert config.ov.mode == name
    assert config.resolve(config.ov.profile).exists()


def test_load_merges_tables(tmp_path):
    path = tmp_path / "custom.toml"
    path.write_text('seed = 3\n[sim]\nT_total = 5.0\nN = 10\n[longitudinal]\nQ_x = [1, 2]\n')
    config = load_scenario(path)
    assert config.name == "custom"
    assert config.seed == 3
    assert config.sim.T_total == 5.0 and config.sim.N == 10
    assert config.longitudinal.Q_x == [1.0, 2.0]
    assert config.sim.dt == pytest.approx(0.1)
    assert config.base_dir == str(tmp_path)


def test_unknown_key(tmp_path):
    path = tmp_path / "typo.toml"
    path.write_text("[sim]\nhorizon = 10\n")
    with pytest.raises(ValueError, match="unknown key scenario.sim.horizon"):
        load_scenario(path)


def test_section_must_be_table(tmp_path):
    path = tmp_path / "flat.toml"
    path.write_text("sim = 3\n")
    with pytest.raises(ValueError, match="must be a table"):
        load_scenario(path)


def test_overrides_leave_original_untouched(scenario):
    changed = apply_overrides(scenario, {"longitudinal.P_x": 2.0, "ov.mode": "aggressive"})
    assert changed.longitudinal.P_x == 2.0
    assert changed.ov.mode == "aggressive"
    assert scenario.longitudinal.P_x == 1.0
    assert scenario.ov.mode == "polite"


def test_config_rebuilt_from_its_echo(short_scenario):
    rebuilt = config_from_dict(short_scenario.to_dict())
    assert rebuilt.to_dict() == short_scenario.to_dict()


@pytest.mark.parametrize("overrides, message", [
    ({"sim.dt": 0.0}, "dt"),
    ({"sim.N": 0}, "at least 1"),
    ({"sim.T_total": 1.0}, "exceeds"),
    ({"limits.v_max": 10.0}, "speed limit"),
    ({"longitudinal.beta": 0.5}, "beta"),
    ({"ov.mode": "reckless"}, "ov.mode"),
    ({"initial.v": -1.0}, "non-negative"),
])
def test_validation_errors(scenario, overrides, message):
    with pytest.raises(ValueError, match=message):
        apply_overrides(scenario, overrides)


def test_resolve_relative_paths():
    config = ScenarioConfig(base_dir="/data/runs")
    assert config.resolve("") is None
    assert config.resolve("profile.csv") == Path("/data/runs/profile.csv")
    assert config.resolve("/abs/profile.csv") == Path("/abs/profile.csv")
