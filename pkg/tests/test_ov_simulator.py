from pathlib import Path

import pytest

from models.vehicle import WorldState
from sim.ov_simulator import (
    AGGRESSIVE,
    NON_INTERACTIVE,
    POLITE,
    OvBehavior,
    OvSimulator,
    SpeedProfile,
    load_speed_profile,
    ov_step,
)


@pytest.fixture
def cruise():
    return SpeedProfile.constant(16.0)


def test_presets(cruise):
    polite = OvBehavior.preset(POLITE, cruise)
    aggressive = OvBehavior.preset(AGGRESSIVE, cruise)
    assert (polite.headway_weight, polite.speed_weight, polite.effort_weight) == (0.5, 0.05, 1.0)
    assert (aggressive.headway_weight, aggressive.speed_weight, aggressive.effort_weight) == (0.005, 1.0, 0.5)
    assert OvBehavior.preset(NON_INTERACTIVE, cruise, pre_react=True).pre_react


def test_unknown_mode(cruise):
    with pytest.raises(ValueError, match="unknown OV mode"):
        OvBehavior.preset("reckless", cruise)


def test_interaction_window(cruise, occ):
    polite = OvBehavior.preset(POLITE, cruise)
    assert polite.in_window(10.0, 16.0, occ)
    assert not polite.in_window(0.0, 16.0, occ)
    assert not polite.in_window(40.0, 16.0, occ)
    assert OvBehavior.preset(POLITE, cruise, pre_react=True).in_window(0.0, 16.0, occ)
    assert not OvBehavior.preset(NON_INTERACTIVE, cruise).in_window(10.0, 16.0, occ)


def test_non_interactive_tracks_profile(cruise, sim, occ):
    behavior = OvBehavior.preset(NON_INTERACTIVE, cruise)
    held = ov_step(16.0, (10.0, 17.0), 0.0, behavior, sim, occ)
    assert held.a_o == pytest.approx(0.0)
    assert not held.interacting
    catching_up = ov_step(15.0, (10.0, 17.0), 0.0, behavior, sim, occ)
    assert catching_up.a_o == pytest.approx(2.33)          # clipped at the comfort limit


def test_aggressive_driver_accelerates_after_cut_in(cruise, sim, occ):
    response = ov_step(16.0, (10.0, 17.0), 0.0, OvBehavior.preset(AGGRESSIVE, cruise), sim, occ)
    assert response.interacting
    assert response.a_o > 0


def test_polite_driver_yields_after_cut_in(cruise, sim, occ):
    response = ov_step(16.0, (10.0, 17.0), 0.0, OvBehavior.preset(POLITE, cruise), sim, occ)
    assert response.interacting
    assert not response.fallback
    assert response.a_o < 0


def test_seeded_noise_is_reproducible(cruise, sim, occ, curve):
    state = WorldState(s_x=10.0, s_y=3.65, psi=0.0, v=17.0, v_o=16.0)

    def run(seed):
        ov = OvSimulator(OvBehavior.preset(POLITE, cruise), sim, occ, noise_curve=curve, seed=seed)
        return [ov.step(state, 0.1 * k).a_o for k in range(5)]

    assert run(3) == run(3)
    assert run(3) != run(4)
    quiet = OvSimulator(OvBehavior.preset(POLITE, cruise), sim, occ)
    assert quiet.step(state, 0.0).a_o != run(3)[0]


def test_invalid_weights(cruise, sim, occ):
    behavior = OvBehavior.preset(POLITE, cruise, effort_weight=0.0)
    with pytest.raises(ValueError, match="weights"):
        OvSimulator(behavior, sim, occ)


def test_profile_interpolates_and_holds():
    profile = SpeedProfile([0.0, 10.0], [16.0, 17.0])
    assert profile(5.0) == pytest.approx(16.5)
    assert profile(-1.0) == 16.0
    assert profile(99.0) == 17.0


def test_profile_clipped_to_speed_limit():
    assert SpeedProfile([0.0], [25.0], v_max=17.88)(0.0) == pytest.approx(17.88)


def test_load_profile_with_header(tmp_path):
    path = tmp_path / "profile.csv"
    path.write_text("time_s,speed_mps\n0,16.0\n10,16.4\n")
    assert load_speed_profile(path)(5.0) == pytest.approx(16.2)


@pytest.mark.parametrize("content, message", [
    ("", "empty"),
    ("0\n1\n", "two columns"),
    ("0,16\n0,17\n", "strictly increasing"),
    ("0,16\n1,-1\n", "negative"),
])
def test_bad_profiles(tmp_path, content, message):
    path = tmp_path / "profile.csv"
    path.write_text(content)
    with pytest.raises(ValueError, match=message):
        load_speed_profile(path)


def test_shipped_profile_loads():
    profile = load_speed_profile(Path(__file__).resolve().parents[1] / "scenarios" / "profiles" / "ov_speed_profile.csv")
    assert 15.5 <= profile(25.0) <= 17.0
