import numpy as np
import pandas as pd
import pytest

from config.scenario import ScenarioConfig
from controller import SharedSequences
from dataset.variance import default_curve
from models.occupancy import derive_params
from models.vehicle import SimParams, WorldState


@pytest.fixture
def sim():
    return SimParams()


@pytest.fixture
def occ():
    return derive_params()


@pytest.fixture
def scenario():
    return ScenarioConfig()


@pytest.fixture
def short_scenario():
    """Closed-loop config short enough for unit tests."""
    config = ScenarioConfig(name="short")
    config.sim.T_total = 3.0
    config.sim.N = 10
    return config.validate()


@pytest.fixture
def curve():
    return default_curve()


@pytest.fixture
def behind_state():
    return WorldState(s_x=-50.0, s_y=0.0, psi=0.0, v=17.0, v_o=16.0)


@pytest.fixture
def shared_for():
    def make(state, N=20):
        return SharedSequences.bootstrap(state, N)
    return make


@pytest.fixture
def overtaking_tracks():
    """Two vehicles in adjacent lanes; vehicle 1 passes vehicle 2 which decelerates slightly."""
    frames = np.arange(0, 200)
    dt = 0.04
    rows = []
    for f in frames:
        t = f * dt
        rows.append({"frame": f, "id": 1, "x": 10.0 + 30.0 * t, "laneId": 2, "xVelocity": 30.0, "xAcceleration": 0.0})
        rows.append({"frame": f, "id": 2, "x": 40.0 + 25.0 * t, "laneId": 3, "xVelocity": 25.0, "xAcceleration": -0.2})
    return pd.DataFrame(rows)
