"""Scenario configuration: dataclass sections loaded from TOML, with dotted-key overrides for sweeps."""
import math
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path

from config.settings import (
    ACCEL_MAX,
    ACCEL_MIN,
    COUPLING_BUFFER,
    DEFAULT_BETA,
    EV_SPEED_LIMIT,
    HEADING_LIMIT,
    HORIZON,
    LANE_WIDTH,
    LATERAL_Q_O,
    LATERAL_Q_Y,
    LONGITUDINAL_P_X,
    LONGITUDINAL_Q_X,
    MIN_HEADWAY_TIME,
    MPEC_NODE_BUDGET,
    OV_SPEED_LIMIT,
    OV_SPEED_MIN,
    SAMPLE_TIME,
    SIM_TIME,
    STANDSTILL_GAP,
    STEER_LIMIT,
    TARGET_HEADWAY_TIME,
    VEHICLE_LENGTH,
    VEHICLE_WIDTH,
    WHEELBASE,
)


@dataclass
class SimSection:
    dt: float = SAMPLE_TIME
    T_total: float = SIM_TIME
    N: int = HORIZON


@dataclass
class VehicleSection:
    L_v: float = VEHICLE_LENGTH
    W_v: float = VEHICLE_WIDTH
    wheelbase: float = WHEELBASE
    W_l: float = LANE_WIDTH
    d_X0: float = STANDSTILL_GAP
    t_min: float = MIN_HEADWAY_TIME
    t_target: float = TARGET_HEADWAY_TIME


@dataclass
class LimitsSection:
    v_max: float = EV_SPEED_LIMIT
    v_o_max: float = OV_SPEED_LIMIT
    v_o_min: float = OV_SPEED_MIN
    a_min: float = ACCEL_MIN
    a_max: float = ACCEL_MAX
    steer_deg: float = math.degrees(STEER_LIMIT)
    heading_deg: float = math.degrees(HEADING_LIMIT)


@dataclass
class LateralSection:
    Q_y: list = field(default_factory=lambda: list(LATERAL_Q_Y))
    Q_o: list = field(default_factory=lambda: list(LATERAL_Q_O))
    coupling_buffer: float = COUPLING_BUFFER
    node_budget: int = MPEC_NODE_BUDGET
    certify: bool = True


@dataclass
class LongitudinalSection:
    P_x: float = LONGITUDINAL_P_X
    Q_x: list = field(default_factory=lambda: list(LONGITUDINAL_Q_X))
    beta: float = DEFAULT_BETA


@dataclass
class OvSection:
    mode: str = "polite"
    profile: str = ""              # CSV path; empty = constant initial speed
    pre_react: bool = False
    noise: bool = False
    headway_weight: float = -1.0   # negative = preset value
    speed_weight: float = -1.0
    effort_weight: float = -1.0


@dataclass
class VarianceSection:
    curve: str = ""                # JSON path; empty = shipped default curve


@dataclass
class InitialSection:
    s_x: float = -40.0            # behind s_Xa even at the EV speed limit
    s_y: float = 0.0
    psi: float = 0.0
    v: float = 16.0
    v_o: float = 16.0


@dataclass
class ScenarioConfig:
    name: str = "default"
    seed: int = 0
    sim: SimSection = field(default_factory=SimSection)
    vehicle: VehicleSection = field(default_factory=VehicleSection)
    limits: LimitsSection = field(default_factory=LimitsSection)
    lateral: LateralSection = field(default_factory=LateralSection)
    longitudinal: LongitudinalSection = field(default_factory=LongitudinalSection)
    ov: OvSection = field(default_factory=OvSection)
    variance: VarianceSection = field(default_factory=VarianceSection)
    initial: InitialSection = field(default_factory=InitialSection)
    base_dir: str = "."            # relative file paths resolve against the scenario file

    def resolve(self, path: str) -> Path | None:
        if not path:
            return None
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc.pop("base_dir")
        return doc

    def validate(self):
        if self.sim.dt <= 0:
            raise ValueError(f"sim.dt must be positive, got {self.sim.dt}")
        if self.sim.N < 1:
            raise ValueError(f"sim.N must be at least 1, got {self.sim.N}")
        if self.sim.N * self.sim.dt > self.sim.T_total + 1e-12:
            raise ValueError(f"horizon {self.sim.N}x{self.sim.dt}s exceeds the simulated time {self.sim.T_total}s")
        if not self.limits.v_max > self.limits.v_o_max:
            raise ValueError(f"EV speed limit {self.limits.v_max} must exceed the OV limit {self.limits.v_o_max}")
        if not 0.0 < self.longitudinal.beta < 0.5:
            raise ValueError(f"longitudinal.beta must lie in (0, 0.5), got {self.longitudinal.beta}")
        if self.ov.mode not in ("non_interactive", "polite", "aggressive"):
            raise ValueError(f"unknown ov.mode {self.ov.mode!r}")
        if self.initial.v < 0 or self.initial.v_o < 0:
            raise ValueError("initial speeds must be non-negative")
        return self


def _merge(section, values: dict, where: str):
    known = {f.name: f for f in fields(section)}
    updates = {}
    for key, value in values.items():
        if key not in known:
            raise ValueError(f"unknown key {where}.{key}")
        current = getattr(section, key)
        if is_dataclass(current):
            if not isinstance(value, dict):
                raise ValueError(f"{where}.{key} must be a table")
            updates[key] = _merge(current, value, f"{where}.{key}")
        elif isinstance(current, bool):
            updates[key] = bool(value)
        elif isinstance(current, float):
            updates[key] = float(value)
        elif isinstance(current, int):
            updates[key] = int(value)
        elif isinstance(current, list):
            updates[key] = [float(v) for v in value]
        else:
            updates[key] = value
    return replace(section, **updates)


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    with open(path, "rb") as f:
        doc = tomllib.load(f)
    config = _merge(ScenarioConfig(name=path.stem), doc, "scenario")
    config.base_dir = str(path.parent)
    return config.validate()


def config_from_dict(doc: dict) -> ScenarioConfig:
    """Rebuild a config from its ``to_dict`` echo (run summaries)."""
    return _merge(ScenarioConfig(), doc, "scenario").validate()


def apply_overrides(config: ScenarioConfig, overrides: dict) -> ScenarioConfig:
    """Copy of ``config`` with dotted keys replaced, e.g. {"longitudinal.P_x": 2.0}."""
    nested: dict = {}
    for dotted, value in overrides.items():
        node = nested
        parts = dotted.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return _merge(config, nested, "scenario").validate()
