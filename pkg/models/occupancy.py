"""Arc-polygon occupancy, the phase-selected collision boundary and the overlap oracle.

The arc-polygon of a vehicle is the disc of radius r around its centre cut by
the horizontal strip |y - y_c| <= d_Y0. It contains the vehicle rectangle for
every heading up to psi_max without rotating.
"""
import math
from dataclasses import dataclass

from config.settings import (
    HEADING_LIMIT,
    LANE_WIDTH,
    MIN_HEADWAY_TIME,
    STANDSTILL_GAP,
    VEHICLE_LENGTH,
    VEHICLE_WIDTH,
)


@dataclass(frozen=True)
class OccupancyParams:
    L_v: float
    W_v: float
    r: float
    theta: float
    psi_max: float
    d_Y0: float
    s_Yc: float
    s_Xb: float
    s_Xd: float
    d_X0: float
    t_min: float
    W_l: float


@dataclass(frozen=True)
class BoundaryLine:
    p: int
    k: float
    b: float

    def __call__(self, s_x: float) -> float:
        return self.k * s_x + self.b


def derive_params(
    L_v: float = VEHICLE_LENGTH,
    W_v: float = VEHICLE_WIDTH,
    psi_max: float = HEADING_LIMIT,
    d_X0: float = STANDSTILL_GAP,
    t_min: float = MIN_HEADWAY_TIME,
    W_l: float = LANE_WIDTH,
) -> OccupancyParams:
    if L_v <= 0 or W_v <= 0:
        raise ValueError(f"vehicle dimensions must be positive, got L_v={L_v}, W_v={W_v}")
    theta = math.atan(W_v / L_v)
    if psi_max < 0 or psi_max >= math.pi / 2 - theta:
        raise ValueError(f"psi_max={psi_max} outside [0, pi/2 - theta) with theta={theta:.4f}")

    r = math.sqrt(L_v ** 2 + W_v ** 2) / 2
    d_Y0 = r * math.sin(theta + psi_max)
    s_Yc = 2 * d_Y0
    if s_Yc >= 2 * r:
        raise ValueError(f"lateral separation {s_Yc:.4f} m is not below the diagonal {2 * r:.4f} m")
    s_Xb = -math.sqrt((2 * r) ** 2 - s_Yc ** 2)
    return OccupancyParams(
        L_v=L_v, W_v=W_v, r=r, theta=theta, psi_max=psi_max,
        d_Y0=d_Y0, s_Yc=s_Yc, s_Xb=s_Xb, s_Xd=-s_Xb,
        d_X0=d_X0, t_min=t_min, W_l=W_l,
    )


def anchor_x(v_ev: float, v_ov: float, params: OccupancyParams) -> tuple[float, float]:
    """Far anchors of the boundary: behind the OV at the EV's minimum headway, ahead at the OV's."""
    s_Xa = -(params.d_X0 + v_ev * params.t_min)
    s_Xe = params.d_X0 + v_ov * params.t_min
    return s_Xa, s_Xe


def line_for_phase(p: int, s_Xa: float, s_Xe: float, params: OccupancyParams) -> BoundaryLine:
    # far anchors sit on the initial-lane centreline (s_Y = 0)
    s_Yc = params.s_Yc
    if p == 1:
        run = params.s_Xb - s_Xa
        if run <= 0:
            raise ValueError(f"anchor s_Xa={s_Xa:.4f} is not behind s_Xb={params.s_Xb:.4f}")
        k = s_Yc / run
        return BoundaryLine(p=1, k=k, b=-s_Xa * k)
    if p == 2:
        return BoundaryLine(p=2, k=0.0, b=s_Yc)
    if p == 3:
        run = s_Xe - params.s_Xd
        if run <= 0:
            raise ValueError(f"anchor s_Xe={s_Xe:.4f} is not ahead of s_Xd={params.s_Xd:.4f}")
        k = -s_Yc / run
        return BoundaryLine(p=3, k=k, b=s_Yc - params.s_Xd * k)
    raise ValueError(f"phase must be 1, 2 or 3, got {p}")


def active_phase(s_x_pred: float, params: OccupancyParams) -> int:
    if s_x_pred < params.s_Xb:
        return 1
    if s_x_pred > params.s_Xd:
        return 3
    return 2


def boundary_for(s_x: float, v_ev: float, v_ov: float, params: OccupancyParams) -> BoundaryLine:
    """Line of the phase active at s_x, anchored at the given speeds."""
    s_Xa, s_Xe = anchor_x(v_ev, v_ov, params)
    return line_for_phase(active_phase(s_x, params), s_Xa, s_Xe, params)


def constraint_margin(s_x: float, s_y: float, v_ev: float, v_ov: float, params: OccupancyParams) -> float:
    """Signed lateral clearance above the active boundary line (negative = violated)."""
    return s_y - boundary_for(s_x, v_ev, v_ov, params)(s_x)


def road_bounds(params: OccupancyParams) -> tuple[float, float]:
    return -params.W_l / 2 + params.d_Y0, 3 * params.W_l / 2 - params.d_Y0


def occupancy_contains(point, centre, params: OccupancyParams) -> bool:
    """Point membership in the closed arc-polygon centred at ``centre``."""
    dx = point[0] - centre[0]
    dy = point[1] - centre[1]
    return abs(dy) <= params.d_Y0 and dx * dx + dy * dy <= params.r * params.r


def polygons_overlap(ev_pose, params: OccupancyParams, ov_pose=(0.0, 0.0)) -> bool:
    """True iff the interiors of the EV and OV arc-polygons intersect.

    With equal radii the strips intersect iff |dy| < 2 d_Y0; inside the shared
    strip the sum of both disc half-chords peaks at the mid-height, so the
    discs' chords meet iff the centre distance is below 2r.
    """
    dx = ev_pose[0] - ov_pose[0]
    dy = ev_pose[1] - ov_pose[1]
    if abs(dy) >= params.s_Yc:
        return False
    return dx * dx + dy * dy < (2 * params.r) ** 2
