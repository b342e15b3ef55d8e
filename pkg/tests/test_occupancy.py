import math

import numpy as np
import pytest

from models.occupancy import (
    active_phase,
    anchor_x,
    boundary_for,
    constraint_margin,
    derive_params,
    line_for_phase,
    occupancy_contains,
    polygons_overlap,
    road_bounds,
)


def test_geometry_constants(occ):
    assert occ.r == pytest.approx(2.3808, abs=1e-3)
    assert occ.d_Y0 == pytest.approx(1.0989, abs=1e-3)
    assert occ.s_Yc == pytest.approx(2.1977, abs=1e-3)
    assert occ.s_Xb == pytest.approx(-4.2240, abs=1e-3)
    assert occ.s_Xd == pytest.approx(4.2240, abs=1e-3)


def test_zero_heading_margin_is_half_width():
    params = derive_params(psi_max=0.0)
    assert params.d_Y0 == pytest.approx(1.82 / 2)


def test_heading_limit_outside_range():
    with pytest.raises(ValueError, match="psi_max"):
        derive_params(psi_max=math.pi / 2)


def test_road_bounds(occ):
    lo, hi = road_bounds(occ)
    assert lo == pytest.approx(-0.7261, abs=1e-3)
    assert hi == pytest.approx(4.3761, abs=1e-3)


def test_phase_selection_ties_go_to_middle(occ):
    assert active_phase(occ.s_Xb - 1e-6, occ) == 1
    assert active_phase(occ.s_Xb, occ) == 2
    assert active_phase(0.0, occ) == 2
    assert active_phase(occ.s_Xd, occ) == 2
    assert active_phase(occ.s_Xd + 1e-6, occ) == 3


def test_lines_are_continuous_at_phase_switches(occ):
    s_Xa, s_Xe = anchor_x(17.0, 16.0, occ)
    p1 = line_for_phase(1, s_Xa, s_Xe, occ)
    p2 = line_for_phase(2, s_Xa, s_Xe, occ)
    p3 = line_for_phase(3, s_Xa, s_Xe, occ)
    assert p1(s_Xa) == pytest.approx(0.0)
    assert p1(occ.s_Xb) == pytest.approx(p2(occ.s_Xb))
    assert p3(occ.s_Xd) == pytest.approx(p2(occ.s_Xd))
    assert p3(s_Xe) == pytest.approx(0.0, abs=1e-12)
    assert p1.k > 0 > p3.k
    assert p2.k == 0.0


def test_anchors_follow_headway(occ):
    s_Xa, s_Xe = anchor_x(17.0, 16.0, occ)
    assert s_Xa == pytest.approx(-(6.08 + 17.0 * 1.5))
    assert s_Xe == pytest.approx(6.08 + 16.0 * 1.5)


def test_invalid_phase(occ):
    with pytest.raises(ValueError, match="phase"):
        line_for_phase(4, -30.0, 30.0, occ)


def test_margin_sign(occ):
    # alongside the OV in the overtaking lane the boundary sits at s_Yc
    assert constraint_margin(0.0, 3.65, 17.0, 16.0, occ) == pytest.approx(3.65 - occ.s_Yc)
    assert constraint_margin(0.0, 1.0, 17.0, 16.0, occ) < 0
    line = boundary_for(-20.0, 17.0, 16.0, occ)
    assert line.p == 1


def test_overlap_oracle(occ):
    assert polygons_overlap((0.0, 0.0), occ)
    assert not polygons_overlap((0.0, occ.s_Yc), occ)          # touching strips
    assert not polygons_overlap((2 * occ.r, 0.0), occ)         # touching discs
    assert polygons_overlap((2 * occ.r - 1e-3, 0.0), occ)
    assert not polygons_overlap((0.0, 3.65), occ)


def test_overlap_oracle_matches_grid_membership(occ):
    """Cross-check the closed-form test against a point grid of the two sets."""
    rng = np.random.default_rng(11)
    xs = np.linspace(-occ.r, occ.r, 61)
    ys = np.linspace(-occ.d_Y0, occ.d_Y0, 31)
    grid = [(x, y) for x in xs for y in ys if occupancy_contains((x, y), (0.0, 0.0), occ)]
    for _ in range(60):
        centre = (rng.uniform(-6, 6), rng.uniform(-3, 3))
        closed_form = polygons_overlap(centre, occ)
        shared = any(occupancy_contains(p, centre, occ) for p in grid)
        if shared:
            # a shared grid point means the closed sets meet; interiors can only touch at the margin
            dist = math.hypot(*centre)
            assert closed_form or abs(dist - 2 * occ.r) < 0.1 or abs(abs(centre[1]) - occ.s_Yc) < 0.1
        else:
            dist = math.hypot(*centre)
            assert not closed_form or abs(dist - 2 * occ.r) < 0.2 or abs(abs(centre[1]) - occ.s_Yc) < 0.2
