import numpy as np
import pandas as pd
import pytest

from dataset.tracks import ingest_tracks
from dataset.variance import BinStats, default_curve, fit_bins, fit_variance_curve, load_curve, save_curve

CENTRES = np.round(np.arange(-0.6, 3.0001, 0.1), 10)


def test_default_curve_shape(curve):
    assert curve(0.5) == pytest.approx(0.49, abs=1e-9)
    assert curve.left_plateau == pytest.approx(0.04, abs=1e-6)
    assert curve.right_plateau == pytest.approx(0.04 + 0.45 * np.exp(-5.0), rel=1e-9)
    grid = np.arange(-0.6, 3.0001, 0.01)
    assert grid[int(np.argmax(curve(grid)))] == pytest.approx(0.5, abs=1e-9)


def test_lookup_is_held_outside_band(curve):
    assert curve(-5.0) == curve(-0.6)
    assert curve(40.0) == curve(3.0)
    assert curve(float("inf")) == curve(3.0)
    values = curve(np.array([-1.0, 0.5, 10.0]))
    assert values.shape == (3,)
    assert np.all(values >= 0)


def _synthetic_samples(truth, per_bin, seed=0):
    rng = np.random.default_rng(seed)
    frames = []
    for c in CENTRES:
        t_x = c + rng.uniform(-0.04, 0.04, per_bin)
        a_o = rng.standard_normal(per_bin) * np.sqrt(truth(c))
        frames.append(pd.DataFrame({"t_x": t_x, "a_o": a_o}))
    return pd.concat(frames, ignore_index=True)


def _write_track_file(path, truth, pairs=100, seed=0):
    """highD-style file: each pair sweeps the band once, 100 frames per bin, OV accelerations drawn from ``truth``."""
    rng = np.random.default_rng(seed)
    steps = 3700
    v_ov = 20.0
    # frames sit half a step inside the bins so rounding never moves a sample across an edge
    t_x = -0.65 + 0.001 * (np.arange(steps) + 0.5)
    std = np.sqrt(truth(np.round(t_x / 0.1) * 0.1))

    i = np.tile(np.arange(steps), pairs)
    pair = np.repeat(np.arange(pairs), steps)
    frame = pair * steps + i
    x_ov = 100.0 + 0.8 * i
    ov = pd.DataFrame({
        "frame": frame, "id": 2 * pair + 2, "x": x_ov, "laneId": 3,
        "xVelocity": v_ov, "xAcceleration": rng.standard_normal(len(i)) * std[i],
    })
    ev = pd.DataFrame({
        "frame": frame, "id": 2 * pair + 1, "x": x_ov + t_x[i] * v_ov, "laneId": 2,
        "xVelocity": v_ov + 5.0, "xAcceleration": 0.0,
    })
    pd.concat([ev, ov]).sort_values("frame", kind="stable").to_csv(path, index=False)
    return path


@pytest.mark.slow
def test_fit_recovers_known_curve(curve):
    samples = _synthetic_samples(curve, per_bin=10_000)
    bins = fit_bins(samples)
    assert len(bins) == 37
    assert np.median([b.r_squared for b in bins]) >= 0.95

    fitted = fit_variance_curve(bins)
    np.testing.assert_allclose(fitted(CENTRES), curve(CENTRES), rtol=0.05)
    assert fitted.rate == pytest.approx(2.0, rel=0.3)
    assert fitted.fit_info["r2_right"] >= 0.9


@pytest.mark.slow
def test_track_file_round_trip(tmp_path, curve):
    path = _write_track_file(tmp_path / "tracks.csv", curve)
    samples = ingest_tracks(path, window=(-0.65, 3.05))
    assert samples[["overtaker", "overtaken"]].drop_duplicates().shape[0] == 100

    bins = fit_bins(samples)
    assert [b.t_x for b in bins] == pytest.approx(list(CENTRES))
    assert {b.count for b in bins} == {10_000}
    assert np.median([b.r_squared for b in bins]) >= 0.95

    fitted = fit_variance_curve(bins)
    np.testing.assert_allclose(fitted(CENTRES), curve(CENTRES), rtol=0.05)


def test_fit_bins_drops_sparse_bins():
    rng = np.random.default_rng(1)
    dense = pd.DataFrame({"t_x": np.full(60, 1.0), "a_o": rng.standard_normal(60)})
    sparse = pd.DataFrame({"t_x": np.full(10, 2.0), "a_o": rng.standard_normal(10)})
    bins = fit_bins(pd.concat([dense, sparse]))
    assert [b.t_x for b in bins] == [1.0]
    assert bins[0].count == 60


def test_fit_bins_all_sparse():
    with pytest.raises(ValueError, match="fewer than"):
        fit_bins(np.array([[0.5, 0.1], [0.6, 0.2]]))


def test_constant_bin_is_degenerate():
    bins = fit_bins(pd.DataFrame({"t_x": np.full(50, 0.3), "a_o": np.zeros(50)}))
    assert bins[0].degenerate
    assert bins[0].variance == 0.0


def test_insufficient_coverage():
    bins = [BinStats(t_x=t, count=100, mean=0.0, variance=0.1, r_squared=1.0) for t in (0.5, 1.0, 1.5, 2.0, 2.5)]
    with pytest.raises(ValueError, match="insufficient coverage"):
        fit_variance_curve(bins)


def test_save_and_load(tmp_path, curve):
    path = save_curve(curve, tmp_path / "out" / "curve.json")
    loaded = load_curve(path)
    grid = np.linspace(-1.0, 4.0, 21)
    np.testing.assert_allclose(loaded(grid), curve(grid))
    assert loaded.fit_info == {"source": "default"}


def test_load_incomplete_document(tmp_path):
    path = tmp_path / "curve.json"
    path.write_text('{"knots": [0, 1]}')
    with pytest.raises(ValueError, match="lacks"):
        load_curve(path)


def test_default_curve_is_fresh_each_call():
    assert default_curve() is not default_curve()
