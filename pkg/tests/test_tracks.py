import numpy as np
import pytest

from dataset.tracks import TrackSchema, headway_time, ingest_tracks


def test_headway_time_scalar_and_array():
    assert headway_time(32.0, 16.0) == pytest.approx(2.0)
    assert headway_time(-8.0, 16.0) == pytest.approx(-0.5)
    np.testing.assert_allclose(headway_time([16.0, 0.0], [16.0, 8.0]), [1.0, 0.0])


def test_headway_time_of_stopped_vehicle_is_infinite():
    assert headway_time(5.0, 0.0) == float("inf")
    assert np.isinf(headway_time([5.0, 1.0], [0.05, 10.0])[0])


def test_ingest_overtaking_pair(tmp_path, overtaking_tracks):
    path = tmp_path / "tracks.csv"
    overtaking_tracks.to_csv(path, index=False)
    samples = ingest_tracks(path)
    assert list(samples.columns) == ["t_x", "a_o", "overtaker", "overtaken", "frame"]
    assert set(samples["overtaker"]) == {1}
    assert set(samples["overtaken"]) == {2}
    np.testing.assert_allclose(samples["a_o"], -0.2)
    assert samples["t_x"].between(-0.6, 3.0).all()
    # gap = -30 + 5t, so samples start once the overtaker is within 15 m
    assert 120 <= len(samples) <= 130


def test_opposite_direction_is_folded(tmp_path, overtaking_tracks):
    mirrored = overtaking_tracks.assign(
        x=-overtaking_tracks["x"],
        xVelocity=-overtaking_tracks["xVelocity"],
        xAcceleration=-overtaking_tracks["xAcceleration"],
    )
    path = tmp_path / "tracks.csv"
    mirrored.to_csv(path, index=False)
    samples = ingest_tracks(path)
    np.testing.assert_allclose(samples["a_o"], -0.2)
    assert set(samples["overtaker"]) == {1}


def test_custom_schema(tmp_path, overtaking_tracks):
    path = tmp_path / "tracks.csv"
    overtaking_tracks.rename(columns={"laneId": "lane"}).to_csv(path, index=False)
    samples = ingest_tracks(path, schema=TrackSchema(lane="lane"))
    assert not samples.empty


def test_missing_columns(tmp_path, overtaking_tracks):
    path = tmp_path / "tracks.csv"
    overtaking_tracks.drop(columns=["laneId"]).to_csv(path, index=False)
    with pytest.raises(ValueError, match="missing columns"):
        ingest_tracks(path)


def test_malformed_rows_are_skipped(tmp_path, overtaking_tracks):
    df = overtaking_tracks.astype({"x": object})
    df.loc[0, "x"] = "n/a"
    path = tmp_path / "tracks.csv"
    df.to_csv(path, index=False)
    assert not ingest_tracks(path).empty


def test_same_lane_vehicles_yield_nothing(tmp_path, overtaking_tracks):
    path = tmp_path / "tracks.csv"
    overtaking_tracks.assign(laneId=2).to_csv(path, index=False)
    with pytest.raises(ValueError, match="adjacent lanes"):
        ingest_tracks(path)
