"""
Tests for the ToF sensor model: zone arithmetic, zone rays, sensing, fusion
and coverage.
"""

import math

import numpy as np
import pytest

from app.errors import DomainError, GeometryMismatchError, TickMismatchError
from app.scene_geometry import Obstacle, Scene, Vec3
from app.tof_model import (
    DIAGONAL_FOV_DEG,
    DepthFrame,
    DualRig,
    NoiseModel,
    SensorId,
    SensorPose,
    coverage_check,
    coverage_report,
    fuse,
    min_detectable_size,
    sense,
    sense_rig,
    zone_directions,
    zone_linear_size,
    zone_ray,
)

ORIGIN_POSE = SensorPose(Vec3(0.0, 0.0, 0.0), pitch_deg=0.0)
WALL = Scene((Obstacle("wall", Vec3(1.0, -5.0, -5.0), Vec3(1.1, 5.0, 5.0)),), ground_z=None)
EMPTY = Scene((), ground_z=None)


def vertical_angle(direction) -> float:
    return math.degrees(math.atan2(direction[2], direction[0]))


def test_zone_linear_size_anchor():
    assert zone_linear_size(1.0, 60, 8) == pytest.approx(0.13111, abs=1e-4)
    assert zone_linear_size(1.0, 60, 8) == pytest.approx(2 * math.tan(math.radians(3.75)), rel=1e-12)
    assert zone_linear_size(0.0, 60, 8) == 0.0


def test_zone_linear_size_is_linear_in_distance():
    assert zone_linear_size(2.0, 60, 8) == 2 * zone_linear_size(1.0, 60, 8)
    sizes = [zone_linear_size(d, 60, 8) for d in np.linspace(0.1, 4.0, 40)]
    assert all(b > a for a, b in zip(sizes, sizes[1:]))


def test_min_detectable_size_matches_four_centimeters():
    s = min_detectable_size(1.0, 60, 8, 0.30)
    assert 0.038 <= s <= 0.042
    assert abs(s - 0.04) < 0.002
    assert min_detectable_size(0.5, 60, 8, 0.30) == pytest.approx(0.01967, abs=1e-4)
    assert min_detectable_size(1.0, 60, 8, 1.0) == zone_linear_size(1.0, 60, 8)


def test_zone_math_domain_errors():
    with pytest.raises(DomainError):
        zone_linear_size(-1.0, 60, 8)
    with pytest.raises(DomainError):
        zone_linear_size(1.0, 60, 0)
    with pytest.raises(DomainError):
        zone_linear_size(1.0, 180, 8)
    with pytest.raises(DomainError):
        min_detectable_size(1.0, 60, 8, 0.0)


def test_diagonal_fov_is_recorded_not_used():
    assert DIAGONAL_FOV_DEG == 65.0
    assert ORIGIN_POSE.fov_deg == 60.0


def test_zone_rays_are_symmetric_about_boresight():
    d33 = zone_ray(ORIGIN_POSE, 3, 3).direction.as_array()
    d44 = zone_ray(ORIGIN_POSE, 4, 4).direction.as_array()
    np.testing.assert_allclose(d33, d44 * [1, -1, -1], atol=1e-12)
    assert vertical_angle(d33) == pytest.approx(3.75)
    assert vertical_angle(d44) == pytest.approx(-3.75)


def test_row_zero_elevation_and_left_column():
    d = zone_ray(ORIGIN_POSE, 0, 0).direction.as_array()
    assert vertical_angle(d) == pytest.approx(26.25)
    assert d[1] > 0  # column 0 looks to the wearer's left


def test_pitch_moves_center_rows_down():
    pose = SensorPose(Vec3(0, 0, 0), pitch_deg=30.0)
    up = vertical_angle(zone_ray(pose, 3, 3).direction.as_array())
    down = vertical_angle(zone_ray(pose, 4, 3).direction.as_array())
    assert (up + down) / 2 == pytest.approx(-30.0, abs=1e-9)


def test_zone_directions_are_unit_and_zone_ray_checks_bounds():
    d = zone_directions(DualRig.default().lower)
    assert d.shape == (8, 8, 3)
    np.testing.assert_allclose(np.linalg.norm(d, axis=-1), 1.0, atol=1e-12)
    with pytest.raises(IndexError):
        zone_ray(ORIGIN_POSE, 8, 0)


def test_sense_empty_scene_is_all_sentinel():
    frame = sense(EMPTY, ORIGIN_POSE, 0, NoiseModel.off())
    assert frame.shape == (8, 8)
    assert np.all(frame.zones == 4000.0)
    assert frame.valid.all()


def test_sense_wall_matches_slant_range_oracle():
    frame = sense(WALL, ORIGIN_POSE, 0, NoiseModel.off())
    cos_off_axis = zone_directions(ORIGIN_POSE)[..., 0]
    np.testing.assert_allclose(frame.zones, 1000.0 / cos_off_axis, atol=1.0)
    assert frame.zones.min() >= 1000.0 - 1e-9
    assert frame.zones.max() <= 1000.0 / cos_off_axis.min() + 1e-9
    assert frame.zones[3, 3] == pytest.approx(frame.zones[4, 4])
    assert frame.zones[0, 0] == frame.zones.max()


def test_sense_is_deterministic_per_seed():
    noise = NoiseModel(sigma_mm=10.0, seed=42)
    a = sense(WALL, ORIGIN_POSE, 7, noise)
    b = sense(WALL, ORIGIN_POSE, 7, noise)
    np.testing.assert_array_equal(a.zones, b.zones)
    np.testing.assert_array_equal(a.valid, b.valid)
    c = sense(WALL, ORIGIN_POSE, 7, NoiseModel(sigma_mm=10.0, seed=43))
    assert not np.array_equal(a.zones, c.zones)
    clean = sense(WALL, ORIGIN_POSE, 7, NoiseModel.off())
    np.testing.assert_array_equal(clean.zones, sense(WALL, ORIGIN_POSE, 7, NoiseModel.off()).zones)


def test_noisy_frames_respect_frame_invariants():
    noise = NoiseModel(sigma_mm=50.0, dropout_prob=0.2, spike_prob=0.1, seed=1)
    for tick in range(20):
        frame = sense(WALL, ORIGIN_POSE, tick, noise)
        assert np.all(frame.zones[~frame.valid] == 4000.0)
        valid = frame.zones[frame.valid]
        assert np.all((valid > 0) & (valid <= 4000.0))


def test_zone_noise_is_keyed_by_zone_not_frame_layout():
    noise = NoiseModel(sigma_mm=10.0, dropout_prob=0.3, spike_prob=0.3, seed=9)
    small = SensorPose(Vec3(0.0, 0.0, 0.0), pitch_deg=0.0, zones_per_side=4)
    for tick in range(5):
        big_frame = sense(EMPTY, ORIGIN_POSE, tick, noise)
        small_frame = sense(EMPTY, small, tick, noise)
        np.testing.assert_array_equal(big_frame.valid[:4, :4], small_frame.valid)
        np.testing.assert_array_equal(big_frame.zones[:4, :4], small_frame.zones)
    lower = sense(EMPTY, ORIGIN_POSE, 0, noise, SensorId.LOWER)
    assert not np.array_equal(lower.valid, sense(EMPTY, ORIGIN_POSE, 0, noise).valid)


def test_noise_model_validates():
    with pytest.raises(ValueError):
        NoiseModel(sigma_mm=-1)
    with pytest.raises(ValueError):
        NoiseModel(dropout_prob=1.5)
    assert NoiseModel.off().is_off


def test_default_rig_geometry():
    rig = DualRig.default()
    assert rig.tilt_between_deg == pytest.approx(30.0)
    assert rig.combined_span_deg == pytest.approx(90.0)


def test_fuse_all_sentinel_gives_twelve_rows():
    rig = DualRig.default()
    upper, lower = sense_rig(EMPTY, rig, 0, NoiseModel.off())
    grid = fuse(upper, lower, rig)
    assert grid.shape == (12, 8)
    assert np.all(grid.cells == 4000.0)
    np.testing.assert_allclose(grid.row_elevation_deg, 18.75 - 7.5 * np.arange(12))


def make_frame(sensor, zones, tick=0, valid=None):
    zones = np.asarray(zones, dtype=float)
    return DepthFrame(sensor, tick, zones, np.ones(zones.shape, bool) if valid is None else valid)


def test_fuse_overlap_takes_minimum_and_copies_the_rest():
    rig = DualRig.default()
    up = np.full((8, 8), 3000.0)
    up[0] = 1500.0
    up[4] = 900.0
    lo = np.full((8, 8), 3500.0)
    lo[0] = 1100.0
    grid = fuse(make_frame(SensorId.UPPER, up), make_frame(SensorId.LOWER, lo), rig)
    np.testing.assert_array_equal(grid.cells[0], up[0])
    np.testing.assert_array_equal(grid.cells[1:4], up[1:4])
    np.testing.assert_array_equal(grid.cells[4], np.full(8, 900.0))
    np.testing.assert_array_equal(grid.cells[8:], lo[4:])


def test_fuse_min_rule_on_random_frames():
    rig = DualRig.default()
    rng = np.random.default_rng(0)
    for _ in range(50):
        up = rng.uniform(100, 4000, (8, 8))
        lo = rng.uniform(100, 4000, (8, 8))
        up_valid = rng.random((8, 8)) > 0.1
        lo_valid = rng.random((8, 8)) > 0.1
        grid = fuse(make_frame(SensorId.UPPER, up, valid=up_valid), make_frame(SensorId.LOWER, lo, valid=lo_valid), rig)
        for k in range(4):
            both = up_valid[4 + k] & lo_valid[k]
            assert np.all(grid.cells[4 + k][both] <= up[4 + k][both])
            assert np.all(grid.cells[4 + k][both] <= lo[k][both])
            none = ~up_valid[4 + k] & ~lo_valid[k]
            assert np.all(~grid.valid[4 + k][none])
            assert np.all(grid.cells[4 + k][none] == 4000.0)


def test_fuse_rejects_mismatches():
    rig = DualRig.default()
    up = make_frame(SensorId.UPPER, np.full((8, 8), 1000.0), tick=1)
    lo = make_frame(SensorId.LOWER, np.full((8, 8), 1000.0), tick=2)
    with pytest.raises(TickMismatchError):
        fuse(up, lo, rig)
    skewed = DualRig(rig.upper, SensorPose(rig.lower.mount_point, pitch_deg=40.0))
    with pytest.raises(GeometryMismatchError):
        fuse(up, make_frame(SensorId.LOWER, np.full((8, 8), 1000.0), tick=1), skewed)


def test_default_rig_reaches_knee_and_head():
    report = coverage_report(DualRig.default(), 1.70, 0.5)
    assert report.lowest_hit_z <= 0.30
    assert report.highest_hit_z >= 1.60
    assert report.passed


def test_coverage_collapses_toward_mount_and_is_symmetric():
    low, high = coverage_check(DualRig.default(), 1.70, 1e-6)
    assert low == pytest.approx(1.40, abs=1e-4) and high == pytest.approx(1.40, abs=1e-4)
    mount = Vec3(0, 0, 1.2)
    rig = DualRig(SensorPose(mount, pitch_deg=-15.0), SensorPose(mount, pitch_deg=15.0))
    low, high = coverage_check(rig, 1.70, 0.5)
    assert 1.2 - low == pytest.approx(high - 1.2)
    with pytest.raises(DomainError):
        coverage_check(rig, 1.70, 0.0)


def test_placed_rig_turns_with_heading():
    pose = DualRig.default().upper.placed(Vec3(1.0, 2.0, 0.0), 90.0)
    assert pose.mount_point == Vec3(1.0, 2.0, 1.40)
    boresight = zone_directions(pose)[3:5, 3:5].mean(axis=(0, 1))
    assert boresight[1] > 0.9 and abs(boresight[0]) < 1e-9


if __name__ == "__main__":
    import sys

    print("=" * 60)
    print("ToF model tests")
    print("=" * 60)
    failed = 0
    for test_name, fn in sorted(globals().items()):
        if test_name.startswith("test_") and callable(fn):
            try:
                fn()
                print(f"  ✅ {test_name}")
            except Exception as e:
                failed += 1
                print(f"  ❌ {test_name}: {e}")
    print("=" * 60)
    sys.exit(1 if failed else 0)
