"""
ToF model module for the GuideTouch toolkit.
Simulates the two vertically tilted 8x8 multizone sensors, the zone-size and
detectability arithmetic, and fusion of both frames into one grid spanning the
combined vertical field of view.

Angles are degrees. Positive pitch tilts a sensor downward. Zone row 0 is the
highest-elevation row; zone column 0 is the wearer's leftmost column (+y).
"""

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from app.errors import DomainError, GeometryMismatchError, TickMismatchError
from app.scene_geometry import Ray, Scene, Vec3, cast_many
from app.utils.logger import get_logger

logger = get_logger("ToFModel")

# Recorded from the sensor datasheet figure; geometry uses the per-axis FoV.
DIAGONAL_FOV_DEG = 65.0
DEFAULT_FOV_DEG = 60.0
DEFAULT_ZONES = 8
DEFAULT_MAX_RANGE_M = 4.0
DEFAULT_FILL_FRACTION = 0.30

# Knee and head heights the rig must reach at 0.5 m for a 1.70 m user
REFERENCE_USER_HEIGHT_M = 1.70
KNEE_HEIGHT_M = 0.30
HEAD_HEIGHT_M = 1.60

ALIGN_TOL_DEG = 1e-6


class SensorId(str, Enum):
    UPPER = "upper"
    LOWER = "lower"


def zone_linear_size(d: float, fov_deg: float, n: int) -> float:
    """
    Linear size of one sensor zone at distance d.

    s = 2 d tan(FoV / N / 2), with the angle in degrees.

    Args:
        d: Distance to the obstacle (meters)
        fov_deg: Per-axis field of view (degrees)
        n: Zones per side

    Returns:
        Zone side length in meters
    """
    if d < 0:
        raise DomainError(f"distance must be non-negative, got {d}")
    if n < 1:
        raise DomainError(f"zone count must be >= 1, got {n}")
    if not 0 < fov_deg < 180:
        raise DomainError(f"fov_deg must be in (0, 180), got {fov_deg}")
    if fov_deg / n >= 180:
        raise DomainError("per-zone angle must be below 180 degrees")
    return 2.0 * d * math.tan(0.5 * (fov_deg / n) * math.pi / 180.0)


def min_detectable_size(d: float, fov_deg: float, n: int,
                        fill_fraction: float = DEFAULT_FILL_FRACTION) -> float:
    """Smallest detectable obstacle: fill_fraction of the linear zone size."""
    if not 0 < fill_fraction <= 1:
        raise DomainError(f"fill_fraction must be in (0, 1], got {fill_fraction}")
    return fill_fraction * zone_linear_size(d, fov_deg, n)


@dataclass(frozen=True)
class SensorPose:
    """Mounting of one multizone sensor."""

    mount_point: Vec3
    pitch_deg: float
    fov_deg: float = DEFAULT_FOV_DEG
    zones_per_side: int = DEFAULT_ZONES
    max_range: float = DEFAULT_MAX_RANGE_M
    yaw_deg: float = 0.0

    def __post_init__(self):
        if not 0 < self.fov_deg < 180:
            raise ValueError(f"fov_deg must be in (0, 180), got {self.fov_deg}")
        if self.zones_per_side < 1:
            raise ValueError("zones_per_side must be >= 1")
        if self.max_range <= 0:
            raise ValueError("max_range must be positive")

    @property
    def zone_step_deg(self) -> float:
        return self.fov_deg / self.zones_per_side

    @property
    def sentinel_mm(self) -> float:
        return self.max_range * 1000.0

    def zone_offsets_deg(self) -> np.ndarray:
        """Per-index offset from boresight; index 0 gets the largest positive offset."""
        n = self.zones_per_side
        return ((n - 1) / 2.0 - np.arange(n)) * self.zone_step_deg

    def row_elevations_deg(self) -> np.ndarray:
        """Elevation of each zone row in the vertical (x, z) plane."""
        return self.zone_offsets_deg() - self.pitch_deg

    def placed(self, position: Vec3, heading_deg: float) -> "SensorPose":
        """Pose in world coordinates for a wearer standing at position, turned by heading."""
        h = math.radians(heading_deg)
        m = self.mount_point
        rotated = Vec3(m.x * math.cos(h) - m.y * math.sin(h),
                       m.x * math.sin(h) + m.y * math.cos(h),
                       m.z)
        return replace(self, mount_point=position + rotated, yaw_deg=self.yaw_deg + heading_deg)


def zone_directions(pose: SensorPose) -> np.ndarray:
    """
    Unit boresight directions of every zone.

    Returns:
        (N, N, 3) array indexed [row, col]
    """
    offsets = np.radians(pose.zone_offsets_deg())
    tan_el = np.tan(offsets)[:, None]
    tan_az = np.tan(offsets)[None, :]
    x = np.ones((pose.zones_per_side, pose.zones_per_side))
    y = np.broadcast_to(tan_az, x.shape)
    z = np.broadcast_to(tan_el, x.shape)

    # Pitch about the left (+y) axis, positive = down
    p = math.radians(pose.pitch_deg)
    xp = x * math.cos(p) + z * math.sin(p)
    zp = -x * math.sin(p) + z * math.cos(p)

    # Yaw about +z
    w = math.radians(pose.yaw_deg)
    xw = xp * math.cos(w) - y * math.sin(w)
    yw = xp * math.sin(w) + y * math.cos(w)

    d = np.stack([xw, yw, zp], axis=-1)
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def zone_ray(pose: SensorPose, row: int, col: int) -> Ray:
    """Boresight ray of zone (row, col)."""
    n = pose.zones_per_side
    if not (0 <= row < n and 0 <= col < n):
        raise IndexError(f"zone ({row}, {col}) outside a {n}x{n} grid")
    d = zone_directions(pose)[row, col]
    return Ray(pose.mount_point, Vec3.of(d))


@dataclass(frozen=True)
class NoiseModel:
    """Per-zone measurement noise; all randomness flows from seed."""

    sigma_mm: float = 10.0
    dropout_prob: float = 0.01
    spike_prob: float = 0.02
    spike_value_mm: float = 100.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma_mm < 0:
            raise ValueError("sigma_mm must be >= 0")
        for name in ("dropout_prob", "spike_prob"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")

    @classmethod
    def off(cls, seed: int = 0) -> "NoiseModel":
        return cls(sigma_mm=0.0, dropout_prob=0.0, spike_prob=0.0, seed=seed)

    @property
    def is_off(self) -> bool:
        return self.sigma_mm == 0 and self.dropout_prob == 0 and self.spike_prob == 0


@dataclass(frozen=True)
class DepthFrame:
    """One sensor's distance matrix (mm) at one 10 Hz tick."""

    sensor: SensorId
    tick: int
    zones: np.ndarray
    valid: np.ndarray

    @property
    def shape(self) -> Tuple[int, int]:
        return self.zones.shape


def _zone_draws(noise: NoiseModel, tick: int, sensor: SensorId, shape: Tuple[int, int]) -> np.ndarray:
    """
    Per-zone (jitter, spike, dropout) draws, shape (rows, cols, 3).

    Each zone has its own stream keyed by (seed, tick, sensor, row, col), so a
    zone's noise never depends on the frame layout or evaluation order.
    """
    sensor_key = 0 if sensor is SensorId.UPPER else 1
    draws = np.empty(tuple(shape) + (3,))
    for row in range(shape[0]):
        for col in range(shape[1]):
            rng = np.random.default_rng([noise.seed, tick, sensor_key, row, col])
            draws[row, col] = (rng.standard_normal(), rng.random(), rng.random())
    return draws


def sense(scene: Scene, pose: SensorPose, tick: int, noise: NoiseModel,
          sensor: SensorId = SensorId.UPPER) -> DepthFrame:
    """
    Simulate one multizone frame.

    Distances come from ray casting; noise is applied as Gaussian jitter on
    target zones, then spike substitution, then dropout (invalid + sentinel).
    Output is a pure function of (scene, pose, tick, noise, sensor).
    """
    directions = zone_directions(pose)
    distances_m = cast_many(scene, pose.mount_point.as_array(), directions, pose.max_range)
    sentinel = pose.sentinel_mm
    zones = distances_m * 1000.0
    valid = np.ones(zones.shape, dtype=bool)

    if not noise.is_off:
        draws = _zone_draws(noise, tick, sensor, zones.shape)
        jitter = draws[..., 0] * noise.sigma_mm
        spikes = draws[..., 1] < noise.spike_prob
        drops = draws[..., 2] < noise.dropout_prob

        has_target = zones < sentinel
        zones = np.where(has_target, np.clip(zones + jitter, 1.0, sentinel), zones)
        zones = np.where(spikes, min(noise.spike_value_mm, sentinel), zones)
        valid = ~drops
        zones = np.where(valid, zones, sentinel)

    return DepthFrame(sensor=sensor, tick=tick, zones=zones, valid=valid)


@dataclass(frozen=True)
class DualRig:
    """Upper and lower sensors stacked at a fixed relative tilt."""

    upper: SensorPose
    lower: SensorPose

    @property
    def tilt_between_deg(self) -> float:
        return abs(self.upper.pitch_deg - self.lower.pitch_deg)

    @property
    def combined_span_deg(self) -> float:
        top = max(self.upper.row_elevations_deg().max(), self.lower.row_elevations_deg().max())
        bottom = min(self.upper.row_elevations_deg().min(), self.lower.row_elevations_deg().min())
        return float(top - bottom) + self.upper.zone_step_deg

    @classmethod
    def default(cls, mount_height: float = 1.40) -> "DualRig":
        """Chest-mounted rig whose 90 deg span is centered 22.5 deg below horizontal."""
        mount = Vec3(0.0, 0.0, mount_height)
        return cls(upper=SensorPose(mount, pitch_deg=7.5), lower=SensorPose(mount, pitch_deg=37.5))

    @classmethod
    def from_config(cls, cfg) -> "DualRig":
        """Build from an app.config.RigConfig."""
        mount = Vec3(0.0, 0.0, cfg.mount_height)
        common = dict(fov_deg=cfg.fov_deg, zones_per_side=cfg.zones_per_side, max_range=cfg.max_range)
        return cls(upper=SensorPose(mount, pitch_deg=cfg.upper_pitch_deg, **common),
                   lower=SensorPose(mount, pitch_deg=cfg.lower_pitch_deg, **common))

    def placed(self, position: Vec3, heading_deg: float) -> "DualRig":
        return DualRig(self.upper.placed(position, heading_deg), self.lower.placed(position, heading_deg))


@dataclass(frozen=True)
class CombinedGrid:
    """Fused grid spanning both sensors, rows ordered top to bottom."""

    tick: int
    cells: np.ndarray
    row_elevation_deg: np.ndarray
    valid: np.ndarray
    sentinel_mm: float

    @property
    def shape(self) -> Tuple[int, int]:
        return self.cells.shape


def _row_bins(elevations: np.ndarray, top: float, step: float) -> np.ndarray:
    raw = (top - elevations) / step
    bins = np.rint(raw)
    if np.any(np.abs(raw - bins) * step > ALIGN_TOL_DEG):
        raise GeometryMismatchError("sensor rows do not align to the combined elevation grid")
    return bins.astype(int)


def fuse(upper: DepthFrame, lower: DepthFrame, rig: DualRig) -> CombinedGrid:
    """
    Stack both frames into one grid binned by elevation.

    Rows seen by both sensors take the minimum over valid contributors; a cell
    is invalid (sentinel) only when every contributor is invalid.
    """
    if upper.tick != lower.tick:
        raise TickMismatchError(f"upper tick {upper.tick} != lower tick {lower.tick}")
    if upper.shape != lower.shape:
        raise GeometryMismatchError(f"frame shapes differ: {upper.shape} vs {lower.shape}")
    step = rig.upper.zone_step_deg
    if abs(rig.lower.zone_step_deg - step) > ALIGN_TOL_DEG:
        raise GeometryMismatchError("sensors have different zone pitch")

    up_el = rig.upper.row_elevations_deg()
    lo_el = rig.lower.row_elevations_deg()
    top = float(max(up_el.max(), lo_el.max()))
    up_bins = _row_bins(up_el, top, step)
    lo_bins = _row_bins(lo_el, top, step)
    n_rows = int(max(up_bins.max(), lo_bins.max())) + 1
    n_cols = upper.shape[1]
    sentinel = max(rig.upper.sentinel_mm, rig.lower.sentinel_mm)

    cells = np.full((n_rows, n_cols), np.inf)
    for frame, bins in ((upper, up_bins), (lower, lo_bins)):
        contribution = np.where(frame.valid, frame.zones, np.inf)
        np.minimum.at(cells, bins, contribution)
    valid = np.isfinite(cells)
    cells = np.where(valid, cells, sentinel)

    elevations = top - step * np.arange(n_rows)
    return CombinedGrid(tick=upper.tick, cells=cells, row_elevation_deg=elevations,
                        valid=valid, sentinel_mm=sentinel)


def sense_rig(scene: Scene, rig: DualRig, tick: int, noise: NoiseModel) -> Tuple[DepthFrame, DepthFrame]:
    """Both frames of one tick."""
    return (sense(scene, rig.upper, tick, noise, SensorId.UPPER),
            sense(scene, rig.lower, tick, noise, SensorId.LOWER))


@dataclass(frozen=True)
class CoverageReport:
    lowest_hit_z: float
    highest_hit_z: float
    knee_target_z: float
    head_target_z: float

    @property
    def passed(self) -> bool:
        return self.lowest_hit_z <= self.knee_target_z and self.highest_hit_z >= self.head_target_z


def coverage_targets(user_height: float) -> Tuple[float, float]:
    """Knee and head heights scaled from the 1.70 m reference user."""
    scale = user_height / REFERENCE_USER_HEIGHT_M
    return KNEE_HEIGHT_M * scale, HEAD_HEIGHT_M * scale


def coverage_check(rig: DualRig, user_height: float, distance: float) -> Tuple[float, float]:
    """
    Vertical extent covered on the plane x = distance in front of the rig.

    Uses the outer zone edges: the top edge of the highest row and the bottom
    edge of the lowest row across both sensors.
    """
    if distance <= 0:
        raise DomainError("distance must be positive")
    half = rig.upper.zone_step_deg / 2.0
    top = max(rig.upper.row_elevations_deg().max(), rig.lower.row_elevations_deg().max()) + half
    bottom = min(rig.upper.row_elevations_deg().min(), rig.lower.row_elevations_deg().min()) - half
    if top >= 90 or bottom <= -90:
        raise DomainError("edge rays do not cross a vertical plane ahead of the rig")

    ends = []
    for pose, elevation in ((rig.lower, bottom), (rig.upper, top)):
        ends.append(pose.mount_point.z + distance * math.tan(math.radians(elevation)))
    lowest, highest = min(ends), max(ends)
    logger.debug(f"coverage at {distance} m for user {user_height} m: [{lowest:.3f}, {highest:.3f}]")
    return lowest, highest


def coverage_report(rig: DualRig, user_height: float, distance: float) -> CoverageReport:
    lowest, highest = coverage_check(rig, user_height, distance)
    knee, head = coverage_targets(user_height)
    return CoverageReport(lowest, highest, knee, head)
