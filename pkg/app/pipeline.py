"""
Pipeline module for the GuideTouch toolkit.
The firmware-equivalent 10 Hz loop: temporal outlier filtering, quadrant
classification against a danger threshold, motor-mask generation, and the
dropped-device alarm latch.

Quadrants: rows split top/bottom, columns split wearer-left/right.
Upper-left drives L2, lower-left L1, upper-right R2, lower-right R1.
"""

from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from app.errors import DimensionMismatchError
from app.haptics_codec import EMPTY, Motor, MotorMask, format_mask, parse_mask_field
from app.scene_geometry import Scene, Vec3
from app.tof_model import CombinedGrid, DepthFrame, DualRig, NoiseModel, fuse, sense_rig
from app.utils.logger import get_logger
from app.utils.preprocess import masked_median, validate_grid

logger = get_logger("Pipeline")

TICK_SECONDS = 0.1
QUADRANT_MOTORS = (Motor.L1, Motor.L2, Motor.R1, Motor.R2)
RUN_LOG_COLUMNS = ["tick", "quadrant_min_L1", "quadrant_min_L2", "quadrant_min_R1", "quadrant_min_R2", "mask"]


@dataclass(frozen=True)
class DetectionConfig:
    danger_threshold_mm: float = 1000.0
    hysteresis_mm: float = 100.0
    window_len: int = 5
    min_zone_count: int = 2
    # 1: plain median of whatever is valid; (W + 1) // 2 gives a majority warm-up
    min_valid_samples: int = 1

    def __post_init__(self):
        if self.danger_threshold_mm <= 0:
            raise ValueError("danger_threshold_mm must be > 0")
        if self.hysteresis_mm < 0:
            raise ValueError("hysteresis_mm must be >= 0")
        if self.window_len < 1 or self.min_zone_count < 1:
            raise ValueError("window_len and min_zone_count must be >= 1")
        if not 1 <= self.min_valid_samples <= self.window_len:
            raise ValueError("min_valid_samples must be in [1, window_len]")

    @classmethod
    def from_settings(cls, settings) -> "DetectionConfig":
        return cls(settings.danger_threshold_mm, settings.hysteresis_mm,
                   settings.window_len, settings.min_zone_count,
                   settings.min_valid_samples)


@dataclass
class FilterState:
    """
    Per-cell ring buffer of the last W samples.
    Invalid samples and not-yet-filled slots hold NaN.
    """

    window: np.ndarray
    cursor: int = 0
    min_valid: int = 1

    @classmethod
    def empty(cls, window_len: int, shape: Tuple[int, int], min_valid: int = 1) -> "FilterState":
        if window_len < 1:
            raise ValueError("window_len must be >= 1")
        return cls(np.full((window_len,) + tuple(shape), np.nan), 0, min_valid)

    @property
    def window_len(self) -> int:
        return self.window.shape[0]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.window.shape[1:]

    @property
    def min_valid_samples(self) -> int:
        return self.min_valid


def filter_step(state: FilterState, grid: CombinedGrid) -> Tuple[FilterState, CombinedGrid]:
    """
    Push one grid through the per-cell median filter.

    Each cell outputs the median of the valid samples in its window. A cell
    is invalid only while its window holds fewer than min_valid_samples valid
    samples; with the default of 1 that means an all-invalid window.

    Returns:
        (advanced state, filtered grid); cells short of valid samples come out
        invalid at the sentinel
    """
    cells = validate_grid(grid.cells, state.shape, "combined grid")
    window = state.window.copy()
    window[state.cursor] = np.where(grid.valid, cells, np.nan)
    median, _ = masked_median(window, axis=0)
    enough = np.count_nonzero(~np.isnan(window), axis=0) >= state.min_valid_samples
    out = np.where(enough, median, grid.sentinel_mm)
    new_state = FilterState(window, (state.cursor + 1) % state.window_len, state.min_valid)
    return new_state, replace(grid, cells=out, valid=enough)


@dataclass(frozen=True)
class ObstacleReport:
    tick: int
    quadrant_min: Dict[Motor, float]
    triggered: Dict[Motor, bool]
    mask: MotorMask

    def row(self) -> list:
        return [self.tick] + [round(float(self.quadrant_min[m]), 1) for m in QUADRANT_MOTORS] + [format_mask(self.mask)]


def quadrant_slices(shape: Tuple[int, int]) -> Dict[Motor, Tuple[slice, slice]]:
    rows, cols = shape
    top, bottom = slice(0, rows // 2), slice(rows // 2, rows)
    left, right = slice(0, cols // 2), slice(cols // 2, cols)
    return {Motor.L2: (top, left), Motor.L1: (bottom, left),
            Motor.R2: (top, right), Motor.R1: (bottom, right)}


def classify(grid: CombinedGrid, cfg: DetectionConfig, prev: Optional[ObstacleReport] = None) -> ObstacleReport:
    """
    Decide which quadrants hold a dangerous obstacle.

    A quadrant triggers when at least min_zone_count valid cells are closer
    than the threshold; once triggered it holds until its nearest valid cell
    is farther than threshold + hysteresis.
    """
    quadrant_min = {}
    triggered = {}
    mask = EMPTY
    for motor, (rows, cols) in quadrant_slices(grid.shape).items():
        cells = grid.cells[rows, cols]
        valid = grid.valid[rows, cols]
        nearest = float(cells[valid].min()) if valid.any() else float(grid.sentinel_mm)
        close = int(np.count_nonzero(valid & (cells < cfg.danger_threshold_mm)))

        was_on = prev is not None and prev.triggered.get(motor, False)
        if was_on:
            on = nearest <= cfg.danger_threshold_mm + cfg.hysteresis_mm
        else:
            on = close >= cfg.min_zone_count
        quadrant_min[motor] = nearest
        triggered[motor] = on
        if on:
            mask = mask | MotorMask.of(motor)
    return ObstacleReport(grid.tick, quadrant_min, triggered, mask)


class AlarmStatus(str, Enum):
    ARMED = "armed"
    TRIGGERED = "triggered"


@dataclass(frozen=True)
class AlarmState:
    state: AlarmStatus = AlarmStatus.ARMED
    clip_closed: bool = False
    buzzer_freq_hz: float = 3500.0

    def __post_init__(self):
        if not 3000 <= self.buzzer_freq_hz <= 4000:
            raise ValueError("buzzer_freq_hz must be within [3000, 4000]")

    @property
    def buzzing(self) -> bool:
        return self.state is AlarmStatus.TRIGGERED


def alarm_step(state: AlarmState, clip_closed: bool) -> AlarmState:
    """Closing the clip circuit triggers the buzzer; it stays on until alarm_reset."""
    if state.state is AlarmStatus.ARMED and clip_closed:
        logger.info(f"Alarm triggered, buzzer at {state.buzzer_freq_hz:.0f} Hz")
        return replace(state, state=AlarmStatus.TRIGGERED, clip_closed=True)
    return replace(state, clip_closed=clip_closed)


def alarm_reset(state: AlarmState) -> AlarmState:
    return replace(state, state=AlarmStatus.ARMED)


@dataclass
class RunLog:
    """Append-only per-tick record of a pipeline run."""

    reports: List[ObstacleReport] = field(default_factory=list)

    def append(self, report: ObstacleReport) -> None:
        self.reports.append(report)

    def __len__(self) -> int:
        return len(self.reports)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.row() for r in self.reports], columns=RUN_LOG_COLUMNS)

    def to_csv(self, path: Union[str, Path]) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.1f", lineterminator="\n")


def load_run_log(path: Union[str, Path]) -> pd.DataFrame:
    """Read a run log back; the mask column is parsed to MotorMask."""
    frame = pd.read_csv(path, dtype={"mask": str}, keep_default_na=False)
    if list(frame.columns) != RUN_LOG_COLUMNS:
        raise ValueError(f"unexpected run log header: {list(frame.columns)}")
    frame["mask"] = frame["mask"].map(parse_mask_field)
    return frame


def first_trigger_ticks(reports: List[ObstacleReport]) -> Dict[Motor, Optional[int]]:
    """First tick at which each motor switched on, or None."""
    first = {m: None for m in QUADRANT_MOTORS}
    for report in reports:
        for motor in report.mask:
            if first[motor] is None:
                first[motor] = report.tick
    return first


def triggering_obstacles(scene: Scene, rig: DualRig, report: ObstacleReport,
                         cfg: DetectionConfig) -> List[str]:
    """
    Obstacles (and "ground") that put at least one zone of a triggered
    quadrant inside the danger threshold, judged noise-free against each
    obstacle alone.
    """
    active = [m for m in QUADRANT_MOTORS if report.triggered.get(m)]
    if not active:
        return []
    candidates = [(o.id, Scene((o,), ground_z=None)) for o in scene.obstacles]
    if scene.ground_z is not None:
        candidates.append(("ground", Scene((), ground_z=scene.ground_z)))

    off = NoiseModel.off()
    found = []
    for label, alone in candidates:
        upper, lower = sense_rig(alone, rig, report.tick, off)
        grid = fuse(upper, lower, rig)
        slices = quadrant_slices(grid.shape)
        if any(np.any(grid.cells[slices[m]] < cfg.danger_threshold_mm) for m in active):
            found.append(label)
    return found


@dataclass
class TickResult:
    report: ObstacleReport
    frames: Tuple[DepthFrame, DepthFrame]
    raw: CombinedGrid
    filtered: CombinedGrid


class GuidePipeline:
    """
    Sequential sense -> fuse -> filter -> classify loop.

    State (filter window, previous report, alarm) is threaded explicitly from
    one tick to the next; ticks must increase by exactly one.
    """

    def __init__(self, rig: DualRig, cfg: DetectionConfig, noise: NoiseModel,
                 alarm: Optional[AlarmState] = None):
        self.rig = rig
        self.cfg = cfg
        self.noise = noise
        self.alarm = alarm or AlarmState()
        self.filter: Optional[FilterState] = None
        self.prev: Optional[ObstacleReport] = None
        self.log = RunLog()
        self.alarm_events: List[Tuple[int, AlarmStatus]] = []
        self._last_tick: Optional[int] = None
        logger.info(f"GuidePipeline initialized (W={cfg.window_len}, threshold={cfg.danger_threshold_mm} mm)")

    def step(self, scene: Scene, t: int, position: Vec3 = Vec3(0.0, 0.0, 0.0),
             heading_deg: float = 0.0, clip_closed: bool = False) -> TickResult:
        if self._last_tick is not None and t != self._last_tick + 1:
            raise ValueError(f"tick {t} does not follow {self._last_tick}")
        placed = self.rig.placed(position, heading_deg)
        upper, lower = sense_rig(scene, placed, t, self.noise)
        raw = fuse(upper, lower, placed)
        if self.filter is None:
            self.filter = FilterState.empty(self.cfg.window_len, raw.shape, self.cfg.min_valid_samples)
        elif self.filter.shape != raw.shape:
            raise DimensionMismatchError(f"grid shape changed to {raw.shape}")
        self.filter, filtered = filter_step(self.filter, raw)
        report = classify(filtered, self.cfg, self.prev)

        before = self.alarm.state
        self.alarm = alarm_step(self.alarm, clip_closed)
        if self.alarm.state is not before:
            self.alarm_events.append((t, self.alarm.state))

        self.prev = report
        self._last_tick = t
        self.log.append(report)
        return TickResult(report, (upper, lower), raw, filtered)

    def tick(self, scene: Scene, t: int, position: Vec3 = Vec3(0.0, 0.0, 0.0),
             heading_deg: float = 0.0, clip_closed: bool = False) -> ObstacleReport:
        return self.step(scene, t, position, heading_deg, clip_closed).report

    def reset_alarm(self) -> None:
        if self.alarm.buzzing and self._last_tick is not None:
            self.alarm_events.append((self._last_tick, AlarmStatus.ARMED))
        self.alarm = alarm_reset(self.alarm)


def tick(scene: Scene, rig: DualRig, filter_state: Optional[FilterState], cfg: DetectionConfig, t: int,
         noise: Optional[NoiseModel] = None, prev: Optional[ObstacleReport] = None,
         log: Optional[RunLog] = None) -> Tuple[ObstacleReport, FilterState]:
    """
    One pipeline tick as a function of explicit state.

    Returns:
        (report, advanced filter state); the report is appended to log if given
    """
    noise = noise or NoiseModel.off()
    upper, lower = sense_rig(scene, rig, t, noise)
    grid = fuse(upper, lower, rig)
    if filter_state is None:
        filter_state = FilterState.empty(cfg.window_len, grid.shape, cfg.min_valid_samples)
    filter_state, filtered = filter_step(filter_state, grid)
    report = classify(filtered, cfg, prev)
    if log is not None:
        log.append(report)
    return report, filter_state
