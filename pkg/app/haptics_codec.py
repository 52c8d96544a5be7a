"""
Haptics codec module for the GuideTouch toolkit.
Motor sets, canonical pattern names, the pattern sets shown to each
experiment group, and timed vibration scheduling.

Motor layout: L1 bottom-left, L2 upper-left, R1 bottom-right, R2 upper-right.
"""

from dataclasses import dataclass
from enum import Enum
from itertools import combinations
from typing import FrozenSet, Iterable, Iterator, List, Optional, Sequence, Tuple

from app.errors import PatternError
from app.utils.logger import get_logger

logger = get_logger("HapticsCodec")

SEPARATOR = "+"
DEFAULT_VIBRATION_TICKS = 30  # 3 s at 10 Hz


class Motor(Enum):
    L1 = 0
    L2 = 1
    R1 = 2
    R2 = 3

    @property
    def bit(self) -> int:
        return 1 << self.value


class Group(str, Enum):
    A = "A"
    B = "B"


@dataclass(frozen=True)
class MotorMask:
    """Set of simultaneously active motors."""

    motors: FrozenSet[Motor] = frozenset()

    @classmethod
    def of(cls, *motors: Motor) -> "MotorMask":
        return cls(frozenset(motors))

    @classmethod
    def from_bits(cls, bits: int) -> "MotorMask":
        if not 0 <= bits < 16:
            raise PatternError(f"mask bits out of range: {bits}")
        return cls(frozenset(m for m in Motor if bits & m.bit))

    @property
    def bits(self) -> int:
        return sum(m.bit for m in self.motors)

    @property
    def popcount(self) -> int:
        return len(self.motors)

    @property
    def is_empty(self) -> bool:
        return not self.motors

    def __iter__(self) -> Iterator[Motor]:
        return iter(sorted(self.motors, key=lambda m: m.value))

    def __or__(self, other: "MotorMask") -> "MotorMask":
        return MotorMask(self.motors | other.motors)

    def __contains__(self, motor: Motor) -> bool:
        return motor in self.motors

    def __str__(self) -> str:
        return name(self) if self.motors else "none"


EMPTY = MotorMask()


def name(mask: MotorMask) -> str:
    """Canonical pattern name, e.g. "L1+R2"."""
    if mask.is_empty:
        raise PatternError("the empty mask is not a pattern")
    return SEPARATOR.join(m.name for m in mask)


def parse(text: str) -> MotorMask:
    """
    Parse a "+"-joined motor list in any order ("R1+L2" == "L2+R1").

    Raises:
        PatternError: on an empty string, unknown label, or repeated label
    """
    if text is None or not text.strip():
        raise PatternError("empty pattern name")
    motors = []
    for label in text.split(SEPARATOR):
        label = label.strip()
        try:
            motor = Motor[label]
        except KeyError:
            raise PatternError(f"unknown motor label '{label}' in '{text}'") from None
        if motor in motors:
            raise PatternError(f"duplicate motor label '{label}' in '{text}'")
        motors.append(motor)
    return MotorMask(frozenset(motors))


def _ordered(masks: Iterable[MotorMask]) -> List[MotorMask]:
    return sorted(masks, key=lambda m: (m.popcount, name(m)))


ALL_MASKS: Tuple[MotorMask, ...] = tuple(_ordered(
    MotorMask(frozenset(combo)) for k in range(1, 5) for combo in combinations(Motor, k)
))


@dataclass(frozen=True)
class PatternSet:
    group: Group
    patterns: Tuple[MotorMask, ...]

    def __len__(self) -> int:
        return len(self.patterns)

    def names(self) -> List[str]:
        return [name(p) for p in self.patterns]


def patterns_for(group) -> PatternSet:
    """
    Patterns shown to an experiment group.

    A: all 15 non-empty masks. B: the 10 masks with one or two motors.
    Both ordered by (motor count, canonical name).
    """
    group = Group(group)
    if group is Group.A:
        patterns = ALL_MASKS
    else:
        patterns = tuple(m for m in ALL_MASKS if m.popcount <= 2)
    return PatternSet(group, patterns)


@dataclass(frozen=True)
class VibrationEvent:
    mask: MotorMask
    start_tick: int
    duration_ticks: int = DEFAULT_VIBRATION_TICKS

    def __post_init__(self):
        if self.duration_ticks <= 0:
            raise ValueError("duration_ticks must be positive")

    @property
    def end_tick(self) -> int:
        return self.start_tick + self.duration_ticks

    def active_at(self, tick: int) -> bool:
        return self.start_tick <= tick < self.end_tick


def schedule_vibrations(masks: Sequence[MotorMask], duration_ticks: int = DEFAULT_VIBRATION_TICKS,
                        gap_ticks: int = 0, start_tick: int = 0) -> List[VibrationEvent]:
    """Back-to-back vibration events, one per mask."""
    if gap_ticks < 0:
        raise ValueError("gap_ticks must be >= 0")
    events = []
    tick = start_tick
    for mask in masks:
        events.append(VibrationEvent(mask, tick, duration_ticks))
        tick += duration_ticks + gap_ticks
    return events


def active_mask(events: Sequence[VibrationEvent], tick: int) -> MotorMask:
    """Union of the masks of every event active at tick."""
    result = EMPTY
    for event in events:
        if event.active_at(tick):
            result = result | event.mask
    return result


def format_mask(mask: Optional[MotorMask]) -> str:
    """Log/CSV spelling: canonical name, or "none" for no motors."""
    if mask is None or mask.is_empty:
        return "none"
    return name(mask)


def parse_mask_field(text: str) -> MotorMask:
    """Inverse of format_mask."""
    if text is None or str(text).strip() in ("", "none"):
        return EMPTY
    return parse(str(text))
