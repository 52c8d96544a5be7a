"""
Experiment module for the GuideTouch toolkit.
Randomized perception-experiment schedules, trial capture with simulated
responders, and ingestion of published confusion tables.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from app.errors import PatternError, ResponderError, TableFormatError
from app.haptics_codec import Group, MotorMask, name, parse, patterns_for
from app.stats import ConfusionMatrix
from app.utils.logger import get_logger

logger = get_logger("Experiment")

DEFAULT_REPS = 5
DEFAULT_PARTICIPANTS = 11
TRIALS_PER_ROW = 55  # 5 repetitions x 11 participants per group
TRIAL_COLUMNS = ["participant_id", "group", "index", "true", "perceived", "response_ms"]

# Published mean accuracies; the blind-participant figure is reference only
REFERENCE_ACCURACY = {"A": 0.784, "B": 0.929, "blind_primary": 0.9375}

DATA_DIR = Path(__file__).resolve().parent.parent / "data"
PUBLISHED_TABLES = {Group.A: "table_group_a.csv", Group.B: "table_group_b.csv"}

RESPONSE_MS_MEAN = 1800.0
RESPONSE_MS_SD = 450.0
RESPONSE_MS_RANGE = (300.0, 3000.0)


@dataclass(frozen=True)
class Schedule:
    group: Group
    seed: int
    trials: Tuple[MotorMask, ...]

    def __len__(self) -> int:
        return len(self.trials)


def make_schedule(group, reps: int = DEFAULT_REPS, seed: int = 0) -> Schedule:
    """Every group pattern `reps` times, in a seeded uniform shuffle."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    pattern_set = patterns_for(group)
    multiset = [p for p in pattern_set.patterns for _ in range(reps)]
    order = np.random.default_rng(seed).permutation(len(multiset))
    return Schedule(pattern_set.group, seed, tuple(multiset[i] for i in order))


@dataclass(frozen=True)
class TrialRecord:
    participant_id: str
    group: Group
    index: int
    true_mask: MotorMask
    perceived_mask: MotorMask
    response_ms: float

    @property
    def correct(self) -> bool:
        return self.true_mask == self.perceived_mask


class SimulatedResponder:
    """
    Stand-in participant: for each true pattern, a categorical distribution
    over perceived patterns.
    """

    def __init__(self, labels: Sequence[MotorMask], rows: Dict[MotorMask, np.ndarray], seed: int = 0):
        self.labels = tuple(labels)
        self.rows = {}
        for mask, probs in rows.items():
            probs = np.asarray(probs, dtype=float)
            if probs.shape != (len(self.labels),) or np.any(probs < 0):
                raise ResponderError(f"bad response distribution for {name(mask)}")
            if abs(probs.sum() - 1.0) > 1e-9:
                raise ResponderError(f"row {name(mask)} sums to {probs.sum()!r}, expected 1")
            self.rows[mask] = probs
        self.seed = seed

    @classmethod
    def identity(cls, patterns: Sequence[MotorMask], seed: int = 0) -> "SimulatedResponder":
        eye = np.eye(len(patterns))
        return cls(patterns, {p: eye[i] for i, p in enumerate(patterns)}, seed)

    @classmethod
    def uniform(cls, patterns: Sequence[MotorMask], seed: int = 0) -> "SimulatedResponder":
        flat = np.full(len(patterns), 1.0 / len(patterns))
        return cls(patterns, {p: flat for p in patterns}, seed)

    @classmethod
    def from_confusion(cls, cm: ConfusionMatrix, seed: int = 0) -> "SimulatedResponder":
        """Rows of a confusion matrix, normalized to probabilities."""
        labels = [parse(label) for label in cm.labels]
        counts = cm.counts.astype(float)
        sums = counts.sum(axis=1)
        if np.any(sums <= 0):
            raise ResponderError("confusion matrix has an empty row")
        probs = counts / sums[:, None]
        probs = probs / probs.sum(axis=1, keepdims=True)
        return cls(labels, {m: probs[i] for i, m in enumerate(labels)}, seed)

    def with_seed(self, seed: int) -> "SimulatedResponder":
        return SimulatedResponder(self.labels, self.rows, seed)

    def respond(self, true_mask: MotorMask, index: int) -> Tuple[MotorMask, float]:
        """Perceived pattern and response time for trial `index`; pure in (seed, index)."""
        probs = self.rows.get(true_mask)
        if probs is None:
            raise ResponderError(f"responder has no row for {name(true_mask)}")
        rng = np.random.default_rng([self.seed, index])
        choice = int(rng.choice(len(self.labels), p=probs))
        response_ms = float(np.clip(rng.normal(RESPONSE_MS_MEAN, RESPONSE_MS_SD), *RESPONSE_MS_RANGE))
        return self.labels[choice], round(response_ms, 1)


def run_session(schedule: Schedule, responder: SimulatedResponder, participant_id: str) -> List[TrialRecord]:
    """One participant working through a schedule."""
    missing = {p for p in schedule.trials if p not in responder.rows}
    if missing:
        raise ResponderError(f"responder lacks rows for {sorted(name(m) for m in missing)}")
    records = []
    for index, true_mask in enumerate(schedule.trials):
        perceived, response_ms = responder.respond(true_mask, index)
        records.append(TrialRecord(participant_id, schedule.group, index, true_mask, perceived, response_ms))
    return records


def participant_ids(count: int) -> List[str]:
    width = max(2, len(str(count)))
    return [f"P{i + 1:0{width}d}" for i in range(count)]


def participant_seeds(seed: int, count: int) -> List[Tuple[int, int]]:
    """(schedule seed, responder seed) per participant, derived from the study seed."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [tuple(int(v) for v in child.generate_state(2)) for child in children]


def run_study(group, responder: SimulatedResponder, reps: int = DEFAULT_REPS,
              participants: int = DEFAULT_PARTICIPANTS, seed: int = 0) -> Dict[str, List[TrialRecord]]:
    """Independent seeded sessions for every participant of a group."""
    sessions = {}
    for pid, (schedule_seed, responder_seed) in zip(participant_ids(participants),
                                                     participant_seeds(seed, participants)):
        schedule = make_schedule(group, reps, schedule_seed)
        sessions[pid] = run_session(schedule, responder.with_seed(responder_seed), pid)
    logger.info(f"Ran group {Group(group).value} study: {participants} participants x {reps} reps")
    return sessions


def accuracy(records: Sequence[TrialRecord]) -> float:
    if not records:
        raise ValueError("no trial records")
    return sum(r.correct for r in records) / len(records)


# --- trial logs ------------------------------------------------------------

def trials_to_frame(records: Sequence[TrialRecord]) -> pd.DataFrame:
    return pd.DataFrame(
        [[r.participant_id, r.group.value, r.index, name(r.true_mask), name(r.perceived_mask), r.response_ms]
         for r in records],
        columns=TRIAL_COLUMNS,
    )


def write_trials(records: Sequence[TrialRecord], path: Union[str, Path]) -> None:
    trials_to_frame(records).to_csv(path, index=False, float_format="%.1f", lineterminator="\n")


def load_trials(path: Union[str, Path]) -> List[TrialRecord]:
    """Read a trial log written by write_trials."""
    try:
        frame = pd.read_csv(path, dtype={"participant_id": str, "group": str, "true": str, "perceived": str},
                            keep_default_na=False)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise TableFormatError(f"cannot read trial log {path}: {e}") from None
    if list(frame.columns) != TRIAL_COLUMNS:
        raise TableFormatError(f"{path}: expected header {','.join(TRIAL_COLUMNS)}")
    records = []
    for line, row in enumerate(frame.to_dict("records"), start=2):
        try:
            records.append(TrialRecord(row["participant_id"], Group(row["group"]), int(row["index"]),
                                       parse(row["true"]), parse(row["perceived"]),
                                       float(row["response_ms"])))
        except (PatternError, ValueError) as e:
            raise TableFormatError(f"{path}, line {line}: {e}") from None
    return records


# --- published tables ------------------------------------------------------

def load_table_csv(path: Union[str, Path]) -> pd.DataFrame:
    """Percentage table with pattern names as header row and first column."""
    try:
        frame = pd.read_csv(path, index_col=0)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise TableFormatError(f"cannot read table {path}: {e}") from None
    frame.index = frame.index.astype(str).str.strip()
    frame.columns = frame.columns.astype(str).str.strip()
    return frame


def ingest_table(rows: pd.DataFrame, trials_per_row: int = TRIALS_PER_ROW) -> ConfusionMatrix:
    """
    Turn a percentage table into counts.

    Each cell becomes round(percent / 100 * trials_per_row). Row sums may
    drift from trials_per_row because the published percentages are rounded;
    the drift is logged, not corrected. Labels are canonicalized, so "R1+L2"
    and "L2+R1" are the same pattern.
    """
    if trials_per_row < 1:
        raise ValueError("trials_per_row must be >= 1")
    try:
        row_masks = [parse(label) for label in rows.index]
        col_masks = [parse(label) for label in rows.columns]
    except PatternError as e:
        raise TableFormatError(f"unparseable label: {e}") from None
    if len(set(row_masks)) != len(row_masks) or set(row_masks) != set(col_masks) or len(col_masks) != len(row_masks):
        raise TableFormatError("table rows and columns must name the same patterns")

    values = rows.to_numpy(dtype=float)
    if np.any(np.isnan(values)):
        raise TableFormatError("table has empty cells")
    if np.any(values < 0):
        raise TableFormatError("negative percentage in table")

    order = [col_masks.index(m) for m in row_masks]
    values = values[:, order]
    counts = np.rint(values / 100.0 * trials_per_row).astype(int)

    drift = counts.sum(axis=1) - trials_per_row
    for mask, d in zip(row_masks, drift):
        if d:
            logger.debug(f"row {name(mask)}: rounding drift {d:+d}")
    return ConfusionMatrix([name(m) for m in row_masks], counts)


def published_table(group) -> pd.DataFrame:
    """Percentages published for a group, as shipped in data/."""
    return load_table_csv(DATA_DIR / PUBLISHED_TABLES[Group(group)])


def responder_from_source(source: str, group, trials_per_row: int = TRIALS_PER_ROW,
                          seed: int = 0) -> SimulatedResponder:
    """
    Build a responder from "identity", "uniform", "published", or a table CSV path.
    """
    patterns = patterns_for(group).patterns
    if source == "identity":
        return SimulatedResponder.identity(patterns, seed)
    if source == "uniform":
        return SimulatedResponder.uniform(patterns, seed)
    table = published_table(group) if source == "published" else load_table_csv(source)
    responder = SimulatedResponder.from_confusion(ingest_table(table, trials_per_row), seed)
    missing = [name(p) for p in patterns if p not in responder.rows]
    if missing:
        raise ResponderError(f"table lacks rows for {missing}")
    return responder
