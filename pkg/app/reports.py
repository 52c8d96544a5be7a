"""
Reports module for the GuideTouch toolkit.
Assembles the simulation summary and the statistics report (confusion
percentages, accuracies, ANOVA and pairwise tables) and writes them out.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from app.errors import DegenerateStatisticsError
from app.haptics_codec import format_mask, parse
from app.pipeline import AlarmStatus, ObstacleReport, first_trigger_ticks
from app.stats import (
    AnovaResult,
    ConfusionMatrix,
    PairwiseResult,
    bonferroni_pairwise,
    mean_accuracy,
    one_way_anova,
    participant_groups,
    pattern_groups,
    per_pattern_accuracy,
    tukey_hsd,
)
from app.utils.logger import get_logger

logger = get_logger("Reports")

ANOVA_COLUMNS = ["factor", "f_stat", "df_between", "df_within", "p_value", "status"]
PAIRWISE_COLUMNS = ["factor", "group_a", "group_b", "mean_difference", "statistic",
                    "raw_p", "adjusted_p", "significant", "degenerate"]


# --- simulation summary ----------------------------------------------------

def mask_timeline(reports: Sequence[ObstacleReport]) -> List[Tuple[int, int, str]]:
    """Consecutive ticks with the same mask collapsed into (first, last, mask) runs."""
    runs: List[Tuple[int, int, str]] = []
    for report in reports:
        label = format_mask(report.mask)
        if runs and runs[-1][2] == label and runs[-1][1] == report.tick - 1:
            runs[-1] = (runs[-1][0], report.tick, label)
        else:
            runs.append((report.tick, report.tick, label))
    return runs


def simulation_summary(reports: Sequence[ObstacleReport], obstacle_ids: Sequence[str],
                       first_by_obstacle: Dict[str, Optional[int]],
                       alarm_events: Sequence[Tuple[int, AlarmStatus]]) -> str:
    """Plain-text summary of a simulate run."""
    lines = [f"ticks: {len(reports)}", "", "first trigger tick per obstacle:"]
    for obstacle_id in list(obstacle_ids) + (["ground"] if "ground" in first_by_obstacle else []):
        tick = first_by_obstacle.get(obstacle_id)
        lines.append(f"  {obstacle_id}: {'never' if tick is None else tick}")

    lines += ["", "first trigger tick per motor:"]
    for motor, tick in first_trigger_ticks(list(reports)).items():
        lines.append(f"  {motor.name}: {'never' if tick is None else tick}")

    lines += ["", "mask timeline:"]
    for first, last, label in mask_timeline(reports):
        lines.append(f"  {first}-{last}: {label}")

    lines += ["", "alarm events:"]
    if alarm_events:
        lines += [f"  {tick}: {status.value}" for tick, status in alarm_events]
    else:
        lines.append("  none")
    return "\n".join(lines) + "\n"


# --- statistics report -----------------------------------------------------

@dataclass
class AnovaOutcome:
    factor: str
    result: Optional[AnovaResult] = None
    status: str = "ok"

    @property
    def degenerate(self) -> bool:
        return self.result is None and self.status not in ("ok", "skipped")


@dataclass
class StatsReport:
    confusion: ConfusionMatrix
    alpha: float = 0.05
    anova: List[AnovaOutcome] = field(default_factory=list)
    pairwise: Dict[str, pd.DataFrame] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)

    @property
    def degenerate(self) -> bool:
        return any(a.degenerate for a in self.anova)

    def accuracy_frame(self) -> pd.DataFrame:
        acc = per_pattern_accuracy(self.confusion)
        frame = pd.DataFrame({"pattern": list(self.confusion.labels),
                              "accuracy_percent": np.round(np.array(acc) * 100.0, 1)})
        mean = pd.DataFrame({"pattern": ["mean"], "accuracy_percent": [round(mean_accuracy(self.confusion) * 100.0, 1)]})
        return pd.concat([frame, mean], ignore_index=True)

    def anova_frame(self) -> pd.DataFrame:
        rows = []
        for a in self.anova:
            r = a.result
            if r is None:
                rows.append([a.factor, "", "", "", "", a.status])
            else:
                rows.append([a.factor, f"{r.f_stat:.4f}", r.df_between, r.df_within, f"{r.p_value:.6g}", a.status])
        return pd.DataFrame(rows, columns=ANOVA_COLUMNS)


def _pairwise_frame(factor: str, labels: Sequence[str], results: Sequence[PairwiseResult]) -> pd.DataFrame:
    rows = [[factor, labels[r.pair[0]], labels[r.pair[1]], f"{r.mean_difference:.4f}", f"{r.statistic:.4f}",
             f"{r.raw_p:.6g}", f"{r.adjusted_p:.6g}", int(r.significant_at_alpha), int(r.degenerate)]
            for r in results]
    return pd.DataFrame(rows, columns=PAIRWISE_COLUMNS)


def complexity_breakdown(frame: pd.DataFrame) -> Dict[Tuple[int, int], int]:
    """Significant pattern pairs counted by the motor counts of the two patterns."""
    counts: Dict[Tuple[int, int], int] = {}
    for _, row in frame[frame["significant"] == 1].iterrows():
        key = tuple(sorted((parse(row["group_a"]).popcount, parse(row["group_b"]).popcount)))
        counts[key] = counts.get(key, 0) + 1
    return dict(sorted(counts.items()))


def build_stats_report(confusion: ConfusionMatrix, cells: Optional[pd.DataFrame] = None,
                       alpha: float = 0.05) -> StatsReport:
    """
    Analyse one group.

    Args:
        confusion: Confusion matrix of the group
        cells: Participant x pattern accuracy table; None for table input
        alpha: Significance level of the pairwise tests
    """
    report = StatsReport(confusion, alpha)
    if cells is None:
        report.notes.append("ANOVA and pairwise tests skipped: table input has no per-participant cells")
        report.anova = [AnovaOutcome("pattern", status="skipped"), AnovaOutcome("participant", status="skipped")]
        return report

    factors = {
        "pattern": ([str(c) for c in cells.columns], pattern_groups(cells)),
        "participant": ([str(p) for p in cells.index], participant_groups(cells)),
    }
    for factor, (labels, groups) in factors.items():
        try:
            report.anova.append(AnovaOutcome(factor, one_way_anova(groups)))
        except DegenerateStatisticsError as e:
            logger.warning(f"{factor}-wise ANOVA degenerate: {e}")
            report.anova.append(AnovaOutcome(factor, status=str(e)))
            continue
        report.pairwise[f"tukey:{factor}"] = _pairwise_frame(factor, labels, tukey_hsd(groups, alpha))
        report.pairwise[f"bonferroni:{factor}"] = _pairwise_frame(factor, labels, bonferroni_pairwise(groups, alpha))
    return report


def _report_text(report: StatsReport) -> str:
    acc = report.accuracy_frame()
    lines = [f"patterns: {len(report.confusion.labels)}", f"trials: {report.confusion.total}", "",
             "per-pattern accuracy (%):"]
    for _, row in acc.iloc[:-1].iterrows():
        lines.append(f"  {row['pattern']}: {row['accuracy_percent']:.1f}")
    lines.append(f"mean accuracy: {acc.iloc[-1]['accuracy_percent']:.1f}%")

    lines += ["", "one-way ANOVA:"]
    for a in report.anova:
        if a.result is None:
            lines.append(f"  {a.factor}: {a.status}")
        else:
            r = a.result
            lines.append(f"  {a.factor}: F({r.df_between},{r.df_within}) = {r.f_stat:.4f}, p = {r.p_value:.6g}")

    for key, frame in report.pairwise.items():
        method, factor = key.split(":")
        significant = frame[frame["significant"] == 1]
        lines += ["", f"{method} ({factor}-wise, alpha {report.alpha}): "
                      f"{len(significant)} of {len(frame)} pairs significant"]
        if factor == "pattern" and len(significant):
            for (a, b), n in complexity_breakdown(frame).items():
                lines.append(f"  {a}-motor vs {b}-motor: {n}")
    if report.notes:
        lines += [""] + [f"note: {n}" for n in report.notes]
    return "\n".join(lines) + "\n"


def write_stats_report(report: StatsReport, out_dir: Union[str, Path]) -> List[Path]:
    """Write confusion_percent.csv, accuracy.csv, anova.csv, tukey.csv, bonferroni.csv and report.txt."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    def save(frame: pd.DataFrame, name: str, index: bool = False) -> None:
        path = out_dir / name
        frame.to_csv(path, index=index, float_format="%.1f", lineterminator="\n")
        written.append(path)

    save(report.confusion.to_percent(), "confusion_percent.csv", index=True)
    save(report.accuracy_frame(), "accuracy.csv")
    save(report.anova_frame(), "anova.csv")
    for method in ("tukey", "bonferroni"):
        frames = [f for k, f in report.pairwise.items() if k.startswith(method + ":")]
        save(pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=PAIRWISE_COLUMNS),
             f"{method}.csv")

    path = out_dir / "report.txt"
    path.write_text(_report_text(report))
    written.append(path)
    logger.info(f"Wrote stats report to {out_dir}")
    return written
