"""
Stats module for the GuideTouch toolkit.
Confusion matrices and accuracies, one-way ANOVA with exact F tail
probabilities, Tukey HSD (Tukey-Kramer for unequal sizes) and
Bonferroni-corrected Welch t-tests.
"""

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import brentq
from scipy.special import gammaln, ndtr

from app.errors import DomainError, InfiniteFError, NoVarianceError, PatternError
from app.haptics_codec import name
from app.utils.logger import get_logger

logger = get_logger("Stats")

BETA_EPS = 1e-15
BETA_TINY = 1e-300
BETA_MAX_ITER = 10_000

# Relative size below which a sum of squares counts as exactly zero
ZERO_SS_RTOL = 1e-20


# --- special functions -----------------------------------------------------

def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    """Continued fraction for I_x(a, b), modified Lentz evaluation."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < BETA_TINY:
        d = BETA_TINY
    d = 1.0 / d
    h = d
    for m in range(1, BETA_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < BETA_TINY:
            d = BETA_TINY
        c = 1.0 + aa / c
        if abs(c) < BETA_TINY:
            c = BETA_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < BETA_TINY:
            d = BETA_TINY
        c = 1.0 + aa / c
        if abs(c) < BETA_TINY:
            c = BETA_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < BETA_EPS:
            return h
    raise DomainError(f"incomplete beta did not converge for a={a}, b={b}, x={x}")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """
    Regularized incomplete beta function I_x(a, b).

    Args:
        a, b: Shape parameters (> 0)
        x: Upper limit in [0, 1]
    """
    if a <= 0 or b <= 0:
        raise DomainError(f"beta shapes must be positive, got a={a}, b={b}")
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"x must be in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def _check_df(*dfs: float) -> None:
    for df in dfs:
        if not df >= 1:
            raise DomainError(f"degrees of freedom must be >= 1, got {df}")


def f_cdf(x: float, d1: float, d2: float) -> float:
    """CDF of the F distribution with (d1, d2) degrees of freedom."""
    _check_df(d1, d2)
    if x < 0 or math.isnan(x):
        raise DomainError(f"F value must be >= 0, got {x}")
    if x == 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    return regularized_incomplete_beta(d1 / 2.0, d2 / 2.0, d1 * x / (d1 * x + d2))


def f_sf(x: float, d1: float, d2: float) -> float:
    """Upper tail 1 - f_cdf, computed without cancellation."""
    _check_df(d1, d2)
    if x < 0 or math.isnan(x):
        raise DomainError(f"F value must be >= 0, got {x}")
    if x == 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    return regularized_incomplete_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * x))


def t_sf_two_sided(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student's t with df degrees of freedom."""
    if not df > 0:
        raise DomainError(f"degrees of freedom must be positive, got {df}")
    if math.isinf(t):
        return 0.0
    return regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t))


# --- studentized range -----------------------------------------------------

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)
_Z_LIMIT = 8.5
_Z_PANELS = 16
_S_PANELS = 16
_S_HALF_WIDTH_SD = 9.0


def _panel_rule(lo: float, hi: float, panels: int) -> Tuple[np.ndarray, np.ndarray]:
    edges = np.linspace(lo, hi, panels + 1)
    half = np.diff(edges) / 2.0
    mid = (edges[:-1] + edges[1:]) / 2.0
    nodes = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    weights = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
    return nodes, weights


_Z_NODES, _Z_WEIGHTS = _panel_rule(-_Z_LIMIT, _Z_LIMIT, _Z_PANELS)
_Z_PHI = np.exp(-0.5 * _Z_NODES ** 2) / math.sqrt(2.0 * math.pi)


def _range_cdf_normal(w: np.ndarray, k: int) -> np.ndarray:
    """P(range of k iid standard normals <= w), vectorized over w."""
    w = np.asarray(w, dtype=float)[..., None]
    inner = np.clip(ndtr(_Z_NODES) - ndtr(_Z_NODES - w), 0.0, 1.0) ** (k - 1)
    return k * np.sum(_Z_WEIGHTS * _Z_PHI * inner, axis=-1)


@lru_cache(maxsize=256)
def _s_rule(df: float) -> Tuple[np.ndarray, np.ndarray]:
    """Quadrature nodes and density-weighted weights for S = sqrt(chi2_df / df)."""
    sd = 1.0 / math.sqrt(2.0 * df)
    lo = max(0.0, 1.0 - _S_HALF_WIDTH_SD * sd)
    hi = 1.0 + _S_HALF_WIDTH_SD * sd
    nodes, weights = _panel_rule(lo, hi, _S_PANELS)
    log_density = (math.log(2.0) + 0.5 * df * math.log(df) - 0.5 * df * math.log(2.0) - gammaln(0.5 * df)
                   + (df - 1.0) * np.log(nodes) - 0.5 * df * nodes ** 2)
    return nodes, weights * np.exp(log_density)


def studentized_range_cdf(q: float, k: int, df: float) -> float:
    """
    CDF of the studentized range for k means and df error degrees of freedom.

    Outer integral over the distribution of the pooled SD, inner integral of
    the normal range distribution; both by panelled Gauss-Legendre rules.
    """
    if k < 2:
        raise DomainError(f"need k >= 2 groups, got {k}")
    _check_df(df)
    if q <= 0:
        return 0.0
    if math.isinf(q):
        return 1.0
    nodes, weights = _s_rule(float(df))
    value = float(np.sum(weights * _range_cdf_normal(q * nodes, k)))
    return min(1.0, max(0.0, value))


def studentized_range_sf(q: float, k: int, df: float) -> float:
    return max(0.0, 1.0 - studentized_range_cdf(q, k, df))


@lru_cache(maxsize=512)
def studentized_range_critical(alpha: float, k: int, df: float) -> float:
    """Upper-alpha critical value q(alpha; k, df)."""
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must be in (0, 1), got {alpha}")
    target = 1.0 - alpha
    hi = 4.0
    while studentized_range_cdf(hi, k, df) < target:
        hi *= 2.0
        if hi > 1e4:
            raise DomainError(f"critical value not bracketed for alpha={alpha}, k={k}, df={df}")
    return brentq(lambda q: studentized_range_cdf(q, k, df) - target, 1e-9, hi, xtol=1e-10, rtol=1e-12)


# --- confusion matrices ----------------------------------------------------

class ConfusionMatrix:
    """Counts of (true, predicted) pattern pairs; rows are true labels."""

    def __init__(self, labels: Sequence[str], counts):
        self.labels = tuple(labels)
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("confusion matrix labels must be unique")
        counts = np.asarray(counts)
        if counts.shape != (len(self.labels), len(self.labels)):
            raise ValueError(f"counts shape {counts.shape} does not match {len(self.labels)} labels")
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        self.counts = counts.astype(int)

    @classmethod
    def from_pairs(cls, true_labels: Sequence[str], predicted_labels: Sequence[str],
                   labels: Sequence[str]) -> "ConfusionMatrix":
        """Cross-tabulate label pairs over a fixed label order."""
        known = set(labels)
        for label in list(true_labels) + list(predicted_labels):
            if label not in known:
                raise PatternError(f"unknown label '{label}'")
        if len(true_labels) == 0:
            return cls(labels, np.zeros((len(labels), len(labels)), dtype=int))
        table = pd.crosstab(pd.Series(list(true_labels), name="true"),
                            pd.Series(list(predicted_labels), name="predicted"))
        table = table.reindex(index=list(labels), columns=list(labels), fill_value=0)
        return cls(labels, table.to_numpy())

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.counts, index=list(self.labels), columns=list(self.labels))
        frame.index.name = "true"
        return frame

    def to_percent(self) -> pd.DataFrame:
        """Row-normalized percentages with one decimal, as in the published tables."""
        sums = self.row_sums().astype(float)
        with np.errstate(divide="ignore", invalid="ignore"):
            pct = np.where(sums[:, None] > 0, self.counts / sums[:, None] * 100.0, 0.0)
        frame = pd.DataFrame(np.round(pct, 1), index=list(self.labels), columns=list(self.labels))
        frame.index.name = "true"
        return frame

    def __eq__(self, other) -> bool:
        return (isinstance(other, ConfusionMatrix) and self.labels == other.labels
                and np.array_equal(self.counts, other.counts))

    def __repr__(self) -> str:
        return f"ConfusionMatrix({len(self.labels)} labels, total={self.total})"


def confusion_from_trials(records: Iterable, labels: Sequence[str]) -> ConfusionMatrix:
    """Confusion matrix of trial records (true vs perceived) over the given label order."""
    records = list(records)
    return ConfusionMatrix.from_pairs([name(r.true_mask) for r in records],
                                      [name(r.perceived_mask) for r in records], labels)


def per_pattern_accuracy(cm: ConfusionMatrix) -> List[float]:
    """Diagonal over row sum for every pattern."""
    sums = cm.row_sums()
    if np.any(sums == 0):
        empty = [cm.labels[i] for i in np.flatnonzero(sums == 0)]
        raise DomainError(f"zero row sum for {empty}")
    return list(np.diag(cm.counts) / sums)


def mean_accuracy(cm: ConfusionMatrix) -> float:
    """Unweighted mean of the per-pattern accuracies."""
    return float(np.mean(per_pattern_accuracy(cm)))


# --- accuracy cells --------------------------------------------------------

def accuracy_cells(records: Iterable, labels: Optional[Sequence[str]] = None) -> pd.DataFrame:
    """
    Per-participant, per-pattern accuracy.

    Returns:
        DataFrame indexed by participant_id with one column per true pattern
    """
    rows = [(r.participant_id, name(r.true_mask), float(r.true_mask == r.perceived_mask)) for r in records]
    if not rows:
        raise ValueError("no trial records")
    frame = pd.DataFrame(rows, columns=["participant_id", "pattern", "correct"])
    cells = frame.pivot_table(index="participant_id", columns="pattern", values="correct", aggfunc="mean")
    if labels is not None:
        cells = cells.reindex(columns=[l for l in labels if l in cells.columns])
    return cells.sort_index()


def pattern_groups(cells: pd.DataFrame) -> List[np.ndarray]:
    """One ANOVA group per pattern (samples = participants)."""
    return [cells[c].dropna().to_numpy() for c in cells.columns]


def participant_groups(cells: pd.DataFrame) -> List[np.ndarray]:
    """One ANOVA group per participant (samples = patterns)."""
    return [cells.loc[p].dropna().to_numpy() for p in cells.index]


# --- ANOVA -----------------------------------------------------------------

@dataclass(frozen=True)
class AnovaResult:
    f_stat: float
    df_between: int
    df_within: int
    p_value: float
    group_means: Tuple[float, ...]
    ss_between: float
    ss_within: float
    ms_between: float
    ms_within: float


def _as_groups(groups) -> List[np.ndarray]:
    return [np.asarray(g, dtype=float).ravel() for g in groups]


def _sums_of_squares(groups: List[np.ndarray]) -> Tuple[float, float, np.ndarray, float]:
    all_values = np.concatenate(groups)
    grand = all_values.mean()
    means = np.array([g.mean() for g in groups])
    sizes = np.array([g.size for g in groups])
    ssb = float(np.sum(sizes * (means - grand) ** 2))
    ssw = float(sum(np.sum((g - m) ** 2) for g, m in zip(groups, means)))
    scale = max(float(np.sum(all_values ** 2)), 1.0)
    return ssb, ssw, means, scale


def one_way_anova(groups) -> AnovaResult:
    """
    Classic one-way ANOVA.

    Raises:
        NoVarianceError: every observation is identical
        InfiniteFError: groups are internally constant but differ from each other
    """
    groups = _as_groups(groups)
    k = len(groups)
    if k < 2:
        raise DomainError("need at least two groups")
    if any(g.size == 0 for g in groups):
        raise DomainError("every group needs at least one sample")
    n = sum(g.size for g in groups)
    if n <= k:
        raise DomainError(f"need more samples ({n}) than groups ({k})")

    ssb, ssw, means, scale = _sums_of_squares(groups)
    df_b, df_w = k - 1, n - k
    if ssw <= ZERO_SS_RTOL * scale:
        if ssb <= ZERO_SS_RTOL * scale:
            raise NoVarianceError()
        raise InfiniteFError()

    msb, msw = ssb / df_b, ssw / df_w
    f = msb / msw
    p = f_sf(f, df_b, df_w)
    logger.debug(f"ANOVA F({df_b},{df_w})={f:.4f}, p={p:.3g}")
    return AnovaResult(f, df_b, df_w, p, tuple(float(m) for m in means), ssb, ssw, msb, msw)


# --- pairwise comparisons --------------------------------------------------

@dataclass(frozen=True)
class PairwiseResult:
    pair: Tuple[int, int]
    statistic: float
    raw_p: float
    adjusted_p: float
    significant_at_alpha: bool
    mean_difference: float = 0.0
    degenerate: bool = False


def _pooled_within(groups: List[np.ndarray]) -> Tuple[float, int]:
    k = len(groups)
    n = sum(g.size for g in groups)
    if k < 2 or any(g.size == 0 for g in groups):
        raise DomainError("need at least two non-empty groups")
    if n <= k:
        raise DomainError(f"need more samples ({n}) than groups ({k})")
    ssb, ssw, _, scale = _sums_of_squares(groups)
    if ssw <= ZERO_SS_RTOL * scale:
        if ssb <= ZERO_SS_RTOL * scale:
            raise NoVarianceError()
        raise InfiniteFError()
    return ssw / (n - k), n - k


def tukey_hsd(groups, alpha: float = 0.05) -> List[PairwiseResult]:
    """
    All-pairs Tukey HSD; unequal sizes use the Tukey-Kramer standard error.

    statistic is the studentized range q; raw_p is the unadjusted pooled
    t-test p-value and adjusted_p the studentized-range tail probability.
    """
    groups = _as_groups(groups)
    msw, df = _pooled_within(groups)
    k = len(groups)
    q_crit = studentized_range_critical(alpha, k, df)
    results = []
    for i, j in combinations(range(k), 2):
        diff = float(groups[i].mean() - groups[j].mean())
        se = math.sqrt(msw / 2.0 * (1.0 / groups[i].size + 1.0 / groups[j].size))
        q = abs(diff) / se
        raw_p = t_sf_two_sided(q / math.sqrt(2.0), df)
        adjusted_p = studentized_range_sf(q, k, df)
        results.append(PairwiseResult((i, j), q, raw_p, adjusted_p, q > q_crit, diff))
    return results


def welch_t(a: np.ndarray, b: np.ndarray) -> Tuple[float, float, bool]:
    """
    Welch two-sample t-test.

    Returns:
        (t, two-sided p, degenerate); degenerate when both samples have zero variance
    """
    if a.size < 2 or b.size < 2:
        raise DomainError("Welch t-test needs at least two samples per group")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    diff = float(a.mean() - b.mean())
    ea, eb = va / a.size, vb / b.size
    se2 = ea + eb
    if se2 == 0.0:
        return (0.0, 1.0, True) if diff == 0.0 else (math.copysign(math.inf, diff), 0.0, True)
    t = diff / math.sqrt(se2)
    df = se2 ** 2 / (ea ** 2 / (a.size - 1) + eb ** 2 / (b.size - 1))
    return t, t_sf_two_sided(t, df), False


def bonferroni_pairwise(groups, alpha: float = 0.05) -> List[PairwiseResult]:
    """
    Welch t-test per pair with Bonferroni adjustment, min(1, p * m).

    Pairs where both groups have zero variance are flagged degenerate.
    """
    groups = _as_groups(groups)
    k = len(groups)
    if k < 2:
        raise DomainError("need at least two groups")
    m = k * (k - 1) // 2
    results = []
    for i, j in combinations(range(k), 2):
        t, p, degenerate = welch_t(groups[i], groups[j])
        adjusted = min(1.0, p * m)
        diff = float(groups[i].mean() - groups[j].mean())
        results.append(PairwiseResult((i, j), t, p, adjusted, adjusted < alpha, diff, degenerate))
    flagged = sum(r.degenerate for r in results)
    if flagged:
        logger.warning(f"{flagged} of {m} pairs have zero variance in both groups")
    return results
