"""Reliability evaluation: ROC curves, TPR at fixed FPR, detectability as a
function of observed length, p-value calibration, text diversity, and the
closed-form sample-size estimate.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .detect import (
    HitSequence,
    RunLengthConfig,
    UndefinedStatisticError,
    calibrate_threshold,
    p_value,
    run_length_test,
    winmax,
    z_score,
)
from .errors import UsageError


@dataclass(frozen=True)
class RocCurve:
    """Threshold-swept operating points plus the tie-aware area under them."""

    points: list[tuple[float, float]]
    auc: float


def _check_scores(scores: Sequence[float], label: str) -> np.ndarray:
    arr = np.asarray(scores, dtype=np.float64)
    if arr.size == 0:
        raise UsageError(f"{label} scores are empty")
    if not np.all(np.isfinite(arr)):
        raise UsageError(f"{label} scores contain non-finite values")
    return arr


def roc_auc(positives: Sequence[float], negatives: Sequence[float]) -> RocCurve:
    """ROC curve and AUC for "flag when statistic exceeds threshold".

    The AUC is the Mann-Whitney probability P(pos > neg) + P(pos == neg)/2,
    computed from average ranks, which equals the trapezoidal area under the
    tie-grouped curve.
    """
    pos = _check_scores(positives, "positive")
    neg = _check_scores(negatives, "negative")
    ranks = rankdata(np.concatenate([pos, neg]))
    auc = (ranks[: pos.size].sum() - pos.size * (pos.size + 1) / 2.0) / (pos.size * neg.size)
    points = [(0.0, 0.0)]
    for thr in np.unique(np.concatenate([pos, neg]))[::-1]:
        points.append(
            (float(np.mean(neg >= thr)), float(np.mean(pos >= thr)))
        )
    return RocCurve(points=points, auc=float(auc))


def tpr_at_fpr(
    positives: Sequence[float], negatives: Sequence[float], target_fpr: float
) -> float:
    """True-positive rate at the null-calibrated threshold for target_fpr.

    The threshold is the nearest-rank (1 - fpr) quantile of the negative
    scores and detection means statistic > threshold, so the realized FPR on
    the calibration sample itself never exceeds the target.
    """
    pos = _check_scores(positives, "positive")
    neg = _check_scores(negatives, "negative")
    if neg.size < 1.0 / target_fpr:
        warnings.warn(
            f"only {neg.size} null scores for target FPR {target_fpr}; the threshold "
            "sits beyond the empirical tail and the estimate is unstable",
            stacklevel=2,
        )
    threshold = calibrate_threshold(neg.tolist(), target_fpr)
    return float(np.mean(pos > threshold))


@dataclass(frozen=True)
class DetectorSpec:
    """Which detector to run when sweeping prefixes, with its knobs."""

    name: str = "z"
    ignore_repeats: bool = False
    min_window: int = 1
    max_window: int | None = None
    run_config: RunLengthConfig = field(default_factory=RunLengthConfig)

    def __post_init__(self) -> None:
        if self.name not in ("z", "winmax", "runlen"):
            raise UsageError(f"unknown detector {self.name!r}")


def detector_statistic(
    spec: DetectorSpec, hits: HitSequence, gamma: float, record_id: str = ""
) -> float | None:
    """Run spec's detector on hits; None when the statistic is undefined."""
    try:
        if spec.name == "z":
            res = z_score(hits, gamma, ignore_repeats=spec.ignore_repeats, record_id=record_id)
        elif spec.name == "winmax":
            res = winmax(
                hits,
                gamma,
                min_window=spec.min_window,
                max_window=spec.max_window,
                record_id=record_id,
            )
        else:
            res = run_length_test(hits, gamma, config=spec.run_config, record_id=record_id)
    except UndefinedStatisticError:
        return None
    return res.statistic


def detectability_at_t(
    positive_hits: Sequence[HitSequence],
    negative_hits: Sequence[HitSequence],
    gamma: float,
    t_grid: Sequence[int],
    detector: DetectorSpec | None = None,
) -> list[tuple[int, float, int]]:
    """ROC-AUC of the detector on t-token prefixes, per grid point.

    Rows are (t, auc, n_samples) where n_samples counts the records that are
    at least t tokens long and yield a defined statistic; it is non-increasing
    in t.  Grid points where either class contributes nothing are dropped.
    """
    detector = detector or DetectorSpec()
    grid = sorted({int(t) for t in t_grid})
    if not grid or grid[0] < 1:
        raise UsageError("t_grid must contain positive lengths")
    rows: list[tuple[int, float, int]] = []
    for t in grid:
        pos_scores = []
        for i, hits in enumerate(positive_hits):
            if len(hits.verdicts) < t:
                continue
            stat = detector_statistic(detector, hits.prefix(t), gamma, record_id=f"pos-{i}")
            if stat is not None:
                pos_scores.append(stat)
        neg_scores = []
        for i, hits in enumerate(negative_hits):
            if len(hits.verdicts) < t:
                continue
            stat = detector_statistic(detector, hits.prefix(t), gamma, record_id=f"neg-{i}")
            if stat is not None:
                neg_scores.append(stat)
        if not pos_scores or not neg_scores:
            continue
        curve = roc_auc(pos_scores, neg_scores)
        rows.append((t, curve.auc, len(pos_scores) + len(neg_scores)))
    return rows


def calibration_curve(
    null_statistics: Sequence[float], thresholds: Sequence[float]
) -> list[tuple[float, float, float]]:
    """Empirical null exceedance rate vs the analytic normal tail.

    Rows are (threshold, empirical_fpr, analytic_p) with empirical_fpr the
    fraction of null z statistics strictly above the threshold and analytic_p
    the one-tailed normal survival value.
    """
    stats = _check_scores(null_statistics, "null")
    rows = []
    for thr in thresholds:
        thr = float(thr)
        rows.append((thr, float(np.mean(stats > thr)), p_value(thr)))
    return rows


_DIVERSITY_CLAMP = 1.0 - 1e-9


def diversity_from_fractions(fractions: Sequence[float]) -> float:
    """-log(1 - prod(fractions)), the repetition-compounding diversity score.

    The product is clamped to 1 - 1e-9 so fully repetitive text maps to a
    large finite score instead of infinity.
    """
    prod = 1.0
    for f in fractions:
        if not 0.0 <= f <= 1.0:
            raise UsageError(f"distinct-gram fractions must lie in [0, 1], got {f}")
        prod *= f
    return -math.log(1.0 - min(prod, _DIVERSITY_CLAMP))


def distinct_fraction(tokens: Sequence[int], n: int) -> float:
    """Distinct n-grams over total n-grams in the stream."""
    grams = len(tokens) - n + 1
    if grams < 1:
        raise UsageError(f"need at least {n} tokens for {n}-grams, got {len(tokens)}")
    seen = {tuple(tokens[i : i + n]) for i in range(grams)}
    return len(seen) / grams


def diversity(tokens: Sequence[int], n_max: int = 4) -> float:
    """Diversity of a token stream from its 1..n_max distinct-gram fractions."""
    if n_max < 1:
        raise UsageError(f"n_max must be >= 1, got {n_max}")
    return diversity_from_fractions(
        [distinct_fraction(tokens, n) for n in range(1, n_max + 1)]
    )


def tokens_to_detect(z: float, gamma: float, epsilon: float) -> float:
    """Expected tokens needed to reach z when the attacked green rate is
    gamma*(1+epsilon): T = z^2 (1-gamma) / (gamma epsilon^2).
    """
    if not 0.0 < gamma < 1.0:
        raise UsageError(f"gamma must be in (0, 1), got {gamma}")
    if z < 0.0:
        raise UsageError(f"z must be >= 0, got {z}")
    if epsilon < 0.0:
        raise UsageError(f"epsilon must be >= 0, got {epsilon}")
    if epsilon == 0.0:
        return math.inf
    return z * z * (1.0 - gamma) / (gamma * epsilon * epsilon)


def _write_csv(path: str, header: Sequence[str], rows: Sequence[Sequence[object]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [f"{v:.10g}" if isinstance(v, float) else v for v in row]
            )


def write_roc_csv(path: str, curve: RocCurve) -> None:
    _write_csv(path, ["fpr", "tpr"], curve.points)


def write_detectability_csv(path: str, rows: Sequence[tuple[int, float, int]]) -> None:
    _write_csv(path, ["t", "metric", "n_samples"], rows)


def write_calibration_csv(path: str, rows: Sequence[tuple[float, float, float]]) -> None:
    _write_csv(path, ["threshold", "empirical_fpr", "analytic_p"], rows)
