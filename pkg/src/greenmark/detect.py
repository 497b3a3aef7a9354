"""Detectors: per-token verdicts, the global z-test, the WinMax windowed scan,
and the run-length chi-squared test, plus empirical threshold calibration.

All detectors consume a HitSequence of Green/Red/Unscored verdicts produced by
:func:`score_tokens`.  The null hypothesis throughout: absent a watermark,
each scored token is green independently with probability gamma.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Any, Iterable, Sequence

import numpy as np
from scipy.stats import chi2 as _chi2
from scipy.stats import norm as _norm

from .errors import DataError, UndefinedStatisticError, UsageError
from .prf import ContextMode, seeds_from_context_array, selfhash_seeds_array
from .records import WatermarkConfig
from .watermark import green_mask


class Verdict(IntEnum):
    RED = 0
    GREEN = 1
    UNSCORED = -1


@dataclass
class HitSequence:
    """Per-position verdicts plus the dedup key ((h context tokens), token).

    A position is Unscored when it lacks a full h-token context (the first h
    positions, unless a leading context was supplied).  Two positions share a
    dedup key exactly when they repeat the same (h+1)-gram.
    """

    verdicts: np.ndarray  # int8; values from Verdict
    dedup_keys: list[tuple[tuple[int, ...], int] | None]
    _first_mask: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.verdicts = np.asarray(self.verdicts, dtype=np.int8)
        if len(self.verdicts) != len(self.dedup_keys):
            raise UsageError("verdicts and dedup_keys must have equal length")

    def __len__(self) -> int:
        return len(self.verdicts)

    @property
    def scored_count(self) -> int:
        return int((self.verdicts != Verdict.UNSCORED).sum())

    @property
    def green_count(self) -> int:
        return int((self.verdicts == Verdict.GREEN).sum())

    def first_occurrence_mask(self) -> np.ndarray:
        """True at scored positions whose dedup key appears there first."""
        if self._first_mask is None:
            mask = np.zeros(len(self.verdicts), dtype=bool)
            seen: set = set()
            for i, key in enumerate(self.dedup_keys):
                if key is None:
                    continue
                if key not in seen:
                    seen.add(key)
                    mask[i] = True
            self._first_mask = mask
        return self._first_mask

    def prefix(self, length: int) -> "HitSequence":
        """The sub-sequence covering the first `length` emitted tokens."""
        length = max(0, min(length, len(self.verdicts)))
        return HitSequence(self.verdicts[:length].copy(), self.dedup_keys[:length])


@dataclass
class DetectionResult:
    """One detector's output for one record; `window` only for windowed scans.

    statistic/p_value are None when the statistic was undefined (this is how
    the CLI marks such records while still exiting 0).
    """

    id: str
    detector: str
    statistic: float | None
    p_value: float | None
    green_count: int
    scored_count: int
    window: tuple[int, int] | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "detector": self.detector,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "green_count": self.green_count,
            "scored_count": self.scored_count,
            "window": list(self.window) if self.window is not None else None,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "DetectionResult":
        missing = {"id", "detector", "statistic", "p_value", "green_count", "scored_count"} - d.keys()
        if missing:
            raise DataError(f"detection result missing keys: {sorted(missing)}")
        window = d.get("window")
        return cls(
            id=str(d["id"]),
            detector=str(d["detector"]),
            statistic=None if d["statistic"] is None else float(d["statistic"]),
            p_value=None if d["p_value"] is None else float(d["p_value"]),
            green_count=int(d["green_count"]),
            scored_count=int(d["scored_count"]),
            window=(int(window[0]), int(window[1])) if window is not None else None,
        )


def score_tokens(
    tokens: Sequence[int],
    config: WatermarkConfig,
    leading_context: Sequence[int] | None = None,
) -> HitSequence:
    """Mark each token Green/Red by recomputing its greenlist membership.

    LeftHash: token t is green iff it lies in the greenlist seeded by the h
    tokens before it.  SelfHash: the self-consistency check -- token t is
    green iff it lies in the greenlist seeded by (those h tokens, t itself).
    Positions without a full h-token context are Unscored; pass the h tokens
    that preceded `tokens` (e.g. the prompt's tail) as `leading_context` to
    score from position 0.
    """
    h = config.scheme.h
    lead = [int(t) for t in (leading_context or [])]
    toks = [int(t) for t in tokens]
    n = len(toks)
    verdicts = np.full(n, int(Verdict.UNSCORED), dtype=np.int8)
    keys: list[tuple[tuple[int, ...], int] | None] = [None] * n
    stream = np.array(lead + toks, dtype=np.int64)
    first_scored = max(0, h - len(lead))
    if n == 0 or first_scored >= n:
        return HitSequence(verdicts, keys)

    scored_pos = np.arange(first_scored, n)
    abs_pos = scored_pos + len(lead)
    # one context row per scored position: stream[a-h : a]
    windows = np.lib.stride_tricks.sliding_window_view(stream, h)
    contexts = windows[abs_pos - h]
    observed = stream[abs_pos]
    if config.scheme.context_mode is ContextMode.SELFHASH:
        seeds = selfhash_seeds_array(config.scheme, config.salt, contexts, observed)
    else:
        seeds = seeds_from_context_array(config.scheme, config.salt, contexts)
    mask = green_mask(seeds, observed, config.vocab_size, config.gamma)
    verdicts[scored_pos] = np.where(mask, int(Verdict.GREEN), int(Verdict.RED))
    for row, t, tok in zip(contexts, scored_pos, observed):
        keys[t] = (tuple(int(x) for x in row), int(tok))
    return HitSequence(verdicts, keys)


def z_from_counts(green: int, scored: int, gamma: float) -> float:
    """z = (|s| - gamma*T) / sqrt(gamma*(1-gamma)*T); the one-proportion z."""
    if scored <= 0:
        raise UndefinedStatisticError("z-score undefined: no scored tokens")
    if not 0.0 < gamma < 1.0:
        raise UsageError(f"gamma must be in (0, 1), got {gamma}")
    return (green - gamma * scored) / math.sqrt(gamma * (1.0 - gamma) * scored)


def p_value(z: float) -> float:
    """One-tailed upper normal tail: P(Z >= z) under the null."""
    return float(_norm.sf(z))


def z_score(
    hits: HitSequence,
    gamma: float,
    ignore_repeats: bool = False,
    record_id: str = "",
) -> DetectionResult:
    """Global z-test over all scored tokens (optionally first-occurrence only).

    With ignore_repeats, positions repeating an already-seen (h+1)-gram are
    dropped before counting, which corrects the variance underestimation that
    duplicated hits induce under the null.
    """
    if ignore_repeats:
        include = hits.first_occurrence_mask()
    else:
        include = hits.verdicts != Verdict.UNSCORED
    scored = int(include.sum())
    green = int((include & (hits.verdicts == Verdict.GREEN)).sum())
    z = z_from_counts(green, scored, gamma)
    return DetectionResult(
        id=record_id,
        detector="z",
        statistic=z,
        p_value=p_value(z),
        green_count=green,
        scored_count=scored,
    )


def winmax(
    hits: HitSequence,
    gamma: float,
    min_window: int = 1,
    max_window: int | None = None,
    record_id: str = "",
) -> DetectionResult:
    """Maximum windowed z over all contiguous windows of scored positions.

    Unscored positions are removed from the index space before scanning; the
    reported window is [start, end) in original token positions.  The scan
    uses prefix sums, one vectorized pass per window length (O(T^2) work
    total), and ties resolve to the shortest window, then the earliest start.

    The reported p_value is the nominal per-window normal tail of the maximum
    and is NOT calibrated for the maximization; calibrate empirically against
    null scores (see calibrate_threshold) before thresholding it.
    """
    if min_window < 1:
        raise UsageError(f"min_window must be >= 1, got {min_window}")
    if max_window is not None and max_window < min_window:
        raise UsageError(f"max_window {max_window} < min_window {min_window}")
    orig = np.flatnonzero(hits.verdicts != Verdict.UNSCORED)
    m = len(orig)
    if m == 0:
        raise UndefinedStatisticError("winmax undefined: no scored tokens")
    if min_window > m:
        raise UndefinedStatisticError(f"winmax undefined: min_window {min_window} > scored length {m}")
    hs = (hits.verdicts[orig] == Verdict.GREEN).astype(np.float64)
    prefix = np.concatenate([[0.0], np.cumsum(hs)])
    top = m if max_window is None else min(max_window, m)
    best = -math.inf
    best_i = best_len = 0
    for length in range(min_window, top + 1):
        denom = math.sqrt(gamma * (1.0 - gamma) * length)
        zs = (prefix[length:] - prefix[:-length] - gamma * length) / denom
        i = int(np.argmax(zs))
        if zs[i] > best:
            best = float(zs[i])
            best_i, best_len = i, length
    window = (int(orig[best_i]), int(orig[best_i + best_len - 1]) + 1)
    green = int(hs.sum())
    return DetectionResult(
        id=record_id,
        detector="winmax",
        statistic=best,
        p_value=p_value(best),
        green_count=green,
        scored_count=m,
        window=window,
    )


_VARIANTS = ("pearson", "gtest", "cressie_read")
_COUNTINGS = ("trials_until_red", "green_blocks")


@dataclass(frozen=True)
class RunLengthConfig:
    """Settings for the run-length chi-squared test.

    statistic_variant: 'pearson', 'gtest', or 'cressie_read' (lambda = 2/3).
    min_run_length_counted: drop runs shorter than this and condition the
    geometric null on length >= it (2 ignores the noisy length-1 bin).
    min_expected_count: lengths whose expected frequency falls below this are
    pooled into one open-ended tail bin.
    counting: 'trials_until_red' (default) treats each red as the success
    ending a run, so a run's length is its green count plus one and a
    trailing all-green tail is censored (discarded).  'green_blocks' counts
    maximal consecutive-green block lengths instead; that convention does NOT
    follow the geometric null used for expected frequencies and is provided
    only for comparison.
    """

    statistic_variant: str = "pearson"
    min_run_length_counted: int = 1
    min_expected_count: float = 5.0
    counting: str = "trials_until_red"

    def __post_init__(self) -> None:
        if self.statistic_variant not in _VARIANTS:
            raise UsageError(f"statistic_variant must be one of {_VARIANTS}")
        if self.min_run_length_counted < 1:
            raise UsageError("min_run_length_counted must be >= 1")
        if self.min_expected_count <= 0.0:
            raise UsageError("min_expected_count must be positive")
        if self.counting not in _COUNTINGS:
            raise UsageError(f"counting must be one of {_COUNTINGS}")


def run_lengths(hits: HitSequence, counting: str = "trials_until_red") -> list[int]:
    """Decompose the scored verdict stream into run lengths (see RunLengthConfig)."""
    stream = hits.verdicts[hits.verdicts != Verdict.UNSCORED]
    if counting == "trials_until_red":
        # a trailing green run never saw its red; censored, not a run
        red_pos = np.flatnonzero(stream == Verdict.RED)
        return np.diff(red_pos, prepend=-1).tolist()
    if counting == "green_blocks":
        green = np.concatenate(([0], (stream == Verdict.GREEN).astype(np.int8), [0]))
        edges = np.diff(green)
        starts = np.flatnonzero(edges == 1)
        ends = np.flatnonzero(edges == -1)
        return (ends - starts).tolist()
    raise UsageError(f"counting must be one of {_COUNTINGS}")


def run_length_test(
    hits: HitSequence,
    gamma: float,
    config: RunLengthConfig = RunLengthConfig(),
    record_id: str = "",
) -> DetectionResult:
    """Chi-squared goodness-of-fit of run lengths against the geometric null.

    Under the null, a run has length k with probability gamma^(k-1)*(1-gamma)
    (trials until the first red).  Each length from the shortest counted one
    upward gets its own bin until the expected frequency drops below
    config.min_expected_count; everything longer is pooled into one
    open-ended tail bin carrying the remaining geometric mass.  The cut
    depends on the data only through the number of runs, which keeps null
    p-values calibrated; degrees of freedom = bins - 1.
    """
    if not 0.0 < gamma < 1.0:
        raise UsageError(f"gamma must be in (0, 1), got {gamma}")
    m = config.min_run_length_counted
    runs = [k for k in run_lengths(hits, config.counting) if k >= m]
    if not runs:
        raise UndefinedStatisticError("run-length test undefined: no complete runs")
    n = len(runs)
    observed_by_k = Counter(runs)
    # geometric conditioned on length >= m: P(k) = gamma^(k-m) * (1-gamma)
    tail_start = m
    while n * gamma ** (tail_start - m) * (1.0 - gamma) >= config.min_expected_count:
        tail_start += 1
    if tail_start == m:
        raise UndefinedStatisticError(
            f"run-length test undefined: {n} runs cannot fill even one "
            f"{config.min_expected_count:g}-expected bin"
        )
    observed = [float(observed_by_k.get(k, 0)) for k in range(m, tail_start)]
    observed.append(float(sum(c for k, c in observed_by_k.items() if k >= tail_start)))
    expected = [n * gamma ** (k - m) * (1.0 - gamma) for k in range(m, tail_start)]
    expected.append(n * gamma ** (tail_start - m))
    dof = len(observed) - 1
    if config.statistic_variant == "pearson":
        stat = sum((o - e) ** 2 / e for o, e in zip(observed, expected))
    elif config.statistic_variant == "gtest":
        stat = 2.0 * sum(o * math.log(o / e) for o, e in zip(observed, expected) if o > 0)
    else:  # cressie_read, lambda = 2/3
        lam = 2.0 / 3.0
        stat = (2.0 / (lam * (lam + 1.0))) * sum(
            o * ((o / e) ** lam - 1.0) for o, e in zip(observed, expected) if o > 0
        )
    p = float(_chi2.sf(stat, dof))
    return DetectionResult(
        id=record_id,
        detector="runlen",
        statistic=float(stat),
        p_value=p,
        green_count=hits.green_count,
        scored_count=hits.scored_count,
    )


def calibrate_threshold(null_scores: Iterable[float], target_fpr: float) -> float:
    """Nearest-rank upper (1 - target_fpr) quantile of the null scores.

    With n sorted null scores, returns the ceil((1-fpr)*n)-th smallest; a
    score strictly above it is then a false positive at rate <= target_fpr on
    the calibration sample itself.
    """
    scores = sorted(float(s) for s in null_scores)
    if not scores:
        raise UsageError("calibrate_threshold needs at least one null score")
    if not 0.0 < target_fpr < 1.0:
        raise UsageError(f"target_fpr must be in (0, 1), got {target_fpr}")
    rank = math.ceil((1.0 - target_fpr) * len(scores))
    rank = min(max(rank, 1), len(scores))
    return scores[rank - 1]


def cumulative_counts(hits: HitSequence, ignore_repeats: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative (green, scored) counts after each emitted-token position.

    Entry t covers positions 0..t inclusive, honoring dedup semantics: a
    repeated (h+1)-gram's first occurrence is also its first within every
    prefix that contains it, so one global first-occurrence mask serves all
    prefixes.  Used for prefix (detectability-at-T) evaluation of the z-test.
    """
    if ignore_repeats:
        include = hits.first_occurrence_mask()
    else:
        include = hits.verdicts != Verdict.UNSCORED
    green_inc = include & (hits.verdicts == Verdict.GREEN)
    return np.cumsum(green_inc).astype(np.int64), np.cumsum(include).astype(np.int64)
