"""Toy language models: a synthetic logit source, an n-gram Markov model,
and a closed-vocabulary whitespace tokenizer.

Both model classes satisfy the LogitSource protocol used by the generation
loops: a `vocab_size` attribute plus `next_logits(context) -> float64 array`.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError, UsageError
from .prf import GOLDEN, MASK64, splitmix64, splitmix64_array

_MARKOV_FORMAT = "greenmark-markov-v1"
_NEG_INF_LOGIT = -1e30  # stands in for log(0); keeps LogitVectors finite


def _standard_normals(key: int, n: int) -> np.ndarray:
    """n deterministic standard normals from a SplitMix64 stream (Box-Muller)."""
    idx = np.arange(1, 2 * n + 1, dtype=np.uint64)
    draws = splitmix64_array(np.uint64(key & MASK64) + idx * np.uint64(GOLDEN))
    # u1 in (0, 1] so log never sees 0; u2 in [0, 1)
    u1 = ((draws[:n] >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53
    u2 = (draws[n:] >> np.uint64(11)).astype(np.float64) * 2.0**-53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def _entropy_nats(probs: np.ndarray) -> float:
    p = probs[probs > 0]
    return float(-(p * np.log(p)).sum())


_CALIB_KEY = 0x5EEDED_CA11B8A7E  # fixed probe stream; sigma depends only on (V, H*)


@lru_cache(maxsize=None)
def _sigma_for_entropy(vocab_size: int, entropy_target: float) -> float:
    """Scale sigma such that softmax(sigma * N(0,1)^V) has mean entropy ~ target.

    Softmax entropy is ln(V) at sigma = 0 and decreases monotonically in
    sigma, so a bisection on the mean entropy over a fixed probe set
    converges; the probe set is independent of any source's rng_seed so the
    calibration is a pure function of (vocab_size, entropy_target).
    """
    max_h = math.log(vocab_size)
    if not 0.0 < entropy_target <= max_h + 1e-9:
        raise UsageError(
            f"entropy_target must be in (0, ln(vocab_size)={max_h:.4f}], got {entropy_target}"
        )
    probes = [
        _standard_normals(splitmix64((_CALIB_KEY + j) & MASK64), vocab_size) for j in range(48)
    ]

    def mean_entropy(sigma: float) -> float:
        total = 0.0
        for g in probes:
            x = sigma * g
            x = x - x.max()
            e = np.exp(x)
            total += _entropy_nats(e / e.sum())
        return total / len(probes)

    lo, hi = 0.0, 1.0
    while mean_entropy(hi) > entropy_target and hi < 1e6:
        hi *= 2.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if mean_entropy(mid) > entropy_target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class SyntheticSource:
    """Deterministic Gaussian logits keyed by (rng_seed, last <=3 context tokens).

    Identical (rng_seed, context window) always produce identical logits; the
    scale is calibrated so the softmax of the raw logits has Shannon entropy
    ~ entropy_target nats (averaged over contexts).
    """

    context_window = 3

    def __init__(self, vocab_size: int, entropy_target: float, rng_seed: int = 0) -> None:
        if vocab_size < 2:
            raise UsageError(f"vocab_size must be >= 2, got {vocab_size}")
        self.vocab_size = int(vocab_size)
        self.entropy_target = float(entropy_target)
        self.rng_seed = int(rng_seed)
        self.sigma = _sigma_for_entropy(self.vocab_size, self.entropy_target)

    def _context_key(self, context: Sequence[int]) -> int:
        key = splitmix64(self.rng_seed & MASK64)
        for tok in list(context)[-self.context_window :]:
            key = splitmix64((key + int(tok) + 1) & MASK64)
        return key

    def next_logits(self, context: Sequence[int]) -> np.ndarray:
        return self.sigma * _standard_normals(self._context_key(context), self.vocab_size)


@dataclass
class MarkovModel:
    """Order-n add-k-smoothed Markov model over a closed token vocabulary.

    `counts` maps each observed context tuple to (successor ids, successor
    counts) arrays; unseen contexts fall back to the uniform distribution.
    With smoothing == 0, unobserved successors of a seen context get the
    finite stand-in logit -1e30 rather than -inf (LogitVectors must be
    finite); their softmax probability underflows to exactly 0.
    """

    order: int
    vocab_size: int
    smoothing: float
    counts: dict[tuple[int, ...], tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not isinstance(self.order, int) or self.order < 1:
            raise UsageError(f"order must be a positive integer, got {self.order!r}")
        if self.vocab_size < 2:
            raise UsageError(f"vocab_size must be >= 2, got {self.vocab_size}")
        if self.smoothing < 0:
            raise UsageError(f"smoothing must be >= 0, got {self.smoothing}")

    @property
    def context_window(self) -> int:
        return self.order

    def next_logits(self, context: Sequence[int]) -> np.ndarray:
        if len(context) < self.order:
            raise UsageError(f"context must supply at least order={self.order} tokens")
        ctx = tuple(int(t) for t in list(context)[-self.order :])
        entry = self.counts.get(ctx)
        v = self.vocab_size
        if entry is None:
            return np.full(v, -math.log(v))
        ids, cnts = entry
        total = float(cnts.sum())
        denom = total + self.smoothing * v
        probs = np.full(v, self.smoothing / denom if denom > 0 else 0.0)
        probs[ids] += cnts / denom
        logits = np.full(v, _NEG_INF_LOGIT)
        np.log(probs, out=logits, where=probs > 0)
        return logits


def train_markov(
    tokens: Sequence[int], order: int, vocab_size: int, smoothing: float = 0.1
) -> MarkovModel:
    """Count (context, successor) transitions of the given order over `tokens`."""
    model = MarkovModel(order=order, vocab_size=vocab_size, smoothing=smoothing)
    toks = [int(t) for t in tokens]
    if len(toks) <= order:
        raise DataError(f"training stream has {len(toks)} tokens; need more than order={order}")
    bad = [t for t in toks if not 0 <= t < vocab_size]
    if bad:
        raise DataError(f"training tokens outside vocabulary [0, {vocab_size}): {bad[:5]}")
    raw: dict[tuple[int, ...], Counter] = {}
    for i in range(order, len(toks)):
        ctx = tuple(toks[i - order : i])
        raw.setdefault(ctx, Counter())[toks[i]] += 1
    for ctx, counter in raw.items():
        ids = np.array(sorted(counter), dtype=np.int64)
        cnts = np.array([counter[i] for i in ids], dtype=np.int64)
        model.counts[ctx] = (ids, cnts)
    return model


def save_markov(model: MarkovModel, path: str | Path) -> None:
    payload = {
        "format": _MARKOV_FORMAT,
        "order": model.order,
        "vocab_size": model.vocab_size,
        "smoothing": model.smoothing,
        "contexts": [
            [list(ctx), ids.tolist(), cnts.tolist()]
            for ctx, (ids, cnts) in sorted(model.counts.items())
        ],
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def load_markov(path: str | Path) -> MarkovModel:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot load Markov model from {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != _MARKOV_FORMAT:
        raise DataError(
            f"{path}: not a {_MARKOV_FORMAT} file (format={payload.get('format')!r})"
            if isinstance(payload, dict)
            else f"{path}: not a {_MARKOV_FORMAT} file"
        )
    try:
        model = MarkovModel(
            order=int(payload["order"]),
            vocab_size=int(payload["vocab_size"]),
            smoothing=float(payload["smoothing"]),
        )
        for ctx, ids, cnts in payload["contexts"]:
            model.counts[tuple(int(t) for t in ctx)] = (
                np.array(ids, dtype=np.int64),
                np.array(cnts, dtype=np.int64),
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed Markov model payload: {exc}") from exc
    return model


def perplexity(model: MarkovModel, tokens: Sequence[int]) -> float:
    """exp(mean negative log-likelihood) of `tokens` under the model."""
    toks = [int(t) for t in tokens]
    if len(toks) <= model.order:
        raise UsageError(f"need more than order={model.order} tokens to score")
    total = 0.0
    n = 0
    for i in range(model.order, len(toks)):
        logits = model.next_logits(toks[:i])
        logprobs = logits - math.log(float(np.exp(logits - logits.max()).sum())) - logits.max()
        total += float(logprobs[toks[i]])
        n += 1
    return math.exp(-total / n)


UNK_TOKEN = "<unk>"
BEGIN_TOKEN = "<s>"


@dataclass
class Vocabulary:
    """Closed vocabulary mapping token strings <-> contiguous ids.

    Ids 0 and 1 are the unknown and begin specials.  Tokenization is plain
    whitespace splitting (punctuation stays attached to its word), which makes
    detokenize(tokenize(x)) == x after whitespace normalization whenever every
    word of x is in-vocabulary; out-of-vocabulary words become <unk>.
    """

    tokens: list[str]
    index: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.index:
            self.index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise DataError("vocabulary contains duplicate token strings")

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def unk_id(self) -> int:
        return self.index[UNK_TOKEN]

    @property
    def begin_id(self) -> int:
        return self.index[BEGIN_TOKEN]

    @classmethod
    def build(cls, text: str, max_size: int | None = None) -> "Vocabulary":
        """Build from whitespace-split words, most frequent first."""
        words = [w for w in text.split() if w not in (UNK_TOKEN, BEGIN_TOKEN)]
        if not words:
            raise DataError("cannot build a vocabulary from empty text")
        counts = Counter(words)
        budget = None if max_size is None else max(max_size - 2, 0)
        ordered = [w for w, _ in counts.most_common(budget)]
        return cls(tokens=[UNK_TOKEN, BEGIN_TOKEN, *ordered])

    def tokenize(self, text: str) -> list[int]:
        unk = self.unk_id
        return [self.index.get(w, unk) for w in text.split()]

    def detokenize(self, ids: Sequence[int]) -> str:
        n = len(self.tokens)
        out = []
        for i in ids:
            i = int(i)
            if not 0 <= i < n:
                raise UsageError(f"token id {i} outside vocabulary [0, {n})")
            out.append(self.tokens[i])
        return " ".join(out)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.tokens), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        try:
            tokens = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot load vocabulary from {path}: {exc}") from exc
        if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
            raise DataError(f"{path}: vocabulary file must be a JSON array of strings")
        return cls(tokens=tokens)
