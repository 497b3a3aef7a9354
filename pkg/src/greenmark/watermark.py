"""Watermark core: greenlist realization, logit biasing, generation loops.

The greenlist for a seed is the first floor(gamma * vocab_size) slots of a
seed-determined pseudo-random permutation of [0, vocab_size), realized as a
partial Fisher-Yates shuffle.  Step i of the shuffle swaps slots i and
j = i + (draw_i mod (vocab_size - i)), where draw_i is the i-th output of a
SplitMix64 stream keyed by the seed.  (The modulo introduces a bias of order
vocab_size / 2**64 per draw -- irrelevant at any realistic vocabulary size and
accepted for the sake of a fully portable integer-only construction.)

Membership queries do not materialize the permutation: they track only the
queried token's slot through the same swap sequence, which costs O(greenlist
size) time, O(1) memory, and vectorizes across query batches.  Property tests
pin trajectory membership == materialized-list membership.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .errors import UsageError
from .prf import (
    GOLDEN,
    MASK64,
    ContextMode,
    SeedingScheme,
    seed_from_context,
    selfhash_seeds_array,
    splitmix64,
    splitmix64_array,
)
from .records import TokenRecord, WatermarkConfig


class LogitSource(Protocol):
    """Anything that can propose next-token logits for a growing context."""

    vocab_size: int

    def next_logits(self, context: Sequence[int]) -> np.ndarray: ...


@dataclass(frozen=True)
class SamplerConfig:
    """Multinomial sampling settings for the generation loops."""

    temperature: float = 0.7
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not self.temperature > 0.0:
            raise UsageError(f"temperature must be > 0, got {self.temperature}")


def green_size(vocab_size: int, gamma: float) -> int:
    """floor(gamma * vocab_size): the pinned greenlist-size convention."""
    g = math.floor(gamma * vocab_size)
    if not 0 < g < vocab_size:
        raise UsageError(
            f"gamma={gamma} with vocab_size={vocab_size} gives greenlist size {g}; "
            "need 0 < size < vocab_size"
        )
    return g


def green_list(seed: int, vocab_size: int, gamma: float) -> np.ndarray:
    """Materialize the greenlist for `seed`: sorted int64 token ids."""
    g = green_size(vocab_size, gamma)
    idx = np.arange(1, g + 1, dtype=np.uint64)
    draws = splitmix64_array(np.uint64(seed & MASK64) + idx * np.uint64(GOLDEN))
    mods = np.arange(vocab_size, vocab_size - g, -1, dtype=np.uint64)
    js = (draws % mods).astype(np.int64) + np.arange(g, dtype=np.int64)
    slots: dict[int, int] = {}
    for i in range(g):
        j = int(js[i])
        vi = slots.get(i, i)
        slots[i] = slots.get(j, j)
        slots[j] = vi
    return np.array(sorted(slots[i] for i in range(g)), dtype=np.int64)


def is_green(seed: int, token: int, vocab_size: int, gamma: float) -> bool:
    """Whether `token` lies in the greenlist for `seed`, without materializing it."""
    g = green_size(vocab_size, gamma)
    if not 0 <= token < vocab_size:
        raise UsageError(f"token {token} outside vocabulary [0, {vocab_size})")
    pos = int(token)
    seed &= MASK64
    for i in range(g):
        draw = splitmix64((seed + (i + 1) * GOLDEN) & MASK64)
        j = i + draw % (vocab_size - i)
        if pos == j:
            return True  # placed at slot i < g; slots below the cursor are final
        if pos == i:
            pos = j
    return pos < g


def green_mask(seeds: np.ndarray, tokens: np.ndarray, vocab_size: int, gamma: float) -> np.ndarray:
    """Vectorized :func:`is_green` over paired (seed, token) arrays."""
    g = green_size(vocab_size, gamma)
    seeds = np.asarray(seeds, dtype=np.uint64)
    pos = np.asarray(tokens, dtype=np.int64).copy()
    if seeds.shape != pos.shape or seeds.ndim != 1:
        raise UsageError(f"seeds and tokens must be equal-length vectors, got {seeds.shape} vs {pos.shape}")
    if pos.size and (pos.min() < 0 or pos.max() >= vocab_size):
        raise UsageError(f"token ids outside vocabulary [0, {vocab_size})")
    for i in range(g):
        draws = splitmix64_array(seeds + np.uint64(((i + 1) * GOLDEN) & MASK64))
        j = (draws % np.uint64(vocab_size - i)).astype(np.int64) + i
        pos = np.where(pos == j, i, np.where(pos == i, j, pos))
    return pos < g


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically shifted softmax; returns a probability vector."""
    x = np.asarray(logits, dtype=np.float64)
    x = x - x.max()
    e = np.exp(x)
    return e / e.sum()


def bias_logits(logits: np.ndarray, green_ids: np.ndarray, delta: float) -> np.ndarray:
    """Return a copy of `logits` with +delta added at the green token ids."""
    out = np.array(logits, dtype=np.float64, copy=True)
    if not np.all(np.isfinite(out)):
        raise UsageError("logits must be finite")
    out[np.asarray(green_ids, dtype=np.int64)] += delta
    return out


def sample_token(logits: np.ndarray, temperature: float, rng: np.random.Generator) -> int:
    """Multinomial draw from softmax(logits / temperature); advances `rng` once."""
    if not temperature > 0.0:
        raise UsageError(f"temperature must be > 0, got {temperature}")
    probs = softmax(np.asarray(logits, dtype=np.float64) / temperature)
    cdf = np.cumsum(probs)
    u = rng.random()
    return min(int(np.searchsorted(cdf, u, side="right")), len(cdf) - 1)


def _check_generation_args(
    prompt: Sequence[int], length: int, config: WatermarkConfig, source: LogitSource
) -> None:
    if length < 1:
        raise UsageError(f"length must be >= 1, got {length}")
    if len(prompt) < config.scheme.h:
        raise UsageError(
            f"prompt must supply at least h={config.scheme.h} seed tokens, got {len(prompt)}"
        )
    if source.vocab_size != config.vocab_size:
        raise UsageError(
            f"source vocab_size {source.vocab_size} != config vocab_size {config.vocab_size}"
        )
    bad = [t for t in prompt if not 0 <= int(t) < config.vocab_size]
    if bad:
        raise UsageError(f"prompt tokens outside vocabulary: {bad[:5]}")


def generate_lefthash(
    prompt: Sequence[int],
    length: int,
    config: WatermarkConfig,
    source: LogitSource,
    sampler: SamplerConfig,
    record_id: str = "rec",
    return_trace: bool = False,
) -> TokenRecord | tuple[TokenRecord, list[bool]]:
    """Sample `length` tokens, biasing each step's greenlist by +delta.

    The greenlist at each step is seeded from the previous h tokens (prompt
    tokens included for the first steps).  With `return_trace=True` the
    second return value flags, per emitted token, whether it was biased green
    at its own step -- exactly what a detector with the prompt's trailing h
    tokens as leading context will mark green.
    """
    if config.scheme.context_mode is not ContextMode.LEFTHASH:
        raise UsageError(f"generate_lefthash needs a LeftHash scheme, got {config.scheme}")
    _check_generation_args(prompt, length, config, source)
    h = config.scheme.h
    rng = np.random.default_rng(sampler.rng_seed)
    context = [int(t) for t in prompt]
    tokens: list[int] = []
    trace: list[bool] = []
    for _ in range(length):
        logits = source.next_logits(context)
        seed = seed_from_context(config.scheme, config.salt, context[-h:])
        greens = green_list(seed, config.vocab_size, config.gamma)
        biased = bias_logits(logits, greens, config.delta)
        tok = sample_token(biased, sampler.temperature, rng)
        k = int(np.searchsorted(greens, tok))
        trace.append(k < len(greens) and int(greens[k]) == tok)
        tokens.append(tok)
        context.append(tok)
    record = TokenRecord(id=record_id, prompt=list(map(int, prompt)), tokens=tokens, config=config)
    if return_trace:
        return record, trace
    return record


def _top_k_candidates(logits: np.ndarray, top_k: int) -> np.ndarray:
    v = len(logits)
    if top_k <= 0 or top_k >= v:
        return np.arange(v, dtype=np.int64)
    part = np.argpartition(logits, v - top_k)[v - top_k :]
    return np.sort(part.astype(np.int64))


def generate_selfhash(
    prompt: Sequence[int],
    length: int,
    config: WatermarkConfig,
    source: LogitSource,
    sampler: SamplerConfig,
    top_k: int = 40,
    record_id: str = "rec",
    return_trace: bool = False,
) -> TokenRecord | tuple[TokenRecord, list[bool]]:
    """SelfHash generation: bias the candidates that are self-consistently green.

    For each candidate k among the top_k by raw logit, a candidate-specific
    seed is derived from (context, k); k joins the step's green set iff k lands
    in its own greenlist.  Restricting to top_k is a generation-side
    optimization: tokens outside it are treated as non-green (never biased),
    although a detector's self-consistency check may still score them green at
    rate ~gamma.  Pass top_k=0 (or >= vocab_size) to disable the restriction,
    which makes generation and detection verdicts coincide exactly.
    """
    if config.scheme.context_mode is not ContextMode.SELFHASH:
        raise UsageError(f"generate_selfhash needs a SelfHash scheme, got {config.scheme}")
    _check_generation_args(prompt, length, config, source)
    h = config.scheme.h
    rng = np.random.default_rng(sampler.rng_seed)
    context = [int(t) for t in prompt]
    tokens: list[int] = []
    trace: list[bool] = []
    for _ in range(length):
        logits = np.asarray(source.next_logits(context), dtype=np.float64)
        candidates = _top_k_candidates(logits, top_k)
        ctx_row = np.asarray(context[-h:], dtype=np.int64).reshape(1, h)
        seeds = selfhash_seeds_array(config.scheme, config.salt, ctx_row, candidates)
        mask = green_mask(seeds, candidates, config.vocab_size, config.gamma)
        green_ids = candidates[mask]
        biased = bias_logits(logits, green_ids, config.delta)
        tok = sample_token(biased, sampler.temperature, rng)
        trace.append(bool(np.isin(tok, green_ids)))
        tokens.append(tok)
        context.append(tok)
    record = TokenRecord(id=record_id, prompt=list(map(int, prompt)), tokens=tokens, config=config)
    if return_trace:
        return record, trace
    return record


def generate_unwatermarked(
    prompt: Sequence[int],
    length: int,
    source: LogitSource,
    sampler: SamplerConfig,
    record_id: str = "rec",
) -> TokenRecord:
    """Plain sampling from the source, no bias anywhere; config is None."""
    if length < 1:
        raise UsageError(f"length must be >= 1, got {length}")
    rng = np.random.default_rng(sampler.rng_seed)
    context = [int(t) for t in prompt]
    tokens: list[int] = []
    for _ in range(length):
        logits = source.next_logits(context)
        tok = sample_token(np.asarray(logits, dtype=np.float64), sampler.temperature, rng)
        tokens.append(tok)
        context.append(tok)
    return TokenRecord(id=record_id, prompt=list(map(int, prompt)), tokens=tokens, config=None)
