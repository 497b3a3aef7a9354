"""Attack simulations: copy-paste splicing, epsilon-dilution, literal span
edits, and the white-box anti-watermark generator.

Every attack returns a fresh TokenRecord carrying `attack_meta` (type, name,
parameters) and, where the notion applies, a `span_mask` marking which output
positions still carry watermarked text.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .detect import score_tokens
from .errors import UsageError
from .prf import ContextMode, seed_from_context, selfhash_seed, selfhash_seeds_array
from .records import TokenRecord, WatermarkConfig
from .watermark import (
    LogitSource,
    SamplerConfig,
    _top_k_candidates,
    bias_logits,
    green_list,
    green_mask,
    is_green,
    sample_token,
)


@dataclass(frozen=True)
class CopyPasteSpec:
    """n_insertions watermarked spans totalling watermark_fraction of the output."""

    n_insertions: int
    watermark_fraction: float
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not isinstance(self.n_insertions, int) or self.n_insertions < 1:
            raise UsageError(f"n_insertions must be a positive integer, got {self.n_insertions!r}")
        if not 0.0 < self.watermark_fraction <= 1.0:
            # 1.0 is the documented degenerate case: output == watermarked text
            raise UsageError(f"watermark_fraction must be in (0, 1], got {self.watermark_fraction}")

    @property
    def name(self) -> str:
        return f"CP-{self.n_insertions}-{self.watermark_fraction * 100:g}%"


def _solve_span_total(fraction: float, context_len: int) -> int:
    """Largest fixpoint w = floor(fraction * (context_len + w))."""
    w = math.floor(fraction * context_len / (1.0 - fraction))
    for _ in range(64):
        w_next = math.floor(fraction * (context_len + w))
        if w_next == w:
            return w
        w = w_next
    return w


def copy_paste(
    watermarked: TokenRecord, context_tokens: Sequence[int], spec: CopyPasteSpec
) -> TokenRecord:
    """Splice contiguous slices of watermarked text into unwatermarked context.

    The output contains spec.n_insertions disjoint watermarked spans of
    near-equal sizes (earlier spans take the remainder) totalling
    floor(fraction * output length); context_tokens supplies everything else.
    Insertion gaps are sampled without replacement from the context's
    interior positions, so spans never touch each other.
    """
    ctx = [int(t) for t in context_tokens]
    meta_params = {
        "n_insertions": spec.n_insertions,
        "watermark_fraction": spec.watermark_fraction,
        "rng_seed": spec.rng_seed,
        "source_id": watermarked.id,
    }
    if spec.watermark_fraction == 1.0:
        tokens = list(watermarked.tokens)
        return TokenRecord(
            id=f"{watermarked.id}:{spec.name}",
            prompt=list(watermarked.prompt),
            tokens=tokens,
            config=watermarked.config,
            attack_meta={"type": "cp", "name": spec.name, "params": meta_params},
            span_mask=[True] * len(tokens),
        )
    total = _solve_span_total(spec.watermark_fraction, len(ctx))
    if total < spec.n_insertions:
        raise UsageError(
            f"fraction {spec.watermark_fraction} of a {len(ctx)}-token context yields only "
            f"{total} watermarked tokens; cannot fill {spec.n_insertions} spans"
        )
    if len(watermarked.tokens) < total:
        raise UsageError(
            f"watermarked record has {len(watermarked.tokens)} tokens; needs >= {total}"
        )
    base, rem = divmod(total, spec.n_insertions)
    sizes = [base + 1] * rem + [base] * (spec.n_insertions - rem)
    spans: list[list[int]] = []
    offset = 0
    for size in sizes:
        spans.append([int(t) for t in watermarked.tokens[offset : offset + size]])
        offset += size
    rng = np.random.default_rng(spec.rng_seed)
    if len(ctx) + 1 < spec.n_insertions:
        raise UsageError(f"context too short for {spec.n_insertions} insertion gaps")
    gaps = np.sort(rng.choice(len(ctx) + 1, size=spec.n_insertions, replace=False))
    tokens: list[int] = []
    mask: list[bool] = []
    prev = 0
    for gap, span in zip(gaps, spans):
        tokens.extend(ctx[prev : int(gap)])
        mask.extend([False] * (int(gap) - prev))
        tokens.extend(span)
        mask.extend([True] * len(span))
        prev = int(gap)
    tokens.extend(ctx[prev:])
    mask.extend([False] * (len(ctx) - prev))
    return TokenRecord(
        id=f"{watermarked.id}:{spec.name}",
        prompt=list(watermarked.prompt),
        tokens=tokens,
        config=watermarked.config,
        attack_meta={"type": "cp", "name": spec.name, "params": meta_params},
        span_mask=mask,
    )


@dataclass(frozen=True)
class DilutionSpec:
    """Random substitution attack; set exactly one of epsilon / substitution_rate.

    epsilon targets a post-attack green rate of gamma*(1+epsilon): the
    substitution rate is then solved from the record's measured green rate g0
    as (1-r)^(h+1) = epsilon*gamma / (g0-gamma), because a kept token retains
    its original verdict only when its whole (h+1)-token seeding window
    survived (exact for additive seeding; conservative for Min, which
    sometimes survives context edits).  An explicit substitution_rate is used
    as given.
    """

    epsilon: float | None = None
    substitution_rate: float | None = None
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if (self.epsilon is None) == (self.substitution_rate is None):
            raise UsageError("set exactly one of epsilon / substitution_rate")
        if self.epsilon is not None and self.epsilon < 0:
            raise UsageError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.substitution_rate is not None and not 0.0 <= self.substitution_rate <= 1.0:
            raise UsageError(f"substitution_rate must be in [0, 1], got {self.substitution_rate}")

    @property
    def name(self) -> str:
        if self.epsilon is not None:
            return f"dilute-eps{self.epsilon:g}"
        return f"dilute-r{self.substitution_rate:g}"


def solve_substitution_rate(epsilon: float, gamma: float, green_rate: float, h: int) -> float:
    """Substitution rate whose expected post-attack green rate is gamma*(1+epsilon)."""
    target = gamma * (1.0 + epsilon)
    if target > 1.0:
        raise UsageError(f"target green rate gamma*(1+epsilon) = {target:.4f} exceeds 1")
    if green_rate <= gamma:
        raise UsageError(
            f"input green rate {green_rate:.4f} <= gamma {gamma}; nothing to dilute"
        )
    ratio = epsilon * gamma / (green_rate - gamma)
    if ratio > 1.0:
        feasible = (green_rate - gamma) / gamma
        raise UsageError(
            f"epsilon {epsilon} unreachable: input green rate {green_rate:.4f} supports "
            f"epsilon <= {feasible:.4f}"
        )
    return 1.0 - ratio ** (1.0 / (h + 1))


def dilute(
    watermarked: TokenRecord,
    replacement_source: LogitSource,
    spec: DilutionSpec,
    temperature: float = 1.0,
) -> TokenRecord:
    """Rewrite the sequence left to right, replacing each position with
    probability r by an unwatermarked sample from replacement_source.

    Replacements see the current (partially rewritten) prefix as context, so
    they also perturb later tokens' seeding windows; that side effect is part
    of the simulated attack, measured rather than corrected, and the
    epsilon-driven rate solve accounts for it (see DilutionSpec).
    """
    config = watermarked.config
    if config is None:
        raise UsageError("dilute needs the record's watermark config to measure its green rate")
    if replacement_source.vocab_size != config.vocab_size:
        raise UsageError("replacement_source vocabulary differs from the record's")
    h = config.scheme.h
    if spec.epsilon is not None:
        lead = watermarked.prompt[-h:] if len(watermarked.prompt) >= h else None
        hits = score_tokens(watermarked.tokens, config, leading_context=lead)
        if hits.scored_count == 0:
            raise UsageError("dilute: record has no scorable tokens")
        g0 = hits.green_count / hits.scored_count
        rate = solve_substitution_rate(spec.epsilon, config.gamma, g0, h)
        g0_meta = g0
    else:
        rate = float(spec.substitution_rate)
        g0_meta = None
    rng = np.random.default_rng(spec.rng_seed)
    base_mask = watermarked.span_mask or [True] * len(watermarked.tokens)
    out: list[int] = []
    mask: list[bool] = []
    # A single growing context list avoids rebuilding prompt + out per
    # replacement; sources that declare a finite context_window get only
    # their trailing slice, which keeps long rewrites O(T).
    context = [int(t) for t in watermarked.prompt]
    window = getattr(replacement_source, "context_window", None)
    if rate > 0.0:
        for i, tok in enumerate(watermarked.tokens):
            if rng.random() < rate:
                ctx = context if window is None else context[-window:]
                logits = replacement_source.next_logits(ctx)
                out.append(sample_token(np.asarray(logits, dtype=np.float64), temperature, rng))
                mask.append(False)
            else:
                out.append(int(tok))
                mask.append(bool(base_mask[i]))
            context.append(out[-1])
    else:
        out = [int(t) for t in watermarked.tokens]
        mask = [bool(b) for b in base_mask]
    params = {
        "epsilon": spec.epsilon,
        "substitution_rate": rate,
        "rng_seed": spec.rng_seed,
        "green_rate_before": g0_meta,
    }
    return TokenRecord(
        id=f"{watermarked.id}:{spec.name}",
        prompt=list(watermarked.prompt),
        tokens=out,
        config=config,
        attack_meta={"type": "dilute", "name": spec.name, "params": params},
        span_mask=mask,
    )


_EDIT_OPS = ("delete", "insert", "substitute")


def span_edit(
    tokens: Sequence[int],
    op: str,
    positions: Sequence[int],
    payload: Sequence[int] | None = None,
) -> list[int]:
    """Apply a literal edit. delete removes the given positions; insert places
    payload[i] before original position positions[i]; substitute overwrites.
    """
    toks = [int(t) for t in tokens]
    pos = [int(p) for p in positions]
    if op not in _EDIT_OPS:
        raise UsageError(f"op must be one of {_EDIT_OPS}, got {op!r}")
    if len(set(pos)) != len(pos):
        raise UsageError("positions must be distinct")
    if op == "delete":
        if payload:
            raise UsageError("delete takes no payload")
        bad = [p for p in pos if not 0 <= p < len(toks)]
        if bad:
            raise UsageError(f"positions out of range: {bad}")
        drop = set(pos)
        return [t for i, t in enumerate(toks) if i not in drop]
    pay = [int(t) for t in (payload or [])]
    if len(pay) != len(pos):
        raise UsageError(f"{op} needs one payload token per position")
    if op == "substitute":
        bad = [p for p in pos if not 0 <= p < len(toks)]
        if bad:
            raise UsageError(f"positions out of range: {bad}")
        for p, t in zip(pos, pay):
            toks[p] = t
        return toks
    # insert
    bad = [p for p in pos if not 0 <= p <= len(toks)]
    if bad:
        raise UsageError(f"positions out of range: {bad}")
    for p, t in sorted(zip(pos, pay), reverse=True):
        toks.insert(p, t)
    return toks


def apply_span_edit(
    record: TokenRecord, op: str, positions: Sequence[int], payload: Sequence[int] | None = None
) -> TokenRecord:
    """Record-level span_edit: tracks the length change and updates span_mask."""
    tokens = span_edit(record.tokens, op, positions, payload)
    base_mask = record.span_mask or [True] * len(record.tokens)
    pos = [int(p) for p in positions]
    if op == "delete":
        drop = set(pos)
        mask = [b for i, b in enumerate(base_mask) if i not in drop]
    elif op == "substitute":
        mask = list(base_mask)
        for p in pos:
            mask[p] = False
    else:
        mask = list(base_mask)
        for p, _ in sorted(zip(pos, pos), reverse=True):
            mask.insert(p, False)
    meta = {
        "type": "edit",
        "name": f"edit-{op}",
        "params": {
            "op": op,
            "positions": pos,
            "payload": [int(t) for t in (payload or [])] or None,
            "length_before": len(record.tokens),
            "length_after": len(tokens),
        },
    }
    return TokenRecord(
        id=f"{record.id}:edit-{op}",
        prompt=list(record.prompt),
        tokens=tokens,
        config=record.config,
        attack_meta=meta,
        span_mask=mask,
    )


def anti_watermark_generate(
    prompt: Sequence[int],
    length: int,
    config: WatermarkConfig,
    source: LogitSource,
    sampler: SamplerConfig,
    kappa: float = 4.0,
    top_k: int = 40,
    record_id: str = "anti",
) -> TokenRecord:
    """White-box anti-watermark generation: land exactly round(gamma*length)
    green tokens so the z statistic sits at 0.

    Each step subtracts an adaptive penalty delta_t = delta_base * (1 +
    kappa * (running green fraction - gamma) * t/T) from the green class
    (negative values turn into a bonus when the stream is running red-heavy),
    then a terminal forcing phase constrains the last tokens to whichever
    color class is still owed.  delta_base is config.delta.  The target uses
    round-half-up.  For SelfHash schemes the penalty uses the top_k
    self-consistent set while bookkeeping and forcing classify exactly.
    """
    if length < 1:
        raise UsageError(f"length must be >= 1, got {length}")
    if len(prompt) < config.scheme.h:
        raise UsageError(f"prompt must supply at least h={config.scheme.h} seed tokens")
    if source.vocab_size != config.vocab_size:
        raise UsageError("source vocabulary differs from the watermark config's")
    h = config.scheme.h
    selfhash = config.scheme.context_mode is ContextMode.SELFHASH
    target = int(math.floor(config.gamma * length + 0.5))
    rng = np.random.default_rng(sampler.rng_seed)
    context = [int(t) for t in prompt]
    tokens: list[int] = []
    greens_so_far = 0
    forced_steps = 0
    failed = False

    def full_green_mask(ctx_tail: list[int]) -> np.ndarray:
        """Boolean green-class mask over the whole vocabulary at this step."""
        if selfhash:
            cands = np.arange(config.vocab_size, dtype=np.int64)
            ctx_row = np.asarray(ctx_tail, dtype=np.int64).reshape(1, h)
            seeds = selfhash_seeds_array(config.scheme, config.salt, ctx_row, cands)
            return green_mask(seeds, cands, config.vocab_size, config.gamma)
        seed = seed_from_context(config.scheme, config.salt, ctx_tail)
        mask = np.zeros(config.vocab_size, dtype=bool)
        mask[green_list(seed, config.vocab_size, config.gamma)] = True
        return mask

    for t in range(length):
        logits = np.asarray(source.next_logits(context), dtype=np.float64)
        ctx_tail = context[-h:]
        need = target - greens_so_far
        remaining = length - t
        force_green = need >= remaining
        force_red = need <= 0
        if force_green or force_red:
            forced_steps += 1
            mask = full_green_mask(ctx_tail)
            allowed = mask if force_green else ~mask
            if not allowed.any():
                failed = True
            else:
                logits = np.where(allowed, logits, -np.inf)
            tok = sample_token(logits, sampler.temperature, rng)
            hit = bool(mask[tok])
        else:
            frac = greens_so_far / t if t else config.gamma
            delta_t = config.delta * (1.0 + kappa * (frac - config.gamma) * t / length)
            if selfhash:
                cands = _top_k_candidates(logits, top_k)
                ctx_row = np.asarray(ctx_tail, dtype=np.int64).reshape(1, h)
                seeds = selfhash_seeds_array(config.scheme, config.salt, ctx_row, cands)
                green_ids = cands[green_mask(seeds, cands, config.vocab_size, config.gamma)]
            else:
                seed = seed_from_context(config.scheme, config.salt, ctx_tail)
                green_ids = green_list(seed, config.vocab_size, config.gamma)
            tok = sample_token(bias_logits(logits, green_ids, -delta_t), sampler.temperature, rng)
            if selfhash:
                hit = is_green(
                    selfhash_seed(config.scheme, config.salt, ctx_tail, tok),
                    tok,
                    config.vocab_size,
                    config.gamma,
                )
            else:
                k = int(np.searchsorted(green_ids, tok))
                hit = k < len(green_ids) and int(green_ids[k]) == tok
        greens_so_far += int(hit)
        tokens.append(tok)
        context.append(tok)

    meta = {
        "type": "anti",
        "name": "anti",
        "params": {
            "kappa": kappa,
            "delta_base": config.delta,
            "target_green": target,
            "achieved_green": greens_so_far,
            "forced_steps": forced_steps,
            "failed": failed,
        },
    }
    return TokenRecord(
        id=record_id,
        prompt=list(map(int, prompt)),
        tokens=tokens,
        config=config,
        attack_meta=meta,
        span_mask=None,
    )
