"""Keyed 64-bit hashing and context seeding schemes.

Everything downstream (greenlist draws, detector verdicts, per-record seeds)
reduces to one primitive: a fixed integer mixing function P over 64-bit
values, applied to salted combinations of context tokens.  P is the SplitMix64
finalizer, chosen for its avalanche quality and because it is trivially
reproducible across runs, platforms, and process restarts.

A seeding scheme is the pair (aggregator, context mode) plus a context width h:

* ``Additive``  -- P(salt * (x_1 + ... + x_h))
* ``Skip``      -- P(salt * x_1) where x_1 is the left-most (oldest) context
  token.  "Left-most" is pinned to the oldest token; contexts here are always
  ordered oldest first.
* ``Min``       -- min_i P(salt * x_i), which survives deletion of a context
  token whenever the argmin token survives.

``LeftHash`` seeds a position from the h tokens before it.  ``SelfHash``
additionally mixes in the candidate token itself; the ``anchored`` variant
combines an aggregate of the context with P(salt * candidate) by wrapping
multiplication followed by a re-mix (a bare product has poor bit diffusion),
while the un-anchored variant simply runs the aggregator over the
(h+1)-window ``[*context, candidate]``.

Known quirk inherited from the salted-product form: a zero operand (an
all-zero additive context, or token id 0 under Skip/Min) collapses the product
to 0, making that single seed salt-independent.  Statistically negligible at
any realistic vocabulary size; callers deriving non-token seeds (e.g. the CLI
deriving per-record seeds from a record index) should offset the value by 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import UsageError

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def splitmix64(z: int) -> int:
    """SplitMix64 step: add the golden-ratio increment, then avalanche."""
    z = (z + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return (z ^ (z >> 31)) & MASK64


def splitmix64_array(z: np.ndarray) -> np.ndarray:
    """Vectorized :func:`splitmix64` over a uint64 array (wrapping mod 2**64)."""
    z = z.astype(np.uint64, copy=False)
    z = z + np.uint64(GOLDEN)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def check_salt(salt: int) -> int:
    """Validate a watermark salt key: a nonzero unsigned 64-bit integer.

    Zero is rejected because it degenerates every salted product to P(0).
    """
    if not isinstance(salt, (int, np.integer)):
        raise UsageError(f"salt must be an integer, got {type(salt).__name__}")
    salt = int(salt)
    if not 0 < salt <= MASK64:
        raise UsageError(f"salt must be in [1, 2**64 - 1], got {salt}")
    return salt


def prf_hash(salt: int, value: int) -> int:
    """Keyed hash P(salt * value mod 2**64); the basis of every seed here."""
    return splitmix64((int(salt) * int(value)) & MASK64)


def prf_hash_array(salt: int, values: np.ndarray) -> np.ndarray:
    """Vectorized :func:`prf_hash`; `values` is cast to uint64."""
    v = values.astype(np.uint64, copy=False)
    return splitmix64_array(v * np.uint64(salt))


class Aggregator(str, Enum):
    ADDITIVE = "Additive"
    SKIP = "Skip"
    MIN = "Min"


class ContextMode(str, Enum):
    LEFTHASH = "LeftHash"
    SELFHASH = "SelfHash"


@dataclass(frozen=True)
class SeedingScheme:
    """How a greenlist seed is derived from context (and candidate) tokens.

    Canonical string form: ``"Aggregator-ContextMode[-anchored],h"``, e.g.
    ``"Additive-LeftHash,1"`` or ``"Min-SelfHash-anchored,4"``.
    """

    aggregator: Aggregator = Aggregator.ADDITIVE
    context_mode: ContextMode = ContextMode.LEFTHASH
    anchored: bool = False
    h: int = 1

    def __post_init__(self) -> None:
        if not isinstance(self.h, int) or self.h < 1:
            raise UsageError(f"context width h must be a positive integer, got {self.h!r}")
        if self.anchored and self.context_mode is not ContextMode.SELFHASH:
            raise UsageError("anchored seeding only applies to SelfHash schemes")

    def __str__(self) -> str:
        anchored = "-anchored" if self.anchored else ""
        return f"{self.aggregator.value}-{self.context_mode.value}{anchored},{self.h}"

    @classmethod
    def from_string(cls, text: str) -> "SeedingScheme":
        """Parse the canonical scheme string (see class docstring)."""
        try:
            head, h_str = text.rsplit(",", 1)
            parts = head.split("-")
            aggregator = Aggregator(parts[0])
            context_mode = ContextMode(parts[1])
            anchored = False
            if len(parts) == 3:
                if parts[2] != "anchored":
                    raise ValueError(parts[2])
                anchored = True
            elif len(parts) != 2:
                raise ValueError(head)
            h = int(h_str)
        except (ValueError, IndexError) as exc:
            raise UsageError(
                f"cannot parse seeding scheme {text!r}; expected e.g. "
                "'Additive-LeftHash,1' or 'Min-SelfHash-anchored,4'"
            ) from exc
        return cls(aggregator=aggregator, context_mode=context_mode, anchored=anchored, h=h)


def _aggregate(aggregator: Aggregator, salt: int, tokens: Sequence[int]) -> int:
    if aggregator is Aggregator.ADDITIVE:
        return prf_hash(salt, sum(int(t) for t in tokens) & MASK64)
    if aggregator is Aggregator.SKIP:
        return prf_hash(salt, tokens[0])
    if aggregator is Aggregator.MIN:
        return min(prf_hash(salt, t) for t in tokens)
    raise UsageError(f"unknown aggregator {aggregator!r}")


def _aggregate_rows(aggregator: Aggregator, salt: int, contexts: np.ndarray) -> np.ndarray:
    # contexts: (m, w) integer matrix, one row per position, oldest first.
    ctx = contexts.astype(np.uint64, copy=False)
    if aggregator is Aggregator.ADDITIVE:
        return prf_hash_array(salt, ctx.sum(axis=1, dtype=np.uint64))
    if aggregator is Aggregator.SKIP:
        return prf_hash_array(salt, ctx[:, 0])
    if aggregator is Aggregator.MIN:
        return prf_hash_array(salt, ctx).min(axis=1)
    raise UsageError(f"unknown aggregator {aggregator!r}")


def seed_from_context(scheme: SeedingScheme, salt: int, context: Sequence[int]) -> int:
    """Greenlist seed for a LeftHash position with the given h-token context.

    `context` must hold exactly ``scheme.h`` tokens, oldest first.
    """
    if scheme.context_mode is not ContextMode.LEFTHASH:
        raise UsageError("seed_from_context requires a LeftHash scheme (SelfHash needs a candidate)")
    if len(context) != scheme.h:
        raise UsageError(f"context must have exactly h={scheme.h} tokens, got {len(context)}")
    return _aggregate(scheme.aggregator, salt, context)


def selfhash_seed(scheme: SeedingScheme, salt: int, context: Sequence[int], candidate: int) -> int:
    """Greenlist seed for a SelfHash (context, candidate) pair.

    Anchored: combine the context aggregate f(x) with P(salt * candidate) by
    wrapping multiplication, then re-mix through prf_hash.  Un-anchored: run
    the aggregator over the (h+1)-window [*context, candidate].
    """
    if scheme.context_mode is not ContextMode.SELFHASH:
        raise UsageError("selfhash_seed requires a SelfHash scheme")
    if len(context) != scheme.h:
        raise UsageError(f"context must have exactly h={scheme.h} tokens, got {len(context)}")
    if scheme.anchored:
        fx = _aggregate(scheme.aggregator, salt, context)
        pk = prf_hash(salt, candidate)
        return prf_hash(salt, (fx * pk) & MASK64)
    return _aggregate(scheme.aggregator, salt, (*context, int(candidate)))


def seeds_from_context_array(scheme: SeedingScheme, salt: int, contexts: np.ndarray) -> np.ndarray:
    """Vectorized :func:`seed_from_context` over an (m, h) context matrix."""
    if scheme.context_mode is not ContextMode.LEFTHASH:
        raise UsageError("seeds_from_context_array requires a LeftHash scheme")
    contexts = np.asarray(contexts)
    if contexts.ndim != 2 or contexts.shape[1] != scheme.h:
        raise UsageError(f"context matrix must have shape (m, {scheme.h}), got {contexts.shape}")
    return _aggregate_rows(scheme.aggregator, salt, contexts)


def selfhash_seeds_array(
    scheme: SeedingScheme, salt: int, contexts: np.ndarray, candidates: np.ndarray
) -> np.ndarray:
    """Vectorized :func:`selfhash_seed`.

    `contexts` is (m, h); `candidates` is either shape (m,) pairing one
    candidate with each row, or a single row may be broadcast by passing an
    (1, h) context with an (m,) candidate vector.
    """
    if scheme.context_mode is not ContextMode.SELFHASH:
        raise UsageError("selfhash_seeds_array requires a SelfHash scheme")
    contexts = np.asarray(contexts)
    candidates = np.asarray(candidates)
    if contexts.ndim != 2 or contexts.shape[1] != scheme.h:
        raise UsageError(f"context matrix must have shape (m, {scheme.h}), got {contexts.shape}")
    if contexts.shape[0] not in (1, candidates.shape[0]):
        raise UsageError("contexts and candidates disagree on the number of rows")
    if scheme.anchored:
        fx = _aggregate_rows(scheme.aggregator, salt, contexts)
        pk = prf_hash_array(salt, candidates)
        return prf_hash_array(salt, fx * pk)
    if contexts.shape[0] == 1 and candidates.shape[0] != 1:
        contexts = np.broadcast_to(contexts, (candidates.shape[0], scheme.h))
    window = np.concatenate([contexts, candidates.reshape(-1, 1)], axis=1)
    return _aggregate_rows(scheme.aggregator, salt, window)


def derive_seed(master: int, index: int) -> int:
    """Stateless per-record seed: prf_hash(master, index + 1).

    The +1 keeps record 0 dependent on the master seed (see module docstring).
    """
    if index < 0:
        raise UsageError(f"index must be non-negative, got {index}")
    return prf_hash(master if master != 0 else 1, index + 1)
