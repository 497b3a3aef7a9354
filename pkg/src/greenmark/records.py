"""Pipeline data model: watermark configuration, token records, JSONL I/O.

Wire format (one JSON object per line, keys sorted, compact separators, so a
rerun with identical inputs is byte-identical):

    {"attack_meta": null | {...}, "config": null | {...}, "id": "...",
     "prompt": [ints], "span_mask": null | [bools], "tokens": [ints]}

`config` serializes a WatermarkConfig as
    {"delta": 2.0, "gamma": 0.25, "salt": 35317,
     "scheme": "Additive-LeftHash,1", "vocab_size": 1024}
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator

from .errors import DataError, UsageError
from .prf import SeedingScheme, check_salt


@dataclass(frozen=True)
class WatermarkConfig:
    """Everything needed to reproduce (and detect) one watermark."""

    scheme: SeedingScheme
    salt: int
    gamma: float = 0.25
    delta: float = 2.0
    vocab_size: int = 0

    def __post_init__(self) -> None:
        check_salt(self.salt)
        if not 0.0 < self.gamma < 1.0:
            raise UsageError(f"gamma must be in (0, 1), got {self.gamma}")
        if self.delta < 0.0 or not math.isfinite(self.delta):
            raise UsageError(f"delta must be finite and >= 0, got {self.delta}")
        if self.vocab_size < 2:
            raise UsageError(f"vocab_size must be >= 2, got {self.vocab_size}")
        if self.green_size < 1:
            raise UsageError(
                f"floor(gamma * vocab_size) = {self.green_size}; the greenlist would be empty"
            )

    @property
    def green_size(self) -> int:
        """Greenlist cardinality: floor(gamma * vocab_size), pinned convention."""
        return math.floor(self.gamma * self.vocab_size)

    def to_dict(self) -> dict[str, Any]:
        return {
            "scheme": str(self.scheme),
            "salt": self.salt,
            "gamma": self.gamma,
            "delta": self.delta,
            "vocab_size": self.vocab_size,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "WatermarkConfig":
        try:
            return cls(
                scheme=SeedingScheme.from_string(d["scheme"]),
                salt=int(d["salt"]),
                gamma=float(d["gamma"]),
                delta=float(d["delta"]),
                vocab_size=int(d["vocab_size"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, UsageError):
                raise DataError(f"invalid watermark config: {exc}") from exc
            raise DataError(f"invalid watermark config {d!r}: {exc}") from exc


@dataclass
class TokenRecord:
    """One token sequence moving through the pipeline."""

    id: str
    prompt: list[int]
    tokens: list[int]
    config: WatermarkConfig | None = None
    attack_meta: dict[str, Any] | None = None
    span_mask: list[bool] | None = None

    def __post_init__(self) -> None:
        if self.span_mask is not None and len(self.span_mask) != len(self.tokens):
            raise UsageError(
                f"span_mask length {len(self.span_mask)} != tokens length {len(self.tokens)}"
            )

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "prompt": list(self.prompt),
            "tokens": list(self.tokens),
            "config": self.config.to_dict() if self.config is not None else None,
            "attack_meta": self.attack_meta,
            "span_mask": self.span_mask,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TokenRecord":
        if not isinstance(d, dict):
            raise DataError(f"token record must be a JSON object, got {type(d).__name__}")
        missing = {"id", "prompt", "tokens"} - d.keys()
        if missing:
            raise DataError(f"token record missing keys: {sorted(missing)}")
        try:
            config = d.get("config")
            span_mask = d.get("span_mask")
            return cls(
                id=str(d["id"]),
                prompt=[int(t) for t in d["prompt"]],
                tokens=[int(t) for t in d["tokens"]],
                config=WatermarkConfig.from_dict(config) if config is not None else None,
                attack_meta=d.get("attack_meta"),
                span_mask=[bool(b) for b in span_mask] if span_mask is not None else None,
            )
        except (TypeError, ValueError, UsageError) as exc:
            raise DataError(f"malformed token record {d.get('id', '?')!r}: {exc}") from exc


def dumps_line(obj: dict[str, Any]) -> str:
    """Serialize one JSONL line deterministically (sorted keys, compact)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def write_jsonl(path: str | Path, dicts: Iterable[dict[str, Any]]) -> int:
    """Write dict rows as JSONL; returns the row count."""
    path = Path(path)
    n = 0
    with path.open("w", encoding="utf-8") as fh:
        for d in dicts:
            fh.write(dumps_line(d))
            fh.write("\n")
            n += 1
    return n


def iter_jsonl(path: str | Path) -> Iterator[tuple[int, dict[str, Any]]]:
    """Yield (line_number, parsed object) for each non-blank line.

    Raises DataError on unparseable lines; callers that prefer to skip bad
    records should use :func:`iter_jsonl_lenient`.
    """
    path = Path(path)
    try:
        fh = path.open("r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from exc


def read_token_records(path: str | Path) -> list[TokenRecord]:
    """Read a whole JSONL file of token records (strict: DataError on any bad row)."""
    records = [TokenRecord.from_dict(obj) for _, obj in iter_jsonl(path)]
    if not records:
        raise DataError(f"{path}: no records found")
    return records


def write_token_records(path: str | Path, records: Iterable[TokenRecord]) -> int:
    return write_jsonl(path, (r.to_dict() for r in records))
