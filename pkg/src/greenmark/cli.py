"""Command-line interface.

Subcommands cover the full pipeline: `generate` token records from a toy
source, `attack` them, `detect` watermarks, `evaluate` detector reliability,
and `calibrate` decision thresholds from null scores.

Options resolve in three layers: built-in defaults, then a JSON config file
(--config, flat object keyed by option name with dashes as underscores), then
explicit command-line flags.  Exit codes: 0 success, 1 usage errors (bad
flags or parameter values), 2 data errors (missing, unreadable, or empty
input files).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Any, Sequence

import numpy as np

from .attack import (
    CopyPasteSpec,
    DilutionSpec,
    anti_watermark_generate,
    apply_span_edit,
    copy_paste,
    dilute,
)
from .detect import (
    DetectionResult,
    RunLengthConfig,
    UndefinedStatisticError,
    calibrate_threshold,
    run_length_test,
    score_tokens,
    winmax,
    z_score,
)
from .errors import DataError, UsageError
from .evaluate import (
    DetectorSpec,
    calibration_curve,
    detectability_at_t,
    roc_auc,
    tpr_at_fpr,
    write_calibration_csv,
    write_detectability_csv,
    write_roc_csv,
)
from .prf import SeedingScheme, derive_seed
from .records import TokenRecord, WatermarkConfig, dumps_line, read_token_records
from .toylm import SyntheticSource, load_markov
from .watermark import (
    SamplerConfig,
    generate_lefthash,
    generate_selfhash,
    generate_unwatermarked,
)


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad flags; this toolkit reserves 2 for
    data errors, so parse failures are rethrown as UsageError (exit 1)."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


def _hexint(text: str) -> int:
    return int(text, 0)


def _int_list(text: str) -> list[int]:
    return [int(part, 0) for part in text.split(",") if part.strip() != ""]


def _float_list(text: str) -> list[float]:
    return [float(part) for part in text.split(",") if part.strip() != ""]


def _load_json_config(path: str) -> dict[str, Any]:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    return cfg


def _merge(args: argparse.Namespace, defaults: dict[str, Any]) -> dict[str, Any]:
    """Layer defaults < config file < explicit flags (flags parse to None
    when absent, so presence is distinguishable from any real value)."""
    file_cfg: dict[str, Any] = {}
    if getattr(args, "config", None) is not None:
        file_cfg = _load_json_config(args.config)
        unknown = sorted(set(file_cfg) - set(defaults))
        if unknown:
            raise UsageError(f"unknown config keys for this command: {', '.join(unknown)}")
    merged = {}
    for key, default in defaults.items():
        value = getattr(args, key, None)
        if value is None:
            value = file_cfg.get(key, default)
        merged[key] = value
    return merged


def _read_records_lenient(path: str) -> tuple[list[TokenRecord], int]:
    """All parseable records plus the count of skipped malformed lines.

    Unreadable or empty files are data errors; individually broken lines are
    warned about on stderr and skipped.
    """
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    records: list[TokenRecord] = []
    skipped = 0
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            records.append(TokenRecord.from_dict(json.loads(line)))
        except (json.JSONDecodeError, DataError) as exc:
            print(f"warning: {path}:{lineno}: skipping malformed record: {exc}", file=sys.stderr)
            skipped += 1
    if not records and not skipped:
        raise DataError(f"{path} holds no records")
    return records, skipped


def _write_jsonl(path: str, dicts: Sequence[dict[str, Any]]) -> None:
    try:
        with open(path, "w") as fh:
            for d in dicts:
                fh.write(dumps_line(d) + "\n")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc


def _read_results(path: str) -> list[DetectionResult]:
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    results = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            results.append(DetectionResult.from_dict(json.loads(line)))
        except (json.JSONDecodeError, DataError) as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
    if not results:
        raise DataError(f"{path} holds no detection results")
    return results


def _build_source(opts: dict[str, Any]) -> tuple[Any, int]:
    """Logit source plus its vocabulary size from resolved options."""
    kind = opts["source"]
    if kind == "markov":
        if not opts["model"]:
            raise UsageError("--source markov needs --model FILE")
        model = load_markov(opts["model"])
        return model, model.vocab_size
    if kind == "synthetic":
        src = SyntheticSource(
            vocab_size=int(opts["vocab_size"]),
            entropy_target=float(opts["entropy"]),
            rng_seed=int(opts["seed"]),
        )
        return src, src.vocab_size
    raise UsageError(f"unknown source {kind!r} (expected synthetic or markov)")


def _watermark_config(opts: dict[str, Any], vocab_size: int) -> WatermarkConfig:
    scheme = SeedingScheme.from_string(str(opts["scheme"]))
    return WatermarkConfig(
        scheme=scheme,
        salt=int(opts["salt"]),
        gamma=float(opts["gamma"]),
        delta=float(opts["delta"]),
        vocab_size=vocab_size,
    )


_GENERATION_DEFAULTS: dict[str, Any] = {
    "count": 10,
    "length": 200,
    "length_jitter": 0,
    "prompt_length": 8,
    "source": "synthetic",
    "vocab_size": 1024,
    "entropy": 4.0,
    "model": None,
    "gamma": 0.25,
    "delta": 2.0,
    "scheme": "Additive-LeftHash,1",
    "salt": 1,
    "seed": 0,
    "temperature": 0.7,
    "top_k": 40,
}

_GENERATE_DEFAULTS: dict[str, Any] = {**_GENERATION_DEFAULTS, "no_watermark": False}


def _add_generation_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--count", type=int, help="records to generate (default 10)")
    sub.add_argument("--length", type=int, help="tokens per record (default 200)")
    sub.add_argument(
        "--length-jitter",
        type=int,
        dest="length_jitter",
        help="vary each length uniformly by up to +/- this many tokens",
    )
    sub.add_argument(
        "--prompt-length", type=int, dest="prompt_length", help="random prompt tokens (default 8)"
    )
    sub.add_argument("--source", choices=["synthetic", "markov"], help="logit source kind")
    sub.add_argument("--vocab-size", type=int, dest="vocab_size", help="synthetic vocabulary size")
    sub.add_argument("--entropy", type=float, help="synthetic per-step entropy target in nats")
    sub.add_argument("--model", help="trained transition-count model file (for --source markov)")
    sub.add_argument("--gamma", type=float, help="greenlist fraction (default 0.25)")
    sub.add_argument("--delta", type=float, help="greenlist logit bias (default 2.0)")
    sub.add_argument("--scheme", help='seeding scheme, e.g. "Additive-LeftHash,1"')
    sub.add_argument("--salt", type=_hexint, help="nonzero watermark key")
    sub.add_argument("--seed", type=_hexint, help="master RNG seed (default 0)")
    sub.add_argument("--temperature", type=float, help="sampling temperature (default 0.7)")
    sub.add_argument(
        "--top-k", type=int, dest="top_k", help="candidate cap for SelfHash generation (default 40)"
    )


def _generate_records(opts: dict[str, Any], watermark: bool, role: str) -> list[TokenRecord]:
    source, vocab_size = _build_source(opts)
    config = _watermark_config(opts, vocab_size) if watermark else None
    if watermark and int(opts["prompt_length"]) < config.scheme.h:
        raise UsageError(
            f"--prompt-length {opts['prompt_length']} is shorter than the scheme context h="
            f"{config.scheme.h}"
        )
    records = []
    for i in range(int(opts["count"])):
        rng = np.random.default_rng(derive_seed(int(opts["seed"]), i))
        length = int(opts["length"])
        jitter = int(opts["length_jitter"])
        if jitter:
            length = max(1, length + int(rng.integers(-jitter, jitter + 1)))
        prompt = [int(t) for t in rng.integers(0, vocab_size, size=int(opts["prompt_length"]))]
        sampler = SamplerConfig(
            temperature=float(opts["temperature"]), rng_seed=int(rng.integers(0, 2**62))
        )
        rid = f"{role}-{i:05d}"
        if not watermark:
            rec = generate_unwatermarked(prompt, length, source, sampler, record_id=rid)
        elif config.scheme.context_mode.value == "SelfHash":
            rec = generate_selfhash(
                prompt, length, config, source, sampler, top_k=int(opts["top_k"]), record_id=rid
            )
        else:
            rec = generate_lefthash(prompt, length, config, source, sampler, record_id=rid)
        records.append(rec)
    return records


def _cmd_generate(args: argparse.Namespace) -> int:
    opts = _merge(args, _GENERATE_DEFAULTS)
    watermark = not bool(opts["no_watermark"])
    records = _generate_records(opts, watermark, "wm" if watermark else "null")
    _write_jsonl(args.out, [r.to_dict() for r in records])
    print(f"wrote {len(records)} records to {args.out}")
    return 0


_ATTACK_DEFAULTS: dict[str, Any] = {
    **_GENERATION_DEFAULTS,
    # no default key here: anti must be told which salt it is attacking
    "salt": None,
    "insertions": 3,
    "fraction": 0.1,
    "epsilon": None,
    "rate": None,
    "kappa": 4.0,
    "op": None,
    "positions": None,
    "payload": None,
    "temperature": None,
}


def _cmd_attack(args: argparse.Namespace) -> int:
    opts = _merge(args, _ATTACK_DEFAULTS)
    if args.type == "anti":
        return _attack_anti(args, opts)
    if args.infile is None:
        raise UsageError(f"attack --type {args.type} needs --in FILE")
    records, skipped = _read_records_lenient(args.infile)
    out: list[TokenRecord] = []
    if args.type == "cp":
        if args.context is None:
            raise UsageError("attack --type cp needs --context FILE of unwatermarked records")
        contexts = read_token_records(args.context)
        for i, rec in enumerate(records):
            spec = CopyPasteSpec(
                n_insertions=int(opts["insertions"]),
                watermark_fraction=float(opts["fraction"]),
                rng_seed=derive_seed(int(opts["seed"]), i),
            )
            out.append(copy_paste(rec, contexts[i % len(contexts)].tokens, spec))
    elif args.type == "dilute":
        temperature = 1.0 if opts["temperature"] is None else float(opts["temperature"])
        for i, rec in enumerate(records):
            if rec.config is None:
                raise UsageError(f"record {rec.id} has no watermark config; cannot dilute")
            spec = DilutionSpec(
                epsilon=None if opts["epsilon"] is None else float(opts["epsilon"]),
                substitution_rate=None if opts["rate"] is None else float(opts["rate"]),
                rng_seed=derive_seed(int(opts["seed"]), i),
            )
            source = SyntheticSource(
                vocab_size=rec.config.vocab_size,
                entropy_target=float(opts["entropy"]),
                rng_seed=int(opts["seed"]),
            )
            out.append(dilute(rec, source, spec, temperature=temperature))
    elif args.type == "edit":
        if not opts["op"] or opts["positions"] is None:
            raise UsageError("attack --type edit needs --op and --positions")
        for rec in records:
            out.append(apply_span_edit(rec, opts["op"], opts["positions"], opts["payload"]))
    else:
        raise UsageError(f"unknown attack type {args.type!r}")
    _write_jsonl(args.out, [r.to_dict() for r in out])
    note = f" (skipped {skipped} malformed lines)" if skipped else ""
    print(f"wrote {len(out)} attacked records to {args.out}{note}")
    return 0


def _attack_anti(args: argparse.Namespace, opts: dict[str, Any]) -> int:
    if opts["salt"] is None:
        raise UsageError("attack --type anti needs --salt (the key being attacked)")
    source, vocab_size = _build_source(opts)
    config = _watermark_config(opts, vocab_size)
    temperature = 0.7 if opts["temperature"] is None else float(opts["temperature"])
    records = []
    for i in range(int(opts["count"])):
        rng = np.random.default_rng(derive_seed(int(opts["seed"]), i))
        prompt = [int(t) for t in rng.integers(0, vocab_size, size=int(opts["prompt_length"]))]
        sampler = SamplerConfig(temperature=temperature, rng_seed=int(rng.integers(0, 2**62)))
        records.append(
            anti_watermark_generate(
                prompt,
                int(opts["length"]),
                config,
                source,
                sampler,
                kappa=float(opts["kappa"]),
                top_k=int(opts["top_k"]),
                record_id=f"anti-{i:05d}",
            )
        )
    _write_jsonl(args.out, [r.to_dict() for r in records])
    print(f"wrote {len(records)} anti-watermarked records to {args.out}")
    return 0


_DETECT_DEFAULTS: dict[str, Any] = {
    "detector": "z",
    "ignore_repeats": False,
    "min_window": 1,
    "max_window": None,
    "no_prompt_context": False,
    "gamma": None,
    "delta": None,
    "scheme": None,
    "salt": None,
    "vocab_size": None,
    "runlen_variant": "pearson",
    "runlen_min_run": 1,
    "runlen_counting": "trials_until_red",
}


def _effective_config(rec: TokenRecord, opts: dict[str, Any]) -> WatermarkConfig:
    """The record's embedded config with any explicit overrides folded in.

    Records generated without a watermark carry no config, so detection of
    those requires --gamma/--scheme/--salt/--vocab-size on the command line.
    """
    base = rec.config
    def pick(key: str, embedded: Any) -> Any:
        return opts[key] if opts[key] is not None else embedded

    scheme_str = pick("scheme", None if base is None else str(base.scheme))
    gamma = pick("gamma", None if base is None else base.gamma)
    delta = pick("delta", 2.0 if base is None else base.delta)
    salt = pick("salt", None if base is None else base.salt)
    vocab = pick("vocab_size", None if base is None else base.vocab_size)
    missing = [
        name
        for name, val in (
            ("--scheme", scheme_str),
            ("--gamma", gamma),
            ("--salt", salt),
            ("--vocab-size", vocab),
        )
        if val is None
    ]
    if missing:
        raise UsageError(
            f"record {rec.id} has no embedded watermark config; supply {', '.join(missing)}"
        )
    return WatermarkConfig(
        scheme=SeedingScheme.from_string(str(scheme_str)),
        salt=int(salt),
        gamma=float(gamma),
        delta=float(delta),
        vocab_size=int(vocab),
    )


def _detect_one(
    rec: TokenRecord, cfg: WatermarkConfig, opts: dict[str, Any]
) -> DetectionResult:
    lead = None
    if not opts["no_prompt_context"] and rec.prompt:
        lead = rec.prompt[-cfg.scheme.h :]
    hits = score_tokens(rec.tokens, cfg, leading_context=lead)
    detector = opts["detector"]
    try:
        if detector == "z":
            return z_score(
                hits, cfg.gamma, ignore_repeats=bool(opts["ignore_repeats"]), record_id=rec.id
            )
        if detector == "winmax":
            return winmax(
                hits,
                cfg.gamma,
                min_window=int(opts["min_window"]),
                max_window=None if opts["max_window"] is None else int(opts["max_window"]),
                record_id=rec.id,
            )
        if detector == "runlen":
            rl = RunLengthConfig(
                statistic_variant=str(opts["runlen_variant"]),
                min_run_length_counted=int(opts["runlen_min_run"]),
                counting=str(opts["runlen_counting"]),
            )
            return run_length_test(hits, cfg.gamma, config=rl, record_id=rec.id)
    except UndefinedStatisticError:
        return DetectionResult(
            id=rec.id,
            detector=detector,
            statistic=None,
            p_value=None,
            green_count=hits.green_count,
            scored_count=hits.scored_count,
            window=None,
        )
    raise UsageError(f"unknown detector {detector!r}")


def _cmd_detect(args: argparse.Namespace) -> int:
    opts = _merge(args, _DETECT_DEFAULTS)
    records, skipped = _read_records_lenient(args.infile)
    results = []
    for rec in records:
        cfg = _effective_config(rec, opts)
        results.append(_detect_one(rec, cfg, opts))
    _write_jsonl(args.out, [r.to_dict() for r in results])
    note = f" (skipped {skipped} malformed lines)" if skipped else ""
    print(f"wrote {len(results)} detection results to {args.out}{note}")
    return 0


_EVALUATE_DEFAULTS: dict[str, Any] = {
    **_DETECT_DEFAULTS,
    "fpr": [0.01],
    "thresholds": [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0],
    "t_grid": None,
}


def _statistics(results: list[DetectionResult], label: str) -> list[float]:
    stats = [r.statistic for r in results if r.statistic is not None]
    dropped = len(results) - len(stats)
    if dropped:
        print(
            f"warning: dropped {dropped} {label} results with undefined statistics",
            file=sys.stderr,
        )
    if not stats:
        raise UsageError(f"no defined statistics among {label} results")
    return stats


def _cmd_evaluate(args: argparse.Namespace) -> int:
    opts = _merge(args, _EVALUATE_DEFAULTS)
    pos = _read_results(args.pos)
    neg = _read_results(args.neg)
    detectors = {r.detector for r in pos} | {r.detector for r in neg}
    if len(detectors) != 1:
        raise UsageError(f"mixed detectors across result files: {sorted(detectors)}")
    detector = detectors.pop()
    pos_stats = _statistics(pos, "positive")
    neg_stats = _statistics(neg, "negative")
    os.makedirs(args.out_dir, exist_ok=True)
    curve = roc_auc(pos_stats, neg_stats)
    write_roc_csv(os.path.join(args.out_dir, "roc.csv"), curve)
    write_calibration_csv(
        os.path.join(args.out_dir, "calibration.csv"),
        calibration_curve(neg_stats, [float(t) for t in opts["thresholds"]]),
    )
    summary: dict[str, Any] = {
        "detector": detector,
        "n_pos": len(pos_stats),
        "n_neg": len(neg_stats),
        "auc": curve.auc,
        "tpr_at_fpr": {},
        "thresholds": {},
    }
    for fpr in opts["fpr"]:
        fpr = float(fpr)
        summary["tpr_at_fpr"][f"{fpr:g}"] = tpr_at_fpr(pos_stats, neg_stats, fpr)
        summary["thresholds"][f"{fpr:g}"] = calibrate_threshold(neg_stats, fpr)
    if args.pos_records or args.neg_records:
        if not (args.pos_records and args.neg_records and opts["t_grid"]):
            raise UsageError("detectability needs --pos-records, --neg-records and --t-grid")
        _evaluate_at_t(args, opts)
    try:
        with open(os.path.join(args.out_dir, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise DataError(f"cannot write summary: {exc}") from exc
    print(f"evaluated {len(pos_stats)}+{len(neg_stats)} results; AUC {curve.auc:.4f}")
    return 0


def _evaluate_at_t(args: argparse.Namespace, opts: dict[str, Any]) -> None:
    pos_records, _ = _read_records_lenient(args.pos_records)
    neg_records, _ = _read_records_lenient(args.neg_records)
    gammas = set()
    all_hits: list[list] = []
    for group in (pos_records, neg_records):
        hits_group = []
        for rec in group:
            cfg = _effective_config(rec, opts)
            gammas.add(cfg.gamma)
            lead = None
            if not opts["no_prompt_context"] and rec.prompt:
                lead = rec.prompt[-cfg.scheme.h :]
            hits_group.append(score_tokens(rec.tokens, cfg, leading_context=lead))
        all_hits.append(hits_group)
    if len(gammas) != 1:
        raise UsageError(f"records mix gamma values {sorted(gammas)}; detectability needs one")
    spec = DetectorSpec(
        name=str(opts["detector"]),
        ignore_repeats=bool(opts["ignore_repeats"]),
        min_window=int(opts["min_window"]),
        max_window=None if opts["max_window"] is None else int(opts["max_window"]),
        run_config=RunLengthConfig(
            statistic_variant=str(opts["runlen_variant"]),
            min_run_length_counted=int(opts["runlen_min_run"]),
            counting=str(opts["runlen_counting"]),
        ),
    )
    rows = detectability_at_t(
        all_hits[0], all_hits[1], gammas.pop(), [int(t) for t in opts["t_grid"]], detector=spec
    )
    write_detectability_csv(os.path.join(args.out_dir, "at_t.csv"), rows)


_CALIBRATE_DEFAULTS: dict[str, Any] = {"fpr": [0.01, 0.001]}


def _cmd_calibrate(args: argparse.Namespace) -> int:
    opts = _merge(args, _CALIBRATE_DEFAULTS)
    results = _read_results(args.null)
    stats = _statistics(results, "null")
    out: dict[str, Any] = {
        "detector": results[0].detector,
        "n_null": len(stats),
        "thresholds": {},
    }
    for fpr in opts["fpr"]:
        fpr = float(fpr)
        if len(stats) < 1.0 / fpr:
            print(
                f"warning: {len(stats)} null scores cannot resolve FPR {fpr:g}; "
                "threshold sits beyond the empirical tail",
                file=sys.stderr,
            )
        out["thresholds"][f"{fpr:g}"] = calibrate_threshold(stats, fpr)
    try:
        with open(args.out, "w") as fh:
            json.dump(out, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise DataError(f"cannot write {args.out}: {exc}") from exc
    print(f"calibrated {len(opts['fpr'])} thresholds from {len(stats)} null scores")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="greenmark", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gen = subs.add_parser("generate", help="sample token records from a toy source")
    gen.add_argument("--out", required=True, help="output records JSONL")
    gen.add_argument("--config", help="JSON config file")
    _add_generation_flags(gen)
    gen.add_argument(
        "--no-watermark",
        dest="no_watermark",
        action="store_const",
        const=True,
        help="sample without any bias (null records)",
    )
    gen.set_defaults(func=_cmd_generate)

    atk = subs.add_parser("attack", help="transform records with a simulated attack")
    atk.add_argument("--type", required=True, choices=["cp", "dilute", "anti", "edit"])
    atk.add_argument("--in", dest="infile", help="input records JSONL (cp, dilute, edit)")
    atk.add_argument("--out", required=True, help="output records JSONL")
    atk.add_argument("--config", help="JSON config file")
    atk.add_argument("--context", help="cp: unwatermarked records JSONL supplying context")
    atk.add_argument("--insertions", type=int, help="cp: watermarked spans to insert (default 3)")
    atk.add_argument(
        "--fraction", type=float, help="cp: watermarked fraction of the output (default 0.1)"
    )
    atk.add_argument("--epsilon", type=float, help="dilute: target residual green-rate excess")
    atk.add_argument("--rate", type=float, help="dilute: explicit substitution rate")
    atk.add_argument("--kappa", type=float, help="anti: feedback controller gain (default 4)")
    atk.add_argument("--op", choices=["delete", "insert", "substitute"], help="edit: operation")
    atk.add_argument("--positions", type=_int_list, help="edit: comma-separated positions")
    atk.add_argument("--payload", type=_int_list, help="edit: comma-separated payload tokens")
    _add_generation_flags(atk)
    atk.set_defaults(func=_cmd_attack)

    det = subs.add_parser("detect", help="score records and run a detector")
    det.add_argument("--in", dest="infile", required=True, help="records JSONL")
    det.add_argument("--out", required=True, help="detection results JSONL")
    det.add_argument("--config", help="JSON config file")
    det.add_argument("--detector", choices=["z", "winmax", "runlen"], help="default z")
    det.add_argument(
        "--ignore-repeats",
        dest="ignore_repeats",
        action="store_const",
        const=True,
        help="score each (context, token) pair once",
    )
    det.add_argument("--min-window", type=int, dest="min_window", help="winmax: shortest window")
    det.add_argument("--max-window", type=int, dest="max_window", help="winmax: longest window")
    det.add_argument(
        "--no-prompt-context",
        dest="no_prompt_context",
        action="store_const",
        const=True,
        help="do not seed the first tokens from the record prompt",
    )
    det.add_argument("--gamma", type=float, help="override / supply greenlist fraction")
    det.add_argument("--delta", type=float, help="override / supply bias (unused by detectors)")
    det.add_argument("--scheme", help="override / supply seeding scheme")
    det.add_argument("--salt", type=_hexint, help="override / supply watermark key")
    det.add_argument("--vocab-size", type=int, dest="vocab_size", help="override / supply V")
    det.add_argument(
        "--runlen-variant",
        dest="runlen_variant",
        choices=["pearson", "gtest", "cressie_read"],
        help="run-length statistic variant (default pearson)",
    )
    det.add_argument(
        "--runlen-min-run",
        type=int,
        dest="runlen_min_run",
        help="shortest run length counted (default 1)",
    )
    det.add_argument(
        "--runlen-counting",
        dest="runlen_counting",
        choices=["trials_until_red", "green_blocks"],
        help="run construction rule (default trials_until_red)",
    )
    det.set_defaults(func=_cmd_detect)

    ev = subs.add_parser("evaluate", help="reliability metrics from detection results")
    ev.add_argument("--pos", required=True, help="watermarked detection results JSONL")
    ev.add_argument("--neg", required=True, help="null detection results JSONL")
    ev.add_argument("--out-dir", dest="out_dir", required=True, help="directory for csv/json")
    ev.add_argument("--config", help="JSON config file")
    ev.add_argument("--fpr", type=_float_list, help="comma-separated target FPRs (default 0.01)")
    ev.add_argument(
        "--thresholds", type=_float_list, help="calibration curve thresholds (default 0..4)"
    )
    ev.add_argument("--pos-records", dest="pos_records", help="records for detectability-at-t")
    ev.add_argument("--neg-records", dest="neg_records", help="records for detectability-at-t")
    ev.add_argument("--t-grid", type=_int_list, dest="t_grid", help="prefix lengths, comma-separated")
    ev.add_argument("--detector", choices=["z", "winmax", "runlen"], help="detectability detector")
    ev.add_argument(
        "--ignore-repeats", dest="ignore_repeats", action="store_const", const=True
    )
    ev.add_argument("--min-window", type=int, dest="min_window")
    ev.add_argument("--max-window", type=int, dest="max_window")
    ev.add_argument(
        "--no-prompt-context", dest="no_prompt_context", action="store_const", const=True
    )
    ev.add_argument("--gamma", type=float)
    ev.add_argument("--delta", type=float)
    ev.add_argument("--scheme")
    ev.add_argument("--salt", type=_hexint)
    ev.add_argument("--vocab-size", type=int, dest="vocab_size")
    ev.add_argument(
        "--runlen-variant", dest="runlen_variant", choices=["pearson", "gtest", "cressie_read"]
    )
    ev.add_argument("--runlen-min-run", type=int, dest="runlen_min_run")
    ev.add_argument(
        "--runlen-counting",
        dest="runlen_counting",
        choices=["trials_until_red", "green_blocks"],
    )
    ev.set_defaults(func=_cmd_evaluate)

    cal = subs.add_parser("calibrate", help="decision thresholds from null results")
    cal.add_argument("--null", required=True, help="null detection results JSONL")
    cal.add_argument("--out", required=True, help="output thresholds JSON")
    cal.add_argument("--config", help="JSON config file")
    cal.add_argument("--fpr", type=_float_list, help="comma-separated target FPRs")
    cal.set_defaults(func=_cmd_calibrate)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
