"""Combinatorial greenlist watermarking for token streams: generation against
pluggable toy sources, statistical detection, attack simulation, and
desk-scale reliability evaluation.
"""

from .attack import (
    CopyPasteSpec,
    DilutionSpec,
    anti_watermark_generate,
    apply_span_edit,
    copy_paste,
    dilute,
    solve_substitution_rate,
    span_edit,
)
from .detect import (
    DetectionResult,
    HitSequence,
    RunLengthConfig,
    Verdict,
    calibrate_threshold,
    cumulative_counts,
    p_value,
    run_length_test,
    run_lengths,
    score_tokens,
    winmax,
    z_from_counts,
    z_score,
)
from .errors import DataError, GreenmarkError, UndefinedStatisticError, UsageError
from .evaluate import (
    DetectorSpec,
    RocCurve,
    calibration_curve,
    detectability_at_t,
    distinct_fraction,
    diversity,
    diversity_from_fractions,
    roc_auc,
    tokens_to_detect,
    tpr_at_fpr,
)
from .prf import (
    Aggregator,
    ContextMode,
    SeedingScheme,
    derive_seed,
    prf_hash,
    seed_from_context,
    selfhash_seed,
    splitmix64,
)
from .records import (
    TokenRecord,
    WatermarkConfig,
    iter_jsonl,
    read_token_records,
    write_token_records,
)
from .toylm import (
    MarkovModel,
    SyntheticSource,
    Vocabulary,
    load_markov,
    perplexity,
    save_markov,
    train_markov,
)
from .watermark import (
    LogitSource,
    SamplerConfig,
    bias_logits,
    generate_lefthash,
    generate_selfhash,
    generate_unwatermarked,
    green_list,
    green_mask,
    green_size,
    is_green,
    sample_token,
    softmax,
)

__version__ = "0.1.0"

__all__ = [
    "Aggregator",
    "ContextMode",
    "CopyPasteSpec",
    "DataError",
    "DetectionResult",
    "DetectorSpec",
    "DilutionSpec",
    "GreenmarkError",
    "HitSequence",
    "LogitSource",
    "MarkovModel",
    "RocCurve",
    "RunLengthConfig",
    "SamplerConfig",
    "SeedingScheme",
    "SyntheticSource",
    "TokenRecord",
    "UndefinedStatisticError",
    "UsageError",
    "Verdict",
    "Vocabulary",
    "WatermarkConfig",
    "anti_watermark_generate",
    "apply_span_edit",
    "bias_logits",
    "calibrate_threshold",
    "calibration_curve",
    "copy_paste",
    "cumulative_counts",
    "derive_seed",
    "detectability_at_t",
    "dilute",
    "distinct_fraction",
    "diversity",
    "diversity_from_fractions",
    "generate_lefthash",
    "generate_selfhash",
    "generate_unwatermarked",
    "green_list",
    "green_mask",
    "green_size",
    "is_green",
    "iter_jsonl",
    "load_markov",
    "p_value",
    "perplexity",
    "prf_hash",
    "read_token_records",
    "roc_auc",
    "run_length_test",
    "run_lengths",
    "sample_token",
    "save_markov",
    "score_tokens",
    "seed_from_context",
    "selfhash_seed",
    "softmax",
    "solve_substitution_rate",
    "span_edit",
    "splitmix64",
    "tokens_to_detect",
    "tpr_at_fpr",
    "train_markov",
    "winmax",
    "write_token_records",
    "z_from_counts",
    "z_score",
]
