"""Attack simulations and their bookkeeping."""

import math

import numpy as np
import pytest

from greenmark import (
    CopyPasteSpec,
    DilutionSpec,
    SamplerConfig,
    SeedingScheme,
    SyntheticSource,
    UsageError,
    WatermarkConfig,
    anti_watermark_generate,
    apply_span_edit,
    copy_paste,
    dilute,
    generate_lefthash,
    score_tokens,
    span_edit,
    z_score,
)

SALT = 0x5EED


def make_config(**overrides):
    kwargs = dict(
        scheme=SeedingScheme.from_string("Additive-LeftHash,1"),
        salt=SALT,
        gamma=0.25,
        delta=2.0,
        vocab_size=64,
    )
    kwargs.update(overrides)
    return WatermarkConfig(**kwargs)


@pytest.fixture(scope="module")
def source64():
    return SyntheticSource(vocab_size=64, entropy_target=3.0, rng_seed=1)


@pytest.fixture(scope="module")
def wm_record(source64):
    cfg = make_config()
    return generate_lefthash([3], 400, cfg, source64, SamplerConfig(0.7, 99), record_id="wm")


class TestCopyPasteSpec:
    def test_name(self):
        assert CopyPasteSpec(n_insertions=3, watermark_fraction=0.1).name == "CP-3-10%"
        assert CopyPasteSpec(n_insertions=1, watermark_fraction=0.25).name == "CP-1-25%"

    def test_validation(self):
        with pytest.raises(UsageError):
            CopyPasteSpec(n_insertions=0, watermark_fraction=0.1)
        with pytest.raises(UsageError):
            CopyPasteSpec(n_insertions=1, watermark_fraction=0.0)
        with pytest.raises(UsageError):
            CopyPasteSpec(n_insertions=1, watermark_fraction=1.1)


class TestCopyPaste:
    def test_span_layout(self, wm_record):
        ctx = list(range(30, 50)) * 45  # 900 unwatermarked tokens
        out = copy_paste(wm_record, ctx, CopyPasteSpec(3, 0.1, rng_seed=5))
        mask = np.asarray(out.span_mask)
        assert len(out.tokens) == 1000
        assert int(mask.sum()) == 100  # floor(0.1 * 1000)
        # recover the spans: boundaries where the mask switches on
        edges = np.flatnonzero(np.diff(np.concatenate([[0], mask.view(np.int8), [0]])) == 1)
        ends = np.flatnonzero(np.diff(np.concatenate([[0], mask.view(np.int8), [0]])) == -1)
        sizes = (ends - edges).tolist()
        assert sorted(sizes) == [33, 33, 34]
        # watermarked tokens appear in order; context likewise
        assert [t for t, m in zip(out.tokens, mask) if m] == wm_record.tokens[:100]
        assert [t for t, m in zip(out.tokens, mask) if not m] == ctx
        assert out.id == "wm:CP-3-10%"
        assert out.attack_meta["params"]["n_insertions"] == 3

    def test_spans_disjoint(self, wm_record):
        ctx = list(range(64)) * 15
        out = copy_paste(wm_record, ctx, CopyPasteSpec(4, 0.2, rng_seed=6))
        mask = np.asarray(out.span_mask, dtype=np.int8)
        starts = np.flatnonzero(np.diff(np.concatenate([[0], mask])) == 1)
        assert len(starts) == 4  # four separated runs, none merged

    def test_single_span(self, wm_record):
        ctx = list(range(60)) * 15
        out = copy_paste(wm_record, ctx, CopyPasteSpec(1, 0.1, rng_seed=7))
        mask = np.asarray(out.span_mask, dtype=np.int8)
        assert int(mask.sum()) == 100
        assert len(np.flatnonzero(np.diff(np.concatenate([[0], mask])) == 1)) == 1

    def test_fraction_one_degenerate(self, wm_record):
        out = copy_paste(wm_record, [1, 2, 3], CopyPasteSpec(2, 1.0))
        assert out.tokens == wm_record.tokens
        assert all(out.span_mask)

    def test_deterministic(self, wm_record):
        ctx = list(range(50)) * 10
        a = copy_paste(wm_record, ctx, CopyPasteSpec(3, 0.1, rng_seed=8))
        b = copy_paste(wm_record, ctx, CopyPasteSpec(3, 0.1, rng_seed=8))
        c = copy_paste(wm_record, ctx, CopyPasteSpec(3, 0.1, rng_seed=9))
        assert a.tokens == b.tokens
        assert a.tokens != c.tokens  # different gap placement

    def test_errors(self, wm_record):
        with pytest.raises(UsageError):
            copy_paste(wm_record, [1] * 10, CopyPasteSpec(5, 0.1))  # only 1 token to split
        short = generate_lefthash([3], 5, wm_record.config, SyntheticSource(64, 3.0, 1), SamplerConfig())
        with pytest.raises(UsageError):
            copy_paste(short, [1] * 900, CopyPasteSpec(3, 0.1))  # needs 100 wm tokens


class TestDilutionSpec:
    def test_exactly_one_mode(self):
        with pytest.raises(UsageError):
            DilutionSpec()
        with pytest.raises(UsageError):
            DilutionSpec(epsilon=0.1, substitution_rate=0.5)
        with pytest.raises(UsageError):
            DilutionSpec(epsilon=-0.1)
        with pytest.raises(UsageError):
            DilutionSpec(substitution_rate=1.5)

    def test_names(self):
        assert DilutionSpec(epsilon=0.1).name == "dilute-eps0.1"
        assert DilutionSpec(substitution_rate=0.3).name == "dilute-r0.3"


class TestSolveSubstitutionRate:
    def test_analytic_value(self):
        from greenmark import solve_substitution_rate

        # (1-r)^2 = eps*gamma/(g0-gamma) = 0.025/0.5 at h=1
        r = solve_substitution_rate(0.1, 0.25, 0.75, 1)
        assert r == pytest.approx(1.0 - math.sqrt(0.05), rel=1e-12)
        # wider context windows need less substitution per position
        assert solve_substitution_rate(0.1, 0.25, 0.75, 3) < r

    def test_infeasible_rejected(self):
        from greenmark import solve_substitution_rate

        with pytest.raises(UsageError):
            solve_substitution_rate(0.5, 0.25, 0.30, 1)  # ratio above 1
        with pytest.raises(UsageError):
            solve_substitution_rate(0.1, 0.25, 0.20, 1)  # already below gamma
        with pytest.raises(UsageError):
            solve_substitution_rate(3.1, 0.25, 0.9, 1)  # target rate above 1


class TestDilute:
    def test_rate_zero_identity(self, wm_record, source64):
        out = dilute(wm_record, source64, DilutionSpec(substitution_rate=0.0))
        assert out.tokens == wm_record.tokens
        assert all(out.span_mask)

    def test_rate_one_replaces_everything(self, wm_record, source64):
        out = dilute(wm_record, source64, DilutionSpec(substitution_rate=1.0, rng_seed=3))
        assert not any(out.span_mask)
        assert len(out.tokens) == len(wm_record.tokens)

    def test_kept_positions_preserve_tokens(self, wm_record, source64):
        out = dilute(wm_record, source64, DilutionSpec(substitution_rate=0.5, rng_seed=4))
        kept = [i for i, m in enumerate(out.span_mask) if m]
        frac = len(kept) / len(out.tokens)
        assert abs(frac - 0.5) < 4 * math.sqrt(0.25 / len(out.tokens))
        for i in kept:
            assert out.tokens[i] == wm_record.tokens[i]

    def test_epsilon_mode_solves_rate(self, wm_record, source64):
        out = dilute(wm_record, source64, DilutionSpec(epsilon=0.2, rng_seed=5))
        params = out.attack_meta["params"]
        from greenmark import solve_substitution_rate

        g0 = params["green_rate_before"]
        assert g0 > 0.5  # the mother record is strongly watermarked
        assert params["substitution_rate"] == pytest.approx(
            solve_substitution_rate(0.2, 0.25, g0, 1), rel=1e-12
        )

    def test_epsilon_mode_hits_target_rate(self, source64):
        # average post-attack green rate over fresh records near gamma*(1+eps)
        cfg = make_config()
        greens = scored = 0
        for i in range(30):
            rec = generate_lefthash([i % 64], 400, cfg, source64, SamplerConfig(0.7, 500 + i))
            out = dilute(rec, source64, DilutionSpec(epsilon=0.2, rng_seed=i))
            hits = score_tokens(out.tokens, cfg, leading_context=out.prompt[-1:])
            res = z_score(hits, cfg.gamma)
            greens += res.green_count
            scored += res.scored_count
        target = 0.25 * 1.2
        se = math.sqrt(target * (1 - target) / scored)
        assert abs(greens / scored - target) < 5 * se

    def test_deterministic(self, wm_record, source64):
        a = dilute(wm_record, source64, DilutionSpec(substitution_rate=0.4, rng_seed=11))
        b = dilute(wm_record, source64, DilutionSpec(substitution_rate=0.4, rng_seed=11))
        assert a.tokens == b.tokens

    def test_errors(self, wm_record, source64):
        bare = wm_record
        no_cfg = type(bare)(id="x", prompt=bare.prompt, tokens=bare.tokens, config=None)
        with pytest.raises(UsageError):
            dilute(no_cfg, source64, DilutionSpec(substitution_rate=0.5))
        with pytest.raises(UsageError):
            dilute(wm_record, SyntheticSource(32, 3.0, 1), DilutionSpec(substitution_rate=0.5))


class TestSpanEdit:
    def test_insert(self):
        out = span_edit([10, 11, 12, 13, 14], "insert", [0, 2], [99, 98])
        assert out == [99, 10, 11, 98, 12, 13, 14]

    def test_delete(self):
        assert span_edit([5, 6, 7, 8], "delete", [0, 2]) == [6, 8]

    def test_substitute(self):
        assert span_edit([5, 6, 7], "substitute", [1], [60]) == [5, 60, 7]

    def test_errors(self):
        with pytest.raises(UsageError):
            span_edit([1, 2], "swap", [0])
        with pytest.raises(UsageError):
            span_edit([1, 2], "delete", [0, 0])
        with pytest.raises(UsageError):
            span_edit([1, 2], "delete", [2])
        with pytest.raises(UsageError):
            span_edit([1, 2], "delete", [0], payload=[9])
        with pytest.raises(UsageError):
            span_edit([1, 2], "insert", [3], [9])  # insert allows up to len
        with pytest.raises(UsageError):
            span_edit([1, 2], "substitute", [0], [1, 2])  # payload length

    def test_insert_at_end_allowed(self):
        assert span_edit([1, 2], "insert", [2], [9]) == [1, 2, 9]


class TestApplySpanEdit:
    def test_delete_updates_mask(self, wm_record):
        out = apply_span_edit(wm_record, "delete", [0, 5])
        assert len(out.tokens) == len(wm_record.tokens) - 2
        assert len(out.span_mask) == len(out.tokens)
        assert out.attack_meta["params"]["length_before"] == len(wm_record.tokens)
        assert out.attack_meta["params"]["length_after"] == len(out.tokens)
        assert out.id.endswith(":edit-delete")

    def test_substitute_marks_positions(self, wm_record):
        out = apply_span_edit(wm_record, "substitute", [3, 7], [0, 1])
        assert out.span_mask[3] is False and out.span_mask[7] is False
        assert out.span_mask[0] is True

    def test_insert_adds_unwatermarked_positions(self, wm_record):
        out = apply_span_edit(wm_record, "insert", [0], [9])
        assert len(out.tokens) == len(wm_record.tokens) + 1
        assert out.tokens[0] == 9
        assert out.span_mask[0] is False and out.span_mask[1] is True


class TestAntiWatermark:
    def test_exact_green_count_and_zero_z(self, source64):
        cfg = make_config()
        rec = anti_watermark_generate([3], 100, cfg, source64, SamplerConfig(0.9, 7), kappa=4.0)
        params = rec.attack_meta["params"]
        assert params["target_green"] == 25
        assert params["achieved_green"] == 25
        assert params["failed"] is False
        hits = score_tokens(rec.tokens, cfg, leading_context=rec.prompt[-1:])
        res = z_score(hits, cfg.gamma)
        assert res.green_count == 25
        assert res.statistic == 0.0

    def test_round_half_up_target(self, source64):
        cfg = make_config(gamma=0.5)
        rec = anti_watermark_generate([3], 5, cfg, source64, SamplerConfig(0.9, 8))
        assert rec.attack_meta["params"]["target_green"] == 3  # 2.5 rounds up

    def test_selfhash_variant(self, source64):
        cfg = make_config(scheme=SeedingScheme.from_string("Min-SelfHash-anchored,2"))
        rec = anti_watermark_generate([3, 4], 60, cfg, source64, SamplerConfig(0.9, 9))
        params = rec.attack_meta["params"]
        assert params["achieved_green"] == params["target_green"] == 15
        hits = score_tokens(rec.tokens, cfg, leading_context=rec.prompt[-2:])
        assert z_score(hits, cfg.gamma).green_count == 15

    def test_errors(self, source64):
        cfg = make_config()
        with pytest.raises(UsageError):
            anti_watermark_generate([3], 0, cfg, source64, SamplerConfig())
        with pytest.raises(UsageError):
            anti_watermark_generate([], 10, cfg, source64, SamplerConfig())
        with pytest.raises(UsageError):
            anti_watermark_generate([3], 10, make_config(vocab_size=32), source64, SamplerConfig())
