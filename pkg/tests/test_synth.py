from collections import Counter
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crashlens.classifier import classify
from crashlens.ingestion import filter_study_population
from crashlens.model import MergedConfig, PtwClass
from crashlens.oracle import verify_records
from crashlens.synth import (
    InfeasibleProfileError,
    LogNormalFit,
    ReconstructionError,
    build_2x2,
    generate,
    parse_profile,
    plan_quotas,
    reconstruct_counts,
)


def categorical(records):
    """Per-configuration marginal counts of every categorical field."""
    fields = (
        lambda r: r.ptw_class,
        lambda r: r.mais is not None and r.mais >= 3,
        lambda r: r.primary_factor,
        lambda r: r.evasive,
        lambda r: r.alignment,
    )
    return [Counter((classify(r), get(r)) for r in records) for get in fields]


def test_reconstruct_counts_examples():
    assert reconstruct_counts(17.0, 182) == 31
    assert reconstruct_counts(16.1, 483) == 78
    assert reconstruct_counts(0, 182) == 0
    assert reconstruct_counts(0, 0) == 0


def test_reconstruct_counts_rejects_impossible_share():
    with pytest.raises(ReconstructionError):
        reconstruct_counts(50.0, 3)
    with pytest.raises(ValueError):
        reconstruct_counts(101, 10)


def test_build_2x2_examples():
    assert build_2x2(31, 95, 182, 800) == (31, 64, 151, 554)
    assert build_2x2(78, 89, 483, 803) == (78, 11, 405, 309)


def test_build_2x2_inconsistent_margins():
    with pytest.raises(ValueError):
        build_2x2(5, 4, 10, 20)
    with pytest.raises(ValueError):
        build_2x2(1, 5, 30, 20)


@settings(max_examples=500)
@given(st.integers(0, 2000), st.data())
def test_reconstruction_round_trips_rounded_shares(n, data):
    count = data.draw(st.integers(0, n))
    share = round(100 * count / n, 1) if n else 0.0
    got = reconstruct_counts(share, n)
    assert abs(100 * got / max(n, 1) - share) <= 0.1 + 1e-9


@settings(max_examples=500)
@given(st.integers(0, 300), st.integers(0, 300), st.integers(0, 300), st.integers(0, 300))
def test_build_2x2_inverts_margins(a, b, c, d):
    assert build_2x2(a, a + b, a + c, a + b + c + d) == (a, b, c, d)


def test_lognormal_fit_pins_the_mean():
    fit = LogNormalFit.from_summary(45.0, 30.0, 55.0)
    assert fit.mean == pytest.approx(45.0)
    assert fit.quantile(0.75) / fit.quantile(0.25) == pytest.approx(55.0 / 30.0)


def test_default_profile_is_sound(default_profile):
    assert default_profile.check() == []
    assert parse_profile(default_profile.to_text()) == default_profile


def test_default_plan_sizes(default_profile):
    plan = plan_quotas(default_profile)
    assert plan.study_n == 803 and plan.input_n == 921
    sizes = {c.value: q.n for c, q in plan.buckets.items()}
    assert sizes == {
        "SCP_LD": 136, "TIP_LD": 100, "TAP_OD": 95, "TAP_SD": 134,
        "RE_SD": 52, "HS_OD": 59, "SV": 89, "OTHER": 138,
    }
    assert plan.buckets[MergedConfig.TAP_OD].severe == 31


def test_zero_total_gives_empty_dataset():
    profile = parse_profile("total_n = 0\n")
    assert generate(profile, 1) == []


def test_infeasible_profile_lists_every_bad_margin(default_profile):
    bad = replace(default_profile, config_shares={**default_profile.config_shares, MergedConfig.SV: 11.3})
    with pytest.raises(InfeasibleProfileError) as info:
        plan_quotas(bad)
    assert any(m.startswith("config") for m in info.value.margins)


def test_generation_is_deterministic(default_profile):
    assert generate(default_profile, 7) == generate(default_profile, 7)


def test_seed_changes_numerics_not_categories(default_profile):
    one, two = generate(default_profile, 1), generate(default_profile, 2)
    (kept1, report1), (kept2, report2) = filter_study_population(one), filter_study_population(two)
    assert report1 == report2
    assert categorical(kept1) == categorical(kept2)
    assert sorted(r.impact_speed_kmh or 0 for r in one) != sorted(r.impact_speed_kmh or 0 for r in two)


def test_scaled_dataset_keeps_every_share(default_profile):
    records = generate(default_profile, 3, scale=3)
    retained, report = filter_study_population(records)
    assert report.n_study_population == 3 * 803
    l3 = sum(1 for r in retained if r.ptw_class is PtwClass.L3_MOTORCYCLE)
    assert l3 == 3 * 483


def test_generated_dataset_passes_the_oracle(synthetic, default_profile):
    failed = [c.line() for c in verify_records(synthetic, default_profile) if not c.passed]
    assert failed == []


def test_unique_case_ids(synthetic):
    assert len({r.case_id for r in synthetic}) == len(synthetic) == 921
