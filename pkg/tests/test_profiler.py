import pytest
from hypothesis import given
from hypothesis import strategies as st

from crashlens.classifier import partition
from crashlens.model import (
    Action,
    Actor,
    Alignment,
    ContributingFactor,
    EvasiveResponse,
    MaidsConfig,
    MergedConfig,
    Quality,
    Stage,
)
from crashlens.profiler import (
    UNMAPPED,
    EmptyBucketError,
    SkillRuleError,
    build_profile,
    evasive_quality_breakdown,
    load_skill_rules,
    map_skills,
    parse_skill_rules,
    population_context,
)

from conftest import make_record

PERCEPTION = "perception–action coupling under time pressure"
CURVE = "curve trajectory, lane position and speed selection"
RISK = "risk attitudes, overtaking and speed choice"
BRAKING = "emergency braking control"
CONSPICUITY = "conspicuity and right-of-way defensive strategy"
HAZARD = "hazard anticipation / attention"

EXPECTED_SKILLS = {
    MergedConfig.SCP_LD: [PERCEPTION, CONSPICUITY],
    MergedConfig.TIP_LD: [BRAKING, CONSPICUITY],
    MergedConfig.TAP_OD: [PERCEPTION, BRAKING, CONSPICUITY],
    MergedConfig.TAP_SD: [PERCEPTION, CONSPICUITY],
    MergedConfig.RE_SD: [HAZARD, BRAKING],
    MergedConfig.HS_OD: [PERCEPTION, CURVE, RISK],
    MergedConfig.SV: [CURVE, RISK],
}


def ev(action, sel=Quality.UNKNOWN, exe=Quality.UNKNOWN):
    return EvasiveResponse(action, sel, exe)


def rider(stage):
    return ContributingFactor(Actor.RIDER_MC, stage)


@pytest.fixture(scope="module")
def profiles(study_partition):
    ctx = population_context(study_partition)
    return {cfg: build_profile(study_partition, cfg, context=ctx) for cfg in EXPECTED_SKILLS}


def test_empty_bucket_is_an_error():
    with pytest.raises(EmptyBucketError, match="no cases for configuration SV"):
        build_profile(partition([make_record()]), MergedConfig.SV)


def test_unknown_type_never_dominates_alone():
    recs = [make_record(f"A{i}", primary_factor=rider(Stage.UNKNOWN_TYPE)) for i in range(3)]
    recs.append(make_record("B", primary_factor=rider(Stage.DECISION)))
    prof = build_profile(partition(recs), MergedConfig.HS_OD)
    assert prof.dominant_factor == "RIDER_MC.DECISION"
    assert prof.actor_shares["RIDER_MC"] == 100.0


def test_ties_are_reported_together():
    recs = [
        make_record("A", primary_factor=rider(Stage.DECISION)),
        make_record("B", primary_factor=ContributingFactor(Actor.DRIVER_OV, Stage.DETECTION)),
    ]
    prof = build_profile(partition(recs), MergedConfig.HS_OD)
    assert set(prof.dominant_factors) == {"RIDER_MC.DECISION", "DRIVER_OV.DETECTION"}


def test_no_evasive_threshold_is_inclusive():
    recs = [make_record("A", evasive=ev(Action.NO_ACTION))]
    recs += [make_record(f"B{i}", evasive=ev(Action.BRAKE)) for i in range(3)]
    recs.append(make_record("C", evasive=ev(Action.UNKNOWN)))
    prof = build_profile(partition(recs), MergedConfig.HS_OD)
    assert prof.no_evasive_share == 25.0 and prof.no_evasive_flagged
    assert not build_profile(partition(recs), MergedConfig.HS_OD, no_evasive_threshold=25.1).no_evasive_flagged


def test_curve_dominance_and_short_tpei():
    recs = [
        make_record("A", alignment=Alignment.CURVE_LEFT, tpei_s=1.74),
        make_record("B", alignment=Alignment.CURVE_RIGHT, tpei_s=1.7),
        make_record("C", alignment=Alignment.STRAIGHT, tpei_s=1.6),
        make_record("D", alignment=Alignment.UNKNOWN),
    ]
    prof = build_profile(partition(recs), MergedConfig.HS_OD)
    assert prof.curve_dominant and prof.curve_share == pytest.approx(200 / 3)
    assert prof.short_tpei  # mean 1.68 rounds to 1.7


def test_quality_breakdown_pools_selected_configs():
    recs = [
        make_record("A", evasive=ev(Action.BRAKE, Quality.PROPER, Quality.IMPROPER)),
        make_record("B", evasive=ev(Action.BRAKE, Quality.PROPER, Quality.PROPER)),
        make_record("C", evasive=ev(Action.SWERVE, Quality.IMPROPER)),
        make_record("D", maids_config=MaidsConfig.PTW_IMPACTING_OBJECT, evasive=ev(Action.BRAKE, Quality.PROPER)),
        make_record("E", evasive=ev(Action.NO_ACTION)),
    ]
    total = evasive_quality_breakdown(partition(recs))
    assert total.config == "Total" and total.attempted == 3
    assert total.selection == {"PROPER": 2, "IMPROPER": 1, "UNKNOWN": 0}
    assert total.improper_execution_share(Action.BRAKE) == 50.0
    assert total.improper_execution_share(Action.SWERVE) is None
    assert evasive_quality_breakdown(partition(recs), MergedConfig.SV).empty


def test_synthetic_profiles(profiles):
    tap = profiles[MergedConfig.TAP_OD]
    assert tap.dominant_factor == "DRIVER_OV.DETECTION"
    assert round(tap.factor_shares["DRIVER_OV.DETECTION"], 1) == 67.4
    sv = profiles[MergedConfig.SV]
    assert sv.curve_dominant and sv.dominant_factor == "RIDER_MC.DECISION"
    annotations = {
        (cfg, m.action): m.annotation for cfg, p in profiles.items() for m in p.overrepresented_maneuvers
    }
    assert annotations[(MergedConfig.TIP_LD, "BRAKE")] == "significant"
    assert annotations[(MergedConfig.TAP_OD, "BRAKE")] == "borderline"


def test_default_skill_mapping(profiles):
    rules = load_skill_rules()
    got = {cfg: [s.skill for s in map_skills(p, rules)] for cfg, p in profiles.items()}
    assert got == EXPECTED_SKILLS


def test_unmapped_when_nothing_fires(profiles):
    rules = parse_skill_rules('rule r: when n > 100000 then skill "x" because "y"')
    assert [s.skill for s in map_skills(profiles[MergedConfig.SV], rules)] == [UNMAPPED]


def test_rule_with_quoted_values_and_membership(profiles):
    rules = parse_skill_rules(
        'rule r: when overrepresented == BRAKE and config != "SV" then skill "s \\"q\\"" because "b"'
    )
    assert rules.rules[0].skill == 's "q"'
    assert [s.skill for s in map_skills(profiles[MergedConfig.TIP_LD], rules)] == ['s "q"']


@pytest.mark.parametrize(
    "text, message",
    [
        ('rule r: when bogus == 1 then skill "s" because "b"', "line 1, column 14: unknown field 'bogus'"),
        ('rule r: when n == many then skill "s" because "b"', "needs a number"),
        ('rule r: when short_tpei == yes then skill "s" because "b"', "needs true or false"),
        ('rule r: when config > 3 then skill "s" because "b"', "needs a numeric field"),
        ('rule r: when n > 1 then skill "s"', "expected because"),
        ('rule r: when n > 1 then skill "s" because "b" extra', "unexpected text"),
        ('rule r: when n > 1 then skill "s" because "b"\nrule r: when n > 1 then skill "s" because "b"',
         "line 2, column 6: duplicate rule id"),
        ('rule r: when n > 1 then skill "s" because "b" !', "unexpected character"),
    ],
)
def test_malformed_skill_rules(text, message):
    with pytest.raises(SkillRuleError, match=message):
        parse_skill_rules(text)


@given(st.lists(st.sampled_from([Alignment.STRAIGHT, Alignment.CURVE_LEFT, Alignment.CORNER]), min_size=1))
def test_curve_share_is_a_percentage(alignments):
    recs = [make_record(f"C{i}", alignment=a) for i, a in enumerate(alignments)]
    prof = build_profile(partition(recs), MergedConfig.HS_OD)
    assert 0 <= prof.curve_share <= 100
    assert prof.curve_dominant == (prof.curve_share > prof.straight_share)


@given(st.lists(st.sampled_from(list(Action)), min_size=1, max_size=60))
def test_no_evasive_share_bounds(actions):
    recs = [make_record(f"C{i}", evasive=ev(a)) for i, a in enumerate(actions)]
    prof = build_profile(partition(recs), MergedConfig.HS_OD)
    if prof.evasive_n == 0:
        assert prof.no_evasive_share is None and not prof.no_evasive_flagged
    else:
        assert 0 <= prof.no_evasive_share <= 100
