import io

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crashlens.ingestion import (
    COLUMNS,
    Format,
    ParseError,
    StrictModeError,
    dumps_records,
    filter_study_population,
    format_for_path,
    parse_records,
    record_to_fields,
    split_selected_vs_other,
)
from crashlens.model import (
    Action,
    Actor,
    Alignment,
    ContributingFactor,
    EvasiveResponse,
    FactorDetail,
    MaidsConfig,
    PtwClass,
    Quality,
    Stage,
)

from conftest import make_record

HEADER = ",".join(COLUMNS)


def csv_of(*rows):
    return (HEADER + "\n" + "\n".join(rows) + "\n").encode()


def row(**values):
    base = dict.fromkeys(COLUMNS, "")
    base.update(case_id="C1", ptw_class="L3", mais="2", maids_config="head_on")
    base.update({k: str(v) for k, v in values.items()})
    return ",".join(base[c] for c in COLUMNS)


def test_minimal_row():
    result = parse_records(csv_of(row()))
    assert result.rejects == []
    rec = result.records[0]
    assert rec.ptw_class is PtwClass.L3_MOTORCYCLE
    assert rec.maids_config is MaidsConfig.HEAD_ON
    assert rec.primary_factor is None and rec.evasive is None
    assert rec.alignment is Alignment.UNKNOWN


def test_negative_impact_speed_is_rejected_with_line_number():
    result = parse_records(csv_of(row(case_id="A"), row(case_id="B", impact_speed_kmh=-5)))
    assert [r.case_id for r in result.records] == ["A"]
    assert len(result.rejects) == 1
    assert result.rejects[0].row == 3
    assert "negative speed" in result.rejects[0].reason


def test_strict_mode_raises_with_every_reject():
    data = csv_of(row(mais=8), row(case_id="B", impact_speed_kmh=-5), row(case_id="C"))
    with pytest.raises(StrictModeError) as info:
        parse_records(data, strict=True)
    assert [r.row for r in info.value.rejects] == [2, 3]


def test_empty_file_with_header_gives_empty_list():
    assert parse_records(csv_of()).records == []
    assert parse_records((HEADER + "\n").encode()).records == []


def test_empty_stream_is_a_parse_error():
    with pytest.raises(ParseError, match="missing header"):
        parse_records(b"")


def test_header_mismatch():
    with pytest.raises(ParseError, match="header mismatch"):
        parse_records(b"case_id,foo\nC1,1\n")


def test_aliases_and_descriptions():
    text = csv_of(
        row(case_id="A", ptw_class="moped", maids_config="PTW impacting rear of OV"),
        row(case_id="B", ptw_class="mofa", maids_config="other_unspecified"),
        row(case_id="C", maids_config="", factor_actor="rider_mc", factor_stage="decision"),
    )
    recs = parse_records(text).records
    assert recs[0].ptw_class is PtwClass.L1_MOPED
    assert recs[0].maids_config is MaidsConfig.PTW_IMPACTING_REAR_OF_OV
    assert recs[1].maids_config is MaidsConfig.UNKNOWN
    assert recs[2].maids_config is MaidsConfig.UNKNOWN
    assert recs[2].primary_factor == ContributingFactor(Actor.RIDER_MC, Stage.DECISION)


@pytest.mark.parametrize(
    "values, message",
    [
        (dict(ptw_class="bicycle"), "unknown ptw_class"),
        (dict(mais="2.5"), "mais is not an integer"),
        (dict(maids_config="nope"), "unknown maids_config"),
        (dict(factor_stage="DETECTION"), "without factor_actor"),
        (dict(evasive_selection="PROPER"), "without evasive_action"),
        (dict(posted_speed_kmh="fast"), "not a number"),
        (dict(rider_impairment_primary="yes"), "must be 'true' or 'false'"),
        (dict(evasive_action="NO_ACTION", evasive_execution="PROPER"), "execution not assessable"),
    ],
)
def test_bad_rows(values, message):
    result = parse_records(csv_of(row(**values)))
    assert result.records == []
    assert message in result.rejects[0].reason


def test_wrong_field_count():
    result = parse_records(csv_of("C1,L3,2"))
    assert "expected 16 fields" in result.rejects[0].reason


def test_json_lines():
    data = (
        b'{"case_id": "A", "ptw_class": "L1", "mais": 4, "maids_config": "head_on", "tpei_s": 1.5}\n'
        b"\n"
        b"not json\n"
        b'{"case_id": "B", "ptw_class": "L3", "colour": "red"}\n'
        b"[1, 2]\n"
    )
    result = parse_records(data, Format.JSON_LINES)
    assert [r.case_id for r in result.records] == ["A"]
    assert result.records[0].tpei_s == 1.5
    assert [r.row for r in result.rejects] == [3, 4, 5]
    assert "unknown field(s): colour" in result.rejects[1].reason


def test_text_and_binary_streams_agree():
    text = csv_of(row(), row(case_id="C2")).decode()
    assert parse_records(io.StringIO(text)) == parse_records(io.BytesIO(text.encode()))


def test_format_for_path():
    assert format_for_path("x.jsonl") is Format.JSON_LINES
    assert format_for_path("x.JSON") is Format.JSON_LINES
    assert format_for_path("x.csv") is Format.CSV


def test_all_mofa_input_leaves_no_study_population():
    records = [make_record(f"M{i}", ptw_class=PtwClass.MOFA) for i in range(10)]
    retained, report = filter_study_population(records)
    assert retained == []
    assert report.n_excluded_mofa == 10 and report.n_study_population == 0


def test_filter_order_counts_impaired_mofa_as_impairment():
    records = [
        make_record("A", ptw_class=PtwClass.MOFA, rider_impairment_primary=True),
        make_record("B", mechanical_primary=True),
        make_record("C", ptw_class=PtwClass.MOFA),
        make_record("D", maids_config=MaidsConfig.PTW_IMPACTING_OBJECT),
        make_record("E"),
    ]
    retained, report = filter_study_population(records)
    assert [r.case_id for r in retained] == ["D", "E"]
    assert (report.n_excluded_impairment_mechanical, report.n_excluded_mofa) == (2, 1)
    assert (report.n_selected_configs, report.n_other_bucket) == (1, 1)
    selected, other = split_selected_vs_other(retained)
    assert [r.case_id for r in selected] == ["E"] and [r.case_id for r in other] == ["D"]


def test_default_synthetic_filter_report(study):
    _, report = study
    assert report.n_input == 921
    assert report.n_excluded_impairment_mechanical + report.n_excluded_mofa == 118
    assert report.n_excluded_mofa == 43
    assert report.n_study_population == 803
    assert (report.n_selected_configs, report.n_other_bucket) == (665, 138)


# ---------------------------------------------------------------- round trip

_speeds = st.none() | st.floats(1, 300, allow_nan=False).map(lambda x: round(x, 3))
_factors = st.none() | st.builds(
    ContributingFactor, st.sampled_from([Actor.RIDER_MC, Actor.DRIVER_OV]), st.sampled_from(list(Stage))
) | st.builds(
    ContributingFactor,
    st.sampled_from([Actor.ENVIRONMENT, Actor.OTHER]),
    st.none(),
    st.sampled_from(list(FactorDetail)),
)
_evasive = st.none() | st.builds(
    EvasiveResponse,
    st.sampled_from([a for a in Action if a is not Action.NO_ACTION]),
    st.sampled_from(list(Quality)),
    st.sampled_from(list(Quality)),
) | st.just(EvasiveResponse(Action.NO_ACTION, Quality.UNKNOWN, Quality.UNKNOWN))

records_strategy = st.builds(
    make_record,
    case_id=st.text("abcXYZ019-_", min_size=1, max_size=12),
    ptw_class=st.sampled_from(list(PtwClass)),
    mais=st.none() | st.integers(0, 6),
    maids_config=st.sampled_from(list(MaidsConfig)),
    primary_factor=_factors,
    evasive=_evasive,
    alignment=st.sampled_from(list(Alignment)),
    posted_speed_kmh=_speeds,
    impact_speed_kmh=st.none() | st.just(0.0) | _speeds,
    tpei_s=st.none() | st.floats(0, 10, allow_nan=False).map(lambda x: round(x, 2)),
    rider_impairment_primary=st.booleans(),
    mechanical_primary=st.booleans(),
)


@settings(max_examples=300)
@given(st.lists(records_strategy, max_size=20), st.sampled_from(list(Format)))
def test_serialize_parse_round_trip(records, fmt):
    text = dumps_records(records, fmt)
    result = parse_records(text.encode(), fmt, strict=True)
    assert result.records == records


@given(records_strategy)
def test_record_to_fields_covers_every_column(record):
    assert tuple(record_to_fields(record)) == COLUMNS
