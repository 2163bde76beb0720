"""Assemble analysis results into a report bundle and render it as CSV, Markdown or JSON."""

from __future__ import annotations

import collections.abc
import csv
import dataclasses
import io
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Mapping, Optional, Sequence, Union, get_args, get_origin, get_type_hints

from .classifier import ConfigRulebook, default_rulebook, partition as partition_records
from .ingestion import FilterReport
from .model import (
    Action,
    Actor,
    CrashRecord,
    FactorDetail,
    MergedConfig,
    PtwClass,
    Quality,
    SELECTED_CONFIGS,
    Stage,
    is_severe,
)
from .profiler import (
    NO_EVASIVE_THRESHOLD,
    SHORT_TPEI_THRESHOLD,
    ConfigProfile,
    QualityBreakdown,
    SkillRecommendation,
    SkillRulebook,
    action_margins,
    build_profile,
    evasive_quality_breakdown,
    load_skill_rules,
    map_skills,
    population_context,
)
from .stats import (
    DegenerateMarginError,
    FrequencyTable,
    OddsRatioResult,
    SpeedTimeSummary,
    association_from_margins,
    frequency_table,
    outcome_margins,
    percent,
    round_half_up,
    speeding_share,
    summarize_numeric,
)

JSON_FORMAT = "crashlens-report"
JSON_VERSION = 1
TOTAL = "Total"


class ReportFormat(str, Enum):
    CSV_SET = "csv"
    MARKDOWN = "md"
    JSON = "json"


class ReportWriteError(OSError):
    pass


# ---------------------------------------------------------------- bundle

@dataclass(frozen=True)
class NumericRow:
    config: str
    posted: SpeedTimeSummary
    impact: SpeedTimeSummary
    tpei: SpeedTimeSummary
    speeding_hits: int
    speeding_known: int


@dataclass(frozen=True)
class CountColumn:
    """Category counts for one configuration; ``n`` counts records with a known value."""

    config: str
    n: int
    missing: int
    counts: Mapping[str, int]


@dataclass(frozen=True)
class AssociationRow:
    config: str
    outcome: str
    result: OddsRatioResult


@dataclass(frozen=True)
class ProfileEntry:
    profile: ConfigProfile
    skills: tuple[SkillRecommendation, ...]


@dataclass(frozen=True)
class ReportBundle:
    filter: FilterReport
    frequency: tuple[FrequencyTable, ...]
    numeric: tuple[NumericRow, ...]
    factors: tuple[CountColumn, ...]
    evasive: tuple[CountColumn, ...]
    quality: tuple[QualityBreakdown, ...]
    associations: tuple[AssociationRow, ...]
    profiles: tuple[ProfileEntry, ...]


FACTOR_KEYS = tuple(
    f"{actor.value}.{part.value}"
    for actor in Actor
    for part in (Stage if actor.is_human else FactorDetail)
)
EVASIVE_KEYS = tuple(a.value for a in Action)


def _count_column(label: str, records: Sequence[CrashRecord], key: Callable[[CrashRecord], Optional[str]]) -> CountColumn:
    counts: dict[str, int] = {}
    missing = 0
    for rec in records:
        k = key(rec)
        if k is None:
            missing += 1
        else:
            counts[k] = counts.get(k, 0) + 1
    return CountColumn(label, len(records) - missing, missing, dict(sorted(counts.items())))


def _numeric_row(label: str, records: Sequence[CrashRecord]) -> NumericRow:
    hits, known = speeding_share(records)
    return NumericRow(
        label,
        summarize_numeric(records, "posted_speed_kmh"),
        summarize_numeric(records, "impact_speed_kmh"),
        summarize_numeric(records, "tpei_s"),
        hits,
        known,
    )


def build_bundle(
    records: Sequence[CrashRecord],
    filter_report: FilterReport,
    rulebook: Optional[ConfigRulebook] = None,
    skills: Optional[SkillRulebook] = None,
    no_evasive_threshold: float = NO_EVASIVE_THRESHOLD,
    short_tpei_threshold: float = SHORT_TPEI_THRESHOLD,
) -> ReportBundle:
    """Every report table for the study population ``records``."""
    book = rulebook or default_rulebook()
    skill_book = skills if skills is not None else load_skill_rules()
    part = partition_records(records, book)
    selected = [r for c in SELECTED_CONFIGS for r in part[c]]

    frequency = (
        frequency_table(part, None, "Total"),
        frequency_table(part, lambda r: is_severe(r) is True, "Severe"),
        frequency_table(part, lambda r: is_severe(r) is False, "Non-severe"),
        frequency_table(part, lambda r: r.ptw_class is PtwClass.L3_MOTORCYCLE, "L3"),
        frequency_table(part, lambda r: r.ptw_class is PtwClass.L1_MOPED, "L1"),
    )
    numeric = tuple(_numeric_row(c.value, part[c]) for c in SELECTED_CONFIGS) + (_numeric_row(TOTAL, selected),)

    def factor_key(r: CrashRecord) -> Optional[str]:
        return None if r.primary_factor is None else r.primary_factor.key

    def evasive_key(r: CrashRecord) -> Optional[str]:
        return None if r.evasive is None else r.evasive.action.value

    factors = tuple(_count_column(c.value, part[c], factor_key) for c in SELECTED_CONFIGS)
    factors += (_count_column(TOTAL, selected, factor_key),)
    evasive = tuple(_count_column(c.value, part[c], evasive_key) for c in SELECTED_CONFIGS)
    evasive += (_count_column(TOTAL, selected, evasive_key),)
    quality = tuple(evasive_quality_breakdown(part, c) for c in SELECTED_CONFIGS)
    quality += (evasive_quality_breakdown(part, None),)

    associations: list[AssociationRow] = []
    outcomes: list[tuple[str, Mapping[MergedConfig, tuple[int, int]]]] = [
        ("severe", outcome_margins(part, is_severe)),
        ("l3", outcome_margins(part, lambda r: r.ptw_class is PtwClass.L3_MOTORCYCLE)),
    ]
    outcomes += [(f"evasive.{a.value}", m) for a, m in action_margins(part).items()]
    for name, margins in outcomes:
        for cfg in SELECTED_CONFIGS:
            try:
                result = association_from_margins(margins, cfg)
            except DegenerateMarginError:
                continue
            if result.a + result.b:
                associations.append(AssociationRow(cfg.value, name, result))

    profiles = []
    context = population_context(part)
    for cfg in SELECTED_CONFIGS:
        if not part[cfg]:
            continue
        profile = build_profile(part, cfg, no_evasive_threshold, short_tpei_threshold, context)
        profiles.append(ProfileEntry(profile, tuple(map_skills(profile, skill_book))))

    return ReportBundle(
        filter_report, frequency, numeric, factors, evasive, quality, tuple(associations), tuple(profiles)
    )


# ---------------------------------------------------------------- JSON (lossless)

def _encode(value: Any) -> Any:
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {f.name: _encode(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, collections.abc.Mapping):
        return {str(_encode(k)): _encode(v) for k, v in value.items()}
    if isinstance(value, (tuple, list)):
        return [_encode(v) for v in value]
    return value


def _decode(tp: Any, data: Any) -> Any:
    origin = get_origin(tp)
    if tp is Any:
        return data
    if origin is Union:
        if data is None:
            return None
        (inner,) = [a for a in get_args(tp) if a is not type(None)]
        return _decode(inner, data)
    if origin is tuple:
        args = get_args(tp)
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_decode(args[0], x) for x in data)
        return tuple(_decode(a, x) for a, x in zip(args, data))
    if origin in (dict, collections.abc.Mapping):
        kt, vt = get_args(tp)
        return {_decode(kt, k): _decode(vt, v) for k, v in data.items()}
    if dataclasses.is_dataclass(tp):
        hints = get_type_hints(tp)
        return tp(**{f.name: _decode(hints[f.name], data[f.name]) for f in dataclasses.fields(tp) if f.init})
    if isinstance(tp, type) and issubclass(tp, Enum):
        return tp(data)
    if tp is float:
        return float(data)
    return data


def bundle_to_json(bundle: ReportBundle) -> str:
    doc = {"format": JSON_FORMAT, "version": JSON_VERSION, "bundle": _encode(bundle)}
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def bundle_from_json(text: str) -> ReportBundle:
    doc = json.loads(text)
    if doc.get("format") != JSON_FORMAT or doc.get("version") != JSON_VERSION:
        raise ValueError("not a crashlens report document")
    return _decode(ReportBundle, doc["bundle"])


# ---------------------------------------------------------------- human-readable tables

def _pct(count: int, total: int) -> str:
    v = percent(count, total)
    return "" if v is None else f"{v:.1f}"


def _num(value: Optional[float], digits: int = 1) -> str:
    return "" if value is None else f"{round_half_up(value, digits):.{digits}f}"


Table = tuple[list[str], list[list[str]]]


def _filter_table(b: ReportBundle) -> Table:
    f = b.filter
    rows = [
        ["input", str(f.n_input)],
        ["excluded_impairment_mechanical", str(f.n_excluded_impairment_mechanical)],
        ["excluded_mofa", str(f.n_excluded_mofa)],
        ["study_population", str(f.n_study_population)],
        ["selected_configs", str(f.n_selected_configs)],
        ["other_bucket", str(f.n_other_bucket)],
    ]
    return ["stage", "count"], rows


def _frequency_table(b: ReportBundle) -> Table:
    header = ["config", "total_pct", "severe_pct", "nonsevere_pct", "l3_pct", "l1_pct"]
    if not b.frequency or all(t.column_n == 0 for t in b.frequency):
        return header, []
    rows = [[cfg.value] + [_pct(t.count(cfg.value), t.column_n) for t in b.frequency] for cfg in MergedConfig]
    rows.append(["N"] + [str(t.column_n) for t in b.frequency])
    return header, rows


def _numeric_table(b: ReportBundle) -> Table:
    header = ["config"]
    for name in ("posted", "impact", "tpei"):
        header += [f"{name}_n", f"{name}_mean", f"{name}_q1", f"{name}_q3"]
    header += ["speeding_known", "speeding_pct"]
    rows = []
    for row in b.numeric:
        cells = [row.config]
        for s in (row.posted, row.impact, row.tpei):
            cells += [str(s.n), _num(s.mean), _num(s.q1), _num(s.q3)]
        cells += [str(row.speeding_known), _pct(row.speeding_hits, row.speeding_known)]
        rows.append(cells)
    return header, rows


def _matrix(columns: Sequence[CountColumn], keys: Sequence[str], first: str) -> Table:
    header = [first] + [c.config for c in columns]
    used = [k for k in keys if any(c.counts.get(k, 0) for c in columns)]
    rows = [[k] + [_pct(c.counts.get(k, 0), c.n) for c in columns] for k in used]
    if columns:
        rows.append(["N"] + [str(c.n) for c in columns])
        rows.append(["missing"] + [str(c.missing) for c in columns])
    return header, rows


def _quality_table(b: ReportBundle) -> Table:
    header = ["config", "measure", "n", "proper_pct", "improper_pct", "unknown_pct"]
    rows = []
    for q in b.quality:
        if q.empty:
            continue
        rows.append([q.config, "selection", str(q.attempted)] + [_pct(q.selection.get(x.value, 0), q.attempted) for x in Quality])
        for e in q.execution:
            rows.append([q.config, f"execution.{e.action}", str(e.n)] + [_pct(e.counts.get(x.value, 0), e.n) for x in Quality])
    return header, rows


def _association_table(b: ReportBundle) -> Table:
    header = ["config", "outcome", "a", "b", "c", "d", "or", "ci_low", "ci_high", "significant", "borderline", "corrected"]
    rows = []
    for a in b.associations:
        r = a.result
        rows.append([
            a.config, a.outcome, str(r.a), str(r.b), str(r.c), str(r.d),
            _num(r.or_value, 2), _num(r.ci_low, 2), _num(r.ci_high, 2),
            _flag(r.significant), _flag(r.borderline), _flag(r.corrected),
        ])
    return header, rows


def _flag(value: bool) -> str:
    return "true" if value else "false"


def _profile_table(b: ReportBundle) -> Table:
    header = [
        "config", "n", "frequency_pct", "severe_pct", "dominant_factor", "dominant_factor_pct",
        "dominant_actor", "dominant_actor_pct", "alignment_mode", "curve_pct", "no_evasive_pct",
        "no_evasive_flag", "overrepresented", "mean_impact_speed", "speeding_pct",
        "tpei_mean", "tpei_q1", "tpei_q3", "short_tpei",
    ]
    rows = []
    for entry in b.profiles:
        p = entry.profile
        dom = p.dominant_factor
        actor = p.dominant_actors[0] if p.dominant_actors else None
        over = ";".join(f"{m.action}({m.annotation})" for m in p.overrepresented_maneuvers)
        rows.append([
            p.config.value, str(p.n), _num(p.frequency_share), _num(p.severe_share),
            "|".join(p.dominant_factors), _num(p.factor_shares.get(dom) if dom else None),
            "|".join(p.dominant_actors), _num(p.actor_shares.get(actor) if actor else None),
            "|".join(p.alignment_mode), _num(p.curve_share), _num(p.no_evasive_share),
            _flag(p.no_evasive_flagged), over, _num(p.mean_impact_speed), _num(p.speeding_share),
            _num(p.tpei.mean), _num(p.tpei.q1), _num(p.tpei.q3), _flag(p.short_tpei),
        ])
    return header, rows


def _skills_table(b: ReportBundle) -> Table:
    header = ["config", "rule", "skill", "rationale"]
    rows = [
        [e.profile.config.value, s.rule_id or "", s.skill, s.rationale]
        for e in b.profiles
        for s in e.skills
    ]
    return header, rows


SECTIONS: tuple[tuple[str, str, Callable[[ReportBundle], Table]], ...] = (
    ("filter", "Study population", _filter_table),
    ("frequency", "Crash configuration frequency (%)", _frequency_table),
    ("speed_time", "Posted speed, impact speed (km/h) and TPEI (s)", _numeric_table),
    ("factors", "Primary contributing factor by configuration (%)", lambda b: _matrix(b.factors, FACTOR_KEYS, "factor")),
    ("evasive", "Evasive manoeuvre by configuration (%)", lambda b: _matrix(b.evasive, EVASIVE_KEYS, "action")),
    ("evasive_quality", "Selection and execution quality of evasive manoeuvres (%)", _quality_table),
    ("associations", "Configuration vs pooled remaining configurations (odds ratios)", _association_table),
    ("profiles", "Configuration profiles", _profile_table),
    ("skills", "Skill recommendations", _skills_table),
)


def _csv_text(table: Table) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table[0])
    writer.writerows(table[1])
    return buf.getvalue()


def _md_cell(text: str) -> str:
    return text.replace("|", "\\|")


def _markdown_text(bundle: ReportBundle) -> str:
    out = ["# Crash configuration report", ""]
    for _, title, build in SECTIONS:
        header, rows = build(bundle)
        out += [f"## {title}", ""]
        if not rows:
            out += ["_no data_", ""]
            continue
        out.append("| " + " | ".join(_md_cell(h) for h in header) + " |")
        out.append("|" + "|".join("---" for _ in header) + "|")
        out += ["| " + " | ".join(_md_cell(c) for c in row) + " |" for row in rows]
        out.append("")
    return "\n".join(out)


def render_text(bundle: ReportBundle, format: Union[ReportFormat, str]) -> dict[str, str]:
    """File name -> content; pure, so identical bundles give identical text."""
    fmt = ReportFormat(format)
    if fmt is ReportFormat.CSV_SET:
        return {f"{name}.csv": _csv_text(build(bundle)) for name, _, build in SECTIONS}
    if fmt is ReportFormat.MARKDOWN:
        return {"report.md": _markdown_text(bundle)}
    return {"report.json": bundle_to_json(bundle)}


def render(bundle: ReportBundle, format: Union[ReportFormat, str], out_dir: Union[str, Path]) -> list[Path]:
    """Write the rendered files under ``out_dir`` (created if needed) and return their paths."""
    target = Path(out_dir)
    written = []
    try:
        target.mkdir(parents=True, exist_ok=True)
        for name, text in render_text(bundle, format).items():
            path = target / name
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
            written.append(path)
    except OSError as exc:
        raise ReportWriteError(f"cannot write report to {target}: {exc.strerror or exc}") from exc
    return written
