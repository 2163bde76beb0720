"""Read and write crash-record files and apply the study-population filter.

Two wire formats share one field list: CSV (header row, empty cell = missing,
booleans ``true``/``false``) and JSON lines (one object per record, ``null`` or
absent = missing).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Any, Iterable, Iterator, Optional, Union

from .classifier import ConfigRulebook, classify, default_rulebook, load_codebook
from .model import (
    Action,
    Actor,
    Alignment,
    ContributingFactor,
    CrashRecord,
    EvasiveResponse,
    FactorDetail,
    MaidsConfig,
    MergedConfig,
    PtwClass,
    Quality,
    Stage,
    validate_record,
)

COLUMNS = (
    "case_id",
    "ptw_class",
    "mais",
    "maids_config",
    "factor_actor",
    "factor_stage",
    "factor_detail",
    "evasive_action",
    "evasive_selection",
    "evasive_execution",
    "alignment",
    "posted_speed_kmh",
    "impact_speed_kmh",
    "tpei_s",
    "rider_impairment_primary",
    "mechanical_primary",
)


class Format(str, Enum):
    CSV = "csv"
    JSON_LINES = "jsonl"


class ParseError(Exception):
    """The stream as a whole cannot be read (as opposed to a single bad row)."""


class StrictModeError(ParseError):
    def __init__(self, rejects: list["RejectedRow"]):
        self.rejects = rejects
        lines = "; ".join(f"row {r.row}: {r.reason}" for r in rejects[:20])
        more = f" (+{len(rejects) - 20} more)" if len(rejects) > 20 else ""
        super().__init__(f"{len(rejects)} rejected row(s): {lines}{more}")


class RowError(ValueError):
    pass


@dataclass(frozen=True)
class RejectedRow:
    row: int
    reason: str


@dataclass
class ParseResult:
    records: list[CrashRecord] = field(default_factory=list)
    rejects: list[RejectedRow] = field(default_factory=list)


# ---------------------------------------------------------------- field parsing

_PTW_ALIASES = {
    "l1": PtwClass.L1_MOPED,
    "l1_moped": PtwClass.L1_MOPED,
    "moped": PtwClass.L1_MOPED,
    "l3": PtwClass.L3_MOTORCYCLE,
    "l3_motorcycle": PtwClass.L3_MOTORCYCLE,
    "motorcycle": PtwClass.L3_MOTORCYCLE,
    "mofa": PtwClass.MOFA,
}

_CONFIG_ALIASES: Optional[dict[str, MaidsConfig]] = None


def _config_aliases() -> dict[str, MaidsConfig]:
    global _CONFIG_ALIASES
    if _CONFIG_ALIASES is None:
        aliases = {c.value: c for c in MaidsConfig}
        for token, desc in load_codebook().items():
            aliases[desc.lower()] = token
        aliases["other_unspecified"] = MaidsConfig.UNKNOWN
        _CONFIG_ALIASES = aliases
    return _CONFIG_ALIASES


_ENUM_LOOKUP: dict[type[Enum], tuple[dict[str, Enum], dict[str, Enum]]] = {}


def _enum(cls: type[Enum], value: Any, name: str) -> Any:
    """Member by exact value, or by case-insensitive member name."""
    if cls not in _ENUM_LOOKUP:
        _ENUM_LOOKUP[cls] = ({m.value: m for m in cls}, {m.name: m for m in cls})
    by_value, by_name = _ENUM_LOOKUP[cls]
    text = str(value).strip()
    member = by_value.get(text) or by_name.get(text.upper())
    if member is None:
        raise RowError(f"unknown {name} {text!r}")
    return member


def _number(value: Any, name: str) -> Optional[float]:
    if value is None:
        return None
    if isinstance(value, bool):
        raise RowError(f"{name} is not a number")
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise RowError(f"{name} is not a number: {value!r}") from None
    if not math.isfinite(x):
        raise RowError(f"{name} is not finite")
    return x


def _bool(value: Any, name: str) -> bool:
    if value is None:
        return False
    if isinstance(value, bool):
        return value
    text = str(value).lower()
    if text == "true":
        return True
    if text == "false":
        return False
    raise RowError(f"{name} must be 'true' or 'false', got {value!r}")


def _clean(value: Any) -> Any:
    if isinstance(value, str):
        value = value.strip()
        return value or None
    return value


def record_from_fields(row: dict[str, Any]) -> CrashRecord:
    """Build a record from a CSV/JSON field mapping; raises RowError on bad values."""
    row = {k: _clean(v) for k, v in row.items()}
    get = row.get
    case_id = get("case_id")
    if case_id is None:
        raise RowError("missing case_id")
    case_id = str(case_id)

    ptw_raw = get("ptw_class")
    if ptw_raw is None:
        raise RowError("missing ptw_class")
    try:
        ptw = _PTW_ALIASES[str(ptw_raw).lower()]
    except KeyError:
        raise RowError(f"unknown ptw_class {ptw_raw!r}") from None

    mais: Optional[int] = None
    raw = get("mais")
    if raw is not None:
        if isinstance(raw, bool) or (isinstance(raw, float) and not raw.is_integer()):
            raise RowError(f"mais is not an integer: {raw!r}")
        try:
            mais = int(raw) if isinstance(raw, (int, float)) else int(str(raw))
        except ValueError:
            raise RowError(f"mais is not an integer: {raw!r}") from None

    cfg_raw = get("maids_config")
    if cfg_raw is None:
        maids = MaidsConfig.UNKNOWN
    else:
        try:
            maids = _config_aliases()[str(cfg_raw).lower()]
        except KeyError:
            raise RowError(f"unknown maids_config {cfg_raw!r}") from None

    factor: Optional[ContributingFactor] = None
    actor_raw, stage_raw, detail_raw = get("factor_actor"), get("factor_stage"), get("factor_detail")
    if actor_raw is not None:
        factor = ContributingFactor(
            _enum(Actor, actor_raw, "factor_actor"),
            None if stage_raw is None else _enum(Stage, stage_raw, "factor_stage"),
            None if detail_raw is None else _enum(FactorDetail, detail_raw, "factor_detail"),
        )
    elif stage_raw is not None or detail_raw is not None:
        raise RowError("factor stage/detail given without factor_actor")

    evasive: Optional[EvasiveResponse] = None
    action_raw, sel_raw, exe_raw = get("evasive_action"), get("evasive_selection"), get("evasive_execution")
    if action_raw is not None:
        evasive = EvasiveResponse(
            _enum(Action, action_raw, "evasive_action"),
            Quality.UNKNOWN if sel_raw is None else _enum(Quality, sel_raw, "evasive_selection"),
            Quality.UNKNOWN if exe_raw is None else _enum(Quality, exe_raw, "evasive_execution"),
        )
    elif sel_raw is not None or exe_raw is not None:
        raise RowError("evasive quality given without evasive_action")

    align_raw = get("alignment")
    alignment = Alignment.UNKNOWN if align_raw is None else _enum(Alignment, align_raw, "alignment")

    record = CrashRecord(
        case_id=case_id,
        ptw_class=ptw,
        mais=mais,
        maids_config=maids,
        primary_factor=factor,
        evasive=evasive,
        alignment=alignment,
        posted_speed_kmh=_number(get("posted_speed_kmh"), "posted_speed_kmh"),
        impact_speed_kmh=_number(get("impact_speed_kmh"), "impact_speed_kmh"),
        tpei_s=_number(get("tpei_s"), "tpei_s"),
        rider_impairment_primary=_bool(get("rider_impairment_primary"), "rider_impairment_primary"),
        mechanical_primary=_bool(get("mechanical_primary"), "mechanical_primary"),
    )
    violations = validate_record(record)
    if violations:
        raise RowError("; ".join(v.reason for v in violations))
    return record


def record_to_fields(record: CrashRecord) -> dict[str, Any]:
    """Native-typed field mapping (``None`` for missing); inverse of record_from_fields."""
    f = record.primary_factor
    e = record.evasive
    return {
        "case_id": record.case_id,
        "ptw_class": record.ptw_class.value,
        "mais": record.mais,
        "maids_config": record.maids_config.value,
        "factor_actor": f.actor.value if f else None,
        "factor_stage": f.stage.value if f and f.stage else None,
        "factor_detail": f.detail.value if f and f.detail else None,
        "evasive_action": e.action.value if e else None,
        "evasive_selection": e.selection_quality.value if e else None,
        "evasive_execution": e.execution_quality.value if e else None,
        "alignment": record.alignment.value,
        "posted_speed_kmh": record.posted_speed_kmh,
        "impact_speed_kmh": record.impact_speed_kmh,
        "tpei_s": record.tpei_s,
        "rider_impairment_primary": record.rider_impairment_primary,
        "mechanical_primary": record.mechanical_primary,
    }


def _csv_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


# ---------------------------------------------------------------- streams

def _text_stream(source: Union[bytes, IO[bytes], IO[str]]) -> Iterator[str]:
    try:
        if isinstance(source, (bytes, bytearray)):
            data = bytes(source).decode("utf-8-sig")
        else:
            data = source.read()
            if isinstance(data, (bytes, bytearray)):
                data = bytes(data).decode("utf-8-sig")
            elif data.startswith("\ufeff"):
                data = data[1:]
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(f"unreadable stream: {exc}") from exc
    return iter(io.StringIO(data, newline=""))


def parse_records(
    source: Union[bytes, IO[bytes], IO[str]],
    format: Union[Format, str] = Format.CSV,
    strict: bool = False,
) -> ParseResult:
    """Parse a CSV or JSON-lines stream into validated records.

    Malformed rows are collected with their 1-based line number (the CSV header is
    line 1) and never abort the batch unless ``strict`` is set, in which case a
    StrictModeError carrying every reject is raised after the whole stream is read.
    """
    try:
        fmt = Format(format)
    except ValueError:
        raise ParseError(f"unknown format {format!r}") from None
    lines = _text_stream(source)
    result = ParseResult()

    if fmt is Format.CSV:
        reader = csv.reader(lines)
        header = next(reader, None)
        if header is None:
            raise ParseError("empty stream: missing header")
        header = [h.strip() for h in header]
        if tuple(header) != COLUMNS:
            missing = [c for c in COLUMNS if c not in header]
            extra = [c for c in header if c not in COLUMNS]
            raise ParseError(f"header mismatch (missing={missing}, unexpected={extra})")
        for values in reader:
            lineno = reader.line_num
            if not values or all(v.strip() == "" for v in values):
                continue
            if len(values) != len(COLUMNS):
                result.rejects.append(RejectedRow(lineno, f"expected {len(COLUMNS)} fields, got {len(values)}"))
                continue
            _parse_into(result, lineno, dict(zip(COLUMNS, values)))
    else:
        for lineno, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                result.rejects.append(RejectedRow(lineno, f"invalid JSON: {exc.msg}"))
                continue
            if not isinstance(obj, dict):
                result.rejects.append(RejectedRow(lineno, "expected a JSON object"))
                continue
            unknown = sorted(set(obj) - set(COLUMNS))
            if unknown:
                result.rejects.append(RejectedRow(lineno, f"unknown field(s): {', '.join(unknown)}"))
                continue
            _parse_into(result, lineno, obj)

    if strict and result.rejects:
        raise StrictModeError(result.rejects)
    return result


def _parse_into(result: ParseResult, lineno: int, fields: dict[str, Any]) -> None:
    try:
        result.records.append(record_from_fields(fields))
    except RowError as exc:
        result.rejects.append(RejectedRow(lineno, str(exc)))


def write_records(records: Iterable[CrashRecord], out: IO[str], format: Union[Format, str] = Format.CSV) -> None:
    fmt = Format(format)
    if fmt is Format.CSV:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(COLUMNS)
        for rec in records:
            fields = record_to_fields(rec)
            writer.writerow([_csv_cell(fields[c]) for c in COLUMNS])
    else:
        for rec in records:
            out.write(json.dumps(record_to_fields(rec), separators=(",", ":")) + "\n")


def dumps_records(records: Iterable[CrashRecord], format: Union[Format, str] = Format.CSV) -> str:
    buf = io.StringIO()
    write_records(records, buf, format)
    return buf.getvalue()


def format_for_path(path: str) -> Format:
    return Format.JSON_LINES if str(path).lower().endswith((".jsonl", ".ndjson", ".json")) else Format.CSV


# ---------------------------------------------------------------- study population

@dataclass(frozen=True)
class FilterReport:
    n_input: int
    n_excluded_impairment_mechanical: int
    n_excluded_mofa: int
    n_study_population: int
    n_selected_configs: int
    n_other_bucket: int

    def __post_init__(self) -> None:
        if self.n_input != self.n_excluded_impairment_mechanical + self.n_excluded_mofa + self.n_study_population:
            raise ValueError("filter counts do not reconcile with the input size")
        if self.n_study_population != self.n_selected_configs + self.n_other_bucket:
            raise ValueError("selected + other does not equal the study population")


def filter_study_population(
    records: list[CrashRecord], rulebook: Optional[ConfigRulebook] = None
) -> tuple[list[CrashRecord], FilterReport]:
    """Drop impaired-rider / mechanical-failure cases, then mofa cases."""
    book = rulebook or default_rulebook()
    fit = [r for r in records if not (r.rider_impairment_primary or r.mechanical_primary)]
    retained = [r for r in fit if r.ptw_class is not PtwClass.MOFA]
    n_other = sum(1 for r in retained if classify(r, book) is MergedConfig.OTHER)
    report = FilterReport(
        n_input=len(records),
        n_excluded_impairment_mechanical=len(records) - len(fit),
        n_excluded_mofa=len(fit) - len(retained),
        n_study_population=len(retained),
        n_selected_configs=len(retained) - n_other,
        n_other_bucket=n_other,
    )
    return retained, report


def split_selected_vs_other(
    records: list[CrashRecord], rulebook: Optional[ConfigRulebook] = None
) -> tuple[list[CrashRecord], list[CrashRecord]]:
    book = rulebook or default_rulebook()
    selected: list[CrashRecord] = []
    other: list[CrashRecord] = []
    for rec in records:
        (other if classify(rec, book) is MergedConfig.OTHER else selected).append(rec)
    return selected, other
