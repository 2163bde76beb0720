"""Per-configuration human-error profiles and rule-based skill recommendations."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence, Union

from .classifier import DATA
from .model import (
    Action,
    Actor,
    Alignment,
    CrashRecord,
    MergedConfig,
    Quality,
    SELECTED_CONFIGS,
    Stage,
    is_severe,
)
from .stats import (
    DegenerateMarginError,
    OddsRatioResult,
    SpeedTimeSummary,
    association_from_margins,
    round_half_up,
    speeding_share,
    summarize_numeric,
)

DEFAULT_SKILLS = DATA / "skills.rules"
NO_EVASIVE_THRESHOLD = 25.0
SHORT_TPEI_THRESHOLD = 1.7
UNMAPPED = "unmapped"

Partition = Mapping[MergedConfig, Sequence[CrashRecord]]
# actions whose over-representation is tested against the pooled configurations
MANEUVERS = (Action.BRAKE, Action.SWERVE, Action.NO_ACTION, Action.OTHER)


class EmptyBucketError(ValueError):
    pass


def _pct(count: int, total: int) -> Optional[float]:
    return None if total == 0 else 100.0 * count / total


def _argmax(counts: Mapping[str, int]) -> tuple[str, ...]:
    if not counts:
        return ()
    top = max(counts.values())
    return tuple(k for k, v in counts.items() if v == top)


# ---------------------------------------------------------------- evasive quality

@dataclass(frozen=True)
class ExecutionBreakdown:
    action: str
    n: int
    counts: Mapping[str, int]


@dataclass(frozen=True)
class QualityBreakdown:
    """Selection quality of attempted manoeuvres and execution quality of the properly selected ones."""

    config: str
    attempted: int
    selection: Mapping[str, int]
    execution: tuple[ExecutionBreakdown, ...]

    @property
    def empty(self) -> bool:
        return self.attempted == 0

    def improper_execution_share(self, action: Action) -> Optional[float]:
        for row in self.execution:
            if row.action == action.value:
                return _pct(row.counts.get(Quality.IMPROPER.value, 0), row.n)
        return None


def evasive_quality_breakdown(partition: Partition, config: Optional[MergedConfig] = None) -> QualityBreakdown:
    """Quality breakdown for one configuration, or pooled over the selected ones when ``config`` is None."""
    configs = SELECTED_CONFIGS if config is None else (config,)
    selection: Counter[str] = Counter()
    execution: dict[Action, Counter[str]] = {}
    attempted = 0
    for cfg in configs:
        for rec in partition.get(cfg, ()):
            ev = rec.evasive
            if ev is None or ev.action in (Action.NO_ACTION, Action.UNKNOWN):
                continue
            attempted += 1
            selection[ev.selection_quality.value] += 1
            if ev.selection_quality is Quality.PROPER:
                execution.setdefault(ev.action, Counter())[ev.execution_quality.value] += 1
    rows = tuple(
        ExecutionBreakdown(a.value, sum(execution[a].values()), {q.value: execution[a][q.value] for q in Quality})
        for a in Action
        if a in execution
    )
    label = "Total" if config is None else config.value
    sel = {q.value: selection[q.value] for q in Quality} if attempted else {}
    return QualityBreakdown(label, attempted, sel, rows)


# ---------------------------------------------------------------- profile

@dataclass(frozen=True)
class ManeuverAssociation:
    action: str
    result: OddsRatioResult

    @property
    def annotation(self) -> str:
        if self.result.significant:
            return "significant"
        return "borderline" if self.result.borderline else "ns"


@dataclass(frozen=True)
class ConfigProfile:
    config: MergedConfig
    n: int
    factor_n: int
    factor_counts: Mapping[str, int]
    factor_shares: Mapping[str, float]
    dominant_factors: tuple[str, ...]
    actor_shares: Mapping[str, float]
    dominant_actors: tuple[str, ...]
    alignment_counts: Mapping[str, int]
    alignment_mode: tuple[str, ...]
    straight_share: Optional[float]
    curve_share: Optional[float]
    curve_dominant: bool
    evasive_n: int
    no_evasive_share: Optional[float]
    no_evasive_flagged: bool
    overrepresented_maneuvers: tuple[ManeuverAssociation, ...]
    brake_overrepresented: bool
    brake_poor_execution_share: Optional[float]
    mean_impact_speed: Optional[float]
    speeding_share: Optional[float]
    tpei: SpeedTimeSummary
    short_tpei: bool
    frequency_share: float
    severe_share: Optional[float]

    @property
    def dominant_factor(self) -> Optional[str]:
        return self.dominant_factors[0] if self.dominant_factors else None

    def rule_fields(self) -> dict[str, Any]:
        """Values visible to skill rules, keyed by field name."""
        return {
            "config": self.config.value,
            "n": self.n,
            "dominant_factor": self.dominant_factors,
            "dominant_actor": self.dominant_actors,
            "rider_share": self.actor_shares.get(Actor.RIDER_MC.value),
            "driver_share": self.actor_shares.get(Actor.DRIVER_OV.value),
            "alignment_mode": self.alignment_mode,
            "curve_share": self.curve_share,
            "curve_dominant": self.curve_dominant,
            "no_evasive_share": self.no_evasive_share,
            "no_evasive_flagged": self.no_evasive_flagged,
            "brake_overrepresented": self.brake_overrepresented,
            "brake_poor_execution_share": self.brake_poor_execution_share,
            "overrepresented": tuple(m.action for m in self.overrepresented_maneuvers if m.annotation != "ns"),
            "mean_impact_speed": self.mean_impact_speed,
            "speeding_share": self.speeding_share,
            "tpei_mean": self.tpei.mean,
            "short_tpei": self.short_tpei,
            "frequency_share": self.frequency_share,
            "severe_share": self.severe_share,
        }


def action_margins(partition: Partition) -> dict[Action, dict[MergedConfig, tuple[int, int]]]:
    """Per manoeuvre: (performed, other known response) per selected configuration, in one pass."""
    counts: dict[MergedConfig, Counter[Action]] = {}
    for cfg in SELECTED_CONFIGS:
        counts[cfg] = Counter(
            r.evasive.action for r in partition.get(cfg, ())
            if r.evasive is not None and r.evasive.action is not Action.UNKNOWN
        )
    return {
        action: {cfg: (c[action], sum(c.values()) - c[action]) for cfg, c in counts.items()}
        for action in MANEUVERS
    }


@dataclass(frozen=True)
class PopulationContext:
    """Population-wide quantities shared by every configuration profile."""

    total: int
    severe_total: int
    maneuver_margins: Mapping[Action, Mapping[MergedConfig, tuple[int, int]]]


def population_context(partition: Partition) -> PopulationContext:
    return PopulationContext(
        total=sum(len(b) for b in partition.values()),
        severe_total=sum(1 for b in partition.values() for r in b if is_severe(r) is True),
        maneuver_margins=action_margins(partition),
    )


def _maneuver_associations(context: PopulationContext, config: MergedConfig) -> tuple[ManeuverAssociation, ...]:
    out = []
    for action, margins in context.maneuver_margins.items():
        try:
            result = association_from_margins(margins, config)
        except DegenerateMarginError:
            continue
        if result.a and result.or_value > 1:
            out.append(ManeuverAssociation(action.value, result))
    return tuple(out)


def build_profile(
    partition: Partition,
    config: MergedConfig,
    no_evasive_threshold: float = NO_EVASIVE_THRESHOLD,
    short_tpei_threshold: float = SHORT_TPEI_THRESHOLD,
    context: Optional[PopulationContext] = None,
) -> ConfigProfile:
    """Profile of one configuration; pass ``context`` to reuse population totals across calls."""
    bucket = list(partition.get(config, ()))
    if not bucket:
        raise EmptyBucketError(f"no cases for configuration {config.value}")
    n = len(bucket)

    factors = Counter(r.primary_factor.key for r in bucket if r.primary_factor is not None)
    factor_n = sum(factors.values())
    factor_counts = dict(sorted(factors.items(), key=lambda kv: (-kv[1], kv[0])))
    factor_shares = {k: 100.0 * v / factor_n for k, v in factor_counts.items()}
    # an unclassified rider/driver failure type adds to its actor total but never dominates alone
    candidates = {k: v for k, v in factor_counts.items() if not k.endswith("." + Stage.UNKNOWN_TYPE.value)}
    actor_counts: Counter[str] = Counter()
    for key, v in factor_counts.items():
        actor_counts[key.split(".", 1)[0]] += v
    actor_shares = {a.value: 100.0 * actor_counts[a.value] / factor_n for a in Actor if factor_n}

    alignment = Counter(r.alignment.value for r in bucket if r.alignment is not Alignment.UNKNOWN)
    align_n = sum(alignment.values())
    alignment_counts = {a.value: alignment[a.value] for a in Alignment if alignment[a.value]}
    curve = alignment[Alignment.CURVE_LEFT.value] + alignment[Alignment.CURVE_RIGHT.value]
    straight = alignment[Alignment.STRAIGHT.value]

    assessed = [r.evasive for r in bucket if r.evasive is not None and r.evasive.action is not Action.UNKNOWN]
    no_action = sum(1 for ev in assessed if ev.action is Action.NO_ACTION)
    no_evasive_share = _pct(no_action, len(assessed))

    ctx = context or population_context(partition)
    maneuvers = _maneuver_associations(ctx, config) if assessed else ()
    brake_over = any(m.action == Action.BRAKE.value and m.annotation != "ns" for m in maneuvers)
    quality = evasive_quality_breakdown(partition, config)

    impact = summarize_numeric(bucket, "impact_speed_kmh")
    hits, known = speeding_share(bucket)
    tpei = summarize_numeric(bucket, "tpei_s")

    severe_here = sum(1 for r in bucket if is_severe(r) is True)

    return ConfigProfile(
        config=config,
        n=n,
        factor_n=factor_n,
        factor_counts=factor_counts,
        factor_shares=factor_shares,
        dominant_factors=_argmax(candidates),
        actor_shares=actor_shares,
        dominant_actors=_argmax({a: c for a, c in actor_counts.items()}),
        alignment_counts=alignment_counts,
        alignment_mode=_argmax(alignment_counts),
        straight_share=_pct(straight, align_n),
        curve_share=_pct(curve, align_n),
        curve_dominant=align_n > 0 and curve > straight,
        evasive_n=len(assessed),
        no_evasive_share=no_evasive_share,
        no_evasive_flagged=no_evasive_share is not None and no_evasive_share >= no_evasive_threshold,
        overrepresented_maneuvers=maneuvers,
        brake_overrepresented=brake_over,
        brake_poor_execution_share=quality.improper_execution_share(Action.BRAKE),
        mean_impact_speed=impact.mean,
        speeding_share=_pct(hits, known),
        tpei=tpei,
        short_tpei=tpei.mean is not None and round_half_up(tpei.mean, 1) <= short_tpei_threshold,
        frequency_share=100.0 * n / ctx.total,
        severe_share=_pct(severe_here, ctx.severe_total),
    )


# ---------------------------------------------------------------- skill rules

class SkillRuleError(ValueError):
    pass


# field name -> kind of literal it is compared with
RULE_FIELDS: Mapping[str, str] = {
    "config": "token",
    "n": "number",
    "dominant_factor": "token",
    "dominant_actor": "token",
    "rider_share": "number",
    "driver_share": "number",
    "alignment_mode": "token",
    "curve_share": "number",
    "curve_dominant": "bool",
    "no_evasive_share": "number",
    "no_evasive_flagged": "bool",
    "brake_overrepresented": "bool",
    "brake_poor_execution_share": "number",
    "overrepresented": "token",
    "mean_impact_speed": "number",
    "speeding_share": "number",
    "tpei_mean": "number",
    "short_tpei": "bool",
    "frequency_share": "number",
    "severe_share": "number",
}
_ORDERING = (">", ">=", "<", "<=")
_TOKEN = re.compile(r'\s*(?:(?P<str>"(?:[^"\\]|\\.)*")|(?P<op>==|!=|>=|<=|>|<)|(?P<colon>:)|(?P<word>[^\s:"=!<>]+))')


@dataclass(frozen=True)
class Condition:
    field: str
    op: str
    value: Union[float, bool, str]

    def holds(self, fields: Mapping[str, Any]) -> bool:
        actual = fields[self.field]
        if actual is None:
            return False
        if isinstance(actual, tuple):
            # set-valued fields (ties, several over-represented actions): membership test
            if self.op == "==":
                return self.value in actual
            return self.value not in actual
        if self.op == "==":
            return actual == self.value
        if self.op == "!=":
            return actual != self.value
        if self.op == ">":
            return actual > self.value
        if self.op == ">=":
            return actual >= self.value
        if self.op == "<":
            return actual < self.value
        return actual <= self.value


@dataclass(frozen=True)
class SkillRule:
    rule_id: str
    conditions: tuple[Condition, ...]
    skill: str
    rationale: str

    def fires(self, profile: ConfigProfile) -> bool:
        fields = profile.rule_fields()
        return all(c.holds(fields) for c in self.conditions)


@dataclass(frozen=True)
class SkillRulebook:
    rules: tuple[SkillRule, ...]


@dataclass(frozen=True)
class SkillRecommendation:
    skill: str
    rationale: str
    rule_id: Optional[str]


def _tokens(line: str, lineno: int) -> list[tuple[str, str, int]]:
    out = []
    pos = 0
    stripped = line.rstrip()
    while pos < len(stripped):
        m = _TOKEN.match(stripped, pos)
        if m is None or m.end() == pos:
            col = pos + 1 + (len(stripped[pos:]) - len(stripped[pos:].lstrip()))
            raise SkillRuleError(f"line {lineno}, column {col}: unexpected character {stripped[col - 1]!r}")
        kind = m.lastgroup or ""
        out.append((kind, m.group(kind), m.start(kind) + 1))
        pos = m.end()
    return out


def _unquote(text: str) -> str:
    return re.sub(r"\\(.)", r"\1", text[1:-1])


def parse_skill_rules(text: str) -> SkillRulebook:
    """Parse ``rule <id>: when <field> <op> <value> [and ...] then skill "<tag>" because "<text>"``."""
    rules: list[SkillRule] = []
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        toks = _tokens(raw, lineno)
        i = 0

        def fail(msg: str, at: Optional[int] = None) -> SkillRuleError:
            col = toks[at][2] if at is not None and at < len(toks) else len(raw.rstrip()) + 1
            return SkillRuleError(f"line {lineno}, column {col}: {msg}")

        def expect(kind: str, value: Optional[str] = None) -> str:
            nonlocal i
            if i >= len(toks) or toks[i][0] != kind or (value is not None and toks[i][1] != value):
                raise fail(f"expected {value or kind}", i)
            i += 1
            return toks[i - 1][1]

        expect("word", "rule")
        rule_id = expect("word")
        if rule_id in seen:
            raise fail(f"duplicate rule id {rule_id!r}", i - 1)
        seen.add(rule_id)
        expect("colon")
        expect("word", "when")
        conditions = []
        while True:
            at = i
            name = expect("word")
            if name not in RULE_FIELDS:
                raise fail(f"unknown field {name!r}", at)
            op = expect("op")
            kind = RULE_FIELDS[name]
            if op in _ORDERING and kind != "number":
                raise fail(f"operator {op} needs a numeric field", at + 1)
            if i >= len(toks) or toks[i][0] not in ("word", "str"):
                raise fail("expected a value", i)
            vkind, vtext, _ = toks[i]
            value: Union[float, bool, str]
            if kind == "number":
                try:
                    value = float(vtext)
                except ValueError:
                    raise fail(f"field {name!r} needs a number", i) from None
            elif kind == "bool":
                if vtext not in ("true", "false"):
                    raise fail(f"field {name!r} needs true or false", i)
                value = vtext == "true"
            else:
                value = _unquote(vtext) if vkind == "str" else vtext
            i += 1
            conditions.append(Condition(name, op, value))
            if i < len(toks) and toks[i][:2] == ("word", "and"):
                i += 1
                continue
            break
        expect("word", "then")
        expect("word", "skill")
        skill = _unquote(expect("str"))
        expect("word", "because")
        rationale = _unquote(expect("str"))
        if i != len(toks):
            raise fail("unexpected text after rationale", i)
        rules.append(SkillRule(rule_id, tuple(conditions), skill, rationale))
    return SkillRulebook(tuple(rules))


def load_skill_rules(path: Union[str, Path, None] = None) -> SkillRulebook:
    src = DEFAULT_SKILLS if path is None else Path(path)
    return parse_skill_rules(src.read_text(encoding="utf-8"))


def map_skills(profile: ConfigProfile, rulebook: SkillRulebook) -> list[SkillRecommendation]:
    """Every firing rule in order, one entry per skill tag (first rationale wins)."""
    out: list[SkillRecommendation] = []
    tags: set[str] = set()
    for rule in rulebook.rules:
        if rule.skill not in tags and rule.fires(profile):
            tags.add(rule.skill)
            out.append(SkillRecommendation(rule.skill, rule.rationale, rule.rule_id))
    if not out:
        out.append(SkillRecommendation(UNMAPPED, "no rule matched this profile", None))
    return out
