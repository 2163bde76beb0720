"""Frequency tables, 2x2 odds ratios, numeric summaries and speed kinematics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .model import CrashRecord, MergedConfig

Z_95 = 1.959964
SPEEDING_RATIO = 1.2
NUMERIC_FIELDS = ("posted_speed_kmh", "impact_speed_kmh", "tpei_s")

Predicate = Callable[[CrashRecord], bool]
Outcome = Callable[[CrashRecord], Optional[bool]]


def round_half_up(value: float, digits: int = 1) -> float:
    """Round half away from zero (2.25 -> 2.3, -2.25 -> -2.3)."""
    q = Decimal(1).scaleb(-digits)
    return float(Decimal(repr(value)).quantize(q, rounding=ROUND_HALF_UP))


def percent(count: int, total: int, digits: int = 1) -> Optional[float]:
    """``count/total`` as a percentage rounded half-up from the exact fraction."""
    if total == 0:
        return None
    exact = Fraction(100 * count, total)
    q = Decimal(1).scaleb(-digits)
    value = Decimal(exact.numerator) / Decimal(exact.denominator)
    return float(value.quantize(q, rounding=ROUND_HALF_UP))


# ---------------------------------------------------------------- frequency tables

@dataclass(frozen=True)
class FrequencyRow:
    label: str
    count: int

    def share(self, column_n: int) -> Optional[float]:
        return None if column_n == 0 else 100.0 * self.count / column_n


@dataclass(frozen=True)
class FrequencyTable:
    segment: str
    column_n: int
    rows: tuple[FrequencyRow, ...]

    @property
    def undefined(self) -> bool:
        return self.column_n == 0

    def pct(self, label: str) -> Optional[float]:
        """Rounded (1 decimal) percentage for one row; None for an empty segment."""
        return percent(self.count(label), self.column_n)

    def count(self, label: str) -> int:
        for row in self.rows:
            if row.label == label:
                return row.count
        raise KeyError(label)

    def percentages(self) -> dict[str, Optional[float]]:
        return {row.label: percent(row.count, self.column_n) for row in self.rows}


def frequency_table(
    partition: Mapping[MergedConfig, Sequence[CrashRecord]],
    segment: Optional[Predicate] = None,
    label: str = "Total",
) -> FrequencyTable:
    """Count records satisfying ``segment`` per configuration.

    Percentages are relative to the segment total, so an empty segment yields a
    table with ``column_n == 0`` whose percentages are all ``None``.
    """
    rows = []
    for config in MergedConfig:
        bucket = partition.get(config, ())
        n = len(bucket) if segment is None else sum(1 for r in bucket if segment(r))
        rows.append(FrequencyRow(config.value, n))
    return FrequencyTable(label, sum(r.count for r in rows), tuple(rows))


# ---------------------------------------------------------------- odds ratios

class DegenerateMarginError(ValueError):
    pass


@dataclass(frozen=True)
class OddsRatioResult:
    a: int
    b: int
    c: int
    d: int
    or_value: float
    ci_low: float
    ci_high: float
    significant: bool
    corrected: bool

    @property
    def borderline(self) -> bool:
        """Lower CI bound that reads as 1.0 at one decimal while the OR exceeds 1."""
        return not self.significant and self.or_value > 1 and round_half_up(self.ci_low, 1) == 1.0

    def rounded(self, digits: int = 1) -> tuple[float, float, float]:
        return (
            round_half_up(self.or_value, digits),
            round_half_up(self.ci_low, digits),
            round_half_up(self.ci_high, digits),
        )


def odds_ratio(a: int, b: int, c: int, d: int, z: float = Z_95) -> OddsRatioResult:
    """Odds ratio of a 2x2 table with a Woolf (log-normal) confidence interval.

    Cells: a = exposed with outcome, b = exposed without, c = unexposed with,
    d = unexposed without.  Any zero cell triggers the Haldane-Anscombe
    correction (+0.5 on every cell) and sets ``corrected``.

    >>> r = odds_ratio(10, 10, 10, 10)
    >>> r.or_value, r.significant
    (1.0, False)
    """
    for name, v in zip("abcd", (a, b, c, d)):
        if v < 0:
            raise ValueError(f"cell {name} is negative")
    if a + b == 0 or c + d == 0:
        raise DegenerateMarginError("degenerate margin")
    corrected = 0 in (a, b, c, d)
    fa, fb, fc, fd = (x + 0.5 if corrected else float(x) for x in (a, b, c, d))
    log_or = math.log(fa) + math.log(fd) - math.log(fb) - math.log(fc)
    se = math.sqrt(1 / fa + 1 / fb + 1 / fc + 1 / fd)
    lo = math.exp(log_or - z * se)
    hi = math.exp(log_or + z * se)
    return OddsRatioResult(a, b, c, d, math.exp(log_or), lo, hi, lo > 1.0 or hi < 1.0, corrected)


def outcome_margins(
    partition: Mapping[MergedConfig, Sequence[CrashRecord]], outcome: Outcome
) -> dict[MergedConfig, tuple[int, int]]:
    """(with outcome, without outcome) per configuration; unknown outcomes are dropped."""
    out = {}
    for cfg, bucket in partition.items():
        hits = misses = 0
        for rec in bucket:
            hit = outcome(rec)
            if hit is None:
                continue
            if hit:
                hits += 1
            else:
                misses += 1
        out[cfg] = (hits, misses)
    return out


def contingency_from_margins(
    margins: Mapping[MergedConfig, tuple[int, int]], config: MergedConfig
) -> tuple[int, int, int, int]:
    a, b = margins.get(config, (0, 0))
    hits = sum(h for h, _ in margins.values())
    misses = sum(m for _, m in margins.values())
    return a, b, hits - a, misses - b


def contingency(
    partition: Mapping[MergedConfig, Sequence[CrashRecord]],
    config: MergedConfig,
    outcome: Outcome,
) -> tuple[int, int, int, int]:
    """2x2 counts for ``config`` vs the pooled other configurations.

    Records for which ``outcome`` returns None are dropped (pairwise deletion).
    """
    return contingency_from_margins(outcome_margins(partition, outcome), config)


def association_from_margins(
    margins: Mapping[MergedConfig, tuple[int, int]], config: MergedConfig
) -> OddsRatioResult:
    a, b, c, d = contingency_from_margins(margins, config)
    if a + c == 0 or b + d == 0:
        raise DegenerateMarginError("degenerate margin: outcome does not vary")
    return odds_ratio(a, b, c, d)


def config_association(
    partition: Mapping[MergedConfig, Sequence[CrashRecord]],
    config: MergedConfig,
    outcome: Outcome,
) -> OddsRatioResult:
    return association_from_margins(outcome_margins(partition, outcome), config)


# ---------------------------------------------------------------- numeric summaries

@dataclass(frozen=True)
class SpeedTimeSummary:
    n: int
    mean: Optional[float]
    q1: Optional[float]
    q3: Optional[float]

    @property
    def undefined(self) -> bool:
        return self.n == 0


def quantile(sorted_values: Sequence[float], p: float) -> float:
    """Linear interpolation between closest ranks at 1-based position 1 + p(n-1)."""
    n = len(sorted_values)
    if n == 0:
        raise ValueError("quantile of an empty sequence")
    h = p * (n - 1)
    lo = math.floor(h)
    hi = min(lo + 1, n - 1)
    return sorted_values[lo] + (h - lo) * (sorted_values[hi] - sorted_values[lo])


def summarize_values(values: Iterable[Optional[float]]) -> SpeedTimeSummary:
    present = sorted(v for v in values if v is not None)
    if not present:
        return SpeedTimeSummary(0, None, None, None)
    return SpeedTimeSummary(
        len(present), math.fsum(present) / len(present), quantile(present, 0.25), quantile(present, 0.75)
    )


def summarize_numeric(records: Iterable[CrashRecord], field: str) -> SpeedTimeSummary:
    if field not in NUMERIC_FIELDS:
        raise ValueError(f"not a numeric field: {field!r}")
    return summarize_values(getattr(r, field) for r in records)


# ---------------------------------------------------------------- speed rules

def speeding_flag(impact_speed_kmh: Optional[float], posted_speed_kmh: Optional[float]) -> Optional[bool]:
    """True when the impact speed is strictly above 120% of the posted limit."""
    if impact_speed_kmh is None or posted_speed_kmh is None:
        return None
    return impact_speed_kmh > SPEEDING_RATIO * posted_speed_kmh


def record_speeding(record: CrashRecord) -> Optional[bool]:
    return speeding_flag(record.impact_speed_kmh, record.posted_speed_kmh)


def speeding_share(records: Iterable[CrashRecord]) -> tuple[int, int]:
    """(speeding cases, cases with both speeds known)."""
    hits = known = 0
    for rec in records:
        flag = record_speeding(rec)
        if flag is None:
            continue
        known += 1
        hits += flag
    return hits, known


class ZeroTimeBudgetError(ValueError):
    pass


def required_deceleration(speed_kmh: float, tpei_s: float) -> float:
    """Constant deceleration (m/s^2) that stops a vehicle from ``speed_kmh`` in ``tpei_s``."""
    if tpei_s == 0:
        raise ZeroTimeBudgetError("zero time budget")
    if tpei_s < 0:
        raise ValueError("tpei_s must be positive")
    if speed_kmh < 0:
        raise ValueError("speed_kmh must be non-negative")
    return speed_kmh / 3.6 / tpei_s
