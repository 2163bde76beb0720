"""Compare a crash dataset against the marginals of a profile."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .classifier import ConfigRulebook, default_rulebook, partition as partition_records
from .ingestion import filter_study_population
from .model import Action, CrashRecord, MergedConfig, Quality, is_severe
from .stats import percent, speeding_share, summarize_numeric
from .synth import MarginalProfile

SHARE_TOLERANCE = 0.1
MEAN_TOLERANCE = 0.10


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def _shares_check(
    name: str, expected: Mapping[str, float], counts: Mapping[str, int], n: int
) -> Check:
    bad = []
    for key in sorted(set(expected) | {k for k, v in counts.items() if v}):
        want = expected.get(key, 0.0)
        got = percent(counts.get(key, 0), n)
        if got is None or abs(got - want) > SHARE_TOLERANCE + 1e-9:
            bad.append(f"{key} {got} vs {want}")
    if bad:
        return Check(name, False, "; ".join(bad))
    return Check(name, True, f"{len(expected)} cells within {SHARE_TOLERANCE} of n={n}")


def _count_check(name: str, got: int, want: int) -> Check:
    return Check(name, got == want, f"{got} (expected {want})")


def _column(
    part: Mapping[MergedConfig, Sequence[CrashRecord]], keep: Callable[[CrashRecord], bool]
) -> tuple[dict[str, int], int]:
    counts = {c.value: sum(1 for r in part[c] if keep(r)) for c in MergedConfig}
    return counts, sum(counts.values())


def verify_records(
    records: Iterable[CrashRecord],
    profile: MarginalProfile,
    rulebook: Optional[ConfigRulebook] = None,
) -> list[Check]:
    """Checks in a fixed order; a dataset generated from ``profile`` passes all of them."""
    book = rulebook or default_rulebook()
    retained, report = filter_study_population(list(records), book)
    checks: list[Check] = []
    ex = profile.exclusions
    if ex:
        want = ex.get("rider_impairment", 0) + ex.get("mechanical", 0)
        checks.append(_count_check("exclusions.impairment_mechanical", report.n_excluded_impairment_mechanical, want))
        checks.append(_count_check("exclusions.mofa", report.n_excluded_mofa, ex.get("mofa", 0)))
    checks.append(_count_check("study_population", report.n_study_population, profile.total_n))
    part = partition_records(retained, book)

    if profile.config_shares:
        counts, n = _column(part, lambda r: True)
        checks.append(_shares_check("config", {c.value: v for c, v in profile.config_shares.items()}, counts, n))
    segments: dict[str, Callable[[CrashRecord], bool]] = {
        "severity.severe": lambda r: is_severe(r) is True,
        "severity.nonsevere": lambda r: is_severe(r) is False,
    }
    for name, keep in segments.items():
        col = profile.severity.get(name.split(".", 1)[1])
        if col is not None:
            counts, n = _column(part, keep)
            checks.append(_shares_check(name, col.shares, counts, n))
    for cls, col in profile.ptw.items():
        counts, n = _column(part, lambda r, cls=cls: r.ptw_class is cls)
        checks.append(_shares_check(f"ptw.{cls.value}", col.shares, counts, n))

    for cfg in MergedConfig:
        bucket = part[cfg]
        if cfg in profile.factor:
            factors = Counter(r.primary_factor.key for r in bucket if r.primary_factor is not None)
            checks.append(_shares_check(f"factor.{cfg.value}", profile.factor[cfg].shares, factors, sum(factors.values())))
        if cfg in profile.alignment:
            al = Counter(r.alignment.value for r in bucket)
            expected = {a.value: v for a, v in profile.alignment[cfg].items()}
            checks.append(_shares_check(f"alignment.{cfg.value}", expected, al, len(bucket)))
        if cfg in profile.evasive:
            checks.extend(_evasive_checks(cfg, bucket, profile))
        for field, margin in profile.numeric.get(cfg, {}).items():
            s = summarize_numeric(bucket, field)
            ok = s.n == margin.n and s.mean is not None and abs(s.mean / margin.mean - 1) <= MEAN_TOLERANCE
            mean = "none" if s.mean is None else f"{s.mean:.1f}"
            checks.append(Check(
                f"numeric.{cfg.value}.{field}", ok,
                f"mean {mean} vs {margin.mean} (±{MEAN_TOLERANCE:.0%}), n {s.n} vs {margin.n}",
            ))
        if cfg in profile.speeding:
            hits, known = speeding_share(bucket)
            got = percent(hits, known)
            want = profile.speeding[cfg]
            ok = got is not None and abs(got - want) <= SHARE_TOLERANCE + 1e-9
            checks.append(Check(f"speeding.{cfg.value}", ok, f"{got} vs {want} ({hits}/{known})"))
    return checks


def _evasive_checks(cfg: MergedConfig, bucket: Sequence[CrashRecord], profile: MarginalProfile) -> list[Check]:
    margin = profile.evasive[cfg]
    prefix = f"evasive.{cfg.value}"
    assessed = [r.evasive for r in bucket if r.evasive is not None]
    attempted = [ev for ev in assessed if ev.action not in (Action.NO_ACTION, Action.UNKNOWN)]
    out = [
        _count_check(f"{prefix}.n", len(assessed), margin.n),
        _count_check(f"{prefix}.selection.n", len(attempted), margin.selection.n),
    ]
    sel = Counter(ev.selection_quality.value for ev in attempted)
    out.append(_shares_check(f"{prefix}.selection", margin.selection.shares, sel, len(attempted)))
    for action, col in margin.execution.items():
        done = [ev for ev in attempted if ev.action is action and ev.selection_quality is Quality.PROPER]
        exe = Counter(ev.execution_quality.value for ev in done)
        out.append(_shares_check(f"{prefix}.execution.{action.value}", col.shares, exe, len(done)))
    return out
