"""Deterministic synthetic crash datasets built from marginal summaries.

Categorical variables are generated by quota: every percentage in the profile is
turned back into an integer count (``reconstruct_counts``) and exactly that many
records carry the category.  Variables are assigned independently within each
configuration bucket, because joint distributions are not part of the profile.
Numeric fields are stratified draws from a log-normal whose mean matches the
profile mean and whose spread matches the profile quartile ratio.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from statistics import NormalDist
from typing import Any, Iterable, Mapping, Optional, Sequence, TypeVar, Union

from .classifier import ConfigRulebook, MAIDS_TOKENS, default_rulebook
from .model import (
    Action,
    Alignment,
    ContributingFactor,
    CrashRecord,
    EvasiveResponse,
    MaidsConfig,
    MergedConfig,
    PtwClass,
    Quality,
)
from .stats import NUMERIC_FIELDS, SPEEDING_RATIO, speeding_flag

DEFAULT_PROFILE = Path(__file__).with_name("data") / "maids2000.profile"

_Z75 = NormalDist().inv_cdf(0.75)
_STD_NORMAL = NormalDist()
# decimals kept per numeric field in generated data
_DIGITS = {"posted_speed_kmh": 1, "impact_speed_kmh": 1, "tpei_s": 2}
_FLOOR = {"posted_speed_kmh": 0.1, "impact_speed_kmh": 0.0, "tpei_s": 0.01}
_SEVERE_MAIS = ((3, 4, 5, 6), (50, 25, 15, 10))
_MINOR_MAIS = ((1, 2), (65, 35))

T = TypeVar("T")


class ProfileError(ValueError):
    """Malformed profile text."""


class ReconstructionError(ValueError):
    pass


class InfeasibleProfileError(ValueError):
    def __init__(self, margins: Sequence[str]):
        self.margins = list(margins)
        super().__init__("infeasible profile: " + "; ".join(self.margins))


# ---------------------------------------------------------------- oracle arithmetic

def reconstruct_counts(share_pct: float, column_n: int, tolerance: float = 0.1) -> int:
    """Integer count behind a one-decimal percentage of ``column_n`` cases.

    >>> reconstruct_counts(17.0, 182)
    31
    """
    if not 0 <= share_pct <= 100:
        raise ValueError(f"share out of range: {share_pct}")
    if column_n < 0:
        raise ValueError("column_n must be non-negative")
    count = math.floor(share_pct * column_n / 100 + 0.5)
    if column_n and abs(100 * count / column_n - share_pct) > tolerance + 1e-9:
        raise ReconstructionError(
            f"{share_pct}% of {column_n} has no integer count within {tolerance} points"
        )
    return count


def build_2x2(
    exposed_outcome: int, exposed_total: int, pooled_outcome_total: int, pooled_grand_total: int
) -> tuple[int, int, int, int]:
    """Cells (a, b, c, d) of an exposure-vs-pooled-rest table from its margins."""
    if not 0 <= exposed_outcome <= exposed_total <= pooled_grand_total:
        raise ValueError("need exposed_outcome <= exposed_total <= pooled_grand_total")
    a = exposed_outcome
    b = exposed_total - a
    c = pooled_outcome_total - a
    d = pooled_grand_total - exposed_total - c
    if c < 0 or d < 0:
        raise ValueError("pooled outcome total inconsistent with the exposed margins")
    return a, b, c, d


# ---------------------------------------------------------------- profile

@dataclass(frozen=True)
class Distribution:
    """Percent shares over ``n`` cases."""

    n: int
    shares: Mapping[str, float]


@dataclass(frozen=True)
class NumericMargin:
    mean: float
    q1: float
    q3: float
    n: int


@dataclass(frozen=True)
class EvasiveMargin:
    n: int
    selection: Distribution
    execution: Mapping[Action, Distribution]
    residual: Mapping[Action, float]


@dataclass
class MarginalProfile:
    total_n: int
    exclusions: dict[str, int] = field(default_factory=dict)
    config_shares: dict[MergedConfig, float] = field(default_factory=dict)
    severity: dict[str, Distribution] = field(default_factory=dict)
    ptw: dict[PtwClass, Distribution] = field(default_factory=dict)
    factor: dict[MergedConfig, Distribution] = field(default_factory=dict)
    alignment: dict[MergedConfig, dict[Alignment, float]] = field(default_factory=dict)
    evasive: dict[MergedConfig, EvasiveMargin] = field(default_factory=dict)
    numeric: dict[MergedConfig, dict[str, NumericMargin]] = field(default_factory=dict)
    speeding: dict[MergedConfig, float] = field(default_factory=dict)

    def check(self) -> list[str]:
        """Distribution-level invariant problems (empty when the profile is sound).

        A column of one-decimal percentages can miss 100 by up to 0.05 per
        non-zero cell, so the sum tolerance grows with the number of cells.
        """
        problems: list[str] = []
        if self.total_n < 0:
            problems.append("total_n: must be non-negative")

        def dist(name: str, shares: Mapping[Any, float]) -> None:
            nonzero = [v for v in shares.values() if v]
            if not nonzero:
                return
            tol = max(0.1, 0.05 * len(nonzero))
            total = math.fsum(shares.values())
            if abs(total - 100) > tol + 1e-9:
                problems.append(f"{name}: shares sum to {total:.1f}")

        dist("config", self.config_shares)
        for key, col in self.severity.items():
            dist(f"severity.{key}", col.shares)
        for cls, col in self.ptw.items():
            dist(f"ptw.{cls.value}", col.shares)
        for cfg, col in self.factor.items():
            dist(f"factor.{cfg.value}", col.shares)
        for cfg, al in self.alignment.items():
            dist(f"alignment.{cfg.value}", al)
        for cfg, ev in self.evasive.items():
            dist(f"evasive.{cfg.value}.selection", ev.selection.shares)
            for act, col in ev.execution.items():
                dist(f"evasive.{cfg.value}.execution.{act.value}", col.shares)
            dist(f"evasive.{cfg.value}.residual", ev.residual)
        return problems

    def to_text(self) -> str:
        lines = [f"total_n = {self.total_n}"]
        lines += [f"exclusions.{k} = {v}" for k, v in self.exclusions.items()]
        lines += [f"config.{c.value} = {v}" for c, v in self.config_shares.items()]
        for key, col in self.severity.items():
            lines.append(f"severity.{key}.n = {col.n}")
            lines += [f"severity.{key}.{c} = {v}" for c, v in col.shares.items()]
        for cls, col in self.ptw.items():
            lines.append(f"ptw.{cls.value}.n = {col.n}")
            lines += [f"ptw.{cls.value}.{c} = {v}" for c, v in col.shares.items()]
        for cfg, col in self.factor.items():
            lines.append(f"factor.{cfg.value}.n = {col.n}")
            lines += [f"factor.{cfg.value}.{k} = {v}" for k, v in col.shares.items()]
        for cfg, al in self.alignment.items():
            lines += [f"alignment.{cfg.value}.{a.value} = {v}" for a, v in al.items()]
        for cfg, ev in self.evasive.items():
            p = f"evasive.{cfg.value}"
            lines.append(f"{p}.n = {ev.n}")
            lines.append(f"{p}.selection.n = {ev.selection.n}")
            lines += [f"{p}.selection.{q} = {v}" for q, v in ev.selection.shares.items()]
            for act, col in ev.execution.items():
                lines.append(f"{p}.execution.{act.value}.n = {col.n}")
                lines += [f"{p}.execution.{act.value}.{q} = {v}" for q, v in col.shares.items()]
            lines += [f"{p}.residual.{a.value} = {v}" for a, v in ev.residual.items()]
        for cfg, fields in self.numeric.items():
            for name, m in fields.items():
                for attr in ("mean", "q1", "q3", "n"):
                    lines.append(f"numeric.{cfg.value}.{name}.{attr} = {getattr(m, attr)}")
        lines += [f"speeding.{c.value} = {v}" for c, v in self.speeding.items()]
        return "\n".join(lines) + "\n"


def _num(text: str, lineno: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise ProfileError(f"line {lineno}: not a number: {text!r}") from None


def _count(value: float, key: str) -> int:
    if value < 0 or not float(value).is_integer():
        raise ProfileError(f"{key}: expected a non-negative integer count")
    return int(value)


def parse_profile(text: str) -> MarginalProfile:
    """Parse ``key.path = value`` lines (``#`` starts a comment)."""
    raw: dict[str, float] = {}
    where: dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (s.strip() for s in line.partition("="))
        if not sep or not key:
            raise ProfileError(f"line {lineno}: expected 'key.path = value'")
        if key in raw:
            raise ProfileError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = _num(value, lineno)
        where[key] = lineno

    if "total_n" not in raw:
        raise ProfileError("missing total_n")
    profile = MarginalProfile(total_n=_count(raw.pop("total_n"), "total_n"))

    def enum(cls: type[T], text: str, key: str) -> T:
        try:
            return cls(text)  # type: ignore[call-arg]
        except ValueError:
            raise ProfileError(f"line {where[key]}: unknown {cls.__name__} {text!r} in {key!r}") from None

    sev_n: dict[str, int] = {}
    sev: dict[str, dict[str, float]] = {}
    ptw_n: dict[PtwClass, int] = {}
    ptw: dict[PtwClass, dict[str, float]] = {}
    fac_n: dict[MergedConfig, int] = {}
    fac: dict[MergedConfig, dict[str, float]] = {}
    ev_raw: dict[MergedConfig, dict[str, float]] = {}
    num_raw: dict[MergedConfig, dict[str, dict[str, float]]] = {}

    for key, value in raw.items():
        parts = key.split(".")
        head = parts[0]
        if head == "exclusions" and len(parts) == 2:
            profile.exclusions[parts[1]] = _count(value, key)
        elif head == "config" and len(parts) == 2:
            profile.config_shares[enum(MergedConfig, parts[1], key)] = value
        elif head == "severity" and len(parts) == 3:
            if parts[2] == "n":
                sev_n[parts[1]] = _count(value, key)
            else:
                sev.setdefault(parts[1], {})[enum(MergedConfig, parts[2], key).value] = value
        elif head == "ptw" and len(parts) == 3:
            cls = enum(PtwClass, parts[1], key)
            if parts[2] == "n":
                ptw_n[cls] = _count(value, key)
            else:
                ptw.setdefault(cls, {})[enum(MergedConfig, parts[2], key).value] = value
        elif head == "factor" and len(parts) in (3, 4):
            cfg = enum(MergedConfig, parts[1], key)
            if parts[2] == "n" and len(parts) == 3:
                fac_n[cfg] = _count(value, key)
            else:
                fkey = ".".join(parts[2:])
                try:
                    ContributingFactor.from_key(fkey)
                except ValueError:
                    raise ProfileError(f"line {where[key]}: unknown factor {fkey!r}") from None
                fac.setdefault(cfg, {})[fkey] = value
        elif head == "alignment" and len(parts) == 3:
            cfg = enum(MergedConfig, parts[1], key)
            profile.alignment.setdefault(cfg, {})[enum(Alignment, parts[2], key)] = value
        elif head == "evasive" and len(parts) >= 3:
            ev_raw.setdefault(enum(MergedConfig, parts[1], key), {})[".".join(parts[2:])] = value
        elif head == "numeric" and len(parts) == 4:
            cfg = enum(MergedConfig, parts[1], key)
            if parts[2] not in NUMERIC_FIELDS or parts[3] not in ("mean", "q1", "q3", "n"):
                raise ProfileError(f"line {where[key]}: unknown numeric key {key!r}")
            num_raw.setdefault(cfg, {}).setdefault(parts[2], {})[parts[3]] = value
        elif head == "speeding" and len(parts) == 2:
            profile.speeding[enum(MergedConfig, parts[1], key)] = value
        else:
            raise ProfileError(f"line {where[key]}: unrecognised key {key!r}")

    for name in sev:
        if name not in sev_n:
            raise ProfileError(f"severity.{name}.n missing")
        profile.severity[name] = Distribution(sev_n[name], sev[name])
    for cls in ptw:
        if cls not in ptw_n:
            raise ProfileError(f"ptw.{cls.value}.n missing")
        profile.ptw[cls] = Distribution(ptw_n[cls], ptw[cls])
    for cfg in set(fac) | set(fac_n):
        if cfg not in fac_n:
            raise ProfileError(f"factor.{cfg.value}.n missing")
        profile.factor[cfg] = Distribution(fac_n[cfg], fac.get(cfg, {}))
    for cfg, kv in ev_raw.items():
        profile.evasive[cfg] = _evasive_margin(cfg, kv)
    for cfg, fields in num_raw.items():
        for name, attrs in fields.items():
            missing = {"mean", "q1", "q3", "n"} - set(attrs)
            if missing:
                raise ProfileError(f"numeric.{cfg.value}.{name}: missing {sorted(missing)}")
            profile.numeric.setdefault(cfg, {})[name] = NumericMargin(
                attrs["mean"], attrs["q1"], attrs["q3"], _count(attrs["n"], f"numeric.{cfg.value}.{name}.n")
            )
    # canonical ordering keeps to_text() stable
    profile.factor = {c: profile.factor[c] for c in MergedConfig if c in profile.factor}
    profile.evasive = {c: profile.evasive[c] for c in MergedConfig if c in profile.evasive}
    return profile


def _evasive_margin(cfg: MergedConfig, kv: dict[str, float]) -> EvasiveMargin:
    prefix = f"evasive.{cfg.value}"
    try:
        n = _count(kv.pop("n"), f"{prefix}.n")
        sel_n = _count(kv.pop("selection.n"), f"{prefix}.selection.n")
    except KeyError as exc:
        raise ProfileError(f"{prefix}.{exc.args[0]} missing") from None
    sel: dict[str, float] = {}
    exe_n: dict[Action, int] = {}
    exe: dict[Action, dict[str, float]] = {}
    residual: dict[Action, float] = {}
    for key, value in kv.items():
        parts = key.split(".")
        try:
            if parts[0] == "selection" and len(parts) == 2:
                sel[Quality(parts[1]).value] = value
            elif parts[0] == "execution" and len(parts) == 3:
                act = Action(parts[1])
                if parts[2] == "n":
                    exe_n[act] = _count(value, f"{prefix}.{key}")
                else:
                    exe.setdefault(act, {})[Quality(parts[2]).value] = value
            elif parts[0] == "residual" and len(parts) == 2:
                residual[Action(parts[1])] = value
            else:
                raise ValueError(key)
        except ValueError:
            raise ProfileError(f"unrecognised key {prefix}.{key!r}") from None
    execution = {a: Distribution(exe_n.get(a, 0), exe.get(a, {})) for a in Action if a in exe_n or a in exe}
    return EvasiveMargin(n, Distribution(sel_n, sel), execution, residual)


def load_profile(path: Union[str, Path, None] = None) -> MarginalProfile:
    src = DEFAULT_PROFILE if path is None else Path(path)
    return parse_profile(src.read_text(encoding="utf-8"))


# ---------------------------------------------------------------- quota plan

@dataclass(frozen=True)
class BucketQuota:
    n: int
    severe: int
    nonsevere: int
    l3: int
    factor: Mapping[str, int]
    alignment: Mapping[Alignment, int]
    evasive: Mapping[EvasiveResponse, int]
    numeric: Mapping[str, NumericMargin]
    numeric_present: Mapping[str, int]
    speeding: Optional[int]

    def scaled(self, k: int) -> "BucketQuota":
        return BucketQuota(
            n=self.n * k,
            severe=self.severe * k,
            nonsevere=self.nonsevere * k,
            l3=self.l3 * k,
            factor={key: v * k for key, v in self.factor.items()},
            alignment={key: v * k for key, v in self.alignment.items()},
            evasive={key: v * k for key, v in self.evasive.items()},
            numeric=self.numeric,
            numeric_present={key: v * k for key, v in self.numeric_present.items()},
            speeding=None if self.speeding is None else self.speeding * k,
        )


@dataclass(frozen=True)
class QuotaPlan:
    buckets: Mapping[MergedConfig, BucketQuota]
    exclusions: Mapping[str, int]

    @property
    def study_n(self) -> int:
        return sum(q.n for q in self.buckets.values())

    @property
    def input_n(self) -> int:
        return self.study_n + sum(self.exclusions.values())

    def scaled(self, k: int) -> "QuotaPlan":
        """Replicate every quota ``k`` times; all percentages stay exactly the same."""
        if k < 1:
            raise ValueError("scale factor must be >= 1")
        return QuotaPlan(
            {c: q.scaled(k) for c, q in self.buckets.items()},
            {key: v * k for key, v in self.exclusions.items()},
        )


class _Margins:
    """Collects reconstruction failures so one error lists every violated margin."""

    def __init__(self) -> None:
        self.problems: list[str] = []

    def count(self, name: str, share: float, n: int) -> int:
        try:
            return reconstruct_counts(share, n)
        except (ReconstructionError, ValueError) as exc:
            self.problems.append(f"{name}: {exc}")
            return math.floor(share * n / 100 + 0.5)

    def column(self, name: str, shares: Mapping[Any, float], n: int) -> dict[Any, int]:
        counts = {k: self.count(f"{name}.{getattr(k, 'value', k)}", v, n) for k, v in shares.items()}
        if sum(counts.values()) != n:
            self.problems.append(f"{name}: counts sum to {sum(counts.values())}, expected {n}")
        return counts


def plan_quotas(profile: MarginalProfile) -> QuotaPlan:
    """Integer quotas for every categorical margin of ``profile``.

    Raises InfeasibleProfileError listing each margin whose percentages cannot be
    realised as counts (or whose counts overflow their bucket).
    """
    m = _Margins()
    m.problems.extend(profile.check())
    if profile.total_n == 0:
        if m.problems:
            raise InfeasibleProfileError(m.problems)
        return QuotaPlan({}, dict(profile.exclusions))

    sizes = m.column("config", profile.config_shares, profile.total_n)
    sev = {k: m.column(f"severity.{k}", {MergedConfig(c): v for c, v in d.shares.items()}, d.n)
           for k, d in profile.severity.items()}
    ptw = {k: m.column(f"ptw.{k.value}", {MergedConfig(c): v for c, v in d.shares.items()}, d.n)
           for k, d in profile.ptw.items()}

    buckets: dict[MergedConfig, BucketQuota] = {}
    for cfg in MergedConfig:
        n = sizes.get(cfg, 0)
        name = cfg.value
        severe = sev.get("severe", {}).get(cfg, 0)
        nonsevere = sev.get("nonsevere", {}).get(cfg, 0)
        if severe + nonsevere > n:
            m.problems.append(f"severity.{name}: {severe}+{nonsevere} severity quotas exceed {n} cases")
        l3 = ptw.get(PtwClass.L3_MOTORCYCLE, {}).get(cfg, 0)
        if l3 > n:
            m.problems.append(f"ptw.L3.{name}: {l3} exceeds {n} cases")
        l1_col = profile.ptw.get(PtwClass.L1_MOPED)
        if l1_col is not None and n:
            implied = ptw.get(PtwClass.L1_MOPED, {}).get(cfg)
            if implied is not None and implied != n - l3:
                m.problems.append(f"ptw.L1.{name}: {implied} moped cases but {n - l3} remain after L3")

        factor: dict[str, int] = {}
        if cfg in profile.factor:
            d = profile.factor[cfg]
            if d.n > n:
                m.problems.append(f"factor.{name}.n: {d.n} exceeds {n} cases")
            factor = {k: v for k, v in m.column(f"factor.{name}", d.shares, d.n).items() if v}

        alignment: dict[Alignment, int] = {}
        if cfg in profile.alignment:
            alignment = {k: v for k, v in m.column(f"alignment.{name}", profile.alignment[cfg], n).items() if v}

        evasive: dict[EvasiveResponse, int] = {}
        if cfg in profile.evasive:
            evasive = _evasive_quota(m, name, profile.evasive[cfg], n)

        numeric = dict(profile.numeric.get(cfg, {}))
        present = {}
        for fname, margin in numeric.items():
            if margin.n > n:
                m.problems.append(f"numeric.{name}.{fname}.n: {margin.n} exceeds {n} cases")
            if margin.q1 <= 0 or margin.q3 < margin.q1 or margin.mean <= 0:
                m.problems.append(f"numeric.{name}.{fname}: needs 0 < q1 <= q3 and mean > 0")
            present[fname] = margin.n

        speeding = None
        if cfg in profile.speeding:
            both = _both_speeds_present(n, present)
            speeding = m.count(f"speeding.{name}", profile.speeding[cfg], both)

        buckets[cfg] = BucketQuota(n, severe, nonsevere, l3, factor, alignment, evasive, numeric, present, speeding)

    if m.problems:
        raise InfeasibleProfileError(m.problems)
    return QuotaPlan(buckets, dict(profile.exclusions))


def _evasive_quota(m: _Margins, name: str, ev: EvasiveMargin, n: int) -> dict[EvasiveResponse, int]:
    prefix = f"evasive.{name}"
    if ev.n > n:
        m.problems.append(f"{prefix}.n: {ev.n} exceeds {n} cases")
    if ev.selection.n > ev.n:
        m.problems.append(f"{prefix}.selection.n: {ev.selection.n} exceeds {ev.n}")
    sel = m.column(f"{prefix}.selection", ev.selection.shares, ev.selection.n)
    proper = sel.get(Quality.PROPER.value, 0)
    out: dict[EvasiveResponse, int] = {}
    no_action = ev.n - ev.selection.n
    if no_action:
        out[EvasiveResponse(Action.NO_ACTION)] = no_action

    exe_total = 0
    for act, d in ev.execution.items():
        counts = m.column(f"{prefix}.execution.{act.value}", d.shares, d.n)
        exe_total += d.n
        for q, c in counts.items():
            if c:
                key = EvasiveResponse(act, Quality.PROPER, Quality(q))
                out[key] = out.get(key, 0) + c
    if exe_total != proper:
        m.problems.append(f"{prefix}.execution: {exe_total} executions but {proper} proper selections")

    # responses not judged properly selected: action split from the residual shares,
    # selection quality from the selection column, execution not assessed
    rest = ev.selection.n - proper
    actions = m.column(f"{prefix}.residual", ev.residual, rest) if rest else {}
    improper = sel.get(Quality.IMPROPER.value, 0)
    quals = [Quality.IMPROPER] * improper + [Quality.UNKNOWN] * (rest - improper)
    i = 0
    for act in Action:
        for _ in range(actions.get(act, 0)):
            key = EvasiveResponse(act, quals[i], Quality.UNKNOWN)
            out[key] = out.get(key, 0) + 1
            i += 1
    return out


def _both_speeds_present(n: int, present: Mapping[str, int]) -> int:
    # missing posted speeds occupy the first slots of a bucket, missing impact speeds the last
    miss_p = n - present.get("posted_speed_kmh", 0)
    miss_i = n - present.get("impact_speed_kmh", 0)
    return max(0, n - miss_p - miss_i)


# ---------------------------------------------------------------- numeric fit

@dataclass(frozen=True)
class LogNormalFit:
    mu: float
    sigma: float

    @classmethod
    def from_summary(cls, mean: float, q1: float, q3: float) -> "LogNormalFit":
        """Pin the mean exactly and the spread by the quartile ratio."""
        sigma = math.log(q3 / q1) / (2 * _Z75) if q3 > q1 else 0.0
        return cls(math.log(mean) - sigma * sigma / 2, sigma)

    @property
    def mean(self) -> float:
        return math.exp(self.mu + self.sigma ** 2 / 2)

    def quantile(self, p: float) -> float:
        if self.sigma == 0:
            return math.exp(self.mu)
        return math.exp(self.mu + self.sigma * _STD_NORMAL.inv_cdf(p))

    def quartile_deviation(self, q1: float, q3: float) -> float:
        """Largest relative gap between fitted and target quartiles."""
        return max(abs(self.quantile(0.25) / q1 - 1), abs(self.quantile(0.75) / q3 - 1))


def _draw(fit: LogNormalFit, count: int, rng: random.Random, digits: int, floor: float) -> list[float]:
    # one draw per equal-probability stratum keeps small samples close to the fit
    values = []
    for i in range(count):
        u = min(max((i + rng.random()) / count, 1e-12), 1 - 1e-12)
        values.append(max(round(fit.quantile(u), digits), floor))
    rng.shuffle(values)
    return values


def _repair_speeding(posted: list[Optional[float]], impact: list[Optional[float]], target: int) -> None:
    both = [i for i in range(len(posted)) if posted[i] is not None and impact[i] is not None]
    flags = {i: bool(speeding_flag(impact[i], posted[i])) for i in both}
    hits = sum(flags.values())
    ratio = lambda i: impact[i] / posted[i]  # noqa: E731
    if hits < target:
        for i in sorted((i for i in both if not flags[i]), key=ratio, reverse=True)[: target - hits]:
            limit = SPEEDING_RATIO * posted[i]
            v = math.floor(limit * 10) / 10
            while not v > limit:
                v = round(v + 0.1, 1)
            impact[i] = v
    elif hits > target:
        for i in sorted((i for i in both if flags[i]), key=ratio)[: hits - target]:
            limit = SPEEDING_RATIO * posted[i]
            v = math.floor(limit * 10) / 10
            while v > limit:
                v = round(v - 0.1, 1)
            impact[i] = v


# ---------------------------------------------------------------- generator

def _expand(pairs: Iterable[tuple[T, int]], n: int, fill: Any, rng: random.Random) -> list[Any]:
    out: list[Any] = []
    for value, count in pairs:
        out.extend([value] * count)
    out.extend([fill] * (n - len(out)))
    rng.shuffle(out)
    return out


def _bucket_fields(
    cfg: MergedConfig, q: BucketQuota, tokens: Sequence[MaidsConfig], rng: random.Random
) -> list[dict[str, Any]]:
    n = q.n
    token_list: list[MaidsConfig] = []
    for i, tok in enumerate(tokens):
        token_list.extend([tok] * (n // len(tokens) + (i < n % len(tokens))))
    rng.shuffle(token_list)

    ptw = _expand([(PtwClass.L3_MOTORCYCLE, q.l3)], n, PtwClass.L1_MOPED, rng)
    severity = _expand([(True, q.severe), (False, q.nonsevere)], n, None, rng)
    mais = [
        None if s is None else rng.choices(*(_SEVERE_MAIS if s else _MINOR_MAIS))[0]
        for s in severity
    ]
    factors = _expand(((ContributingFactor.from_key(k), c) for k, c in q.factor.items()), n, None, rng)
    alignment = _expand(q.alignment.items(), n, Alignment.UNKNOWN, rng)
    evasive = _expand(q.evasive.items(), n, None, rng)

    numeric: dict[str, list[Optional[float]]] = {}
    for fname in NUMERIC_FIELDS:
        margin = q.numeric.get(fname)
        if margin is None:
            numeric[fname] = [None] * n
            continue
        present = q.numeric_present[fname]
        values: list[Optional[float]] = list(
            _draw(LogNormalFit.from_summary(margin.mean, margin.q1, margin.q3), present, rng,
                  _DIGITS[fname], _FLOOR[fname])
        )
        missing: list[Optional[float]] = [None] * (n - present)
        if fname == "posted_speed_kmh":
            numeric[fname] = missing + values
        elif fname == "impact_speed_kmh":
            numeric[fname] = values + missing
        else:
            column = values + missing
            rng.shuffle(column)
            numeric[fname] = column
    if q.speeding is not None:
        _repair_speeding(numeric["posted_speed_kmh"], numeric["impact_speed_kmh"], q.speeding)

    return [
        dict(
            ptw_class=ptw[i],
            mais=mais[i],
            maids_config=token_list[i],
            primary_factor=factors[i],
            evasive=evasive[i],
            alignment=alignment[i],
            posted_speed_kmh=numeric["posted_speed_kmh"][i],
            impact_speed_kmh=numeric["impact_speed_kmh"][i],
            tpei_s=numeric["tpei_s"][i],
        )
        for i in range(n)
    ]


def _excluded_fields(plan: QuotaPlan, rng: random.Random) -> list[dict[str, Any]]:
    out = []
    kinds = [
        ("rider_impairment", dict(rider_impairment_primary=True)),
        ("mechanical", dict(mechanical_primary=True)),
        ("mofa", dict(ptw_class=PtwClass.MOFA)),
    ]
    for kind, flags in kinds:
        for _ in range(plan.exclusions.get(kind, 0)):
            fields: dict[str, Any] = dict(
                ptw_class=rng.choice((PtwClass.L1_MOPED, PtwClass.L3_MOTORCYCLE)),
                mais=rng.choices(*_MINOR_MAIS)[0],
                maids_config=rng.choice(MAIDS_TOKENS),
            )
            fields.update(flags)
            out.append(fields)
    unknown = set(plan.exclusions) - {k for k, _ in kinds}
    if unknown:
        raise InfeasibleProfileError([f"exclusions.{k}: unknown exclusion kind" for k in sorted(unknown)])
    return out


def generate_from_plan(
    plan: QuotaPlan, seed: int, rulebook: Optional[ConfigRulebook] = None
) -> list[CrashRecord]:
    book = rulebook or default_rulebook()
    rng = random.Random(seed)
    tokens_for = {cfg: [t for t in MAIDS_TOKENS if book.mapping[t] is cfg] for cfg in MergedConfig}
    rows: list[dict[str, Any]] = []
    for cfg in MergedConfig:
        q = plan.buckets.get(cfg)
        if q is None or q.n == 0:
            continue
        tokens = tokens_for[cfg]
        if not tokens:
            raise InfeasibleProfileError([f"config.{cfg.value}: no MAIDS token maps to this configuration"])
        rows.extend(_bucket_fields(cfg, q, tokens, rng))
    rows.extend(_excluded_fields(plan, rng))
    rng.shuffle(rows)
    width = max(6, len(str(len(rows))))
    return [CrashRecord(case_id=f"SYN-{i:0{width}d}", **row) for i, row in enumerate(rows, start=1)]


def generate(
    profile: MarginalProfile,
    seed: int,
    scale: int = 1,
    rulebook: Optional[ConfigRulebook] = None,
) -> list[CrashRecord]:
    """Quota-generate a dataset from ``profile``.

    The output includes the excluded (impaired rider, mechanical, mofa) cases, so
    the study-population filter has something to remove.  Identical
    ``(profile, seed, scale)`` always gives an identical dataset; changing only the
    seed changes numeric values and record order but no categorical count.
    """
    plan = plan_quotas(profile)
    if scale != 1:
        plan = plan.scaled(scale)
    return generate_from_plan(plan, seed, rulebook)
