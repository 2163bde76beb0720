"""Merge MAIDS crash-group configurations into trajectory-based configurations."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from importlib.resources import files
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Optional, Union

from .model import CrashRecord, MaidsConfig, MergedConfig

DATA = files("crashlens.data")
DEFAULT_RULEBOOK = DATA / "merge_rules.txt"
DEFAULT_CODEBOOK = DATA / "maids_codebook.tsv"

# preimage sizes of the default merging scheme
DEFAULT_PREIMAGE_SIZES: Mapping[MergedConfig, int] = MappingProxyType({
    MergedConfig.SCP_LD: 2,
    MergedConfig.TIP_LD: 2,
    MergedConfig.TAP_OD: 2,
    MergedConfig.TAP_SD: 4,
    MergedConfig.RE_SD: 1,
    MergedConfig.HS_OD: 2,
    MergedConfig.SV: 3,
    MergedConfig.OTHER: 9,
})

MAIDS_TOKENS = tuple(c for c in MaidsConfig if c is not MaidsConfig.UNKNOWN)


class RulebookError(ValueError):
    pass


@dataclass(frozen=True)
class ConfigRulebook:
    mapping: Mapping[MaidsConfig, MergedConfig]

    def __post_init__(self) -> None:
        object.__setattr__(self, "mapping", MappingProxyType(dict(self.mapping)))

    def preimage_sizes(self) -> dict[MergedConfig, int]:
        counts = Counter(self.mapping.values())
        return {m: counts.get(m, 0) for m in MergedConfig}

    def check(self, expected_sizes: Optional[Mapping[MergedConfig, int]] = DEFAULT_PREIMAGE_SIZES) -> None:
        missing = [t.value for t in MAIDS_TOKENS if t not in self.mapping]
        if missing:
            raise RulebookError(f"rulebook is not total, unmapped tokens: {', '.join(missing)}")
        if MaidsConfig.UNKNOWN in self.mapping:
            raise RulebookError("'unknown' is not a mappable configuration")
        if expected_sizes is not None:
            sizes = self.preimage_sizes()
            bad = [f"{m.value}: {sizes[m]} (expected {n})" for m, n in expected_sizes.items() if sizes[m] != n]
            if bad:
                raise RulebookError("preimage sizes differ from the default scheme: " + "; ".join(bad))

    def to_text(self) -> str:
        return "".join(f"{t.value} = {self.mapping[t].value}\n" for t in MAIDS_TOKENS if t in self.mapping)


def parse_rulebook(
    text: str,
    expected_sizes: Optional[Mapping[MergedConfig, int]] = DEFAULT_PREIMAGE_SIZES,
) -> ConfigRulebook:
    """Parse ``maids_token = merged_token`` lines.

    The result is checked for totality; ``expected_sizes`` additionally pins the
    number of MAIDS tokens per merged configuration (pass ``None`` to evaluate an
    alternative merging scheme).
    """
    mapping: dict[MaidsConfig, MergedConfig] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        token, sep, merged = (s.strip() for s in line.partition("="))
        if not sep:
            raise RulebookError(f"line {lineno}: expected 'maids_token = merged_token'")
        try:
            key = MaidsConfig(token)
        except ValueError:
            raise RulebookError(f"line {lineno}: unknown MAIDS token {token!r}") from None
        try:
            value = MergedConfig(merged)
        except ValueError:
            raise RulebookError(f"line {lineno}: unknown merged configuration {merged!r}") from None
        if key in mapping:
            raise RulebookError(f"line {lineno}: duplicate mapping for {token!r}")
        mapping[key] = value
    book = ConfigRulebook(mapping)
    book.check(expected_sizes)
    return book


def load_rulebook(
    path: Union[str, Path, None] = None,
    expected_sizes: Optional[Mapping[MergedConfig, int]] = DEFAULT_PREIMAGE_SIZES,
) -> ConfigRulebook:
    src = DEFAULT_RULEBOOK if path is None else Path(path)
    return parse_rulebook(src.read_text(encoding="utf-8"), expected_sizes)


def load_codebook(path: Union[str, Path, None] = None) -> dict[MaidsConfig, str]:
    """Token -> human-readable description."""
    src = DEFAULT_CODEBOOK if path is None else Path(path)
    book: dict[MaidsConfig, str] = {}
    for raw in src.read_text(encoding="utf-8").splitlines():
        if not raw.strip() or raw.startswith("#"):
            continue
        token, _, desc = raw.partition("\t")
        book[MaidsConfig(token.strip())] = desc.strip()
    return book


_default: Optional[ConfigRulebook] = None


def default_rulebook() -> ConfigRulebook:
    global _default
    if _default is None:
        _default = load_rulebook()
    return _default


def classify(record: CrashRecord, rulebook: Optional[ConfigRulebook] = None) -> MergedConfig:
    if record.maids_config is MaidsConfig.UNKNOWN:
        return MergedConfig.OTHER
    book = rulebook or default_rulebook()
    return book.mapping[record.maids_config]


def partition(
    records: Iterable[CrashRecord], rulebook: Optional[ConfigRulebook] = None
) -> dict[MergedConfig, list[CrashRecord]]:
    """Bucket records by merged configuration; all eight keys are always present."""
    book = rulebook or default_rulebook()
    buckets: dict[MergedConfig, list[CrashRecord]] = {m: [] for m in MergedConfig}
    for rec in records:
        buckets[classify(rec, book)].append(rec)
    return buckets
