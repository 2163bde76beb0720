"""Command-line entry point: ingest, analyze, synth and verify."""

from __future__ import annotations

import argparse
import os
import sys
from typing import IO, Optional, Sequence

from . import __version__
from .classifier import RulebookError, load_rulebook
from .ingestion import (
    Format,
    ParseError,
    ParseResult,
    StrictModeError,
    filter_study_population,
    format_for_path,
    parse_records,
    write_records,
)
from .oracle import verify_records
from .profiler import SkillRuleError, load_skill_rules
from .report import ReportFormat, ReportWriteError, build_bundle, render
from .synth import InfeasibleProfileError, ProfileError, ReconstructionError, generate, load_profile

EXIT_OK = 0
EXIT_DATA = 1
EXIT_USAGE = 2


class DataError(Exception):
    """Anything wrong with the inputs rather than with the command line."""


def _styled(text: str, code: str, stream: IO[str]) -> str:
    if os.environ.get("CRASHLENS_NO_COLOR") or not stream.isatty():
        return text
    return f"\033[{code}m{text}\033[0m"


def _err(message: str) -> None:
    print(_styled("error:", "31", sys.stderr), message, file=sys.stderr)


def _read(path: str, fmt: Optional[str], strict: bool) -> ParseResult:
    fmt_enum = Format(fmt) if fmt else format_for_path(path)
    try:
        with open(path, "rb") as fh:
            return parse_records(fh, fmt_enum, strict=strict)
    except StrictModeError as exc:
        lines = [f"line {r.row}: {r.reason}" for r in exc.rejects]
        raise DataError(f"{len(exc.rejects)} row(s) rejected by strict ingest\n" + "\n".join(lines)) from None
    except ParseError as exc:
        raise DataError(f"{path}: {exc}") from None
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from None


def _write_records(records: list, path: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            write_records(records, fh, format_for_path(path))
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror or exc}") from None


def cmd_ingest(args: argparse.Namespace) -> int:
    result = _read(args.input, args.format, args.strict)
    for rej in result.rejects:
        print(f"line {rej.row}: {rej.reason}", file=sys.stderr)
    _write_records(result.records, args.out)
    print(f"{len(result.records)} records written to {args.out}, {len(result.rejects)} rejected")
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    records = _read(args.records, None, strict=True).records
    rulebook = load_rulebook(args.rulebook)
    skills = load_skill_rules(args.skills)
    retained, report = filter_study_population(records, rulebook)
    bundle = build_bundle(retained, report, rulebook, skills, args.no_evasive_threshold, args.short_tpei)
    paths = render(bundle, ReportFormat(args.report_format), args.report_dir)
    print(
        f"{report.n_input} records -> {report.n_study_population} study population "
        f"({report.n_selected_configs} selected, {report.n_other_bucket} other); "
        f"{len(paths)} file(s) written to {args.report_dir}"
    )
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    profile = load_profile(args.profile)
    records = generate(profile, args.seed, scale=args.scale)
    _write_records(records, args.out)
    print(f"{len(records)} synthetic records written to {args.out}")
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    records = _read(args.records, None, strict=True).records
    profile = load_profile(args.expect)
    checks = verify_records(records, profile, load_rulebook(args.rulebook))
    for check in checks:
        tag = _styled("PASS", "32", sys.stdout) if check.passed else _styled("FAIL", "31", sys.stdout)
        print(f"{tag} {check.name}: {check.detail}")
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_DATA


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crashlens", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse and validate a crash-record file")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=[f.value for f in Format], help="input format (default: from extension)")
    p.add_argument("--strict", action="store_true", help="fail if any row is rejected")
    p.add_argument("--out", required=True, help="normalized output (.csv or .jsonl)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("analyze", help="filter, classify and report")
    p.add_argument("--records", required=True)
    p.add_argument("--rulebook", help="configuration merge rules (default: bundled scheme)")
    p.add_argument("--skills", help="skill rules file (default: bundled rules)")
    p.add_argument("--report-dir", required=True)
    p.add_argument("--report-format", choices=[f.value for f in ReportFormat], default=ReportFormat.CSV_SET.value)
    p.add_argument("--no-evasive-threshold", type=float, default=25.0, metavar="PCT")
    p.add_argument("--short-tpei", type=float, default=1.7, metavar="SECONDS")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("synth", help="generate a synthetic dataset from a marginal profile")
    p.add_argument("--profile", help="marginal profile (default: bundled profile)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--scale", type=_positive_int, default=1, help="replicate every quota this many times")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("verify", help="check a dataset against a marginal profile")
    p.add_argument("--records", required=True)
    p.add_argument("--expect", required=True, help="marginal profile")
    p.add_argument("--rulebook")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except (DataError, RulebookError, SkillRuleError, ProfileError, ReconstructionError,
            InfeasibleProfileError, ReportWriteError) as exc:
        _err(str(exc))
        return EXIT_DATA
    except OSError as exc:
        _err(f"{getattr(exc, 'filename', None) or ''}: {exc.strerror or exc}".lstrip(": "))
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
