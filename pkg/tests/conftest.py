from __future__ import annotations

from pathlib import Path

import pytest

from crashlens.classifier import partition
from crashlens.ingestion import dumps_records, filter_study_population, parse_records
from crashlens.model import CrashRecord, MaidsConfig, PtwClass
from crashlens.synth import generate, load_profile

GOLDEN = Path(__file__).parent / "golden"


def make_record(case_id: str = "C1", **overrides) -> CrashRecord:
    fields = dict(
        case_id=case_id,
        ptw_class=PtwClass.L3_MOTORCYCLE,
        mais=2,
        maids_config=MaidsConfig.HEAD_ON,
    )
    fields.update(overrides)
    return CrashRecord(**fields)


@pytest.fixture(scope="session")
def default_profile():
    return load_profile()


@pytest.fixture(scope="session")
def synthetic(default_profile):
    """The seed-42 dataset after a CSV round trip through ingestion."""
    records = generate(default_profile, 42)
    parsed = parse_records(dumps_records(records).encode("utf-8"), strict=True)
    return parsed.records


@pytest.fixture(scope="session")
def study(synthetic):
    return filter_study_population(synthetic)


@pytest.fixture(scope="session")
def study_partition(study):
    retained, _ = study
    return partition(retained)


ACCEPTANCE: dict[int, str] = {}


def report_criterion(number: int, passed: bool, detail: str) -> None:
    line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
