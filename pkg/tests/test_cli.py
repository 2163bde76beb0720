import json
import subprocess
import sys

import pytest

from crashlens.cli import main
from crashlens.ingestion import COLUMNS
from crashlens.synth import DEFAULT_PROFILE


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "s.csv"
    assert main(["synth", "--seed", "42", "--out", str(path)]) == 0
    return path


def test_unknown_flag_is_a_usage_error(capsys):
    assert main(["analyze", "--bogus"]) == 2
    assert "usage:" in capsys.readouterr().err


def test_missing_subcommand_and_help(capsys):
    assert main([]) == 2
    assert main(["--help"]) == 0
    assert "ingest" in capsys.readouterr().out


def test_bad_scale(tmp_path):
    assert main(["synth", "--seed", "1", "--scale", "0", "--out", str(tmp_path / "x.csv")]) == 2


def test_analyze_rejects_bad_rows_with_line_numbers(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text(
        ",".join(COLUMNS) + "\n"
        "A,L3,2,head_on,,,,,,,,,,,,\n"
        "B,L3,2,head_on,,,,,,,,,-5,,,\n"
        "C,L3,9,head_on,,,,,,,,,,,,\n"
    )
    assert main(["analyze", "--records", str(bad), "--report-dir", str(tmp_path / "r")]) == 1
    err = capsys.readouterr().err
    assert "2 row(s) rejected" in err
    assert "line 3: negative speed" in err and "line 4: mais out of range" in err


def test_ingest_keeps_good_rows(tmp_path, capsys):
    src = tmp_path / "in.csv"
    src.write_text(",".join(COLUMNS) + "\nA,L3,2,head_on,,,,,,,,,,,,\nB,L3,,nope,,,,,,,,,,,,\n")
    out = tmp_path / "out.jsonl"
    assert main(["ingest", "--input", str(src), "--out", str(out)]) == 0
    captured = capsys.readouterr()
    assert "1 records written" in captured.out and "line 3: unknown maids_config" in captured.err
    assert json.loads(out.read_text())["case_id"] == "A"
    assert main(["ingest", "--input", str(src), "--strict", "--out", str(out)]) == 1


def test_missing_input_is_a_data_error(tmp_path, capsys):
    assert main(["ingest", "--input", str(tmp_path / "none.csv"), "--out", str(tmp_path / "o.csv")]) == 1
    assert "cannot read" in capsys.readouterr().err


def test_bad_rulebook_is_a_data_error(dataset, tmp_path, capsys):
    rules = tmp_path / "rules.txt"
    rules.write_text("head_on = SV\n")
    code = main(["analyze", "--records", str(dataset), "--rulebook", str(rules), "--report-dir", str(tmp_path)])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_verify_passes_on_generated_data(dataset, capsys):
    assert main(["verify", "--records", str(dataset), "--expect", str(DEFAULT_PROFILE)]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out
    assert out.splitlines()[-1].endswith("checks passed")


def test_verify_fails_on_other_data(tmp_path, capsys):
    other = tmp_path / "o.csv"
    other.write_text(",".join(COLUMNS) + "\nA,L3,2,head_on,,,,,,,,,,,,\n")
    assert main(["verify", "--records", str(other), "--expect", str(DEFAULT_PROFILE)]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_json_lines_dataset_analyzes_like_csv(dataset, tmp_path):
    jsonl = tmp_path / "s.jsonl"
    assert main(["ingest", "--input", str(dataset), "--out", str(jsonl)]) == 0
    for name, src in (("a", dataset), ("b", jsonl)):
        assert main(["analyze", "--records", str(src), "--report-dir", str(tmp_path / name)]) == 0
    for path in sorted((tmp_path / "a").iterdir()):
        assert path.read_bytes() == (tmp_path / "b" / path.name).read_bytes()


def test_module_entry_point_without_color(tmp_path):
    out = tmp_path / "x.csv"
    proc = subprocess.run(
        [sys.executable, "-m", "crashlens", "synth", "--seed", "3", "--out", str(out)],
        capture_output=True, text=True, env={"CRASHLENS_NO_COLOR": "1", "PATH": ""},
    )
    assert proc.returncode == 0, proc.stderr
    assert "\033[" not in proc.stdout
    assert out.read_text().startswith("case_id,ptw_class")
