import json
import subprocess
import sys
from pathlib import Path

import pytest

from gfk.cli import build_parser, main
from gfk.scenarios import builtin_names

DEMOS = Path(__file__).resolve().parent.parent / "demos" / "configs"


def test_list_prints_every_builtin(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    for name in builtin_names():
        assert name in out


def test_schema_prints_json(capsys):
    assert main(["schema"]) == 0
    schema = json.loads(capsys.readouterr().out)
    assert schema["properties"]["schema_version"]["const"] == 1


def test_run_builtin_passes(tmp_path, capsys):
    assert main(["run", "mollifier-moments", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "PASS  moments-1d" in out
    report = json.loads((tmp_path / "mollifier-moments.report.json").read_text())
    assert report["pass"] is True
    assert (tmp_path / "mollifier-moments.traces.csv").is_file()


def test_false_claim_exits_one_with_flat_order(tmp_path, capsys):
    assert main(["run", str(DEMOS / "false-negligible.json"), "--out", str(tmp_path), "--quiet"]) == 1
    report = json.loads((tmp_path / "false-negligible.report.json").read_text())
    row = report["claims"][0]
    assert row["pass"] is False
    order = row["details"]["orders"]["1"]["0"][0]["order"]
    assert abs(order) < 0.25


def test_missing_manifold_exits_two_with_pointer(tmp_path, capsys):
    assert main(["run", str(DEMOS / "missing-manifold.json"), "--out", str(tmp_path)]) == 2
    assert "/manifold" in capsys.readouterr().err


def test_bad_ladder_flag_exits_two(tmp_path, capsys):
    assert main(["run", "mollifier-moments", "--ladder", "0.5,2,8", "--out", str(tmp_path)]) == 2
    assert "ladder" in capsys.readouterr().err


def test_numerical_error_exits_three(tmp_path, capsys):
    assert main(["run", str(DEMOS / "ladder-outside-domain.json"), "--out", str(tmp_path)]) == 3
    assert "LadderError" in capsys.readouterr().err


def test_unknown_builtin_exits_two(tmp_path, capsys):
    assert main(["run", "does-not-exist", "--out", str(tmp_path)]) == 2


def test_parser_requires_a_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def test_console_entry_point_runs_as_module(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "gfk.cli", "list"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "mollifier-moments" in proc.stdout


def test_demo_runner_sees_expected_exit_codes():
    script = Path(__file__).resolve().parent.parent / "demos" / "run_demos.py"
    done = subprocess.run([sys.executable, str(script), "--builtin", "mollifier-moments"],
                          capture_output=True, text=True)
    assert done.returncode == 0, done.stdout + done.stderr
    assert "expected" not in done.stdout
