"""CLI exit codes, golden output, idempotence."""
import os
import shutil
import subprocess
import sys

import pytest

from scalestore.cli import main

from conftest import FIXTURES, SCENARIOS, _read

SOCIAL = os.path.join(FIXTURES, "social")
TEMPLATES = [os.path.join(SOCIAL, n + ".qt")
             for n in ("friend_index", "friends_of_friends_index",
                       "birthday_index")]


def run_main(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_check_social_fixture_matches_golden(capsys):
    code, out, _ = run_main(["check", os.path.join(SOCIAL, "schema.json")]
                            + TEMPLATES, capsys)
    assert code == 0
    assert "friend_index: admissible, worst-case fan-out 4" in out
    assert "friends_of_friends_index: admissible, worst-case fan-out 16" in out
    golden = _read(SOCIAL, "maintenance_table.golden")
    assert golden in out


def test_check_unbounded_followers_exit_2(capsys):
    code, out, _ = run_main(
        ["check", os.path.join(FIXTURES, "followers", "schema.json"),
         os.path.join(FIXTURES, "followers", "followers_index.qt")], capsys)
    assert code == 2
    assert "REJECTED" in out
    assert "followed_by" in out


def test_check_missing_schema_exit_1(capsys):
    code, _, err = run_main(["check", "/nonexistent/schema.json"]
                            + TEMPLATES[:1], capsys)
    assert code == 1


def test_unknown_flag_exit_1(capsys):
    assert main(["check", "--bogus"]) == 1


def test_unknown_subcommand_exit_1(capsys):
    assert main(["frobnicate"]) == 1


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    out = capsys.readouterr().out
    assert "check" in out and "simulate" in out and "report" in out


def test_simulate_trivial_and_summary(tmp_path, capsys):
    out_csv = str(tmp_path / "m.csv")
    code, out, _ = run_main(
        ["simulate", os.path.join(SCENARIOS, "trivial.json"),
         "--out", out_csv], capsys)
    assert code == 0
    assert "mean_success: 1" in out
    assert "acceptance min_mean_success: PASS" in out
    header = _read(out_csv).splitlines()[0]
    assert header.startswith("tick,t_ms,active_users")


def test_simulate_same_seed_identical_csv(tmp_path, capsys):
    a, b = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
    for out in (a, b):
        assert main(["simulate", os.path.join(SCENARIOS, "trivial.json"),
                     "--out", out]) == 0
    capsys.readouterr()
    assert _read(a) == _read(b)


def test_simulate_bad_scenario_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    code, _, err = run_main(["simulate", str(bad)], capsys)
    assert code == 1


def test_simulate_unmet_acceptance_exit_3(tmp_path, capsys):
    doc = _read(SCENARIOS, "trivial.json")
    doc = doc.replace('"min_mean_success": 0.999',
                      '"min_mean_success": 1.5')
    # rewrite relative paths against the new location
    doc = doc.replace("../fixtures", FIXTURES)
    p = tmp_path / "s.json"
    p.write_text(doc)
    code, out, _ = run_main(["simulate", str(p)], capsys)
    assert code == 3
    assert "FAIL" in out


def test_report_round_trip(tmp_path, capsys):
    out_csv = str(tmp_path / "m.csv")
    assert main(["simulate", os.path.join(SCENARIOS, "trivial.json"),
                 "--out", out_csv]) == 0
    capsys.readouterr()
    code, out, _ = run_main(
        ["report", out_csv, "--out-dir", str(tmp_path / "plots")], capsys)
    assert code == 0
    assert "mean_success" in out
    for name in ("latency", "staleness", "nodes", "cost"):
        assert (tmp_path / "plots" / ("%s.png" % name)).exists()


def test_report_empty_but_headered_csv(tmp_path, capsys):
    from scalestore.sim.harness import METRICS_COLUMNS
    p = tmp_path / "empty.csv"
    p.write_text(",".join(METRICS_COLUMNS) + "\n")
    code, out, _ = run_main(["report", str(p), "--out-dir",
                             str(tmp_path / "plots")], capsys)
    assert code == 0
    assert "empty metrics" in out


def test_report_corrupted_header_exit_1(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("tick,whatever\n1,2\n")
    code, _, err = run_main(["report", str(p)], capsys)
    assert code == 1


def test_report_is_pure_function_of_csv(tmp_path, capsys):
    out_csv = str(tmp_path / "m.csv")
    assert main(["simulate", os.path.join(SCENARIOS, "trivial.json"),
                 "--out", out_csv]) == 0
    before = _read(out_csv)
    capsys.readouterr()
    code1, out1, _ = run_main(["report", out_csv, "--out-dir",
                               str(tmp_path / "p1")], capsys)
    code2, out2, _ = run_main(["report", out_csv, "--out-dir",
                               str(tmp_path / "p2")], capsys)
    assert code1 == code2 == 0
    assert out1.replace("/p1", "").replace("/p2", "") \
        == out2.replace("/p1", "").replace("/p2", "")
    assert _read(out_csv) == before    # inputs never mutated


def test_console_script_entry_point():
    exe = shutil.which("scalestore")
    if exe is None:
        pytest.skip("console script not on PATH")
    proc = subprocess.run([exe, "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "simulate" in proc.stdout
