"""Command surface: exit codes, CSV validity, flag handling."""
import csv
import json
from pathlib import Path

import pytest

from geostep.cli import main
from geostep.methods import REGISTRY_NAMES


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


# ---------------------------------------------------------------------------
# list / analyze


def test_list_prints_registry(capsys):
    code, out, _ = run(capsys, "list")
    assert code == 0
    assert out.splitlines() == list(REGISTRY_NAMES)


def test_analyze_leapfrog(capsys):
    code, out, _ = run(capsys, "analyze", "--method", "leapfrog")
    assert code == 0
    assert "order: 2" in out
    assert "symmetric: true" in out
    assert "lambda: 0 2; 2 0" in out


def test_analyze_inconsistent_method_exits_2(capsys):
    code, out, _ = run(capsys, "analyze", "--method", "m1-as-printed")
    assert code == 2
    assert "consistent: false" in out


def test_analyze_unknown_method_exits_1(capsys):
    code, _, err = run(capsys, "analyze", "--method", "nosuch")
    assert code == 1
    assert "nosuch" in err


def test_analyze_json(capsys):
    code, out, _ = run(capsys, "analyze", "--method", "ab4", "--json")
    assert code == 0
    doc = json.loads(out)
    assert doc["method"] == "ab4"
    assert doc["order"] == 4


def test_analyze_pair(capsys):
    code, out, _ = run(capsys, "analyze", "--method", "pc-m2")
    assert code == 0
    assert "pair: pc-m2" in out
    assert out.count("order: 4") == 2


def test_analyze_method_file(tmp_path, capsys):
    f = tmp_path / "m.txt"
    f.write_text("name: custom\nk: 1\nalpha: -1 1\nbeta: 1/2 1/2\n")
    code, out, _ = run(capsys, "analyze", "--method", str(f))
    assert code == 0
    assert "method: custom" in out and "order: 2" in out


def test_analyze_parse_failure_exits_1(tmp_path, capsys):
    f = tmp_path / "m.txt"
    f.write_text("name: broken\nk: 1\nalpha: -1\nbeta: 1 0\n")
    code, _, err = run(capsys, "analyze", "--method", str(f))
    assert code == 1
    assert "error" in err


def test_missing_required_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["analyze"])
    assert exc.value.code == 1


def test_unknown_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["list", "--frobnicate"])
    assert exc.value.code == 1


# ---------------------------------------------------------------------------
# integrate


def test_integrate_defaults_and_files(tmp_path, capsys):
    code, out, _ = run(
        capsys, "integrate", "--method", "leapfrog", "--steps", "20",
        "--out", str(tmp_path),
    )
    assert code == 0
    assert "H0=0.5" in out
    with open(tmp_path / "leapfrog-phase.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["step", "t", "q", "p"]
    assert len(rows) == 21
    assert float(rows[1][2]) == 1.0 and float(rows[1][3]) == 0.0
    assert float(rows[2][1]) == pytest.approx(0.1)


def test_integrate_zero_h_exits_1(capsys):
    code, _, err = run(capsys, "integrate", "--method", "ab4", "--h", "0")
    assert code == 1
    assert "positive" in err


def test_integrate_steps_below_window_exits_1(tmp_path, capsys):
    code, _, err = run(
        capsys, "integrate", "--method", "ab4", "--steps", "2",
        "--out", str(tmp_path),
    )
    assert code == 1
    assert "window" in err


def test_integrate_partitioned_pair(tmp_path, capsys):
    code, out, _ = run(
        capsys, "integrate", "--method", "m3-line1,m3b-corrected",
        "--steps", "100", "--out", str(tmp_path),
    )
    assert code == 0
    assert (tmp_path / "m3-line1+m3b-corrected-energy.csv").exists()


def test_swap_partition_requires_pair(capsys):
    code, _, err = run(
        capsys, "integrate", "--method", "ab4", "--swap-partition",
    )
    assert code == 1
    assert "partitioned" in err


def test_integrate_custom_system_file(tmp_path, capsys):
    f = tmp_path / "hessian.txt"
    f.write_text("4 0\n0 1\n")
    code, _, _ = run(
        capsys, "integrate", "--method", "midpoint", "--system", str(f),
        "--steps", "50", "--out", str(tmp_path),
    )
    assert code == 0
    assert (tmp_path / "midpoint-energy.csv").exists()


def test_omega_with_file_system_exits_1(tmp_path, capsys):
    f = tmp_path / "hessian.txt"
    f.write_text("4 0\n0 1\n")
    code, _, err = run(
        capsys, "integrate", "--method", "midpoint", "--system", str(f),
        "--omega", "2.0", "--out", str(tmp_path),
    )
    assert code == 1
    assert "omega" in err


# ---------------------------------------------------------------------------
# verify


def test_verify_single_check_passes(capsys):
    code, out, _ = run(
        capsys, "verify", "--check", "g-symplectic", "--method", "m3-line1",
    )
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "method,system,omega,h,check,value,threshold,pass"
    assert len(lines) == 2
    assert lines[1].endswith("true")


def test_verify_reversibility_ab4_fails(capsys):
    code, out, _ = run(
        capsys, "verify", "--check", "reversibility", "--method", "ab4",
    )
    assert code == 2
    assert out.strip().splitlines()[1].endswith("false")


def test_verify_area_midpoint_passes(capsys):
    code, out, _ = run(capsys, "verify", "--check", "area", "--method", "midpoint")
    assert code == 0


def test_verify_all_builtins_all_checks_is_valid_csv(capsys):
    code, out, _ = run(capsys, "verify")
    assert code == 2  # non-symmetric methods fail the symmetry check
    lines = out.strip().splitlines()
    assert len(lines) == 1 + 11 * 6
    arity = len(lines[0].split(","))
    assert all(len(l.split(",")) == arity for l in lines)
    methods = [l.split(",")[0] for l in lines[1:]]
    assert methods == sorted(methods)


def test_verify_order_check_flags_inconsistency(capsys):
    code, out, _ = run(
        capsys, "verify", "--check", "order", "--method", "m1-as-printed",
    )
    assert code == 2
    row = out.strip().splitlines()[1].split(",")
    assert row[5] == "0" and row[7] == "false"


def test_geostep_tol_env_sets_default(capsys, monkeypatch):
    monkeypatch.setenv("GEOSTEP_TOL", "1.0")
    code, _, _ = run(capsys, "verify", "--check", "reversibility", "--method", "ab4")
    assert code == 0  # residual ~3.5e-6 passes at tol 1


def test_tol_flag_beats_env(capsys, monkeypatch):
    monkeypatch.setenv("GEOSTEP_TOL", "1.0")
    code, _, _ = run(
        capsys, "verify", "--check", "reversibility", "--method", "ab4",
        "--tol", "1e-10",
    )
    assert code == 2


def test_bad_geostep_tol_exits_1(capsys, monkeypatch):
    monkeypatch.setenv("GEOSTEP_TOL", "loose")
    code, _, err = run(capsys, "verify", "--check", "area", "--method", "midpoint")
    assert code == 1
    assert "GEOSTEP_TOL" in err


def test_verify_unknown_method_exits_1(capsys):
    code, _, _ = run(capsys, "verify", "--method", "nosuch")
    assert code == 1


# ---------------------------------------------------------------------------
# experiment


def test_experiment_figure_1(tmp_path, capsys):
    code, out, _ = run(
        capsys, "experiment", "--figure", "1", "--outdir", str(tmp_path),
    )
    assert code == 0
    assert "fig1-explicit-euler: exploding" in out
    assert "fig1-implicit-euler: drifting" in out
    assert (tmp_path / "fig1-explicit-euler-energy.csv").exists()
    assert (tmp_path / "fig1-implicit-euler-summary.txt").exists()


def test_experiment_invalid_figure_exits_1(tmp_path, capsys):
    code, _, err = run(
        capsys, "experiment", "--figure", "9", "--outdir", str(tmp_path),
    )
    assert code == 1
    assert "figure" in err


def test_experiment_needs_exactly_one_source(tmp_path, capsys):
    code, _, _ = run(capsys, "experiment", "--outdir", str(tmp_path))
    assert code == 1
    code, _, _ = run(
        capsys, "experiment", "--figure", "1", "--scenario", "x",
        "--outdir", str(tmp_path),
    )
    assert code == 1


def test_experiment_scenario_file_with_steps_override(tmp_path, capsys):
    f = tmp_path / "s.txt"
    f.write_text("scenario: custom\nmethod: midpoint\nsteps: 500\n")
    code, out, _ = run(
        capsys, "experiment", "--scenario", str(f), "--steps", "12000",
        "--outdir", str(tmp_path),
    )
    assert code == 0
    assert "custom: bounded" in out
    with open(tmp_path / "custom-energy.csv") as fh:
        assert sum(1 for _ in fh) == 12001
