import json
import shutil
import subprocess
import sys

import pytest

from mvfield.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, out


def report(capsys, *argv):
    code, out = run_cli(capsys, *argv)
    return code, json.loads(out)


def test_check_integrability_example(capsys, problems_dir):
    code, rep = report(capsys, "check-integrability", str(problems_dir / "example_2_3.prob"))
    assert code == 1
    assert rep["schema_version"] == 1
    assert rep["result"]["verdict"] == "IntegrableOnSubmanifold"
    branches = {b["verdict"]: b for b in rep["result"]["branches"]}
    assert branches["NoSolution"]["exit_code"] == 1
    assert branches["IntegrableOnSubmanifold"]["exit_code"] == 0


def test_euler_lagrange_free_count(capsys, problems_dir):
    code, rep = report(capsys, "euler-lagrange", str(problems_dir / "quadratic.prob"), "--pivot", "diag")
    assert code == 0
    assert rep["result"]["family"]["free_count"] == 3


def test_euler_lagrange_with_assignment(capsys, problems_dir):
    code, rep = report(capsys, "euler-lagrange", str(problems_dir / "wave_integrable.prob"))
    assert code == 0
    assert rep["result"]["integrability"]["integrable"] is True


def test_empty_multivector_is_input_error(capsys, problems_dir):
    code, rep = report(capsys, "check-integrability", str(problems_dir / "empty_multivector.prob"))
    assert code == 64
    assert "empty" in rep["result"]["error"]


def test_missing_block_named(capsys, problems_dir):
    code, rep = report(capsys, "noether", str(problems_dir / "example_2_3.prob"))
    assert code == 64
    assert "lagrangian" in rep["result"]["error"]


@pytest.mark.parametrize("command, name, expected", [
    ("curvature", "connection_flat.prob", 0),
    ("curvature", "connection_curved.prob", 1),
    ("sopde-check", "sopde.prob", 0),
    ("singular", "singular_linear.prob", 1),
    ("singular", "singular_tangency.prob", 0),
    ("noether", "noether_free.prob", 0),
    ("residual", "sopde.prob", 0),
    ("integrate", "example_2_3.prob", 2),
])
def test_exit_codes(capsys, problems_dir, command, name, expected):
    code, rep = report(capsys, command, str(problems_dir / name))
    assert code == expected, rep


def test_integrate_writes_csv(capsys, problems_dir, tmp_path):
    target = tmp_path / "grid.csv"
    code, rep = report(capsys, "integrate", str(problems_dir / "example_2_3.prob"), "--csv", str(target))
    assert code == 2
    assert rep["confidence"] == "numeric"
    assert rep["result"]["max_error"] < 1e-6
    assert target.read_text().splitlines()[0] == "x1,x2,y1,y2"


def test_bad_flag_exits_64(capsys):
    with pytest.raises(SystemExit) as info:
        main(["curvature"])
    assert info.value.code == 64


def test_bad_pivot_exits_64(capsys, problems_dir):
    with pytest.raises(SystemExit) as info:
        main(["euler-lagrange", str(problems_dir / "quadratic.prob"), "--pivot", "nope"])
    assert info.value.code == 64


def test_text_output(capsys, problems_dir):
    code, out = run_cli(capsys, "curvature", str(problems_dir / "connection_curved.prob"), "--output", "text")
    assert code == 1
    assert "curvature" in out and not out.lstrip().startswith("{")


def test_reports_are_deterministic(capsys, problems_dir):
    args = ["check-integrability", str(problems_dir / "example_2_3.prob"), "--seed", "7"]
    _, first = run_cli(capsys, *args)
    _, second = run_cli(capsys, *args)
    assert first == second


def test_jobs_match_serial_output(capsys, problems_dir):
    files = [str(problems_dir / n) for n in ("connection_flat.prob", "connection_curved.prob")]
    serial = run_cli(capsys, "curvature", *files)
    parallel = run_cli(capsys, "curvature", *files, "--jobs", "2")
    assert serial == parallel
    assert serial[0] == 1


@pytest.mark.skipif(shutil.which("mvfield") is None, reason="console script not installed")
def test_console_script(problems_dir):
    proc = subprocess.run(["mvfield", "sopde-check", str(problems_dir / "sopde.prob")],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["command"] == "sopde-check"


def test_module_entry_point(problems_dir):
    proc = subprocess.run([sys.executable, "-m", "mvfield.cli", "curvature", str(problems_dir / "connection_flat.prob")],
                          capture_output=True, text=True)
    assert proc.returncode == 0
