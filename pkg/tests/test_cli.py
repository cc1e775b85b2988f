import json
import subprocess
import sys

import numpy as np
import pytest

from multisym.cli import main
from multisym.problem import ManifoldProblem, Problem, ProblemError, builtin_problems, load_problem, parse_box


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def strip_timestamps(obj):
    if isinstance(obj, dict):
        return {k: strip_timestamps(v) for k, v in obj.items() if k != "timestamp"}
    if isinstance(obj, list):
        return [strip_timestamps(v) for v in obj]
    return obj


def test_builtin_problem_files_load():
    names = builtin_problems()
    assert {"laplace", "oscillator", "perturbed", "symplectic2d", "degenerate4"} <= set(names)
    assert isinstance(load_problem("laplace"), Problem)
    assert isinstance(load_problem("symplectic2d"), ManifoldProblem)


def test_parse_box():
    box = parse_box("0,1;2,3.5")
    assert box.bounds == ((0.0, 1.0), (2.0, 3.5))
    with pytest.raises(ProblemError):
        parse_box("0,1", 2)
    with pytest.raises(ProblemError):
        parse_box("a,b")


@pytest.mark.parametrize("body,fragment", [
    ("[problem]\nkind = section\nn = 1\nN = 1\n[hamiltonian]\nH = p1_1 +\n", "hamiltonian"),
    ("[problem]\nkind = section\nn = 1\nN = 1\n[hamiltonian]\nH = y\n[section]\nq1 = x1\np1_1 = 0\n"
     "[domain]\nx1 = 0, 1\n", "y"),
    ("[problem]\nkind = warp\n", "kind"),
    ("not an ini file", ""),
    ("[problem]\nkind = section\nn = one\n", "n"),
])
def test_malformed_problem_files(tmp_path, capsys, body, fragment):
    path = tmp_path / "bad.ini"
    path.write_text(body, encoding="utf-8")
    with pytest.raises(ProblemError):
        load_problem(str(path))
    code, _, err = run(capsys, "verify", "--file", str(path))
    assert code == 2
    msg = json.loads(err)
    assert msg["error"] == "input" and fragment in msg["message"]


def test_verify_exit_codes(capsys):
    assert run(capsys, "verify", "--file", "laplace")[0] == 0
    code, out, _ = run(capsys, "verify", "--file", "perturbed")
    assert code == 1
    payload = json.loads(out)
    assert not payload["passed"] and payload["problems"][0]["failing"]
    assert run(capsys, "verify", "--file", "no-such-problem")[0] == 2
    assert run(capsys, "verify", "--example", "no-such-example")[0] == 2
    assert run(capsys, "verify", "--bogus")[0] == 2
    assert run(capsys, "residuals", "--file", "perturbed")[0] == 0


def test_verify_laplace_reports_all_suites_below_1e_8(capsys):
    code, out, _ = run(capsys, "verify", "--file", "laplace")
    report = json.loads(out)["problems"][0]
    assert code == 0
    for name in ("hv", "pullback_vertical", "pullback_full", "vortex", "dhdw"):
        assert report["equations"][name]["L_inf"] < 1e-8


def test_verify_writes_reports(tmp_path, capsys):
    code, _, _ = run(capsys, "verify", "--file", "oscillator", "--out-dir", str(tmp_path))
    assert code == 0
    data = json.loads((tmp_path / "oscillator.json").read_text())
    assert data["passed"] and "timestamp" in data
    header = (tmp_path / "oscillator.csv").read_text().splitlines()[0]
    assert header == "x1,equation,value"
    code, out, _ = run(capsys, "verify", "--file", "oscillator", "--format", "csv")
    assert out.splitlines()[0] == "x1,equation,value"


def test_verify_json_is_deterministic(capsys):
    outs = []
    for _ in range(2):
        code, out, _ = run(capsys, "verify", "--file", "perturbed", "--seed", "11")
        outs.append(json.dumps(strip_timestamps(json.loads(out)), sort_keys=True))
    assert outs[0] == outs[1]


def test_catalog_and_full_verify(capsys):
    code, out, _ = run(capsys, "catalog")
    assert code == 0 and len(json.loads(out)) >= 4
    code, out, _ = run(capsys, "verify")
    assert code == 0 and json.loads(out)["passed"]


def test_solve_command(tmp_path, capsys):
    code, out, err = run(capsys, "solve", "--example", "laplace", "--grid", "33", "--out-dir", str(tmp_path))
    assert code == 0
    sol = json.loads(out)["solutions"][0]
    assert sol["grid"] == [33, 33] and sol["hv"]["L_inf"] < sol["hv_tol"]
    lines = (tmp_path / "laplace-example-solution.csv").read_text().splitlines()
    assert lines[0] == "x1,x2,q1,p1_1,p1_2" and len(lines) == 1 + 33 * 33
    code, out, _ = run(capsys, "solve", "--example", "laplace", "--grid", "17", "--format", "csv")
    assert code == 0 and out.splitlines()[0] == "x1,x2,q1,p1_1,p1_2"
    assert run(capsys, "solve", "--file", "laplace")[0] == 2
    assert run(capsys, "solve", "--example", "oscillator", "--step", "0.01")[0] == 0
    assert run(capsys, "verify", "--file", "laplace-solve", "--grid", "33")[0] == 0


def test_action_command(capsys):
    code, out, _ = run(capsys, "action", "--example", "oscillator", "--V", "0,6.2831853")
    assert code == 0 and abs(json.loads(out)["action"]) < 1e-6
    code, out, _ = run(capsys, "action", "--example", "laplace", "--section", "x1*x2", "--V", "0,1;0,1")
    assert code == 0 and json.loads(out)["action"] == pytest.approx(1 / 3, abs=5 / 512 ** 2)
    code, out, _ = run(capsys, "action", "--example", "oscillator", "--variations", "3", "--seed", "2")
    payload = json.loads(out)
    assert code == 0 and payload["passed"] and len(payload["variations"]) == 3
    assert run(capsys, "action", "--example", "laplace", "--section", "nope")[0] == 2
    assert run(capsys, "action", "--example", "oscillator", "--V=-5,1")[0] == 2


def test_action_is_deterministic_under_seed(capsys):
    outs = [strip_timestamps(json.loads(run(capsys, "action", "--example", "oscillator",
                                            "--variations", "2", "--seed", "5")[1])) for _ in range(2)]
    assert outs[0] == outs[1]


def test_nplectic_command(capsys):
    code, out, _ = run(capsys, "nplectic", "check", "--file", "symplectic2d")
    payload = json.loads(out)
    assert code == 0 and payload["min_rank"] == 2 and payload["closed"]
    X = np.array(payload["hamiltonian_vector_field"]["X"])
    q, p = payload["hamiltonian_vector_field"]["at"]
    assert np.allclose(X, [p, -q], atol=1e-10)
    code, out, _ = run(capsys, "nplectic", "check", "--file", "degenerate4")
    assert code == 1 and json.loads(out)["min_rank"] == 3
    assert run(capsys, "nplectic", "check", "--file", "volume3")[0] == 0
    assert run(capsys, "nplectic", "check", "--file", "laplace")[0] == 2
    assert run(capsys, "nplectic", "check")[0] == 2


def test_manifold_file_with_hamiltonian_form(tmp_path, capsys):
    path = tmp_path / "m.ini"
    path.write_text("[problem]\nkind = manifold\n[manifold]\ndim = 3\nn = 2\n[omega]\n1,2,3 = 1\n"
                    "[hamiltonian]\ndegree = 1\n1 = z2\n[samples]\ncount = 4\nbounds = -1, 1\n")
    code, out, _ = run(capsys, "nplectic", "check", "--file", str(path))
    payload = json.loads(out)
    assert code == 0 and payload["degeneracy"]["k"] == 1 and payload["degeneracy"]["kernel_dim"] == 0


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "multisym.cli", "catalog"], capture_output=True, text=True)
    assert proc.returncode == 0 and "laplace-example" in proc.stdout
