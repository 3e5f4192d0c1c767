import csv
import json
import math

import numpy as np
import pytest

from detwalk import cli
from detwalk.pipeline import TriangleInstance, generate_instance, save_instance


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip() else None)


# ------------------------------------------------------------------ formatting


def test_dumps_sorted_and_17_digits():
    text = cli.dumps({"b": 0.1, "a": [1, True, None, float("nan")], "c": {"z": 1, "y": "s"}})
    assert text == '{"a": [1, true, null, null], "b": 0.10000000000000001, "c": {"y": "s", "z": 1}}'
    assert json.loads(text)["b"] == 0.1


def test_parse_range():
    assert cli.parse_range("2..5") == [2, 3, 4, 5]
    assert cli.parse_range("2,4..5") == [2, 4, 5]
    assert cli.parse_range("") == []


# ------------------------------------------------------------------ verify-subspace


def test_verify_vertex5(capsys):
    code, rep = run(capsys, "verify-subspace", "--layer", "vertex5", "--N", "6", "--r", "2",
                    "--theta1", "1.1", "--theta2", "0.7")
    assert code == 0 and rep["pass"]
    assert rep["metrics"]["maxdev"] <= 1e-10


def test_verify_layer1(capsys):
    code, rep = run(capsys, "verify-subspace", "--layer", "layer1", "--n", "9", "--r1", "4")
    assert code == 0 and rep["metrics"]["reduced_dim"] == 10


def test_verify_layer1_degenerate(capsys):
    code, _ = run(capsys, "verify-subspace", "--layer", "layer1", "--n", "7", "--r1", "2")
    assert code == 2


def test_verify_layer4(capsys):
    code, rep = run(capsys, "verify-subspace", "--layer", "layer4", "--r1", "5", "--r2", "5", "--m", "2")
    assert code == 0 and rep["metrics"]["full_dim"] == 900


def test_verify_missing_params(capsys):
    code, _ = run(capsys, "verify-subspace", "--layer", "vertex5", "--N", "6")
    assert code == 2


def test_verify_cap(capsys):
    code, _ = run(capsys, "verify-subspace", "--layer", "vertex5", "--N", "30", "--r", "10")
    assert code == 2


def test_verify_failing_tolerance_exit_1(capsys):
    code, rep = run(capsys, "verify-subspace", "--layer", "vertex5", "--N", "6", "--r", "2", "--tol", "1e-30")
    assert code == 1 and rep["pass"] is False


# ------------------------------------------------------------------ solve


def test_solve_long_quarter(capsys):
    code, rep = run(capsys, "solve", "--scheme", "long", "--lambda", "0.25", "--k", "1")
    assert code == 0
    assert rep["metrics"]["plan"]["alpha"] == math.pi
    assert rep["metrics"]["fidelity"] == pytest.approx(1, abs=1e-12)


def test_solve_long_infeasible_k(capsys):
    code, _ = run(capsys, "solve", "--scheme", "long", "--lambda", "0.01", "--k", "2")
    assert code == 2


def test_solve_fixed_beta_lambda_one(capsys):
    code, rep = run(capsys, "solve", "--scheme", "fixed-beta", "--lambda", "1.0", "--beta-pi", "1.29")
    assert code == 0 and rep["metrics"]["plan"]["k"] == 0


def test_solve_fixed_beta_layer2_point(capsys):
    code, rep = run(capsys, "solve", "--scheme", "fixed-beta", "--lambda", "0.44210526315789478",
                    "--beta-pi", "1.29")
    assert code == 0 and rep["metrics"]["fidelity"] >= 1 - 1e-10


def test_solve_fixed_beta_needs_beta(capsys):
    code, _ = run(capsys, "solve", "--scheme", "fixed-beta", "--lambda", "0.3")
    assert code == 2


def test_solve_eedp_100_10(capsys):
    code, rep = run(capsys, "solve", "--scheme", "eedp", "--N", "100", "--r", "10")
    assert code == 0
    m = rep["metrics"]
    assert m["solution"]["t"] == 30
    assert m["solution"]["beta_over_pi"] == pytest.approx(1.4464270636558023, abs=1e-9)
    assert m["beta_relation_error"] <= 1e-8
    assert m["beta_limit_over_pi"] == pytest.approx(1.2915026221291814, abs=1e-15)


def test_solve_eedp_solver_failure_exit_1(capsys):
    code, rep = run(capsys, "solve", "--scheme", "eedp", "--N", "100", "--r", "10", "--t-factor", "1")
    assert code == 1 and "residual" in rep["metrics"]


def test_solve_bad_windings(capsys):
    code, _ = run(capsys, "solve", "--scheme", "eedp", "--N", "100", "--r", "10", "--windings", "x")
    assert code == 2


# ------------------------------------------------------------------ plan / ledger


def test_plan_layer1(capsys):
    code, rep = run(capsys, "plan", "--layer", "1", "--n", "2187")
    assert code == 0
    assert (rep["metrics"]["t1"], rep["metrics"]["t2"]) == (20, 2)


def test_plan_layer2_long_rejected(capsys):
    code, _ = run(capsys, "plan", "--layer", "2", "--n", "128", "--scheme", "long")
    assert code == 2


def test_plan_layer3(capsys):
    code, rep = run(capsys, "plan", "--layer", "3", "--n", "128")
    assert code == 0 and rep["metrics"]["size"] == 79


def test_ledger_unit(capsys):
    code, rep = run(capsys, "ledger", "--n", "128", "--mode", "formula", "--unit")
    assert code == 0
    assert rep["metrics"]["c3"] == pytest.approx(16.0, rel=1e-12)
    assert rep["metrics"]["s"]["s2"] == 0


def test_nonpositive_tol(capsys):
    code, _ = run(capsys, "plan", "--layer", "3", "--n", "128", "--tol", "0")
    assert code == 2


def test_unknown_option(capsys):
    code, _ = run(capsys, "ledger", "--n", "128", "--bogus", "1")
    assert code == 2


# ------------------------------------------------------------------ simulate


def test_simulate_planted(capsys):
    code, rep = run(capsys, "simulate", "--n", "128", "--instance-seed", "2")
    assert code == 0
    assert rep["metrics"]["matches_oracle"] and rep["metrics"]["verdict"] != "no_triangle"


def test_simulate_unplanted(capsys):
    code, rep = run(capsys, "simulate", "--n", "128", "--no-plant", "--instance-seed", "3")
    assert code == 0 and rep["metrics"]["verdict"] == "no_triangle"


def test_simulate_promise_violation(tmp_path, capsys):
    w = np.zeros((8, 8), dtype=np.int64)
    for a, b in ((0, 1), (1, 2), (0, 2), (4, 5), (5, 6), (4, 6)):
        w[a, b] = w[b, a] = 1
    path = tmp_path / "two.json"
    save_instance(TriangleInstance(8, 4, 3, w), path)
    code, _ = run(capsys, "simulate", "--instance", str(path))
    assert code == 2


def test_simulate_malformed_file(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"n": 8, "M": 4, "d": 0, "weights": [1, 2]}')
    assert run(capsys, "simulate", "--instance", str(path))[0] == 2
    assert run(capsys, "simulate", "--instance", str(tmp_path / "missing.json"))[0] == 2


def test_simulate_roundtrip_file(tmp_path, capsys):
    path = tmp_path / "inst.json"
    code, rep = run(capsys, "simulate", "--n", "128", "--instance-seed", "5", "--save-instance", str(path))
    code2, rep2 = run(capsys, "simulate", "--instance", str(path))
    assert code == code2 == 0
    assert rep["metrics"] == rep2["metrics"]


# ------------------------------------------------------------------ determinism


def test_byte_identical_reports(capsys):
    argv = ["simulate", "--n", "128", "--instance-seed", "4", "--seed", "7"]
    cli.main(argv)
    first = capsys.readouterr().out
    cli.main(argv)
    assert capsys.readouterr().out == first


# ------------------------------------------------------------------ sweep


def _read_csv(path):
    lines = path.read_text().split("\n")
    assert lines[0].startswith("# sweep")
    assert "\r" not in path.read_text()
    return list(csv.DictReader(lines[1:]))


def test_sweep_ledger(tmp_path, capsys):
    out = tmp_path / "ledger.csv"
    code, rep = run(capsys, "sweep", "--what", "ledger", "--n-pows", "2..10", "--out", str(out))
    rows = _read_csv(out)
    assert [int(r["j"]) for r in rows] == list(range(2, 11))
    ratios = [float(r["ratio_plan"]) for r in rows]
    assert max(ratios) / min(ratios) <= 4
    assert code == 0 and rep["metrics"]["composition_exact"]


def test_sweep_layer1_amplitude_column(tmp_path, capsys):
    out = tmp_path / "l6.csv"
    code, rep = run(capsys, "sweep", "--what", "lemma6", "--n-pows", "2..10", "--out", str(out))
    rows = _read_csv(out)
    ratios = [float(r["ratio"]) for r in rows]
    assert len(ratios) == 9 and all(math.isfinite(x) and x > 0 for x in ratios)
    # the exit status mirrors the summary flag
    assert code == (0 if rep["metrics"]["band"]["pass"] else 1)


def test_sweep_empty_grid(capsys):
    assert run(capsys, "sweep", "--what", "ledger", "--n-pows", "")[0] == 2


def test_sweep_threads_env_invalid(monkeypatch, capsys):
    monkeypatch.setenv("DETWALK_THREADS", "many")
    assert run(capsys, "sweep", "--what", "lemma4", "--n-pows", "2..3")[0] == 2


def test_sweep_threads_same_output(monkeypatch, capsys):
    monkeypatch.setenv("DETWALK_THREADS", "1")
    _, a = run(capsys, "sweep", "--what", "ledger", "--n-pows", "2..4")
    monkeypatch.setenv("DETWALK_THREADS", "3")
    _, b = run(capsys, "sweep", "--what", "ledger", "--n-pows", "2..4")
    assert a["metrics"] == b["metrics"] and a["artifacts"] == b["artifacts"]
