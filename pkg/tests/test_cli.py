import json

import numpy as np
import pytest

from kzpp.cli import main
from kzpp.problems import LinearProblem, consistent_problem, load_problem, save_problem


def test_generate_lowrank(tmp_path, capsys):
    out = tmp_path / "lr.bin"
    assert main(["generate", "--kind", "lowrank", "--m", "128", "--n", "32", "--effective-rank", "4",
                 "--out", str(out)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert (summary["m"], summary["n"]) == (128, 32)
    assert set(summary["kappa_bar"]) == {"8", "16"}
    assert load_problem(out).kind == "general"


def test_generate_kernel_from_csv(tmp_path, capsys):
    data = np.random.default_rng(0).standard_normal((20, 3))
    np.savetxt(tmp_path / "d.csv", data, delimiter=",", header="a,b,c", comments="")
    out = tmp_path / "k.bin"
    assert main(["generate", "--kind", "kernel", "--csv", str(tmp_path / "d.csv"), "--gamma", "0.1",
                 "--phi", "0.001", "--out", str(out)]) == 0
    p = load_problem(out)
    assert p.kind == "psd" and p.A.shape == (20, 20)
    np.testing.assert_array_equal(p.A, p.A.T)


def test_generate_usage_errors(tmp_path, capsys):
    assert main(["generate", "--kind", "lowrank", "--m", "8", "--n", "4", "--effective-rank", "2"]) == 2
    assert main(["generate", "--kind", "lowrank", "--m", "8", "--n", "4", "--effective-rank", "2",
                 "--gamma", "0.1", "--out", str(tmp_path / "x.bin")]) == 2
    assert "kernel flags" in capsys.readouterr().err


def test_solve_identity_and_trace(tmp_path, capsys):
    path = tmp_path / "id.bin"
    save_problem(path, consistent_problem(np.eye(16), seed=0))
    assert main(["solve", "--problem", str(path), "--solver", "kzpp", "--block-size", "16", "--no-accel",
                 "--eps", "1e-8", "--trace", str(tmp_path / "t.csv")]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["status"] == "converged" and summary["iterations"] <= 2
    assert (tmp_path / "t.csv").read_text().startswith("iter,flops,res_est,res_true,rho")


def test_solve_kind_mismatch_and_budget(tmp_path, capsys):
    path = tmp_path / "g.bin"
    save_problem(path, consistent_problem(np.random.default_rng(0).standard_normal((32, 8)), seed=0))
    assert main(["solve", "--problem", str(path), "--solver", "cdpp"]) == 2
    assert main(["solve", "--problem", str(path), "--solver", "kzpp", "--block-size", "4",
                 "--max-iters", "2"]) == 1
    assert main(["solve", "--problem", str(tmp_path / "missing.bin"), "--solver", "kzpp"]) == 2


def test_solve_baselines(tmp_path, capsys):
    X = np.random.default_rng(1).standard_normal((20, 20))
    path = tmp_path / "p.bin"
    save_problem(path, LinearProblem("psd", X @ X.T + 20 * np.eye(20), np.ones(20), phi=20.0))
    for solver in ("cg", "gmres", "cdpp"):
        assert main(["solve", "--problem", str(path), "--solver", solver, "--block-size", "4",
                     "--eps", "1e-6", "--seed", "0"]) == 0


def _manifest(tmp_path, thresholds=(1e-4,), max_iters=None):
    solvers = [{"solver": "cdpp", "block_size": 16}, {"solver": "gmres"}]
    if max_iters:
        solvers[0]["max_iters"] = max_iters
    m = {"problems": [{"name": "toy", "kind": "kernel", "points": 64, "dim": 3, "gamma": 0.1, "phi": 1e-2}],
         "solvers": solvers, "seeds": [0, 1], "thresholds": list(thresholds), "out": str(tmp_path / "o")}
    path = tmp_path / "m.json"
    path.write_text(json.dumps(m))
    return path


def test_bench_table_deterministic(tmp_path, capsys):
    path = _manifest(tmp_path)
    assert main(["bench", "--manifest", str(path)]) == 0
    first = (tmp_path / "o" / "bench.csv").read_bytes()
    lines = first.decode().strip().splitlines()
    assert lines[0] == "dataset,kernel,width,solver,threshold,flops,converged_seeds,note"
    assert len(lines) == 3
    assert main(["bench", "--manifest", str(path)]) == 0
    assert (tmp_path / "o" / "bench.csv").read_bytes() == first


def test_bench_sentinel_for_unconverged(tmp_path, capsys):
    path = _manifest(tmp_path, max_iters=3)
    assert main(["bench", "--manifest", str(path)]) == 0
    rows = (tmp_path / "o" / "bench.csv").read_text().splitlines()
    cd = [r for r in rows if ",cdpp," in r][0]
    assert "∞" in cd and "budget" in cd


def test_bench_manifest_validation(tmp_path, capsys):
    path = _manifest(tmp_path, thresholds=(1e-8, 1e-4))
    assert main(["bench", "--manifest", str(path)]) == 2


@pytest.mark.parametrize("suite", ["transforms", "dpp", "reduction"])
def test_verify_suites(suite, tmp_path, capsys):
    assert main(["verify", "--suite", suite, "--report", str(tmp_path / "r.json")]) == 0
    report = json.loads((tmp_path / "r.json").read_text())
    assert report and all(r["passed"] for r in report)


def test_verify_all_and_unknown(capsys):
    assert main(["verify", "--suite", "all"]) == 0
    assert main(["verify", "--suite", "nope"]) == 2
