import json

import pytest
from hypothesis import given, strategies as st

from kzpp.metering import (ConvergenceTrace, FlopCounter, TraceRecord, export_trace, load_trace,
                           model_cg_iteration, model_cholesky, model_gmres_total, replay,
                           true_residual_cost)


def test_model_values_by_direct_evaluation():
    assert model_cg_iteration(1000) == 2 * 1000**2 + 11 * 1000 == 2_011_000
    # 2 n^2 T + 4 n T (T + 1) at n = 100, T = 10
    assert model_gmres_total(100, 10) == 200_000 + 44_000
    assert model_cholesky(200) == 2_666_667
    assert model_cholesky(3) == 9
    assert true_residual_cost(4, 3) == 36


@given(n=st.integers(1, 500), T=st.integers(1, 50))
def test_gmres_model_is_superadditive_in_restarts(n, T):
    assert model_gmres_total(n, 2 * T) >= 2 * model_gmres_total(n, T)


def test_models_reject_nonpositive():
    for fn, args in ((model_cg_iteration, (0,)), (model_gmres_total, (5, 0)), (model_cholesky, (0,))):
        with pytest.raises(ValueError):
            fn(*args)


def test_counter_excludes_instrumentation_and_replays():
    c = FlopCounter().record_calls()
    c.charge("projection", 10)
    c.charge("instrumentation", 1000)
    c.charge("transform", 2.2)
    assert c.total == 13
    assert c.subtotals["instrumentation"] == 1000
    assert replay(c.log) == c.total
    with pytest.raises(KeyError):
        c.charge("misc", 1)
    with pytest.raises(ValueError):
        c.charge("projection", -1)


def _trace():
    t = ConvergenceTrace("kzpp", {"s": 4})
    t.append(TraceRecord(1, 100, 0.5, None, 0.0))
    t.append(TraceRecord(2, 200, 1e-3, 2e-3, 0.1))
    t.append(TraceRecord(3, 300, 1e-5, 1e-5, 0.2))
    t.status = "converged"
    return t


def test_trace_queries_and_monotonicity():
    t = _trace()
    assert t.flops_to(1e-2) == 200
    assert t.flops_to(1e-2, use_true=False) == 200
    assert t.flops_to(0.6, use_true=False) == 100
    assert t.iters_to(1e-5) == 3
    assert t.flops_to(1e-9) is None
    with pytest.raises(ValueError, match="increase"):
        t.append(TraceRecord(3, 400, 0.0))


def test_trace_export_roundtrip(tmp_path):
    t = _trace()
    export_trace(t, "json", tmp_path / "t.json")
    back = load_trace(tmp_path / "t.json")
    assert back.to_dict() == json.loads(json.dumps(t.to_dict()))
    export_trace(t, "csv", tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "iter,flops,res_est,res_true,rho"
    assert lines[1] == "1,100,0.5,,0.0"
    with pytest.raises(ValueError):
        export_trace(ConvergenceTrace("x"), "csv", tmp_path / "e.csv")
    with pytest.raises(ValueError):
        export_trace(t, "xml", tmp_path / "t.xml")
