import csv
import json

import numpy as np
import pytest

from starcomp.baselines import SchemeId
from starcomp.cli import (
    RESULT_COLUMNS,
    ResultRow,
    SweepSpec,
    cli_base_config,
    emit_convergence,
    main,
    mean_mse,
    run_sweep,
    thread_count,
    write_rows,
)
from starcomp.scenario import ConfigError
from starcomp.model import load_state


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_single_cell_sweep():
    spec = SweepSpec("snr_db", (15.0,), 1, (SchemeId.AO_BPC,))
    rows = run_sweep(spec, seed=0)
    assert len(rows) == 1
    r = rows[0]
    assert r.scheme == "ao-bpc" and r.final_mse >= 0 and r.iterations <= spec.base.max_iters
    assert r.wall_ms is None


@pytest.mark.parametrize(
    "variable, values",
    [("K", (4, 6)), ("K_r", (0, 8)), ("M", (8, 12)), ("N", (8,)), ("snr_db", (0.0,))],
)
def test_sweep_variables(variable, values):
    rows = run_sweep(SweepSpec(variable, values, 1, (SchemeId.CRIS,)), seed=1)
    assert [r.sweep_value for r in rows] == [float(v) for v in values]


def test_spec_validation():
    with pytest.raises(ConfigError):
        SweepSpec("P", (1,), 1)
    with pytest.raises(ConfigError):
        SweepSpec("K_r", (9,), 1)
    with pytest.raises(ConfigError):
        SweepSpec("M", (10,), 1)
    with pytest.raises(ConfigError):
        SweepSpec("N", (), 1)


def test_bad_cell_is_skipped(caplog):
    # K = 0 fails config validation; the other value still runs
    rows = run_sweep(SweepSpec("K", (0, 4), 1, (SchemeId.CRIS,)), seed=0)
    assert [r.sweep_value for r in rows] == [4.0]
    assert "skipping" in caplog.text


def test_sweep_concurrency_does_not_change_rows():
    spec = SweepSpec("snr_db", (5.0, 25.0), 2, (SchemeId.AO_BPC, SchemeId.CRIS))
    a = run_sweep(spec, seed=3, threads=0)
    b = run_sweep(spec, seed=3, threads=3)
    assert a == b
    assert [(r.scheme, r.sweep_value, r.trial) for r in a] == sorted(
        ((r.scheme, r.sweep_value, r.trial) for r in a), key=lambda x: (x[0] != "ao-bpc", x[1], x[2])
    )


def test_thread_env(monkeypatch):
    monkeypatch.setenv("STARIS_THREADS", "2")
    assert thread_count() == 2
    monkeypatch.setenv("STARIS_THREADS", "x")
    with pytest.raises(ConfigError):
        thread_count()


def test_write_rows_header(tmp_path):
    import io

    buf = io.StringIO()
    write_rows([ResultRow("cris", 0, 1, "K", 8.0, 0.5, 3, True)], buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == ",".join(RESULT_COLUMNS)
    assert lines[0] == "scheme,trial,seed,sweep_variable,sweep_value,final_mse,iterations,converged,wall_ms"
    assert lines[1] == "cris,0,1,K,8,0.5,3,true,"


def test_mean_mse():
    rows = [ResultRow("cris", t, 0, "K", 8.0, float(t), 1, True) for t in range(3)]
    assert mean_mse(rows) == {("cris", 8.0): 1.0}


def test_emit_convergence_traces():
    rows, traces, _ = emit_convergence(cli_base_config(), seed=7)
    assert set(traces) == {5.0, 15.0, 25.0}
    for trace in traces.values():
        assert np.all(np.diff(trace.mse_per_iter) <= 1e-9)
        assert trace.iterations <= cli_base_config().max_iters
    assert traces[25.0].final_mse < traces[15.0].final_mse < traces[5.0].final_mse
    assert len(rows) == sum(len(t.mse_per_iter) for t in traces.values())


def test_converge_is_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["converge", "--seed", "7", "--out", str(a)]) == 0
    assert main(["converge", "--seed", "7", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().splitlines()[0] == "snr_db,iteration,mse"


def test_converge_dumps_state(tmp_path):
    dump = tmp_path / "state.csv"
    assert main(["converge", "--values", "15", "--out", str(tmp_path / "t.csv"), "--dump-state", str(dump)]) == 0
    s = load_state(tmp_path / "state_snr15.csv")
    s.check(cli_base_config().power)


def test_sweep_cli_row_count(tmp_path):
    out = tmp_path / "s.csv"
    code = main(["sweep", "--variable", "snr_db", "--values", "0,5,10,15,20,25", "--trials", "2", "--out", str(out)])
    assert code == 0
    rows = read_rows(out)
    assert len(rows) == 6 * 2 * len(SchemeId)
    assert all(r["wall_ms"] == "" for r in rows)


def test_sweep_timing_and_scheme(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["sweep", "--values", "15", "--trials", "1", "--scheme", "cris", "--timing", "--out", str(out)]) == 0
    (row,) = read_rows(out)
    assert row["scheme"] == "cris" and float(row["wall_ms"]) > 0


def test_config_file(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"K": 4, "K_r": 2, "K_t": 2}))
    out = tmp_path / "s.csv"
    assert main(["sweep", "--config", str(cfg), "--values", "15", "--trials", "1", "--scheme", "cris", "--out", str(out)]) == 0


def test_exit_codes(tmp_path, capsys):
    bad = tmp_path / "c.json"
    bad.write_text(json.dumps({"K": 5, "K_r": 1, "K_t": 1}))
    assert main(["sweep", "--config", str(bad)]) == 1
    assert main(["sweep", "--scheme", "nope", "--trials", "1"]) == 1
    with pytest.raises(SystemExit) as exc:
        main(["sweep", "--bogus"])
    assert exc.value.code == 1
    assert "usage" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 1


def test_analyze_exit_zero(tmp_path):
    out = tmp_path / "a.csv"
    assert main(["analyze", "--trials", "3", "--out", str(out)]) == 0
    assert out.read_text().startswith("check_name,instance_id,value_lhs,value_rhs,pass")


def test_analyze_reports_failure(monkeypatch, tmp_path):
    from starcomp import cli
    from starcomp.analysis import CheckRecord

    monkeypatch.setattr(cli, "run_checks", lambda *a: [CheckRecord("x", 0, 1.0, 0.0, False)])
    assert main(["analyze", "--out", str(tmp_path / "a.csv")]) == 2


def test_validate(tmp_path):
    out = tmp_path / "v.csv"
    assert main(["validate", "--trials", "1", "--samples", "400000", "--out", str(out)]) == 0
    (row,) = read_rows(out)
    assert float(row["rel_err"]) < 0.01
