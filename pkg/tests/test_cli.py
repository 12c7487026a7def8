import json
import math

import numpy as np
import pytest

from lmrate import SolveStatus
from lmrate.channel import DiscreteProblem
from lmrate.cli import _EXIT_BY_STATUS, main, parse_angle

LN2 = math.log(2.0)


def _run_json(capsys, argv):
    rc = main(argv)
    out = capsys.readouterr().out
    return rc, json.loads(out)


def _read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# config: ")
    echo = json.loads(lines[0][len("# config: "):])
    header = lines[1].split(",")
    rows = [line.split(",") for line in lines[2:]]
    return echo, header, rows


# ---------------------------------------------------------------------------
# angle parsing
# ---------------------------------------------------------------------------


def test_parse_angle_forms():
    assert parse_angle("0.25") == 0.25
    assert parse_angle("pi") == math.pi
    assert parse_angle("pi/18") == math.pi / 18.0
    assert parse_angle("2*pi/9") == 2.0 * math.pi / 9.0
    assert parse_angle("2pi") == 2.0 * math.pi
    assert parse_angle("-pi/4") == -math.pi / 4.0
    assert parse_angle(" PI / 6 ".replace(" ", "")) == math.pi / 6.0
    with pytest.raises(ValueError):
        parse_angle("two pi")
    with pytest.raises(ValueError):
        parse_angle("pi/")


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------


def test_solve_json_schema(capsys):
    rc, doc = _run_json(capsys, ["solve"])
    assert rc == 0
    expected = {"modulation", "eta", "theta", "snr_db", "n", "iterations",
                "lm_rate_bits", "lambda", "final_residuals", "status",
                "runtime_ms", "config"}
    assert set(doc) == expected
    assert doc["status"] == "converged"
    assert doc["modulation"] == "qpsk"
    assert doc["n"] == 100
    assert doc["lm_rate_bits"] > 0.0
    assert doc["lambda"] > 0.0
    res = doc["final_residuals"]
    assert max(res["r_phi"], res["r_psi"], res["r_lambda"]) <= 1e-10
    assert doc["config"]["theta"] == pytest.approx(math.pi / 18.0)
    assert "out" not in doc["config"]


def test_solve_bits_nats_switch(capsys):
    rc, bits_doc = _run_json(capsys, ["solve", "--grid", "6"])
    assert rc == 0
    rc, nats_doc = _run_json(capsys, ["solve", "--grid", "6", "--nats"])
    assert rc == 0
    assert "lm_rate_nats" in nats_doc and "lm_rate_bits" not in nats_doc
    assert bits_doc["lm_rate_bits"] == pytest.approx(
        nats_doc["lm_rate_nats"] / LN2, rel=1e-12)


def test_solve_deterministic_modulo_runtime(tmp_path):
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    assert main(["solve", "--grid", "8", "--out", str(a)]) == 0
    assert main(["solve", "--grid", "8", "--out", str(b)]) == 0
    da = json.loads(a.read_text())
    db = json.loads(b.read_text())
    da.pop("runtime_ms")
    db.pop("runtime_ms")
    assert da == db


def test_solve_with_gmi_baseline(capsys):
    rc, doc = _run_json(capsys, ["solve", "--grid", "8", "--with-gmi"])
    assert rc == 0
    assert doc["gmi_bits"] <= doc["lm_rate_bits"] + 1e-8


def test_solve_budget_exhausted_exit(capsys):
    rc, doc = _run_json(capsys, ["solve", "--max-iters", "1"])
    assert rc == 2
    assert doc["status"] == "max_iters"
    assert doc["iterations"] == 1


def test_solve_threshold_override_deactivates_constraint(capsys):
    rc, doc = _run_json(capsys, ["solve", "--grid", "6", "--threshold", "500",
                                 "--nats"])
    assert rc == 0
    assert doc["lambda"] == 0.0
    assert abs(doc["lm_rate_nats"]) <= 1e-9


def test_solve_explicit_strategy_and_stepsize(capsys):
    rc, doc = _run_json(capsys, ["solve", "--grid", "8",
                                 "--lambda-strategy", "project", "--tau", "1.0"])
    assert rc == 0
    rc2, doc2 = _run_json(capsys, ["solve", "--grid", "8",
                                   "--lambda-strategy", "root"])
    assert rc2 == 0
    assert doc["lm_rate_bits"] == pytest.approx(doc2["lm_rate_bits"], abs=1e-8)


def test_exit_code_table_is_total():
    assert _EXIT_BY_STATUS[SolveStatus.CONVERGED] == 0
    assert _EXIT_BY_STATUS[SolveStatus.MAX_ITERS] == 2
    assert _EXIT_BY_STATUS[SolveStatus.NUMERICAL_FAILURE] == 3
    assert set(_EXIT_BY_STATUS) == set(SolveStatus)


# ---------------------------------------------------------------------------
# configuration handling
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("argv,needle", [
    (["solve", "--eta", "0"], "eta"),
    (["solve", "--grid", "1"], "grid"),
    (["solve", "--theta", "sideways"], "theta"),
    (["solve", "--snr-db=0,5"], "snr_db"),
    (["solve", "--tol", "-1"], "tol"),
    (["solve", "--modulation", "qam32"], "modulation"),
    (["solve", "--eta", ","], "eta"),
])
def test_invalid_flags_exit_one(capsys, argv, needle):
    rc = main(argv)
    captured = capsys.readouterr()
    assert rc == 1
    assert captured.out == ""
    assert "error:" in captured.err
    assert needle in captured.err


def test_malformed_config_file(tmp_path, capsys):
    cfg = tmp_path / "broken.json"
    cfg.write_text("{not json")
    out = tmp_path / "result.json"
    rc = main(["solve", "--config", str(cfg), "--out", str(out)])
    assert rc == 1
    assert "malformed JSON" in capsys.readouterr().err
    assert not out.exists()


def test_config_unknown_key_rejected(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    rc = main(["solve", "--config", str(cfg)])
    assert rc == 1
    assert "config.bogus" in capsys.readouterr().err


def test_config_top_level_must_be_object(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("[1, 2]")
    rc = main(["solve", "--config", str(cfg)])
    assert rc == 1
    assert "JSON object" in capsys.readouterr().err


def test_config_file_flags_precedence(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"snr_db": 5.0, "grid": 6, "theta": "pi/12"}))
    rc, doc = _run_json(capsys, ["solve", "--config", str(cfg), "--snr-db", "3",
                                 "--max-iters", "3000"])
    assert rc == 0
    # the flag wins, the file fills the rest, defaults close the gaps
    assert doc["snr_db"] == 3.0
    assert doc["config"]["grid"] == 6
    assert doc["theta"] == pytest.approx(math.pi / 12.0)
    assert doc["eta"] == 0.9


def test_missing_config_file(capsys):
    rc = main(["solve", "--config", "/nonexistent/cfg.json"])
    assert rc == 1
    assert "cannot read" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# residuals
# ---------------------------------------------------------------------------


def test_residuals_csv_contract(tmp_path, capsys):
    path = tmp_path / "trace.csv"
    rc = main(["residuals", "--grid", "8", "--out", str(path)])
    assert rc == 0
    echo, header, rows = _read_csv(path)
    assert header == ["iter", "r_phi", "r_psi", "r_lambda", "dual_objective",
                      "lm_rate_nats"]
    assert echo["grid"] == 8
    assert "out" not in echo

    rc, doc = _run_json(capsys, ["solve", "--grid", "8"])
    assert rc == 0
    assert len(rows) == doc["iterations"]
    assert [int(r[0]) for r in rows] == list(range(1, len(rows) + 1))
    last = rows[-1]
    assert max(float(last[1]), float(last[2]), float(last[3])) <= 1e-10
    # dual objective column is non-increasing for the root-find default
    duals = [float(r[4]) for r in rows]
    assert all(b <= a + 1e-12 for a, b in zip(duals, duals[1:]))


def test_residuals_deterministic(tmp_path):
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    assert main(["residuals", "--grid", "8", "--out", str(a)]) == 0
    assert main(["residuals", "--grid", "8", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def test_sweep_rows_sorted_and_bounded(tmp_path):
    path = tmp_path / "sweep.csv"
    # the 5 dB cells take a few thousand iterations on this coarse grid
    rc = main(["sweep", "--modulation", "qpsk", "--eta", "0.8,0.9",
               "--snr-db=-5,0,5", "--grid", "8", "--max-iters", "12000",
               "--out", str(path)])
    assert rc == 0
    echo, header, rows = _read_csv(path)
    assert header == ["modulation", "eta", "theta", "snr_db", "lm_rate_bits",
                      "gmi_bits", "lambda", "iterations", "status"]
    assert len(rows) == 6
    keys = [(r[0], float(r[1]), float(r[2]), float(r[3])) for r in rows]
    assert keys == sorted(keys)
    for r in rows:
        assert r[8] == "0"
        assert float(r[5]) <= float(r[4]) + 1e-8  # GMI below the full rate
    assert echo["grid"] == 8


def test_sweep_parallel_matches_serial(tmp_path):
    serial = tmp_path / "serial.csv"
    parallel = tmp_path / "parallel.csv"
    argv = ["sweep", "--snr-db=0,5", "--grid", "6"]
    assert main(argv + ["--workers", "1", "--out", str(serial)]) == 0
    assert main(argv + ["--workers", "2", "--out", str(parallel)]) == 0
    # identical data; the config echo differs in the workers field only
    s_lines = serial.read_text().splitlines()
    p_lines = parallel.read_text().splitlines()
    assert s_lines[1:] == p_lines[1:]
    s_echo = json.loads(s_lines[0][len("# config: "):])
    p_echo = json.loads(p_lines[0][len("# config: "):])
    s_echo.pop("workers")
    p_echo.pop("workers")
    assert s_echo == p_echo


def test_sweep_failed_cell_reports_status(tmp_path):
    path = tmp_path / "sweep.csv"
    # the second cell underflows the whole transition table: the sweep
    # keeps going and flags that row instead of dying
    rc = main(["sweep", "--snr-db=0,400", "--grid", "6", "--out", str(path)])
    assert rc == 0
    _, _, rows = _read_csv(path)
    assert len(rows) == 2
    good = rows[0]
    bad = rows[1]
    assert float(good[3]) == 0.0 and good[8] == "0"
    assert float(bad[3]) == 400.0 and bad[8] == "1"
    assert bad[4] == "" and bad[5] == ""


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------


def test_compare_solver_against_oracle(tmp_path):
    path = tmp_path / "cmp.csv"
    rc = main(["compare", "--grid", "6,8", "--trials", "1", "--out", str(path)])
    assert rc == 0
    echo, header, rows = _read_csv(path)
    assert header == ["scheme", "N", "t_sinkhorn_s", "t_oracle_s", "speedup",
                      "abs_diff"]
    assert len(rows) == 2
    for r in rows:
        assert r[0] == "qpsk"
        assert float(r[2]) > 0.0 and float(r[3]) > 0.0
        assert float(r[5]) <= 1e-5


def test_compare_skips_oracle_above_cap(tmp_path):
    path = tmp_path / "cmp.csv"
    rc = main(["compare", "--grid", "50", "--trials", "1", "--out", str(path)])
    assert rc == 0
    _, _, rows = _read_csv(path)
    assert len(rows) == 1
    row = rows[0]
    assert int(row[1]) == 2500
    assert float(row[2]) > 0.0
    assert row[3] == "" and row[4] == "" and row[5] == ""


# ---------------------------------------------------------------------------
# gmi
# ---------------------------------------------------------------------------


def test_gmi_command(capsys):
    rc, doc = _run_json(capsys, ["gmi", "--grid", "8"])
    assert rc == 0
    assert doc["status"] == "converged"
    assert doc["gmi_bits"] > 0.0
    assert doc["s_star"] > 0.0
    assert doc["evaluations"] > 0


# ---------------------------------------------------------------------------
# dump-problem
# ---------------------------------------------------------------------------


def test_dump_problem_round_trip(capsys):
    rc, doc = _run_json(capsys, ["dump-problem", "--grid", "6"])
    assert rc == 0
    assert set(doc) == {"config", "constellation", "grid", "problem"}
    assert doc["grid"]["n_side"] == 6
    assert doc["grid"]["delta"] == pytest.approx(16.0 / 5.0)
    prob = DiscreteProblem.from_json(json.dumps(doc["problem"]))
    assert prob.validate() == []
    assert prob.m == 4
    pts = np.asarray(doc["constellation"]["points"])
    assert pts.shape == (4, 2)
