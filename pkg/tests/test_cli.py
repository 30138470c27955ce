import csv
import io
import json
import subprocess
import sys

import pytest

from infcomp.cli import (CSV_COLUMNS, RunConfig, emit_grid, main, read_config, resolve_problem,
                         s_points)
from infcomp.compint import CompIntSpec, comp_integral
from infcomp.composer import inner_compose


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def rows_of(text):
    return list(csv.DictReader(io.StringIO(text)))


# --- exit codes per subcommand --------------------------------------------------

def test_solve_u(capsys):
    code, out, _ = run(["solve", "--builtin", "U", "--s=-5", "--z=1"], capsys)
    assert code == 0
    assert "value" in out and "errEstimate" in out
    value = complex(out.split("value = ")[1].split()[0])
    assert abs(value - inner_compose("z + exp(s*z)", -5, 1, 1, 400)) < 1e-12


def test_solve_divergent(capsys):
    code, _, err = run(["solve", "--f", "z+1", "--s", "0", "--z", "0"], capsys)
    assert code == 3
    assert "NonConvergent" in err


def test_solve_to_csv(tmp_path, capsys):
    path = tmp_path / "one.csv"
    code, _, _ = run(["solve", "--builtin", "U", "--s", "-2", "--out", str(path)], capsys)
    assert code == 0
    text = path.read_text()
    assert text.splitlines()[0] == ",".join(CSV_COLUMNS)
    assert len(rows_of(text)) == 1


def test_verify_grid(capsys):
    code, out, _ = run(["verify", "--builtin", "U", "--grid", "-8:-1,-2:2", "--n", "5x5",
                        "--tol", "1e-9"], capsys)
    assert code == 0
    rows = rows_of(out)
    assert len(rows) == 25
    assert all(float(r["residual"]) < 1e-9 for r in rows)
    # row-major: real part outer, imaginary part inner
    keys = [(float(r["s_re"]), float(r["s_im"])) for r in rows]
    assert keys == sorted(keys)
    assert keys[:2] == [(-8.0, -2.0), (-8.0, -1.0)]


def test_verify_threshold_missed(capsys):
    code, _, _ = run(["verify", "--builtin", "U", "--s", "-3", "--tol", "0"], capsys)
    assert code == 1


def test_domain_errors_exit_2(capsys):
    assert run(["solve", "--builtin", "U", "--s", "-2", "--z", "-1"], capsys)[0] == 2
    assert run(["solve", "--builtin", "Q", "--s", "3", "--z", "0.2"], capsys)[0] == 2
    assert run(["solve", "--f", "z + foo(s)", "--s", "0"], capsys)[0] == 2
    assert run(["solve", "--f", "z + (s", "--s", "0"], capsys)[0] == 2
    assert run(["solve", "--builtin", "X", "--s", "0"], capsys)[0] == 2


def test_overflow_exit_3(capsys):
    assert run(["solve", "--f", "z + exp(z)", "--s", "0", "--z", "1"], capsys)[0] == 3


def test_usage_errors_exit_64(capsys):
    assert run([], capsys)[0] == 64
    assert run(["solve", "--bogus"], capsys)[0] == 64
    assert run(["frobnicate"], capsys)[0] == 64
    assert run(["verify", "--builtin", "U", "--grid", "-8:-1", "--n", "5x5"], capsys)[0] == 64
    assert run(["asympt", "--builtin", "U", "--s", "-3"], capsys)[0] == 64


def test_io_error_exit_74(tmp_path, capsys):
    bad = tmp_path / "missing" / "out.csv"
    assert run(["solve", "--builtin", "U", "--s", "-2", "--out", str(bad)], capsys)[0] == 74
    assert run(["solve", "--config", str(tmp_path / "nope.json")], capsys)[0] == 74


def test_summability(capsys):
    code, out, _ = run(["summability", "--builtin", "U"], capsys)
    assert code == 0
    assert json.loads(out)["report"]["verdict"] == "Converges"
    code, out, _ = run(["summability", "--f", "z + 1", "--zdisk", "0,1", "--srect", "-4:0,-1:1"],
                       capsys)
    assert code == 3
    assert json.loads(out)["report"]["verdict"] == "Diverges"


def test_telescope(capsys):
    code, out, _ = run(["telescope", "--builtin", "U", "--s", "-2", "--depth", "200"], capsys)
    assert code == 0
    assert float(rows_of(out)[0]["residual"]) < 1e-10


def test_asympt(capsys):
    code, out, _ = run(["asympt", "--builtin", "U", "--z", "1", "--alpha", "-1",
                        "--t", "5,10,15,20"], capsys)
    assert code == 0
    gaps = [float(r["residual"]) for r in rows_of(out)]
    assert len(gaps) == 4 and all(b < a for a, b in zip(gaps, gaps[1:]))
    assert all(not v.startswith("-0") for r in rows_of(out) for v in r.values())
    assert run(["asympt", "--builtin", "U", "--z", "1", "--alpha", "1j", "--t", "5"],
               capsys)[0] == 2


def test_compint(capsys):
    code, out, _ = run(["compint", "--z", "1", "--s", "0", "--n", "256"], capsys)
    assert code == 0
    row = rows_of(out)[0]
    mu = comp_integral(CompIntSpec("exp(s*z)", 1, 256, 40), 0)
    assert complex(float(row["val_re"]), float(row["val_im"])) == mu
    # a too-short cutoff is a domain problem, not a numerical failure
    assert run(["compint", "--z", "1", "--s", "0", "--cutoff", "3"], capsys)[0] == 2


def test_sqrtop(capsys):
    code, out, _ = run(["sqrtop", "--s", "0.25", "--z", "0.1"], capsys)
    assert code == 0
    assert float(rows_of(out)[0]["residual"]) < 1e-10
    assert run(["sqrtop", "--s", "1.5", "--z", "0.1"], capsys)[0] == 2


def test_builtin_list(capsys):
    code, out, _ = run(["builtin", "list"], capsys)
    assert code == 0
    assert [line.split("\t")[0] for line in out.splitlines()] == ["U", "Q", "P"]


# --- formats, config and determinism ----------------------------------------------

def test_json_round_trips_through_config_reader(tmp_path, capsys):
    path = tmp_path / "grid.json"
    argv = ["verify", "--builtin", "U", "--grid", "-6:-2,-1:1", "--n", "2x3", "--format", "json",
            "--out", str(path), "--z", "1+0.25i", "--nmax", "5000"]
    assert run(argv, capsys)[0] == 0
    doc = json.loads(path.read_text())
    assert len(doc["rows"]) == 6
    assert set(doc["rows"][0]) == set(CSV_COLUMNS)
    cfg = read_config(str(path))
    assert RunConfig.from_json(cfg.to_json()) == cfg
    assert cfg.to_json() == doc["config"]
    assert doc["config"]["policy"]["nMax"] == 5000 and cfg.policy["n_max"] == 5000
    # re-running the stored configuration reproduces the file
    again = tmp_path / "again.json"
    assert run(["verify", "--config", str(path), "--out", str(again)], capsys)[0] == 0
    assert json.loads(again.read_text())["rows"] == doc["rows"]


def test_outputs_are_deterministic(tmp_path, capsys):
    outs = []
    for k in range(2):
        path = tmp_path / f"run{k}.csv"
        run(["verify", "--builtin", "U", "--grid", "-5:-1,-1:1", "--n", "3x3", "--out", str(path)],
            capsys)
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_parallel_rows_keep_input_order(tmp_path, capsys):
    serial, parallel = tmp_path / "a.csv", tmp_path / "b.csv"
    base = ["verify", "--builtin", "U", "--grid", "-5:-1,-1:1", "--n", "3x3"]
    run(base + ["--out", str(serial)], capsys)
    run(base + ["--out", str(parallel), "--jobs", "3"], capsys)
    assert serial.read_bytes() == parallel.read_bytes()


def test_numbers_round_trip_exactly(capsys):
    code, out, _ = run(["telescope", "--builtin", "U", "--s", "-2.3+0.7i", "--depth", "3"], capsys)
    assert code == 0
    row = rows_of(out)[0]
    assert complex(float(row["s_re"]), float(row["s_im"])) == -2.3 + 0.7j


def test_env_overrides_nmax(monkeypatch, capsys):
    monkeypatch.setenv("OMEGA_NMAX", "5")
    assert run(["solve", "--builtin", "U", "--s", "-1"], capsys)[0] == 3
    cfg = RunConfig(command="solve", problem="U")
    assert resolve_problem(cfg).policy.n_max == 5


def test_emit_grid_rejects_empty():
    with pytest.raises(ValueError):
        emit_grid([], "csv", None)


def test_s_points_grid_order():
    pts = s_points({"kind": "grid", "reMin": 0, "reMax": 1, "imMin": 0, "imMax": 2,
                    "nRe": 2, "nIm": 3})
    assert pts == [0j, 1j, 2j, 1 + 0j, 1 + 1j, 1 + 2j]


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "infcomp", "solve", "--f", "z+1", "--s", "0",
                           "--z", "0"], capture_output=True, text=True)
    assert proc.returncode == 3
