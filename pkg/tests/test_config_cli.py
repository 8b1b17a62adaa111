import os
import subprocess
import sys

import numpy as np
import pytest

from magnetoplate.cli import main, read_summary
from magnetoplate.config import DEFAULT_CONFIG, parse_config
from magnetoplate.errors import ConfigError
from magnetoplate.fields import Grid2, read_field_csv, write_field_csv
from magnetoplate.quasistatic import TRACE_COLUMNS, read_trace_csv

FROZEN = "[grid] nx=9 ny=9\n[run] scenario=frozen_e3 seed=3\n"


def test_minimal_config_fills_defaults():
    cfg = parse_config("[grid] nx=9 ny=9")
    assert cfg.get("grid", "nz") == 9 and cfg.get("material", "mu") == 1.0
    rep = cfg.defaults_report()
    assert "grid.nx" not in rep and rep["evolution.sigma"] == 1e-3
    assert cfg.grid2() == Grid2(9, 9)


@pytest.mark.parametrize("text, match", [
    ("[grid] nx=9 ny=9\n[material] mu=-1", "material.*Material invariant violated: mu > 0"),
    ("[grid] nx=9 ny=9 nx=11", "line 1: duplicate key grid.nx"),
    ("[grid] nx=9 ny=9 nq=3", "unknown key grid.nq"),
    ("[grid] nx=9", "missing required key grid.ny"),
    ("[mesh] nx=9", "unknown section"),
    ("[grid] nx=9 ny=nine", "bad value for grid.ny"),
    ("[grid] nx=9 ny=9\n[evolution] sigma=0", "evolution.sigma"),
    ("[grid] nx=9 ny=9\n[schedule] times=0,1 h=0,0,0", "schedule.h: expected 2 knots"),
    ("[grid] nx=9 ny=9\n[schedule] times=0,1 g_files=a.csv;b.csv", "file not found"),
    ("[grid] nx=9 ny=9\n[run] scenario=wild", "run.scenario"),
])
def test_config_errors_cite_key(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


def test_duplicate_rejection_is_deterministic():
    msgs = set()
    for _ in range(3):
        with pytest.raises(ConfigError) as exc:
            parse_config("[grid]\nnx=9\nny=9\nnx=9\n")
        msgs.add(str(exc.value))
    assert msgs == {"line 4: duplicate key grid.nx (first set on line 2)"}


def test_schedule_from_field_files(tmp_path):
    from magnetoplate.scenarios import build_problem

    g = Grid2(5, 5)
    write_field_csv(tmp_path / "g0.csv", g, np.zeros(g.shape + (1,)))
    write_field_csv(tmp_path / "g1.csv", g, np.ones(g.shape + (1,)))
    cfg = parse_config("[grid] nx=5 ny=5\n[schedule] times=0,2 g_files=g0.csv;g1.csv\n[run] scenario=custom",
                       base_dir=tmp_path)
    pb = build_problem(cfg)
    assert pb.schedule.T == 2.0 and np.allclose(pb.schedule.at(1.0).g, 0.5)


def run_cli(tmp_path, *args, config=None):
    argv = list(args) + ["--out", str(tmp_path / "out")]
    if config is not None:
        (tmp_path / "run.cfg").write_text(config)
        argv += ["--config", str(tmp_path / "run.cfg")]
    code = main(argv)
    return code, read_summary(tmp_path / "out" / "summary.kv")


def test_cli_static_frozen(tmp_path):
    code, kv = run_cli(tmp_path, "static", config=FROZEN)
    assert code == 0
    assert abs(float(kv["energy"]) - 0.5) <= 1e-6
    assert kv["seed"] == "3" and kv["threads"] in ("default",) + tuple(str(i) for i in range(1, 257))
    grid, zeta = read_field_csv(tmp_path / "out" / "zeta.csv")
    assert grid == Grid2(9, 9) and np.allclose(zeta, [0, 0, 1])


def test_cli_gamma_zero_spec(tmp_path):
    code, kv = run_cli(tmp_path, "gamma", "--spec", "zero_e3", "--nx", "17", "--ny", "17", "--nz", "5",
                       config="[grid] nx=9 ny=9")
    assert code == 0
    lines = (tmp_path / "out" / "gamma.csv").read_text().splitlines()
    assert lines[0] == "h,E_el,E_exc,E_mag,E_h,E_0,abs_err"
    assert all(float(r.split(",")[1]) == 0.0 for r in lines[1:])


def test_cli_magstat_and_numeric_failure(tmp_path):
    code, kv = run_cli(tmp_path, "magstat", config="[grid] nx=33 ny=33")
    assert code == 0 and float(kv["final_ratio"]) == pytest.approx(0.96923184, abs=1e-8)
    code, kv = run_cli(tmp_path, "magstat", config="[grid] nx=10 ny=10")
    assert code == 2 and "powers of two" in kv["error"]


def test_cli_check_default_config(tmp_path, capsys):
    code, kv = run_cli(tmp_path, "check")
    assert code == 0 and kv["checks_failed"] == "0"
    assert "PASS gradient_fd" in capsys.readouterr().out


def test_cli_config_error_exit_code(tmp_path):
    assert main(["static", "--config", str(tmp_path / "missing.cfg")]) == 1
    (tmp_path / "bad.cfg").write_text("[grid] nx=9 ny=9 bogus=1")
    assert main(["static", "--config", str(tmp_path / "bad.cfg"), "--out", str(tmp_path / "o")]) == 1


def test_cli_evolve_outputs_roundtrip(tmp_path):
    cfg = "[grid] nx=9 ny=9\n[evolution] nsteps=3\n[run] seed=1\n"
    code, kv = run_cli(tmp_path, "evolve", config=cfg)
    assert code == 0 and kv["steps"] == "3" and kv["apriori_flagged"] == "0"
    rows = read_trace_csv((tmp_path / "out" / "trace.csv").read_text())
    assert len(rows) == 4 and tuple(rows[0]) == TRACE_COLUMNS
    grid, z = read_field_csv(tmp_path / "out" / "fields" / "zeta_0003.csv")
    assert grid == Grid2(9, 9) and np.allclose(np.linalg.norm(z, axis=-1), 1.0)
    bal = (tmp_path / "out" / "balance.csv").read_text().splitlines()
    assert len(bal) == 5


def test_thread_cap_env(tmp_path):
    env = dict(os.environ, MAGNETOPLATE_THREADS="2")
    out = tmp_path / "o"
    cmd = [sys.executable, "-m", "magnetoplate.cli", "magstat", "--out", str(out)]
    subprocess.run(cmd, env=env, check=True, capture_output=True)
    assert read_summary(out / "summary.kv")["threads"] == "2"
    env["MAGNETOPLATE_THREADS"] = "lots"
    res = subprocess.run(cmd, env=env, capture_output=True, text=True)
    assert res.returncode == 1 and "MAGNETOPLATE_THREADS" in res.stderr


def test_default_config_parses():
    cfg = parse_config(DEFAULT_CONFIG)
    assert cfg.get("run", "scenario") == "stock" and cfg.get("evolution", "nsteps") == 8
