"""Command-line entry point: ``magnetoplate {static,evolve,gamma,magstat,check}``.

Exit codes: 0 ok, 1 configuration error, 2 numerical failure, 3 failed check.
Every run writes ``summary.kv`` (one ``key=value`` per line) into ``--out``.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CHECK = 0, 1, 2, 3
THREADS_ENV = "MAGNETOPLATE_THREADS"


def _apply_thread_cap() -> str:
    """Forward ``MAGNETOPLATE_THREADS`` to the BLAS/OpenMP pools before numpy loads."""
    val = os.environ.get(THREADS_ENV, "")
    if not val:
        return "default"
    if not val.isdigit() or int(val) < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {val!r}")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, val)
    return val


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return ";".join(_fmt(x) for x in v)
    return str(v)


def write_summary(path: Path, items: dict) -> None:
    with open(path, "w", newline="\n") as fh:
        for k, v in items.items():
            fh.write(f"{k}={_fmt(v)}\n")


def read_summary(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line:
                k, v = line.split("=", 1)
                out[k] = v
    return out


def _floats(text: str):
    return [float(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="magnetoplate", description="Reduced magnetoelastic plate solver and verification harness.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, help="key=value configuration file (default: built-in stock config)")
        sp.add_argument("--out", type=Path, help="output directory (overrides run.out)")

    common(sub.add_parser("static", help="minimize the reduced energy at a fixed time"))
    common(sub.add_parser("evolve", help="run the incremental evolution and write the trace"))
    g = sub.add_parser("gamma", help="bulk-versus-reduced energy table along decreasing h")
    common(g)
    g.add_argument("--spec", default="generic")
    g.add_argument("--h", default="0.2,0.1,0.05,0.025", help="comma-separated, strictly decreasing")
    g.add_argument("--nx", type=int)
    g.add_argument("--ny", type=int)
    g.add_argument("--nz", type=int)
    m = sub.add_parser("magstat", help="stray-field energy versus its thin-film limit")
    common(m)
    m.add_argument("--profile", default="cos_mode")
    m.add_argument("--h", default="0.1,0.05,0.02,0.01")
    common(sub.add_parser("check", help="run the invariant suite"))
    return p


def _load_config(args):
    from .config import DEFAULT_CONFIG, parse_config

    if args.config is None:
        return parse_config(DEFAULT_CONFIG)
    text = Path(args.config).read_text(encoding="utf-8")
    return parse_config(text, base_dir=Path(args.config).resolve().parent)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(float(x)) if not isinstance(x, (int, str)) or isinstance(x, bool) else str(x) for x in r) + "\n")


def _base_summary(cfg, command, threads) -> dict:
    items = {"command": command, "scenario": cfg.get("run", "scenario"), "seed": cfg.get("run", "seed"), "threads": threads}
    for k, v in cfg.defaults_report().items():
        items[f"default.{k}"] = v
    return items


def cmd_static(cfg, out: Path, summary: dict) -> int:
    from .fields import write_field_csv
    from .scenarios import build_problem
    from .static_solver import check_stability, minimize_f0

    pb = build_problem(cfg)
    state, rep = minimize_f0(pb.initial, pb.t_static, pb.schedule, pb.grid, pb.mat, pb.opts)
    stab = check_stability(state, pb.t_static, pb.schedule, pb.grid, pb.mat, n_competitors=10,
                           seed=pb.seed, opts=pb.opts, restarts=pb.restarts)
    write_field_csv(out / "u.csv", pb.grid, state.u)
    write_field_csv(out / "v.csv", pb.grid, state.v)
    write_field_csv(out / "zeta.csv", pb.grid, state.zeta)
    _write_csv(out / "history.csv", ("iter", "F0"), [(i, e) for i, e in enumerate(rep.history)])
    summary.update(rep.as_dict())
    summary["t"] = pb.t_static
    summary["stability_min_margin"] = stab.min_margin
    summary["stability_worst"] = stab.worst()[0]
    return EXIT_NUMERIC if rep.stalled else EXIT_OK


def cmd_evolve(cfg, out: Path, summary: dict) -> int:
    from .errors import StepQualityError
    from .fields import write_field_csv
    from .quasistatic import apriori_flag, energy_balance_report, evolve
    from .scenarios import build_problem
    from .static_solver import check_stability

    pb = build_problem(cfg)
    stab = check_stability(pb.initial, 0.0, pb.schedule, pb.grid, pb.mat, n_competitors=10,
                           seed=pb.seed, opts=pb.opts, restarts=pb.restarts)
    summary["initial_stability_margin"] = stab.min_margin
    code = EXIT_OK
    try:
        trace = evolve(pb.initial, pb.partition, pb.sigma, pb.schedule, pb.grid, pb.mat, pb.opts, pb.huber_eps)
    except StepQualityError as exc:
        trace = exc.partial_trace
        summary["error"] = str(exc)
        summary["failed_gap"] = exc.gap
        code = EXIT_NUMERIC
    (out / "trace.csv").write_text(trace.to_csv())
    fields_dir = out / "fields"
    fields_dir.mkdir(exist_ok=True)
    for i, st in enumerate(trace.states):
        write_field_csv(fields_dir / f"zeta_{i:04d}.csv", pb.grid, st.zeta)
        write_field_csv(fields_dir / f"u_{i:04d}.csv", pb.grid, st.u)
        write_field_csv(fields_dir / f"v_{i:04d}.csv", pb.grid, st.v)
    summary["steps"] = len(trace) - 1
    if code == EXIT_OK:
        rep = energy_balance_report(trace, pb.schedule, pb.grid, pb.mat, pb.sigma)
        _write_csv(out / "balance.csv", ("i", "t", "aimp2_resid", "slack", "balance_resid", "load_rate", "apriori_ratio"),
                   [(i, rep.times[i], rep.aimp2_resid[i], rep.slack[i], rep.balance_resid[i], rep.load_rate[i],
                     rep.apriori_ratio[i]) for i in range(len(rep.times))])
        summary["max_aimp2_resid"] = rep.max_aimp2
        summary["final_balance_resid"] = rep.balance_resid[-1]
        summary["sum_dt_sigma"] = float(sum(rep.slack))
        summary["apriori_flagged"] = apriori_flag(trace, pb.schedule, pb.grid, pb.mat, pb.sigma)
        summary["max_gap"] = max((s.gap for s in trace.steps), default=0.0)
        summary["final_F0"] = trace.f0[-1]
        summary["final_var"] = trace.var_cum[-1]
    return code


def cmd_gamma(cfg, out: Path, summary: dict, args) -> int:
    from .bulk import AnsatzSpec, gamma_table
    from .fields import Grid2, Grid3

    g = cfg.values["grid"]
    nx = args.nx or g["nx"]
    ny = args.ny or g["ny"]
    nz = args.nz or g["nz"]
    grid3 = Grid3(Grid2(nx, ny, g["lx"], g["ly"]), nz)
    spec = AnsatzSpec.from_catalog(args.spec, cfg.material())
    table = gamma_table(spec, _floats(args.h), grid3)
    (out / "gamma.csv").write_text(table.to_csv())
    summary.update({"spec": args.spec, "nx": nx, "ny": ny, "nz": nz, "E0": table.e0_parts["total"],
                    "E0_discrete": table.e0_discrete, "final_abs_err": table.errors[-1],
                    "final_rel_err": table.errors[-1] / abs(table.e0_parts["total"]) if table.e0_parts["total"] else 0.0})
    return EXIT_OK


def cmd_magstat(cfg, out: Path, summary: dict, args) -> int:
    from .bulk import Z_PROFILES
    from .magnetostatics import magnetostatic_limit_check

    if args.profile not in Z_PROFILES:
        raise KeyError(f"unknown profile {args.profile!r}; choose from {sorted(Z_PROFILES)}")
    grid = cfg.grid2()
    x, y = grid.mesh
    zeta = Z_PROFILES[args.profile](x, y)[0]
    rows = magnetostatic_limit_check(zeta, _floats(args.h), grid)
    _write_csv(out / "magstat.csv", ("h", "E_mag_h", "E_mag_0", "ratio"), rows)
    summary.update({"profile": args.profile, "final_ratio": rows[-1][3]})
    return EXIT_OK


def cmd_check(cfg, out: Path, summary: dict) -> int:
    from .checks import run_checks

    results = run_checks(cfg.get("run", "seed"))
    _write_csv(out / "checks.csv", ("name", "passed", "value"), [(n, int(ok), v) for n, ok, v in results])
    failed = [n for n, ok, _ in results if not ok]
    summary["checks_run"] = len(results)
    summary["checks_failed"] = len(failed)
    if failed:
        summary["failed"] = ";".join(failed)
    for n, ok, v in results:
        print(f"{'PASS' if ok else 'FAIL'} {n} {v:.3e}")
    return EXIT_CHECK if failed else EXIT_OK


def run(command: str, cfg, out: Path, args=None, threads: str = "default") -> int:
    """Dispatch one subcommand; writes artifacts under ``out``."""
    from .errors import ConfigError, MagnetoplateError

    out.mkdir(parents=True, exist_ok=True)
    summary = _base_summary(cfg, command, threads)
    try:
        if command == "static":
            code = cmd_static(cfg, out, summary)
        elif command == "evolve":
            code = cmd_evolve(cfg, out, summary)
        elif command == "gamma":
            code = cmd_gamma(cfg, out, summary, args)
        elif command == "magstat":
            code = cmd_magstat(cfg, out, summary, args)
        elif command == "check":
            code = cmd_check(cfg, out, summary)
        else:
            raise ConfigError(f"unknown command {command}")
    except (ConfigError, KeyError) as exc:
        summary["error"] = str(exc)
        code = EXIT_CONFIG
    except (MagnetoplateError, ValueError, ArithmeticError) as exc:
        summary["error"] = f"{type(exc).__name__}: {exc}"
        code = EXIT_NUMERIC
    summary["exit_code"] = code
    write_summary(out / "summary.kv", summary)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        threads = _apply_thread_cap()
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    from .errors import ConfigError

    try:
        cfg = _load_config(args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or cfg.resolve(cfg.get("run", "out"))
    code = run(args.command, cfg, Path(out), args, threads)
    if code not in (EXIT_OK, EXIT_CHECK):
        print(read_summary(Path(out) / "summary.kv").get("error", f"exit {code}"), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
