"""Flat ``key=value`` run configuration.

Format: ``#`` starts a comment, ``[section]`` opens a section, and every other
whitespace-separated token is ``key=value``.  Unknown keys, duplicates and
invariant violations are errors that cite the ``section.key`` path.

Example::

    [material]
    mu=1 lambda=1
    [grid]
    nx=17 ny=17
    [schedule]
    times=0,1
    h=0,0,0;2,0,0
    [evolution]
    nsteps=8 sigma=1e-3
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import ConfigError

SCENARIOS = ("stock", "frozen_e3", "free", "custom")


def _bool(s):
    t = s.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s):
    return tuple(float(p) for p in s.split(",") if p.strip())


def _knots(s):
    # ';' separates knots, ',' separates components
    return tuple(_floats(part) for part in s.split(";"))


def _paths(s):
    return tuple(p.strip() for p in s.split(";"))


# section -> key -> (parser, default); default None means "not set"
SCHEMA = {
    "material": {"mu": (float, 1.0), "lambda": (float, 1.0), "cp": (float, 1.0), "pexp": (float, 4.0), "beta": (float, 8.0)},
    "grid": {"nx": (int, None), "ny": (int, None), "nz": (int, 9), "lx": (float, 1.0), "ly": (float, 1.0)},
    "schedule": {
        "times": (_floats, None),
        "f": (_knots, None),
        "g": (_knots, None),
        "h": (_knots, None),
        "f_files": (_paths, None),
        "g_files": (_paths, None),
        "h_files": (_paths, None),
        "t": (float, 0.0),
    },
    "solver": {
        "grad_tol": (float, 1e-7),
        "max_outer_iters": (int, 400),
        "cg_tol": (float, 1e-12),
        "restarts": (int, 1),
        "freeze_zeta": (_bool, False),
        "freeze_uv": (_bool, False),
    },
    "evolution": {"nsteps": (int, 8), "times": (_floats, None), "sigma": (float, 1e-3), "huber_eps": (float, 1e-4)},
    "run": {"scenario": (str, "stock"), "out": (str, "out"), "seed": (int, 0)},
}
REQUIRED = (("grid", "nx"), ("grid", "ny"))


@dataclass
class RunConfig:
    values: dict
    explicit: set
    base_dir: Path = field(default_factory=Path.cwd)

    def get(self, section: str, key: str):
        return self.values[section][key]

    def is_set(self, section: str, key: str) -> bool:
        return (section, key) in self.explicit

    def defaults_report(self) -> dict:
        """Every key that was filled from its default, as ``section.key -> value``."""
        return {
            f"{s}.{k}": v for s, keys in self.values.items() for k, v in keys.items()
            if (s, k) not in self.explicit and v is not None
        }

    def material(self):
        from .material import Material

        m = self.values["material"]
        return Material(mu=m["mu"], lam=m["lambda"], cp=m["cp"], pexp=m["pexp"], beta=m["beta"])

    def grid2(self):
        from .fields import Grid2

        g = self.values["grid"]
        return Grid2(g["nx"], g["ny"], g["lx"], g["ly"])

    def grid3(self):
        from .fields import Grid3

        return Grid3(self.grid2(), self.values["grid"]["nz"])

    def solve_options(self):
        from .static_solver import SolveOptions

        s = self.values["solver"]
        return SolveOptions(
            max_outer_iters=s["max_outer_iters"], grad_tol=s["grad_tol"], cg_tol=s["cg_tol"],
            freeze_zeta=s["freeze_zeta"], freeze_uv=s["freeze_uv"], seed=self.values["run"]["seed"],
        )

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p


def _tokens(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            for tok in line.split():
                yield lineno, tok


def parse_config(text: str, base_dir: Optional[Path] = None) -> RunConfig:
    """Parse and validate a configuration text; raises :class:`ConfigError`."""
    section = None
    seen: dict = {}
    for lineno, tok in _tokens(text):
        if tok.startswith("["):
            if not tok.endswith("]") or tok[1:-1] not in SCHEMA:
                raise ConfigError(f"line {lineno}: unknown section {tok}")
            section = tok[1:-1]
            continue
        if "=" not in tok:
            raise ConfigError(f"line {lineno}: expected key=value, got {tok!r}")
        key, val = tok.split("=", 1)
        if section is None:
            raise ConfigError(f"line {lineno}: key {key!r} outside any section")
        path = f"{section}.{key}"
        if key not in SCHEMA[section]:
            raise ConfigError(f"line {lineno}: unknown key {path}")
        if (section, key) in seen:
            raise ConfigError(f"line {lineno}: duplicate key {path} (first set on line {seen[(section, key)][0]})")
        parser = SCHEMA[section][key][0]
        try:
            seen[(section, key)] = (lineno, parser(val))
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {path}: {exc}") from None

    values = {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}
    for (s, k), (_, v) in seen.items():
        values[s][k] = v
    for s, k in REQUIRED:
        if values[s][k] is None:
            raise ConfigError(f"missing required key {s}.{k}")
    cfg = RunConfig(values, set(seen), Path(base_dir) if base_dir else Path.cwd())
    _validate(cfg)
    return cfg


def _fail(path, msg):
    raise ConfigError(f"{path}: {msg}")


def _validate(cfg: RunConfig) -> None:
    v = cfg.values
    try:
        cfg.material()
    except ValueError as exc:
        raise ConfigError(f"material: {exc}") from None
    for k in ("nx", "ny"):
        if v["grid"][k] < 3:
            _fail(f"grid.{k}", "need at least 3 nodes")
    if v["grid"]["nz"] < 3:
        _fail("grid.nz", "need at least 3 nodes")
    for k in ("lx", "ly"):
        if not v["grid"][k] > 0:
            _fail(f"grid.{k}", "must be positive")
    s = v["solver"]
    for k in ("grad_tol", "cg_tol"):
        if not s[k] > 0:
            _fail(f"solver.{k}", "tolerances must be positive")
    if s["max_outer_iters"] < 0:
        _fail("solver.max_outer_iters", "must be nonnegative")
    if s["restarts"] < 0:
        _fail("solver.restarts", "must be nonnegative")
    e = v["evolution"]
    if not e["sigma"] > 0:
        _fail("evolution.sigma", "must be positive")
    if not e["huber_eps"] > 0:
        _fail("evolution.huber_eps", "must be positive")
    if cfg.is_set("evolution", "times") and cfg.is_set("evolution", "nsteps"):
        _fail("evolution.times", "give either nsteps or times, not both")
    if e["nsteps"] < 1:
        _fail("evolution.nsteps", "must be positive")
    if e["times"] is not None:
        t = e["times"]
        if len(t) < 2 or t[0] != 0.0 or any(b <= a for a, b in zip(t[:-1], t[1:])):
            _fail("evolution.times", "must start at 0 and increase strictly")
    if v["run"]["scenario"] not in SCENARIOS:
        _fail("run.scenario", f"unknown scenario; choose from {', '.join(SCENARIOS)}")

    sc = v["schedule"]
    if sc["times"] is not None:
        t = sc["times"]
        if len(t) < 2 or t[0] != 0.0 or any(b <= a for a, b in zip(t[:-1], t[1:])):
            _fail("schedule.times", "must start at 0 and increase strictly")
        for name, dim in (("f", 2), ("g", 1), ("h", 3)):
            knots = sc[name]
            files = sc[f"{name}_files"]
            if knots is not None and files is not None:
                _fail(f"schedule.{name}", f"give either {name} or {name}_files")
            if knots is not None:
                if len(knots) != len(t):
                    _fail(f"schedule.{name}", f"expected {len(t)} knots, got {len(knots)}")
                if any(len(k) != dim for k in knots):
                    _fail(f"schedule.{name}", f"each knot needs {dim} components")
            if files is not None:
                if len(files) != len(t):
                    _fail(f"schedule.{name}_files", f"expected {len(t)} files, got {len(files)}")
                for p in files:
                    if not cfg.resolve(p).is_file():
                        _fail(f"schedule.{name}_files", f"file not found: {p}")
    else:
        for name in ("f", "g", "h", "f_files", "g_files", "h_files"):
            if sc[name] is not None:
                _fail(f"schedule.{name}", "requires schedule.times")
    if v["run"]["scenario"] == "custom" and sc["times"] is None:
        _fail("schedule.times", "scenario custom needs an explicit schedule")


DEFAULT_CONFIG = """\
# stock scenario: Zeeman field ramped in-plane from a flat out-of-plane state
[grid]
nx=17 ny=17 nz=9
[evolution]
nsteps=8 sigma=1e-3 huber_eps=1e-4
[run]
scenario=stock seed=0
"""
