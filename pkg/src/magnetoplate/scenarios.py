"""Assembly of runnable problems (grid, material, loads, initial state) from a config."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import RunConfig, parse_config, DEFAULT_CONFIG
from .errors import ConfigError
from .fields import Grid2, read_field_csv
from .material import Material
from .quasistatic import Partition
from .reduced import LoadSchedule, Loads, ReducedState
from .static_solver import SolveOptions, smooth_random_director

# stock evolution: in-plane Zeeman field ramped from 0 to STOCK_FIELD over [0, 1]
STOCK_FIELD = (2.0, 0.0, 0.0)


@dataclass
class Problem:
    grid: Grid2
    mat: Material
    schedule: LoadSchedule
    initial: ReducedState
    opts: SolveOptions
    partition: Partition
    sigma: float
    huber_eps: float
    restarts: int
    seed: int
    t_static: float


def _knot_loads(cfg: RunConfig, grid: Grid2, n: int) -> list:
    sc = cfg.values["schedule"]
    loads = [Loads.zeros(grid) for _ in range(n)]
    for name, dim in (("f", 2), ("g", 1), ("h", 3)):
        attr = "hfield" if name == "h" else name
        if sc[name] is not None:
            for ld, vec in zip(loads, sc[name]):
                val = np.broadcast_to(np.asarray(vec, float), grid.shape + (dim,)).copy()
                setattr(ld, attr, val[..., 0] if dim == 1 else val)
        elif sc[f"{name}_files"] is not None:
            for ld, path in zip(loads, sc[f"{name}_files"]):
                fgrid, vals = read_field_csv(cfg.resolve(path))
                if not isinstance(fgrid, Grid2) or fgrid.shape != grid.shape:
                    raise ConfigError(f"schedule.{name}_files: {path} does not match the grid")
                if vals.shape[-1] != dim:
                    raise ConfigError(f"schedule.{name}_files: {path} must have {dim} components")
                setattr(ld, attr, vals[..., 0] if dim == 1 else vals)
    return loads


def build_schedule(cfg: RunConfig, grid: Grid2) -> LoadSchedule:
    sc = cfg.values["schedule"]
    if sc["times"] is not None:
        return LoadSchedule(np.asarray(sc["times"]), _knot_loads(cfg, grid, len(sc["times"])))
    if cfg.get("run", "scenario") == "stock":
        return LoadSchedule(np.array([0.0, 1.0]), [Loads.zeros(grid), Loads.uniform(grid, h=STOCK_FIELD)])
    return LoadSchedule.zeros(grid)


def build_initial(cfg: RunConfig, grid: Grid2, rng: np.random.Generator) -> ReducedState:
    scenario = cfg.get("run", "scenario")
    state = ReducedState.flat(grid)
    if scenario == "frozen_e3":
        inner = ~grid.boundary_mask
        state.u[inner] = 0.1 * rng.standard_normal((int(inner.sum()), 2))
        state.v[inner] = 0.1 * rng.standard_normal(int(inner.sum()))
    elif scenario == "free":
        state.zeta = smooth_random_director(grid, rng)
    return state


def build_problem(cfg: RunConfig) -> Problem:
    grid = cfg.grid2()
    mat = cfg.material()
    seed = cfg.get("run", "seed")
    rng = np.random.default_rng(seed)
    schedule = build_schedule(cfg, grid)
    initial = build_initial(cfg, grid, rng)
    opts = cfg.solve_options()
    if cfg.get("run", "scenario") == "frozen_e3":
        opts.freeze_zeta = True
    ev = cfg.values["evolution"]
    if ev["times"] is not None:
        partition = Partition(tuple(ev["times"]))
    else:
        partition = Partition.uniform(schedule.T, ev["nsteps"])
    if partition.T > schedule.T:
        raise ConfigError("evolution.times: partition extends beyond the load schedule")
    t_static = cfg.get("schedule", "t")
    if not 0.0 <= t_static <= schedule.T:
        raise ConfigError("schedule.t: outside the load schedule")
    return Problem(grid, mat, schedule, initial, opts, partition, ev["sigma"], ev["huber_eps"],
                   cfg.get("solver", "restarts"), seed, t_static)


def stock_problem(nx: int = 17, ny: int = 17) -> Problem:
    """The default evolution scenario: 8 uniform steps, ramped Zeeman field, sigma = 1e-3."""
    return build_problem(parse_config(DEFAULT_CONFIG.replace("nx=17 ny=17", f"nx={nx} ny={ny}")))
