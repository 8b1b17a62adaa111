"""Minimization of the reduced total energy and sampled stability checks.

The energy is a convex quadratic in ``(u, v)`` for fixed ``zeta`` and a
nonconvex function of the sphere-valued ``zeta``.  ``minimize_f0`` alternates
an exact conjugate-gradient solve for ``(u, v)`` with one projected,
Armijo-controlled descent step on ``zeta``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fields import Grid2, project_sphere
from .material import Material
from .reduced import (
    EnergyBreakdown,
    LoadSchedule,
    Loads,
    ReducedState,
    dissipation_d0,
    energy_e0,
    euclidean_gradient_f0,
    operators,
    tangent_project,
    work_l0,
)


@dataclass
class SolveOptions:
    max_outer_iters: int = 400
    grad_tol: float = 1e-7
    armijo_c: float = 1e-4
    armijo_backtrack: float = 0.5
    armijo_max: int = 40
    cg_tol: float = 1e-12
    cg_max_iters: int = 5000
    freeze_zeta: bool = False
    freeze_uv: bool = False
    seed: int = 0

    def __post_init__(self):
        if not (self.grad_tol > 0 and self.cg_tol > 0):
            raise ValueError("tolerances must be positive")
        if not (0 < self.armijo_c < 1 and 0 < self.armijo_backtrack < 1):
            raise ValueError("Armijo parameters must lie in (0, 1)")
        if self.max_outer_iters < 0 or self.armijo_max < 1 or self.cg_max_iters < 1:
            raise ValueError("iteration limits must be positive")


@dataclass
class SolveReport:
    iterations: int
    energy: float
    breakdown: EnergyBreakdown
    grad_sup: float
    history: list = field(default_factory=list)
    converged: bool = False
    stalled: bool = False
    cg_residual: float = 0.0

    def as_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "energy": self.energy,
            "membrane": self.breakdown.membrane,
            "bending": self.breakdown.bending,
            "exchange": self.breakdown.exchange,
            "magstat": self.breakdown.magnetostatic,
            "grad_sup": self.grad_sup,
            "converged": int(self.converged),
            "stalled": int(self.stalled),
        }


class Penalty:
    """Extra director-only term added to F0 (e.g. smoothed dissipation).

    Subclasses return the value, the Euclidean node gradient and a
    nonnegative per-node curvature estimate used in the preconditioner.
    """

    def value(self, zeta: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, zeta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def curvature(self, zeta: np.ndarray) -> np.ndarray:
        return np.zeros(zeta.shape[:-1])


class _Objective:
    """F0(t, .) at fixed loads plus an optional penalty."""

    def __init__(self, loads: Loads, grid: Grid2, mat: Material, penalty: Optional[Penalty] = None):
        self.loads, self.grid, self.mat, self.penalty = loads, grid, mat, penalty
        self.ops = operators(grid, mat)

    def __call__(self, s: ReducedState) -> float:
        val = energy_e0(s, self.grid, self.mat).total - work_l0(self.loads, s, self.grid)
        if self.penalty is not None:
            val += self.penalty.value(s.zeta)
        return val

    def gradient(self, s: ReducedState):
        gu, gv, gz = euclidean_gradient_f0(s, self.loads, self.grid, self.mat)
        if self.penalty is not None:
            gz = gz + self.penalty.gradient(s.zeta)
        bnd = self.grid.boundary_mask
        gu[bnd] = 0.0
        gv[bnd] = 0.0
        return gu, gv, tangent_project(s.zeta, gz)


def _cg(A, b, x0, tol, maxiter, M=None):
    x, info = spla.cg(A, b, x0=x0, rtol=tol, atol=tol * 1e-3, maxiter=maxiter, M=M)
    return x, float(np.linalg.norm(A @ x - b)), info


_PRECOND: dict = {}


def _ilu(A, key):
    M = _PRECOND.get(key)
    if M is None:
        ilu = spla.spilu(A.tocsc(), drop_tol=1e-6, fill_factor=20)
        M = _PRECOND[key] = spla.LinearOperator(A.shape, ilu.solve)
    return M


def solve_uv(state: ReducedState, loads: Loads, grid: Grid2, mat: Material, opts: SolveOptions):
    """Exact minimizer in ``(u, v)`` for fixed ``zeta``; returns (state, residual)."""
    ops = operators(grid, mat)
    n = grid.size
    iu, iv = ops.interior_u, ops.interior
    bu = ops.rhs_u(state.zeta, loads.f)[iu]
    bv = ops.rhs_v(loads.g)[iv]
    u0 = np.concatenate([state.u[..., 0].ravel(), state.u[..., 1].ravel()])[iu]
    v0 = state.v.ravel()[iv]
    Mu = _ilu(ops.Ku_int, ("u", grid, mat))
    Mv = _ilu(ops.Kv_int, ("v", grid, mat))
    xu, ru, _ = _cg(ops.Ku_int, bu, u0, opts.cg_tol, opts.cg_max_iters, Mu)
    xv, rv, _ = _cg(ops.Kv_int, bv, v0, opts.cg_tol, opts.cg_max_iters, Mv)
    uf = np.zeros(2 * n)
    uf[iu] = xu
    vf = np.zeros(n)
    vf[iv] = xv
    u = np.stack([uf[:n], uf[n:]], axis=-1).reshape(grid.shape + (2,))
    new = ReducedState(u, vf.reshape(grid.shape), state.zeta.copy())
    return new, max(ru, rv)


def _sobolev_solver(grid: Grid2, mat: Material, curvature: np.ndarray):
    """Factorized ``2 L + diag(w (1 + curvature))`` acting on one director component."""
    ops = operators(grid, mat)
    A = 2.0 * ops.Lzeta + sp.diags(ops.st.w * (1.0 + curvature.ravel()))
    return spla.factorized(A.tocsc())


def _sup(gu, gv, gz, opts: SolveOptions) -> float:
    parts = [0.0]
    if not opts.freeze_uv:
        parts += [np.abs(gu).max(), np.abs(gv).max()]
    if not opts.freeze_zeta:
        parts.append(np.abs(gz).max())
    return float(max(parts))


def _minimize(initial: ReducedState, loads: Loads, grid: Grid2, mat: Material, opts: SolveOptions,
              penalty: Optional[Penalty] = None):
    obj = _Objective(loads, grid, mat, penalty)
    state = initial.copy()
    energy = obj(state)
    history = [energy]
    alpha = 1.0
    converged = stalled = False
    cg_res = 0.0
    it = 0
    gu, gv, gz = obj.gradient(state)
    for it in range(1, opts.max_outer_iters + 1):
        if _sup(gu, gv, gz, opts) <= opts.grad_tol:
            converged = True
            it -= 1
            break
        progressed = False
        if not opts.freeze_uv:
            trial, cg_res = solve_uv(state, loads, grid, mat, opts)
            e_trial = obj(trial)
            if e_trial < energy:
                state, energy = trial, e_trial
                progressed = True
        if not opts.freeze_zeta:
            gu, gv, gz = obj.gradient(state)
            curv = penalty.curvature(state.zeta) if penalty is not None else np.zeros(grid.shape)
            solve = _sobolev_solver(grid, mat, curv)
            d = np.stack([-solve(gz[..., c].ravel()) for c in range(3)], axis=-1).reshape(gz.shape)
            d = tangent_project(state.zeta, d)
            slope = float(np.sum(gz * d))
            if slope < 0.0:
                step = min(2.0 * alpha, 64.0)
                accepted = False
                for _ in range(opts.armijo_max):
                    trial = ReducedState(state.u, state.v, project_sphere(state.zeta + step * d))
                    e_trial = obj(trial)
                    if e_trial <= energy + opts.armijo_c * step * slope and e_trial < energy:
                        accepted = True
                        break
                    step *= opts.armijo_backtrack
                if accepted:
                    state = ReducedState(state.u.copy(), state.v.copy(), trial.zeta)
                    energy, alpha = e_trial, step
                    progressed = True
        history.append(energy)
        gu, gv, gz = obj.gradient(state)
        if not progressed:
            if _sup(gu, gv, gz, opts) <= opts.grad_tol:
                converged = True
            else:
                stalled = True
            break
    else:
        converged = _sup(gu, gv, gz, opts) <= opts.grad_tol
    report = SolveReport(
        iterations=it,
        energy=energy,
        breakdown=energy_e0(state, grid, mat),
        grad_sup=_sup(gu, gv, gz, opts),
        history=history,
        converged=converged,
        stalled=stalled,
        cg_residual=cg_res,
    )
    return state, report


def minimize_f0(initial: ReducedState, t: float, schedule: LoadSchedule, grid: Grid2, mat: Material,
                opts: Optional[SolveOptions] = None):
    """Minimize F0(t, .) by block alternation; returns ``(state, SolveReport)``.

    The energy history is non-increasing by construction: trial updates that
    do not lower the energy are rejected.  A line search that fails to find
    descent ends the run with ``stalled=True`` rather than raising.
    """
    opts = opts or SolveOptions()
    initial.check(grid)
    return _minimize(initial, schedule.at(t), grid, mat, opts)


# ---------------------------------------------------------------------------
# stability sampling
# ---------------------------------------------------------------------------

def smooth_random_director(grid: Grid2, rng: np.random.Generator, modes: int = 3) -> np.ndarray:
    """Unit director built from a few random low Fourier modes per component."""
    x, y = grid.mesh
    out = np.zeros(grid.shape + (3,))
    for c in range(3):
        for _ in range(modes):
            kx, ky = rng.integers(0, 3, size=2)
            ph = rng.uniform(0, 2 * np.pi)
            out[..., c] += rng.normal() * np.cos(np.pi * (kx * x / grid.lx + ky * y / grid.ly) + ph)
        out[..., c] += 0.1 * rng.normal()
    return project_sphere(out)


def patch_flip(zeta: np.ndarray, grid: Grid2, rng: np.random.Generator) -> np.ndarray:
    """Flip the director sign on a random axis-aligned rectangle."""
    i0, i1 = np.sort(rng.integers(0, grid.nx + 1, size=2))
    j0, j1 = np.sort(rng.integers(0, grid.ny + 1, size=2))
    out = zeta.copy()
    out[i0:i1, j0:j1] *= -1.0
    return out


@dataclass
class StabilityReport:
    min_margin: float
    log: list

    def worst(self):
        return min(self.log, key=lambda r: r[1])


def check_stability(state: ReducedState, t: float, schedule: LoadSchedule, grid: Grid2, mat: Material,
                    n_competitors: int = 20, seed: int = 0, opts: Optional[SolveOptions] = None,
                    restarts: int = 1) -> StabilityReport:
    """Sampled global-stability margins ``F0(q') + D0(zeta, zeta') - F0(q)``.

    The family contains the state itself, the global sign flip, random patch
    flips, smooth random directors with re-solved ``(u, v)``, and solver
    restarts from random directors.  Sampling can only certify, never prove,
    stability; the minimum margin is reported as is.
    """
    rng = np.random.default_rng(seed)
    loads = schedule.at(t)
    opts = opts or SolveOptions()
    obj = _Objective(loads, grid, mat)
    f_ref = obj(state)

    log = []

    def add(name, comp):
        margin = obj(comp) + dissipation_d0(state.zeta, comp.zeta, grid) - f_ref
        log.append((name, float(margin)))

    add("self", state)
    add("flip", state.flipped())
    n_patch = n_competitors // 2
    for k in range(n_patch):
        comp = state.with_zeta(patch_flip(state.zeta, grid, rng))
        add(f"patch{k}", comp)
    for k in range(n_competitors - n_patch):
        z = smooth_random_director(grid, rng)
        comp, _ = solve_uv(ReducedState(state.u, state.v, z), loads, grid, mat, opts)
        add(f"smooth{k}", comp)
    for k in range(restarts):
        z = smooth_random_director(grid, rng)
        start, _ = solve_uv(ReducedState(state.u, state.v, z), loads, grid, mat, opts)
        comp, _ = _minimize(start, loads, grid, mat, opts)
        add(f"restart{k}", comp)
    return StabilityReport(min(m for _, m in log), log)
