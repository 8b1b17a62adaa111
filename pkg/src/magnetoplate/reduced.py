"""Reduced plate model: energy, loads, dissipation and the discrete gradient.

The reduced energy of a state ``(u, v, zeta)`` on the section is

    E0 = 1/2  int Qred(sym grad u - zeta' (x) zeta')
       + 1/24 int Qred(hess v)
       +      int |grad zeta|^2
       + 1/2  int (zeta^3)^2

discretized with the stencils of :mod:`magnetoplate.fields` and trapezoidal
quadrature.  Loads enter linearly through ``L0 = int f.u + g v + h.zeta``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import GridMismatchError, ScheduleError
from .fields import Grid2, integrate2, stencils
from .material import Material

UNIT_TOL = 1e-12


@dataclass
class ReducedState:
    """In-plane displacement ``u`` (nx, ny, 2), deflection ``v`` (nx, ny), director ``zeta`` (nx, ny, 3)."""

    u: np.ndarray
    v: np.ndarray
    zeta: np.ndarray

    @classmethod
    def flat(cls, grid: Grid2, direction=(0.0, 0.0, 1.0)) -> "ReducedState":
        d = np.asarray(direction, dtype=float)
        d = d / np.linalg.norm(d)
        return cls(
            np.zeros(grid.shape + (2,)),
            np.zeros(grid.shape),
            np.broadcast_to(d, grid.shape + (3,)).copy(),
        )

    def copy(self) -> "ReducedState":
        return ReducedState(self.u.copy(), self.v.copy(), self.zeta.copy())

    def with_zeta(self, zeta: np.ndarray) -> "ReducedState":
        return ReducedState(self.u.copy(), self.v.copy(), np.array(zeta, dtype=float))

    def flipped(self) -> "ReducedState":
        return self.with_zeta(-self.zeta)

    def check(self, grid: Grid2) -> None:
        """Raise if the state violates the clamped/unit-director invariants."""
        if self.u.shape != grid.shape + (2,) or self.v.shape != grid.shape or self.zeta.shape != grid.shape + (3,):
            raise GridMismatchError("state does not live on the given grid")
        bnd = grid.boundary_mask
        if np.any(self.u[bnd] != 0.0) or np.any(self.v[bnd] != 0.0):
            raise ValueError("u and v must vanish on the clamped boundary")
        if np.any(np.abs(np.linalg.norm(self.zeta, axis=-1) - 1.0) > UNIT_TOL):
            raise ValueError("zeta must be unit length at every node")


@dataclass
class Loads:
    """Limit loads: horizontal force ``f`` (nx, ny, 2), vertical force ``g`` (nx, ny), field ``hfield`` (nx, ny, 3)."""

    f: np.ndarray
    g: np.ndarray
    hfield: np.ndarray

    @classmethod
    def zeros(cls, grid: Grid2) -> "Loads":
        return cls(np.zeros(grid.shape + (2,)), np.zeros(grid.shape), np.zeros(grid.shape + (3,)))

    @classmethod
    def uniform(cls, grid: Grid2, f=(0.0, 0.0), g=0.0, h=(0.0, 0.0, 0.0)) -> "Loads":
        return cls(
            np.broadcast_to(np.asarray(f, float), grid.shape + (2,)).copy(),
            np.full(grid.shape, float(g)),
            np.broadcast_to(np.asarray(h, float), grid.shape + (3,)).copy(),
        )

    def combine(self, other: "Loads", a: float, b: float) -> "Loads":
        """``a * self + b * other``."""
        return Loads(a * self.f + b * other.f, a * self.g + b * other.g, a * self.hfield + b * other.hfield)

    def scaled(self, s: float) -> "Loads":
        return Loads(s * self.f, s * self.g, s * self.hfield)

    def l2_norms(self, grid: Grid2) -> tuple[float, float, float]:
        return (
            np.sqrt(integrate2(np.sum(self.f**2, axis=-1), grid)),
            np.sqrt(integrate2(self.g**2, grid)),
            np.sqrt(integrate2(np.sum(self.hfield**2, axis=-1), grid)),
        )


@dataclass
class LoadSchedule:
    """Piecewise-linear loads between strictly increasing knot times."""

    times: np.ndarray
    loads: Sequence[Loads]

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1 or len(self.times) < 2:
            raise ScheduleError("a schedule needs at least two knot times")
        if len(self.loads) != len(self.times):
            raise ScheduleError("one Loads per knot time is required")
        if np.any(np.diff(self.times) <= 0):
            raise ScheduleError("knot times must be strictly increasing")
        if self.times[0] != 0.0:
            raise ScheduleError("schedules start at t = 0")
        for ld in self.loads:
            if not (np.all(np.isfinite(ld.f)) and np.all(np.isfinite(ld.g)) and np.all(np.isfinite(ld.hfield))):
                raise ScheduleError("loads must be finite")

    @classmethod
    def constant(cls, loads: Loads, T: float = 1.0) -> "LoadSchedule":
        return cls(np.array([0.0, T]), [loads, loads])

    @classmethod
    def zeros(cls, grid: Grid2, T: float = 1.0) -> "LoadSchedule":
        return cls.constant(Loads.zeros(grid), T)

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def _interval(self, t: float) -> int:
        if not (0.0 <= t <= self.T):
            raise ScheduleError(f"t = {t} outside schedule [0, {self.T}]")
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        return min(k, len(self.times) - 2)

    def at(self, t: float) -> Loads:
        k = self._interval(t)
        t0, t1 = self.times[k], self.times[k + 1]
        s = (t - t0) / (t1 - t0)
        if s == 0.0:
            return self.loads[k].scaled(1.0)
        if s == 1.0:
            return self.loads[k + 1].scaled(1.0)
        return self.loads[k].combine(self.loads[k + 1], 1.0 - s, s)

    def rate(self, t: float) -> Loads:
        """Time derivative; right derivative at interior knots, left derivative at T."""
        k = self._interval(t)
        dt = self.times[k + 1] - self.times[k]
        return self.loads[k + 1].combine(self.loads[k], 1.0 / dt, -1.0 / dt)

    def breakpoints(self, a: float, b: float) -> np.ndarray:
        """``a``, every knot strictly inside ``(a, b)``, and ``b``."""
        inner = self.times[(self.times > a) & (self.times < b)]
        return np.concatenate([[a], inner, [b]])


class EnergyBreakdown(NamedTuple):
    membrane: float
    bending: float
    exchange: float
    magnetostatic: float

    @property
    def total(self) -> float:
        return self.membrane + self.bending + self.exchange + self.magnetostatic


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------

class ReducedOperators:
    """Assembled sparse operators for one (grid, material) pair."""

    def __init__(self, grid: Grid2, mat: Material):
        self.grid, self.mat = grid, mat
        st = stencils(grid)
        self.st = st
        n = grid.size
        Z = sp.csr_matrix((n, n))
        # engineering strain (e11, e22, 2 e12) from (ux, uy)
        self.Bop = sp.bmat([[st.Dx, Z], [Z, st.Dy], [st.Dy, st.Dx]], format="csr")
        # curvature (k11, k22, 2 k12) from v
        self.Hop = sp.vstack([st.Hxx, st.Hyy, 2.0 * st.Hxy], format="csr")
        lr = mat.lam_red
        C = np.array([[2 * mat.mu + lr, lr, 0.0], [lr, 2 * mat.mu + lr, 0.0], [0.0, 0.0, mat.mu]])
        self.C = C
        self.C_chol = np.linalg.cholesky(C)
        self.CW = sp.kron(sp.csr_matrix(C), st.W, format="csr")
        self.Ku = (self.Bop.T @ self.CW @ self.Bop).tocsr()
        self.Kv = ((self.Hop.T @ self.CW @ self.Hop) / 12.0).tocsr()
        self.Lzeta = (st.Dx.T @ st.W @ st.Dx + st.Dy.T @ st.W @ st.Dy).tocsr()
        interior = ~grid.boundary_mask.ravel()
        self.interior = np.flatnonzero(interior)
        self.interior_u = np.concatenate([self.interior, self.interior + n])
        self.Ku_int = self.Ku[self.interior_u][:, self.interior_u].tocsr()
        self.Kv_int = self.Kv[self.interior][:, self.interior].tocsr()

    def membrane_prestrain(self, zeta: np.ndarray) -> np.ndarray:
        z = zeta.reshape(-1, 3)
        return np.concatenate([z[:, 0] ** 2, z[:, 1] ** 2, 2.0 * z[:, 0] * z[:, 1]])

    def rhs_u(self, zeta: np.ndarray, f: np.ndarray) -> np.ndarray:
        w = self.st.w
        force = np.concatenate([w * f[..., 0].ravel(), w * f[..., 1].ravel()])
        return self.Bop.T @ (self.CW @ self.membrane_prestrain(zeta)) + force

    def rhs_v(self, g: np.ndarray) -> np.ndarray:
        return self.st.w * g.ravel()


_OPS_CACHE: dict[tuple[Grid2, Material], ReducedOperators] = {}


def operators(grid: Grid2, mat: Material) -> ReducedOperators:
    key = (grid, mat)
    ops = _OPS_CACHE.get(key)
    if ops is None:
        ops = _OPS_CACHE[key] = ReducedOperators(grid, mat)
    return ops


def _check_state_grid(state: ReducedState, grid: Grid2) -> None:
    if state.u.shape != grid.shape + (2,) or state.v.shape != grid.shape or state.zeta.shape != grid.shape + (3,):
        raise GridMismatchError("state does not live on the given grid")


def _flat_u(u: np.ndarray) -> np.ndarray:
    return np.concatenate([u[..., 0].ravel(), u[..., 1].ravel()])


# ---------------------------------------------------------------------------
# energies
# ---------------------------------------------------------------------------

def _weighted_form(vec: np.ndarray, ops: ReducedOperators) -> float:
    # sum_n w_n e_n^T C e_n as a sum of squares, so it is never negative
    e = vec.reshape(3, -1)
    return float(ops.st.w @ np.sum((ops.C_chol.T @ e) ** 2, axis=0))


def energy_e0(state: ReducedState, grid: Grid2, mat: Material) -> EnergyBreakdown:
    """Reduced energy split into membrane, bending, exchange and magnetostatic parts."""
    _check_state_grid(state, grid)
    ops = operators(grid, mat)
    st = ops.st
    eps = ops.Bop @ _flat_u(state.u) - ops.membrane_prestrain(state.zeta)
    membrane = 0.5 * _weighted_form(eps, ops)
    bending = _weighted_form(ops.Hop @ state.v.ravel(), ops) / 24.0
    z = state.zeta.reshape(-1, 3)
    exchange = float(st.w @ ((st.Dx @ z) ** 2 + (st.Dy @ z) ** 2).sum(axis=1))
    magstat = 0.5 * float(st.w @ (z[:, 2] ** 2))
    return EnergyBreakdown(membrane, bending, exchange, magstat)


def work_l0(loads: Loads, state: ReducedState, grid: Grid2) -> float:
    """Work of the loads: ``int f.u + int g v + int h.zeta``."""
    _check_state_grid(state, grid)
    if loads.f.shape != state.u.shape or loads.g.shape != state.v.shape or loads.hfield.shape != state.zeta.shape:
        raise GridMismatchError("loads do not live on the given grid")
    dens = np.sum(loads.f * state.u, axis=-1) + loads.g * state.v + np.sum(loads.hfield * state.zeta, axis=-1)
    return integrate2(dens, grid)


def total_f0(t: float, state: ReducedState, schedule: LoadSchedule, grid: Grid2, mat: Material) -> float:
    return energy_e0(state, grid, mat).total - work_l0(schedule.at(t), state, grid)


def power_dt_f0(t: float, state: ReducedState, schedule: LoadSchedule, grid: Grid2) -> float:
    """Partial time derivative of F0 at fixed state (right derivative at knots)."""
    return -work_l0(schedule.rate(t), state, grid)


def power_integral(a: float, b: float, state: ReducedState, schedule: LoadSchedule, grid: Grid2) -> float:
    """Exact ``int_a^b dF0/dt(s, state) ds`` for piecewise-linear loads."""
    pts = schedule.breakpoints(a, b)
    return float(sum(power_dt_f0(s0, state, schedule, grid) * (s1 - s0) for s0, s1 in zip(pts[:-1], pts[1:])))


def dissipation_d0(z1: np.ndarray, z2: np.ndarray, grid: Grid2) -> float:
    """L1 distance ``int |z1 - z2|`` between director fields."""
    z1, z2 = np.asarray(z1, float), np.asarray(z2, float)
    if z1.shape != grid.shape + (3,) or z2.shape != z1.shape:
        raise GridMismatchError("director fields do not live on the given grid")
    return integrate2(np.linalg.norm(z1 - z2, axis=-1), grid)


def var_d0(trace: Sequence[np.ndarray], window: tuple[int, int] | None, grid: Grid2) -> float:
    """Total variation of a piecewise-constant director trace over ``trace[k0..k1]``."""
    if len(trace) == 0:
        raise ValueError("empty trace")
    k0, k1 = (0, len(trace) - 1) if window is None else window
    if k1 < k0 or k0 < 0 or k1 >= len(trace):
        raise ValueError(f"empty or invalid window {window}")
    return float(sum(dissipation_d0(trace[i - 1], trace[i], grid) for i in range(k0 + 1, k1 + 1)))


# ---------------------------------------------------------------------------
# gradient
# ---------------------------------------------------------------------------

@dataclass
class Gradient:
    gu: np.ndarray
    gv: np.ndarray
    gz: np.ndarray

    def sup_norm(self, freeze_uv: bool = False, freeze_zeta: bool = False) -> float:
        parts = []
        if not freeze_uv:
            parts += [np.abs(self.gu).max(initial=0.0), np.abs(self.gv).max(initial=0.0)]
        if not freeze_zeta:
            parts.append(np.abs(self.gz).max(initial=0.0))
        return float(max(parts, default=0.0))


def euclidean_gradient_f0(state: ReducedState, loads: Loads, grid: Grid2, mat: Material):
    """Unconstrained node-value gradients ``(gu, gv, gz)`` of E0 - L0."""
    ops = operators(grid, mat)
    st = ops.st
    w = st.w
    n = grid.size
    z = state.zeta.reshape(-1, 3)
    eps = ops.Bop @ _flat_u(state.u) - ops.membrane_prestrain(state.zeta)
    sig = ops.CW @ eps
    gu_flat = ops.Bop.T @ sig
    gu = np.stack([gu_flat[:n], gu_flat[n:]], axis=-1).reshape(grid.shape + (2,)) - w.reshape(grid.shape)[..., None] * loads.f
    gv = (ops.Kv @ state.v.ravel()).reshape(grid.shape) - w.reshape(grid.shape) * loads.g
    s1, s2, s3 = sig[:n], sig[n : 2 * n], sig[2 * n :]
    gz = np.empty((n, 3))
    gz[:, 0] = -2.0 * (s1 * z[:, 0] + s3 * z[:, 1])
    gz[:, 1] = -2.0 * (s2 * z[:, 1] + s3 * z[:, 0])
    gz[:, 2] = 0.0
    for c in range(3):
        gz[:, c] += 2.0 * (ops.Lzeta @ z[:, c])
    gz[:, 2] += w * z[:, 2]
    gz -= w[:, None] * loads.hfield.reshape(-1, 3)
    return gu, gv, gz.reshape(grid.shape + (3,))


def tangent_project(zeta: np.ndarray, g: np.ndarray) -> np.ndarray:
    return g - np.sum(g * zeta, axis=-1, keepdims=True) * zeta


def gradient_f0(t: float, state: ReducedState, schedule: LoadSchedule, grid: Grid2, mat: Material) -> Gradient:
    """Discrete gradient of F0(t, .) with respect to node values.

    ``gu`` and ``gv`` vanish on clamped boundary nodes; ``gz`` is projected
    per node onto the tangent plane of the sphere at ``zeta``.
    """
    _check_state_grid(state, grid)
    gu, gv, gz = euclidean_gradient_f0(state, schedule.at(t), grid, mat)
    bnd = grid.boundary_mask
    gu[bnd] = 0.0
    gv[bnd] = 0.0
    return Gradient(gu, gv, tangent_project(state.zeta, gz))
