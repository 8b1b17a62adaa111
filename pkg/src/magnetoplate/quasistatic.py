"""Rate-independent evolution by approximate incremental minimization.

Each step minimizes ``F0(t_i, q) + D_eps(zeta_prev, zeta)`` where ``D_eps`` is
a Huber-smoothed L1 dissipation.  The accepted state is then audited with the
exact L1 dissipation against a finite competitor family; a step is accepted
when no competitor beats it by more than ``dt * sigma``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import StepQualityError
from .fields import Grid2
from .material import Material
from .reduced import (
    LoadSchedule,
    ReducedState,
    dissipation_d0,
    energy_e0,
    power_integral,
    total_f0,
    work_l0,
)
from .static_solver import Penalty, SolveOptions, _minimize, solve_uv

TRACE_COLUMNS = (
    "i", "t", "F0", "membrane", "bending", "exchange", "magstat",
    "L0", "d_inc", "var_cum", "power_cum", "balance_resid",
)


@dataclass(frozen=True)
class Partition:
    times: tuple

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or len(t) < 2:
            raise ValueError("a partition needs at least two times")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ValueError("partition times must start at 0 and increase strictly")
        object.__setattr__(self, "times", tuple(float(s) for s in t))

    @classmethod
    def uniform(cls, T: float, nsteps: int) -> "Partition":
        if nsteps < 1:
            raise ValueError("nsteps must be positive")
        return cls(tuple(np.linspace(0.0, T, nsteps + 1)))

    @property
    def n(self) -> int:
        return len(self.times) - 1

    @property
    def T(self) -> float:
        return self.times[-1]

    @property
    def fineness(self) -> float:
        return float(np.max(np.diff(self.times)))


class HuberDissipation(Penalty):
    """``int sqrt(|zeta - zeta_prev|^2 + eps^2) - eps`` with trapezoidal weights."""

    def __init__(self, zeta_prev: np.ndarray, grid: Grid2, eps: float):
        if eps <= 0:
            raise ValueError("eps must be positive")
        self.zp, self.grid, self.eps = zeta_prev, grid, eps
        self.w = grid.weights

    def _root(self, zeta):
        return np.sqrt(np.sum((zeta - self.zp) ** 2, axis=-1) + self.eps**2)

    def value(self, zeta):
        return float(np.sum(self.w * (self._root(zeta) - self.eps)))

    def gradient(self, zeta):
        return (self.w / self._root(zeta))[..., None] * (zeta - self.zp)

    def curvature(self, zeta):
        return 1.0 / self._root(zeta)


def huber_d(z1: np.ndarray, z2: np.ndarray, grid: Grid2, eps: float) -> float:
    return HuberDissipation(z1, grid, eps).value(z2)


@dataclass
class StepReport:
    t: float
    eps: float
    refinements: int
    gap: float
    objective: float
    best_competitor: str
    competitors: list
    d_inc: float
    solver_converged: bool


def _g0(state, prev, t, schedule, grid, mat):
    return total_f0(t, state, schedule, grid, mat) + dissipation_d0(prev.zeta, state.zeta, grid)


def aimp_step(prev: ReducedState, t_i: float, dt: float, sigma: float, schedule: LoadSchedule,
              grid: Grid2, mat: Material, opts: Optional[SolveOptions] = None,
              huber_eps: float = 1e-4, max_refinements: int = 5, cold_start: Optional[ReducedState] = None):
    """One approximate incremental step; returns ``(state, StepReport)``.

    Raises
    ------
    StepQualityError
        If some competitor still beats the accepted state by more than
        ``dt * sigma`` after ``max_refinements`` halvings of ``huber_eps``.
    """
    if dt <= 0 or sigma <= 0:
        raise ValueError("dt and sigma must be positive")
    opts = opts or SolveOptions()
    loads = schedule.at(t_i)
    slack = dt * sigma

    resolved, _ = solve_uv(prev, loads, grid, mat, opts)
    if cold_start is None:
        cold_start = ReducedState.flat(grid)
    cold_init, _ = solve_uv(cold_start, loads, grid, mat, opts)

    eps = huber_eps
    start = prev
    for ref in range(max_refinements + 1):
        pen = HuberDissipation(prev.zeta, grid, eps)
        cand, rep = _minimize(start, loads, grid, mat, opts, pen)
        cold, _ = _minimize(cold_init, loads, grid, mat, opts, pen)
        family = [("prev", prev), ("prev_resolved", resolved), ("cold", cold), ("warm", cand)]
        values = [(name, _g0(s, prev, t_i, schedule, grid, mat)) for name, s in family]
        g_cand = values[-1][1]
        best_name, best_val = min(values, key=lambda nv: nv[1])
        gap = g_cand - best_val
        if gap <= slack:
            report = StepReport(
                t=t_i, eps=eps, refinements=ref, gap=gap, objective=g_cand,
                best_competitor=best_name, competitors=values,
                d_inc=dissipation_d0(prev.zeta, cand.zeta, grid), solver_converged=rep.converged,
            )
            return cand, report
        start = dict(family)[best_name]
        eps *= 0.5
    raise StepQualityError(f"step at t={t_i} not certified: gap {gap:.3e} > {slack:.3e}", gap=gap)


@dataclass
class EvolutionTrace:
    partition: Partition
    states: list = field(default_factory=list)
    breakdowns: list = field(default_factory=list)
    f0: list = field(default_factory=list)
    l0: list = field(default_factory=list)
    d_inc: list = field(default_factory=list)
    var_cum: list = field(default_factory=list)
    power_cum: list = field(default_factory=list)
    steps: list = field(default_factory=list)

    def __len__(self):
        return len(self.states)

    @property
    def times(self):
        return self.partition.times[: len(self.states)]

    def at(self, t: float) -> ReducedState:
        """Right-continuous piecewise-constant interpolant."""
        times = np.asarray(self.times)
        if t < times[0]:
            raise ValueError("time before trace start")
        k = int(np.searchsorted(times, t, side="right")) - 1
        return self.states[k]

    def balance_residual(self, i: int) -> float:
        return self.f0[i] + self.var_cum[i] - self.f0[0] - self.power_cum[i]

    def rows(self):
        for i in range(len(self.states)):
            b = self.breakdowns[i]
            yield (i, self.times[i], self.f0[i], b.membrane, b.bending, b.exchange, b.magnetostatic,
                   self.l0[i], self.d_inc[i], self.var_cum[i], self.power_cum[i], self.balance_residual(i))

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(TRACE_COLUMNS)
        for row in self.rows():
            wr.writerow([row[0]] + [repr(float(x)) for x in row[1:]])
        return buf.getvalue()


def read_trace_csv(text: str) -> list:
    rd = csv.reader(io.StringIO(text))
    header = next(rd)
    if tuple(header) != TRACE_COLUMNS:
        raise ValueError("unexpected trace header")
    return [dict(zip(header, [int(r[0])] + [float(x) for x in r[1:]])) for r in rd]


def _append(trace, state, t, schedule, grid, mat, d_inc, power):
    b = energy_e0(state, grid, mat)
    l0 = work_l0(schedule.at(t), state, grid)
    trace.states.append(state)
    trace.breakdowns.append(b)
    trace.l0.append(l0)
    trace.f0.append(b.total - l0)
    trace.d_inc.append(d_inc)
    trace.var_cum.append((trace.var_cum[-1] if trace.var_cum else 0.0) + d_inc)
    trace.power_cum.append((trace.power_cum[-1] if trace.power_cum else 0.0) + power)


def evolve(initial: ReducedState, partition: Partition, sigma: float, schedule: LoadSchedule,
           grid: Grid2, mat: Material, opts: Optional[SolveOptions] = None, huber_eps: float = 1e-4) -> EvolutionTrace:
    """Run ``aimp_step`` over the partition and assemble the trace.

    On a step-quality failure the partial trace is attached to the raised
    error as ``partial_trace``.
    """
    if partition.T > schedule.T + 1e-14:
        raise ValueError("partition extends beyond the load schedule")
    initial.check(grid)
    trace = EvolutionTrace(partition)
    _append(trace, initial, 0.0, schedule, grid, mat, 0.0, 0.0)
    prev = initial
    times = partition.times
    for i in range(1, len(times)):
        t0, t1 = times[i - 1], times[i]
        try:
            new, rep = aimp_step(prev, t1, t1 - t0, sigma, schedule, grid, mat, opts, huber_eps)
        except StepQualityError as exc:
            exc.partial_trace = trace
            raise
        power = power_integral(t0, t1, prev, schedule, grid)
        _append(trace, new, t1, schedule, grid, mat, rep.d_inc, power)
        trace.steps.append(rep)
        prev = new
    return trace


@dataclass
class BalanceReport:
    times: list
    aimp2_resid: list
    balance_resid: list
    load_rate: list
    slack: list
    apriori_ratio: list

    @property
    def max_aimp2(self) -> float:
        return max(self.aimp2_resid, default=0.0)

    def apriori_flagged(self) -> bool:
        return any(r > 1.0 for r in self.apriori_ratio)


def load_rate(schedule: LoadSchedule, t: float, grid: Grid2) -> float:
    """``|f'|_2 + |g'|_2 + |h'|_2`` at ``t`` (right derivative)."""
    return float(sum(schedule.rate(t).l2_norms(grid)))


def energy_balance_report(trace: EvolutionTrace, schedule: LoadSchedule, grid: Grid2, mat: Material,
                          sigma: float, C: float = 1.0, c: float = 1.0) -> BalanceReport:
    """Per-step diagnostics of the incremental energy inequality and the balance.

    ``aimp2_resid[i]`` is ``F0(t_i, q_i) + D0(q_{i-1}, q_i) - dt*sigma
    - F0(t_{i-1}, q_{i-1}) - int dF0/dt(s, q_{i-1}) ds`` and must be
    nonpositive up to solver tolerance.  ``apriori_ratio[i]`` compares the
    left side of the a priori growth bound to its right side with the
    integrated rate ``K(t) = C int l``; values above 1 flag a violation.
    """
    times = list(trace.times)
    aimp2 = [0.0]
    slack = [0.0]
    rates = [load_rate(schedule, times[0], grid)]
    K = 0.0
    ratio = [1.0]
    for i in range(1, len(times)):
        dt = times[i] - times[i - 1]
        power = power_integral(times[i - 1], times[i], trace.states[i - 1], schedule, grid)
        aimp2.append(trace.f0[i] + trace.d_inc[i] - dt * sigma - trace.f0[i - 1] - power)
        slack.append(dt * sigma)
        pts = schedule.breakpoints(times[i - 1], times[i])
        K += C * sum(load_rate(schedule, a, grid) * (b - a) for a, b in zip(pts[:-1], pts[1:]))
        rates.append(load_rate(schedule, min(times[i], schedule.T), grid))
        lhs = trace.f0[i] + c + trace.var_cum[i]
        with np.errstate(over="ignore"):
            # huge C: exp(K) -> inf makes the bound trivially true
            rhs = (trace.f0[0] + c + times[i] * sigma) * np.exp(K)
        ratio.append(lhs / rhs if rhs > 0 else np.inf)
    resid = [trace.balance_residual(i) for i in range(len(times))]
    return BalanceReport(times, aimp2, resid, rates, slack, ratio)


def apriori_flag(trace: EvolutionTrace, schedule: LoadSchedule, grid: Grid2, mat: Material,
                 sigma: float, c: float = 1.0, C_max: float = 1e6) -> bool:
    """True only when the growth bound fails even with the largest constant ``C_max``."""
    return energy_balance_report(trace, schedule, grid, mat, sigma, C=C_max, c=c).apriori_flagged()
