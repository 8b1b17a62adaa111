import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from magnetoplate.errors import GridMismatchError, ScheduleError
from magnetoplate.fields import Grid2, project_sphere
from magnetoplate.material import Material
from magnetoplate.reduced import (
    LoadSchedule,
    Loads,
    ReducedState,
    dissipation_d0,
    energy_e0,
    gradient_f0,
    power_dt_f0,
    power_integral,
    total_f0,
    var_d0,
    work_l0,
)

G9 = Grid2(9, 9)
seeds = st.integers(0, 2**31 - 1)


def random_state(grid, rng, amp=0.1):
    s = ReducedState.flat(grid)
    inner = ~grid.boundary_mask
    s.u[inner] = amp * rng.standard_normal((int(inner.sum()), 2))
    s.v[inner] = amp * rng.standard_normal(int(inner.sum()))
    s.zeta = project_sphere(rng.standard_normal(grid.shape + (3,)))
    return s


def random_loads(grid, rng):
    return Loads(rng.standard_normal(grid.shape + (2,)), rng.standard_normal(grid.shape),
                 rng.standard_normal(grid.shape + (3,)))


def trapezoid_1d(f, n):
    x = np.linspace(0, 1, n)
    w = np.full(n, 1.0 / (n - 1))
    w[[0, -1]] *= 0.5
    return float(np.sum(w * f(x)))


def test_energy_examples():
    e = energy_e0(ReducedState.flat(G9), G9, Material())
    assert tuple(e) == (0.0, 0.0, 0.0, 0.5) and e.total == 0.5
    e = energy_e0(ReducedState.flat(G9, (1.0, 0.0, 0.0)), G9, Material())
    assert e.membrane == pytest.approx(4 / 3, rel=1e-14) and e.total == pytest.approx(4 / 3, rel=1e-14)


def bending_oracle(mat):
    """(1/24) int Q_red(hess v) for v = x^2(1-x)^2 y^2(1-y)^2 by Gauss-Legendre (exact for polynomials)."""
    t, w = np.polynomial.legendre.leggauss(40)
    t, w = 0.5 * (t + 1), 0.5 * w
    x, y = np.meshgrid(t, t, indexing="ij")
    W = np.outer(w, w)
    p, dp, d2p = (lambda s: s**2 * (1 - s) ** 2), (lambda s: 2 * s - 6 * s**2 + 4 * s**3), (lambda s: 2 - 12 * s + 12 * s**2)
    vxx, vyy, vxy = d2p(x) * p(y), p(x) * d2p(y), dp(x) * dp(y)
    q = 2 * mat.mu * (vxx**2 + vyy**2 + 2 * vxy**2) + mat.lam_red * (vxx + vyy) ** 2
    return float(np.sum(W * q)) / 24.0


def test_bending_energy_second_order():
    mat = Material()
    ref = bending_oracle(mat)
    errs = []
    for n in (17, 33, 65):
        g = Grid2(n, n)
        x, y = g.mesh
        s = ReducedState.flat(g)
        s.v = x**2 * (1 - x) ** 2 * y**2 * (1 - y) ** 2
        e = energy_e0(s, g, mat)
        assert e.total == pytest.approx(0.5 + e.bending)
        errs.append(abs(e.bending - ref))
    assert errs[-1] < 1e-2 * ref
    for a, b in zip(errs[:-1], errs[1:]):
        assert 3.0 < a / b < 5.0


def test_work_examples():
    g = Grid2(13, 13)
    s = ReducedState.flat(g)
    assert work_l0(Loads.zeros(g), s, g) == 0.0
    assert work_l0(Loads.uniform(g, h=(0, 0, 1)), s, g) == pytest.approx(g.area)
    x, y = g.mesh
    s.v = x * (1 - x) * y * (1 - y)
    # trapezoid of x(1-x) is 1/6 - dx^2/6; exact integral (1/6)^2 = 1/36
    tr = trapezoid_1d(lambda t: t * (1 - t), 13)
    assert tr == pytest.approx(1 / 6 - g.dx**2 / 6, abs=1e-15)
    assert work_l0(Loads.uniform(g, g=1.0), s, g) == pytest.approx(tr**2, abs=1e-15)
    assert abs(tr**2 - 1 / 36) < 2 * g.dx**2 / 36


def test_total_and_power_examples():
    g = G9
    mat = Material()
    sched = LoadSchedule(np.array([0.0, 1.0]), [Loads.zeros(g), Loads.uniform(g, h=(0, 0, 1))])
    s3, s1 = ReducedState.flat(g), ReducedState.flat(g, (1, 0, 0))
    assert total_f0(0.3, s3, LoadSchedule.zeros(g), g, mat) == energy_e0(s3, g, mat).total
    for t in (0.0, 0.25, 1.0):
        assert total_f0(t, s3, sched, g, mat) == pytest.approx(0.5 - t)
        assert total_f0(t, s1, sched, g, mat) == pytest.approx(4 / 3)
    assert power_dt_f0(0.5, s3, LoadSchedule.constant(random_loads(g, np.random.default_rng(0))), g) == 0.0
    assert power_dt_f0(0.5, s3, sched, g) == pytest.approx(-g.area)
    x, y = g.mesh
    su = ReducedState.flat(g)
    su.u[..., 0] = x * (1 - x) * y * (1 - y)
    ramp = LoadSchedule(np.array([0.0, 1.0]), [Loads.zeros(g), Loads.uniform(g, f=(1, 0))])
    tr = trapezoid_1d(lambda t: t * (1 - t), 9)
    assert power_dt_f0(0.2, su, ramp, g) == pytest.approx(-(tr**2), abs=1e-15)


def test_schedule_validation():
    g = G9
    with pytest.raises(ScheduleError):
        LoadSchedule(np.array([0.0, 0.0]), [Loads.zeros(g)] * 2)
    with pytest.raises(ScheduleError):
        LoadSchedule(np.array([0.5, 1.0]), [Loads.zeros(g)] * 2)
    with pytest.raises(ScheduleError):
        LoadSchedule.zeros(g).at(1.5)


def test_dissipation_examples():
    g = G9
    e3 = ReducedState.flat(g).zeta
    assert dissipation_d0(e3, e3, g) == 0.0
    assert dissipation_d0(e3, -e3, g) == pytest.approx(2.0)
    e1, e2 = ReducedState.flat(g, (1, 0, 0)).zeta, ReducedState.flat(g, (0, 1, 0)).zeta
    assert dissipation_d0(e1, e2, g) == pytest.approx(np.sqrt(2) * g.area)
    assert var_d0([e3, e3, e3], None, g) == 0.0
    assert var_d0([e3, -e3], None, g) == pytest.approx(2.0)
    with pytest.raises(GridMismatchError):
        dissipation_d0(e3[:-1], e3[:-1], g)


def test_gradient_vanishes_at_flat_state():
    g = G9
    gr = gradient_f0(0.0, ReducedState.flat(g), LoadSchedule.zeros(g), g, Material())
    assert gr.sup_norm() == 0.0


@given(seeds)
def test_energy_nonnegative_and_even(seed):
    rng = np.random.default_rng(seed)
    s = random_state(G9, rng)
    e = energy_e0(s, G9, Material())
    assert min(e) >= 0.0
    assert energy_e0(s.flipped(), G9, Material()).total == e.total


@given(seeds)
def test_work_affine_in_loads(seed):
    rng = np.random.default_rng(seed)
    s = random_state(G9, rng)
    ld = random_loads(G9, rng)
    mat = Material()
    e = energy_e0(s, G9, mat).total
    f1 = total_f0(0.0, s, LoadSchedule.constant(ld), G9, mat)
    f2 = total_f0(0.0, s, LoadSchedule.constant(ld.scaled(2.0)), G9, mat)
    assert e - f2 == pytest.approx(2 * (e - f1), rel=1e-12, abs=1e-12)


@given(seeds, st.floats(0.0, 0.9), st.floats(0.05, 1.0))
def test_power_integral_piecewise_exact(seed, a, length):
    rng = np.random.default_rng(seed)
    g = G9
    s = random_state(g, rng)
    sched = LoadSchedule(np.array([0.0, 0.3, 1.0, 2.0]), [random_loads(g, rng) for _ in range(4)])
    b = min(a + length, 2.0)
    pi = power_integral(a, b, s, sched, g)
    # F0 is affine in t between knots, so the integral is the exact F0 difference
    mat = Material()
    assert pi == pytest.approx(total_f0(b, s, sched, g, mat) - total_f0(a, s, sched, g, mat), abs=1e-10)


@given(seeds)
def test_dissipation_metric_axioms(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (project_sphere(rng.standard_normal(G9.shape + (3,))) for _ in range(3))
    assert dissipation_d0(a, b, G9) == dissipation_d0(b, a, G9)
    assert dissipation_d0(a, a, G9) == 0.0
    assert dissipation_d0(a, c, G9) <= dissipation_d0(a, b, G9) + dissipation_d0(b, c, G9) + 1e-12


@given(seeds, st.integers(1, 4))
def test_var_additive(seed, split):
    rng = np.random.default_rng(seed)
    tr = [project_sphere(rng.standard_normal(G9.shape + (3,))) for _ in range(6)]
    whole = var_d0(tr, None, G9)
    assert whole == pytest.approx(var_d0(tr, (0, split), G9) + var_d0(tr, (split, 5), G9), rel=1e-14)


@given(seeds)
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    g = Grid2(6, 7)
    mat = Material(mu=rng.uniform(0.5, 2), lam=rng.uniform(0, 2))
    s = random_state(g, rng)
    sched = LoadSchedule(np.array([0.0, 1.0]), [random_loads(g, rng), random_loads(g, rng)])
    t = float(rng.uniform(0, 1))
    gr = gradient_f0(t, s, sched, g, mat)
    d = random_state(g, rng, amp=1.0)
    dz = d.zeta - np.sum(d.zeta * s.zeta, axis=-1, keepdims=True) * s.zeta
    eps = 1e-5

    def f(e):
        return total_f0(t, ReducedState(s.u + e * d.u, s.v + e * d.v, project_sphere(s.zeta + e * dz)), sched, g, mat)

    fd = (f(eps) - f(-eps)) / (2 * eps)
    an = float(np.sum(gr.gu * d.u) + np.sum(gr.gv * d.v) + np.sum(gr.gz * dz))
    assert fd == pytest.approx(an, rel=1e-6, abs=1e-8)
    assert np.abs(np.sum(gr.gz * s.zeta, axis=-1)).max() < 1e-12
    assert np.all(gr.gu[g.boundary_mask] == 0) and np.all(gr.gv[g.boundary_mask] == 0)
