import numpy as np
import pytest

from magnetoplate.bulk import (
    CATALOG,
    DisplacementProfile,
    AnsatzSpec,
    BulkState,
    averaged_quantities,
    build_moments,
    bulk_elastic,
    bulk_exchange,
    dissipation_dh,
    gamma_table,
    lagrangian_magnetization,
    recovery_deformation,
    recovery_state,
    reduced_reference,
    reference_map,
    scaled_gradient,
)
from magnetoplate.errors import GridMismatchError
from magnetoplate.fields import Grid2, Grid3, integrate3
from magnetoplate.material import Material, w_h_from_displacement_gradient
from magnetoplate.reduced import dissipation_d0

G3 = Grid3(Grid2(17, 17), 5)
MAT = Material()
E3 = np.array([0.0, 0.0, 1.0])


def spec(name, mat=MAT):
    return AnsatzSpec.from_catalog(name, mat)


def rotation(seed):
    q, r = np.linalg.qr(np.random.default_rng(seed).standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    return q if np.linalg.det(q) > 0 else -q


def _u_isotropic(x, y):
    # u = (x, y): sym grad u = identity everywhere
    s = np.shape(x)
    return np.stack([x, y], axis=-1), np.broadcast_to(np.eye(2), s + (2, 2)).copy(), np.zeros(s + (2, 2, 2))


def test_moment_examples():
    A, B = build_moments(spec("zero_e3"), G3.grid2)
    assert np.allclose(A, [0, 0, 0.5], atol=1e-15) and np.all(B == 0)
    A, B = build_moments(spec("rotor"), G3.grid2)
    assert np.all(B == 0)
    iso = AnsatzSpec("iso", DisplacementProfile("iso", _u_isotropic), spec("zero_e3").v, spec("zero_e3").zeta, MAT)
    A, _ = build_moments(iso, G3.grid2)
    assert np.allclose(A, [0, 0, 1 / 6], atol=1e-14)


def test_recovery_deformation_examples():
    h = 0.1
    a = MAT.scale(h)
    y = recovery_deformation(spec("zero_e3"), h, G3)
    expect = reference_map(G3, h)
    expect[..., 2] += a * h * G3.z[None, None, :]
    assert np.allclose(y, expect, rtol=0, atol=1e-17)
    # the (u, 0) term of a membrane spec scales exactly like h^(beta/2)
    d1 = recovery_state(spec("membrane"), 0.2, G3).disp[..., :2]
    d2 = recovery_state(spec("membrane"), 0.1, G3).disp[..., :2]
    assert np.allclose(d1 * (0.1 / 0.2) ** (MAT.beta / 2), d2, rtol=1e-12, atol=1e-30)
    # deflection-only spec: y3 - h x3 = h^(beta/2 - 1) v up to O(h^(beta/2 + 1))
    s = spec("bump")
    x, yy = G3.grid2.mesh
    v = s.v(x, yy)[0]
    y3 = recovery_deformation(s, h, G3)[..., 2] - h * G3.z[None, None, :]
    lead = (a / h) * v[..., None]
    assert np.abs(y3 - lead).max() <= 10 * a * h


def test_scaled_gradient_examples():
    h = 0.2
    ident = scaled_gradient(reference_map(G3, h), h, G3)
    assert np.allclose(ident, np.eye(3), atol=1e-13)
    F = scaled_gradient(spec("zero_e3"), h, G3)
    assert np.allclose(F, np.eye(3) + MAT.scale(h) * np.outer(E3, E3), atol=1e-16)


def test_scaled_gradient_numeric_second_order():
    h = 0.5
    mat = Material(beta=6.5, pexp=4.0)
    errs = []
    for n in (9, 17, 33):
        g3 = Grid3(Grid2(n, n), 9)
        s = spec("generic", mat)
        an = scaled_gradient(s, h, g3)
        nu = scaled_gradient(s, h, g3, numeric=True)
        errs.append(np.abs(an - nu).max())
    assert 3.0 < errs[0] / errs[1] < 5.0 and 3.0 < errs[1] / errs[2] < 5.0


def test_bulk_elastic_examples():
    for h in (0.2, 0.1, 0.05):
        assert bulk_elastic(spec("zero_e3"), h, G3) == 0.0
    mem = spec("membrane")
    ref = reduced_reference(mem, G3.grid2)["membrane"]
    vals = [bulk_elastic(mem, h, G3) for h in (0.2, 0.1, 0.05)]
    errs = [abs(v - ref) for v in vals]
    assert errs[-1] < 1e-3 * ref and errs[0] > errs[1] > errs[2]
    m2 = Material(mu=2.0, lam=1.0)
    assert bulk_elastic(spec("membrane", m2), 0.05, G3) / vals[-1] == pytest.approx(
        reduced_reference(spec("membrane", m2), G3.grid2)["membrane"] / ref, rel=1e-2)


def test_bulk_elastic_doubling_mu_with_zero_lambda():
    m1, m2 = Material(mu=1.0, lam=0.0), Material(mu=2.0, lam=0.0)
    e1 = bulk_elastic(spec("membrane", m1), 0.05, G3)
    e2 = bulk_elastic(spec("membrane", m2), 0.05, G3)
    assert e2 / e1 == pytest.approx(2.0, rel=1e-2)


def test_bulk_exchange_examples():
    for h in (0.2, 0.05):
        assert bulk_exchange(spec("zero_e3"), h, G3) == 0.0
        assert bulk_exchange(spec("tilted"), h, G3) == 0.0
    val = bulk_exchange(spec("rotor"), 0.01, G3)
    assert val == pytest.approx(4 * np.pi**2, rel=1e-6)


def test_exchange_jacobian_sensitivity():
    s = spec("generic")
    for h in (0.2, 0.1):
        st = recovery_state(s, h, G3)
        with_det = bulk_exchange(s, h, G3, st)
        xs = reference_map(G3, h)
        _, dz = s.zeta(xs[..., 0] + st.disp[..., 0], xs[..., 1] + st.disp[..., 1])
        no_det = integrate3(np.sum(dz**2, axis=(-1, -2)), G3)
        assert abs(with_det - no_det) <= 10 * MAT.scale(h) / h * abs(no_det)


def test_averaged_quantities_examples():
    h = 0.1
    st0 = BulkState(np.zeros(G3.shape + (3,)), np.zeros(G3.shape + (3, 3)),
                    np.broadcast_to(E3, G3.shape + (3,)).copy(), h, G3)
    av = averaged_quantities(st0, MAT)
    assert np.all(av.U == 0) and np.all(av.V == 0) and np.all(av.W == 0)
    assert np.allclose(av.Z, E3)

    s = spec("generic")
    x, y = G3.grid2.mesh
    u, v, dv = s.u(x, y)[0], s.v(x, y)[0], s.v(x, y)[1]
    errs = []
    for h in (0.1, 0.05, 0.025):
        av = averaged_quantities(recovery_state(s, h, G3), MAT)
        w_ref = np.concatenate([-dv / 12.0, np.zeros(G3.grid2.shape + (1,))], axis=-1)
        errs.append(max(np.abs(av.U - u).max(), np.abs(av.V - v).max(), np.abs(av.W - w_ref).max()))
        assert np.abs(np.linalg.norm(av.Z, axis=-1) - 1.0).max() <= 1e-14
    assert errs[0] > errs[1] > errs[2] and errs[-1] < 1e-2


def test_dissipation_dh_examples():
    g3 = Grid3(Grid2(9, 9), 5)
    e3 = np.broadcast_to(E3, g3.shape + (3,)).copy()
    assert dissipation_dh(e3, e3, g3) == 0.0
    assert dissipation_dh(e3, -e3, g3) == pytest.approx(2.0)
    with pytest.raises(GridMismatchError):
        dissipation_dh(e3[:-1], e3[:-1], g3)


def test_dissipation_dh_matches_reduced_at_small_h():
    h = 0.02
    s1, s2 = spec("generic"), spec("rotor")
    z1 = lagrangian_magnetization(recovery_state(s1, h, G3))
    z2 = lagrangian_magnetization(recovery_state(s2, h, G3))
    x, y = G3.grid2.mesh
    d0 = dissipation_d0(s1.zeta(x, y)[0], s2.zeta(x, y)[0], G3.grid2)
    assert dissipation_dh(z1, z2, G3) == pytest.approx(d0, rel=0.05)


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_orientation_preserved_for_catalog(name):
    for h in (0.2, 0.1, 0.05):
        assert recovery_state(spec(name), h, G3).det.min() > 0


def test_bulk_elastic_frame_indifference():
    h = 0.2
    s = spec("generic")
    st = recovery_state(s, h, G3)
    base = bulk_elastic(s, h, G3, state=st)
    R = rotation(4)
    Gr = np.einsum("ij,...jk->...ik", R, st.F) - np.eye(3)
    lam_r = np.einsum("ij,...j->...i", R, st.lam)
    rot = integrate3(w_h_from_displacement_gradient(Gr, lam_r, h, MAT), G3) / h**MAT.beta
    assert abs(rot - base) <= 1e-10 * max(1.0, abs(base))


def test_gamma_table_zero_spec():
    t = gamma_table(spec("zero_e3"), [0.2, 0.1, 0.05, 0.025], G3)
    for h, e_el, e_exc, e_mag, eh, e0, err in t.rows:
        assert e_el == 0.0 and e_exc == 0.0
        assert e0 == pytest.approx(0.5) and e_mag == pytest.approx(0.5)
    with pytest.raises(ValueError):
        gamma_table(spec("zero_e3"), [0.1, 0.2], G3)


def test_gamma_table_grid_refinement_second_order():
    h = 0.1
    vals = []
    for n in (9, 17, 33):
        g3 = Grid3(Grid2(n, n), 9)
        vals.append(gamma_table(spec("generic"), [h], g3).rows[0][4])
    d1, d2 = abs(vals[1] - vals[0]), abs(vals[2] - vals[1])
    assert 3.0 < d1 / d2 < 5.0
