"""Three-dimensional recovery states and the scaled bulk energies.

A smooth limiting profile ``(u, v, zeta)`` on the section is lifted to a
deformation of the rescaled plate ``Omega = S x (-1/2, 1/2)`` by the
linearized von Karman ansatz

    y = pi_h + a (u, 0) + (a/h) (0, 0, v) - a x3 (grad v, 0)
        + 2 a h x3 A + a h x3^2 B,           a = h^(beta/2),

where the moments ``A`` and ``B`` are the optimal out-of-plane shifts of the
membrane and bending strains.  Everything is evaluated from hand-coded
derivatives of the profile catalog, so the scaled gradient is exact and the
strain is formed without the ``I + O(a)`` cancellation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DegenerateDirectorError, GridMismatchError, OrientationError
from .fields import Grid2, Grid3, integrate3, diff1d, _apply_axis
from .material import (
    Material,
    adjugate3,
    det_identity_plus,
    embed2,
    optimal_shift,
    q_phi_red,
    w_h_from_displacement_gradient,
)
from .magnetostatics import slab_demag_energy

TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# profile catalog
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DisplacementProfile:
    """``u`` with ``du[..., i, j] = d_j u_i`` and ``d2u[..., i, j, k] = d_j d_k u_i``."""

    name: str
    fn: Callable

    def __call__(self, x, y):
        return self.fn(np.asarray(x, float), np.asarray(y, float))


@dataclass(frozen=True)
class DeflectionProfile:
    """``v`` and its first three derivative tensors."""

    name: str
    fn: Callable

    def __call__(self, x, y):
        return self.fn(np.asarray(x, float), np.asarray(y, float))


@dataclass(frozen=True)
class DirectorProfile:
    """Unit ``zeta`` with ``dz[..., i, j] = d_j zeta_i``; defined on all of R^2."""

    name: str
    fn: Callable

    def __call__(self, x, y):
        return self.fn(np.asarray(x, float), np.asarray(y, float))


def _u_zero(x, y):
    s = np.shape(x)
    return np.zeros(s + (2,)), np.zeros(s + (2, 2)), np.zeros(s + (2, 2, 2))


def _u_poly(x, y):
    # u = (p(x) p(y), 0), p(t) = t (1 - t)
    px, py = x * (1 - x), y * (1 - y)
    dpx, dpy = 1 - 2 * x, 1 - 2 * y
    s = np.shape(x)
    u = np.zeros(s + (2,))
    du = np.zeros(s + (2, 2))
    d2u = np.zeros(s + (2, 2, 2))
    u[..., 0] = px * py
    du[..., 0, 0] = dpx * py
    du[..., 0, 1] = px * dpy
    d2u[..., 0, 0, 0] = -2.0 * py
    d2u[..., 0, 1, 1] = -2.0 * px
    d2u[..., 0, 0, 1] = d2u[..., 0, 1, 0] = dpx * dpy
    return u, du, d2u


def _v_zero(x, y):
    s = np.shape(x)
    return np.zeros(s), np.zeros(s + (2,)), np.zeros(s + (2, 2)), np.zeros(s + (2, 2, 2))


def _q(t):
    # q = t^2 (1 - t)^2 and derivatives
    return (t * t * (1 - t) ** 2, 2 * t - 6 * t**2 + 4 * t**3, 2 - 12 * t + 12 * t**2, -12 + 24 * t)


def _v_bump(x, y):
    qx, qy = _q(x), _q(y)
    s = np.shape(x)
    v = qx[0] * qy[0]
    dv = np.stack([qx[1] * qy[0], qx[0] * qy[1]], axis=-1)
    d2v = np.empty(s + (2, 2))
    d2v[..., 0, 0] = qx[2] * qy[0]
    d2v[..., 1, 1] = qx[0] * qy[2]
    d2v[..., 0, 1] = d2v[..., 1, 0] = qx[1] * qy[1]
    d3v = np.empty(s + (2, 2, 2))
    for i in range(2):
        for j in range(2):
            for k in range(2):
                nx = (i == 0) + (j == 0) + (k == 0)
                d3v[..., i, j, k] = qx[nx] * qy[3 - nx]
    return v, dv, d2v, d3v


def _z_const(vec):
    vec = np.asarray(vec, float)
    vec = vec / np.linalg.norm(vec)

    def fn(x, y):
        s = np.shape(x)
        return np.broadcast_to(vec, s + (3,)).copy(), np.zeros(s + (3, 2))

    return fn


def _z_rotor(x, y):
    s = np.shape(x)
    c, sn = np.cos(TWO_PI * x), np.sin(TWO_PI * x)
    z = np.stack([sn, c, np.zeros(s)], axis=-1)
    dz = np.zeros(s + (3, 2))
    dz[..., 0, 0] = TWO_PI * c
    dz[..., 1, 0] = -TWO_PI * sn
    return z, dz


def _z_tilted_rotor(x, y):
    # (sin 2 pi x, cos 2 pi x, 2) / sqrt 5: varying in-plane part, constant normal part
    r, dr = _z_rotor(x, y)
    r[..., 2] = 2.0
    return r / np.sqrt(5.0), dr / np.sqrt(5.0)


def _z_cos_mode(x, y):
    # single Fourier mode in the normal component, in-plane part keeps unit norm
    s = np.shape(x)
    c, sn = np.cos(TWO_PI * x), np.sin(TWO_PI * x)
    z = np.stack([np.zeros(s), sn, c], axis=-1)
    dz = np.zeros(s + (3, 2))
    dz[..., 1, 0] = TWO_PI * c
    dz[..., 2, 0] = -TWO_PI * sn
    return z, dz


U_PROFILES = {"zero": DisplacementProfile("zero", _u_zero), "poly": DisplacementProfile("poly", _u_poly)}
V_PROFILES = {"zero": DeflectionProfile("zero", _v_zero), "bump": DeflectionProfile("bump", _v_bump)}
Z_PROFILES = {
    "e1": DirectorProfile("e1", _z_const((1.0, 0.0, 0.0))),
    "e3": DirectorProfile("e3", _z_const((0.0, 0.0, 1.0))),
    "tilted": DirectorProfile("tilted", _z_const((1.0, 0.0, 2.0))),
    "rotor": DirectorProfile("rotor", _z_rotor),
    "tilted_rotor": DirectorProfile("tilted_rotor", _z_tilted_rotor),
    "cos_mode": DirectorProfile("cos_mode", _z_cos_mode),
}

# named limiting states: (u, v, zeta)
CATALOG = {
    "zero_e3": ("zero", "zero", "e3"),
    "zero_e1": ("zero", "zero", "e1"),
    "membrane": ("poly", "zero", "e3"),
    "bump": ("zero", "bump", "e3"),
    "rotor": ("zero", "zero", "rotor"),
    "tilted": ("zero", "zero", "tilted"),
    "mixed_const": ("poly", "bump", "tilted"),
    # all four reduced energy terms nonzero
    "generic": ("poly", "bump", "tilted_rotor"),
}


@dataclass(frozen=True)
class AnsatzSpec:
    name: str
    u: DisplacementProfile
    v: DeflectionProfile
    zeta: DirectorProfile
    mat: Material

    @classmethod
    def from_catalog(cls, name: str, mat: Optional[Material] = None) -> "AnsatzSpec":
        if name not in CATALOG:
            raise KeyError(f"unknown spec {name!r}; choose from {sorted(CATALOG)}")
        ku, kv, kz = CATALOG[name]
        return cls(name, U_PROFILES[ku], V_PROFILES[kv], Z_PROFILES[kz], mat or Material())


# ---------------------------------------------------------------------------
# moments
# ---------------------------------------------------------------------------

def _shift(B, mat):
    return optimal_shift(B, mat)[0]


def _outer(a, b):
    return np.einsum("...i,...j->...ij", a, b)


def moments(spec: AnsatzSpec, x, y):
    """``(A, B, dA, dB)`` at points ``(x, y)``; ``dA[..., i, k] = d_k A_i``.

    The shift is linear in its argument, so derivatives of the moments are
    shifts of the differentiated strains.
    """
    mat = spec.mat
    _, du, d2u = spec.u(x, y)
    _, _, d2v, d3v = spec.v(x, y)
    z, dz = spec.zeta(x, y)
    symdu = 0.5 * (du + np.swapaxes(du, -1, -2))
    A = _shift(embed2(symdu) - _outer(z, z), mat)
    Bm = _shift(-embed2(d2v), mat)
    dA = np.empty(np.shape(x) + (3, 2))
    dB = np.empty(np.shape(x) + (3, 2))
    for k in range(2):
        dsym = 0.5 * (d2u[..., :, :, k] + np.swapaxes(d2u[..., :, :, k], -1, -2))
        dzz = _outer(dz[..., :, k], z) + _outer(z, dz[..., :, k])
        dA[..., k] = _shift(embed2(dsym) - dzz, mat)
        dB[..., k] = _shift(-embed2(d3v[..., :, :, k]), mat)
    return A, Bm, dA, dB


def build_moments(spec: AnsatzSpec, grid2: Grid2, mat: Optional[Material] = None):
    """Nodal moment fields ``(A, B)`` of shape ``(nx, ny, 3)``."""
    if mat is not None and mat != spec.mat:
        spec = AnsatzSpec(spec.name, spec.u, spec.v, spec.zeta, mat)
    x, y = grid2.mesh
    A, B, _, _ = moments(spec, x, y)
    return A, B


# ---------------------------------------------------------------------------
# recovery deformation
# ---------------------------------------------------------------------------

@dataclass
class BulkState:
    """Recovery state on ``grid3``: displacement ``y - pi_h``, ``G = grad_h y - I`` and ``lam = m o y``."""

    disp: np.ndarray
    G: np.ndarray
    lam: np.ndarray
    h: float
    grid3: Grid3

    @property
    def y(self) -> np.ndarray:
        return reference_map(self.grid3, self.h) + self.disp

    @property
    def F(self) -> np.ndarray:
        return np.eye(3) + self.G

    @property
    def det(self) -> np.ndarray:
        return det_identity_plus(self.G)


def reference_map(grid3: Grid3, h: float) -> np.ndarray:
    """``pi_h(x) = (x1, x2, h x3)`` on the nodes of ``grid3``."""
    x, y = grid3.grid2.mesh
    out = np.empty(grid3.shape + (3,))
    out[..., 0] = x[..., None]
    out[..., 1] = y[..., None]
    out[..., 2] = h * grid3.z[None, None, :]
    return out


def _fields3(spec: AnsatzSpec, grid3: Grid3):
    x, y = grid3.grid2.mesh
    u, du, _ = spec.u(x, y)
    v, dv, d2v, _ = spec.v(x, y)
    A, B, dA, dB = moments(spec, x, y)
    ex = (slice(None), slice(None), None)
    return u, du, v, dv, d2v, A, B, dA, dB, ex


def recovery_state(spec: AnsatzSpec, h: float, grid3: Grid3) -> BulkState:
    """Recovery deformation with its exact scaled gradient and pulled-back magnetization."""
    if not (0.0 < h <= 1.0):
        raise ValueError("need 0 < h <= 1")
    a = spec.mat.scale(h)
    u, du, v, dv, d2v, A, B, dA, dB, ex = _fields3(spec, grid3)
    z = grid3.z[None, None, :]
    z1 = z[..., None]
    z2 = z1[..., None]

    disp = np.empty(grid3.shape + (3,))
    disp[..., :2] = a * u[ex] - a * z1 * dv[ex] + 2 * a * h * z1 * A[ex][..., :2] + a * h * z1**2 * B[ex][..., :2]
    disp[..., 2] = (a / h) * v[ex] + 2 * a * h * z * A[ex][..., 2] + a * h * z**2 * B[ex][..., 2]

    G = np.zeros(grid3.shape + (3, 3))
    G[..., :2, :2] = a * du[ex] - a * z2 * d2v[ex] + 2 * a * h * z2 * dA[ex][..., :2, :] + a * h * z2**2 * dB[ex][..., :2, :]
    G[..., 2, :2] = (a / h) * dv[ex] + 2 * a * h * z1 * dA[ex][..., 2, :] + a * h * z1**2 * dB[ex][..., 2, :]
    G[..., :2, 2] = -(a / h) * dv[ex] + 2 * a * A[ex][..., :2] + 2 * a * z1 * B[ex][..., :2]
    G[..., 2, 2] = 2 * a * A[ex][..., 2] + 2 * a * z * B[ex][..., 2]

    xs = reference_map(grid3, h)
    lam, _ = spec.zeta(xs[..., 0] + disp[..., 0], xs[..., 1] + disp[..., 1])
    return BulkState(disp, G, lam, h, grid3)


def recovery_deformation(spec: AnsatzSpec, h: float, grid3: Grid3) -> np.ndarray:
    """The deformation ``y`` on the nodes of ``grid3``, shape ``(nx, ny, nz, 3)``."""
    return recovery_state(spec, h, grid3).y


def scaled_gradient(source, h: float, grid3: Grid3, numeric: bool = False) -> np.ndarray:
    """Scaled gradient ``(grad', h^-1 d3) y`` of shape ``(nx, ny, nz, 3, 3)``.

    ``source`` is an :class:`AnsatzSpec` (analytic path) or a deformation
    array.  The numeric path differentiates ``y - pi_h`` with second-order
    stencils in all three directions and adds the identity.
    """
    if isinstance(source, AnsatzSpec) and not numeric:
        return np.eye(3) + recovery_state(source, h, grid3).G
    if isinstance(source, AnsatzSpec):
        disp = recovery_state(source, h, grid3).disp
    else:
        y = np.asarray(source, float)
        if y.shape != grid3.shape + (3,):
            raise GridMismatchError("deformation does not live on grid3")
        disp = y - reference_map(grid3, h)
    g2 = grid3.grid2
    G = np.empty(grid3.shape + (3, 3))
    G[..., 0] = _apply_axis(diff1d(g2.nx, g2.dx), disp, 0)
    G[..., 1] = _apply_axis(diff1d(g2.ny, g2.dy), disp, 1)
    G[..., 2] = _apply_axis(diff1d(grid3.nz, grid3.dz), disp, 2) / h
    return np.eye(3) + G


# ---------------------------------------------------------------------------
# energies and averaged quantities
# ---------------------------------------------------------------------------

def _require_orientation(state: BulkState) -> np.ndarray:
    det = state.det
    if np.any(det <= 0):
        bad = np.argwhere(det <= 0)[0]
        raise OrientationError(f"det grad_h y <= 0 at node {tuple(int(i) for i in bad)}")
    return det


def bulk_elastic(spec: AnsatzSpec, h: float, grid3: Grid3, mat: Optional[Material] = None,
                 state: Optional[BulkState] = None) -> float:
    """``h^-beta int_Omega W_h(grad_h y, m o y)`` for the recovery state."""
    mat = mat or spec.mat
    state = state or recovery_state(spec, h, grid3)
    _require_orientation(state)
    dens = w_h_from_displacement_gradient(state.G, state.lam, h, mat)
    return integrate3(dens, grid3) / h**mat.beta


def bulk_exchange(spec: AnsatzSpec, h: float, grid3: Grid3, state: Optional[BulkState] = None) -> float:
    """Pulled-back exchange ``int_Omega |grad m (y)|^2 det grad_h y``.

    The magnetization is the thickness-independent extension of ``zeta``, so
    its gradient at ``y`` is the in-plane gradient of ``zeta`` at ``y'``.
    """
    state = state or recovery_state(spec, h, grid3)
    det = _require_orientation(state)
    xs = reference_map(grid3, h)
    _, dz = spec.zeta(xs[..., 0] + state.disp[..., 0], xs[..., 1] + state.disp[..., 1])
    return integrate3(np.sum(dz**2, axis=(-1, -2)) * det, grid3)


def lagrangian_magnetization(state: BulkState) -> np.ndarray:
    """``adj(grad_h y) (m o y)`` normalized per node."""
    Z = np.einsum("...ij,...j->...i", adjugate3(state.F), state.lam)
    nrm = np.linalg.norm(Z, axis=-1, keepdims=True)
    if np.any(nrm < 1e-14):
        raise DegenerateDirectorError("adjugate maps the magnetization to zero")
    return Z / nrm


@dataclass
class AveragedQuantities:
    U: np.ndarray
    V: np.ndarray
    W: np.ndarray
    Z: np.ndarray


def averaged_quantities(state: BulkState, mat: Material) -> AveragedQuantities:
    """Thickness averages ``U, V, W`` on the section and ``Z`` on ``Omega``.

    ``U = a^-1 int (y' - x')``, ``V = h a^-1 int y3``,
    ``W = a^-1 int x3 (y - pi_h)`` with ``a = h^(beta/2)``.
    """
    h, g3 = state.h, state.grid3
    a = mat.scale(h)
    wz = g3.z_weights
    z = g3.z
    U = np.einsum("ijkc,k->ijc", state.disp[..., :2], wz) / a
    # int x3 dx3 vanishes exactly, so only the displacement contributes to V
    V = h * np.einsum("ijk,k->ij", state.disp[..., 2], wz) / a
    W = np.einsum("ijkc,k->ijc", state.disp, wz * z) / a
    return AveragedQuantities(U, V, W, lagrangian_magnetization(state))


def dissipation_dh(z1: np.ndarray, z2: np.ndarray, grid3: Grid3) -> float:
    """``int_Omega |Z1 - Z2|``."""
    z1, z2 = np.asarray(z1, float), np.asarray(z2, float)
    if z1.shape != grid3.shape + (3,) or z2.shape != z1.shape:
        raise GridMismatchError("magnetization fields do not live on grid3")
    return integrate3(np.linalg.norm(z1 - z2, axis=-1), grid3)


# ---------------------------------------------------------------------------
# Gamma table
# ---------------------------------------------------------------------------

def reduced_reference(spec: AnsatzSpec, grid2: Grid2) -> dict:
    """Reduced energy of the limiting profile from its analytic derivatives."""
    mat = spec.mat
    x, y = grid2.mesh
    _, du, _ = spec.u(x, y)
    _, _, d2v, _ = spec.v(x, y)
    z, dz = spec.zeta(x, y)
    symdu = 0.5 * (du + np.swapaxes(du, -1, -2))
    w = grid2.weights
    parts = {
        "membrane": 0.5 * np.sum(w * q_phi_red(symdu - _outer(z[..., :2], z[..., :2]), mat)),
        "bending": np.sum(w * q_phi_red(d2v, mat)) / 24.0,
        "exchange": np.sum(w * np.sum(dz**2, axis=(-1, -2))),
        "magstat": 0.5 * np.sum(w * z[..., 2] ** 2),
    }
    parts = {k: float(v) for k, v in parts.items()}
    parts["total"] = sum(parts.values())
    return parts


def reduced_reference_discrete(spec: AnsatzSpec, grid2: Grid2) -> float:
    """Same reference through the discrete reduced energy of the sampled profile."""
    from .reduced import ReducedState, energy_e0

    x, y = grid2.mesh
    u = spec.u(x, y)[0]
    v = spec.v(x, y)[0]
    z = spec.zeta(x, y)[0]
    return energy_e0(ReducedState(u, v, z), grid2, spec.mat).total


GAMMA_COLUMNS = ("h", "E_el", "E_exc", "E_mag", "E_h", "E_0", "abs_err")


@dataclass
class GammaTable:
    spec: str
    rows: list
    e0_parts: dict
    e0_discrete: float

    def to_csv(self) -> str:
        lines = [",".join(GAMMA_COLUMNS)]
        lines += [",".join(repr(float(v)) for v in row) for row in self.rows]
        return "\n".join(lines) + "\n"

    @property
    def errors(self) -> list:
        return [row[-1] for row in self.rows]


def gamma_table(spec: AnsatzSpec, hs: Sequence[float], grid3: Grid3, grid2: Optional[Grid2] = None,
                mat: Optional[Material] = None) -> GammaTable:
    """Rows ``(h, E_el, E_exc, E_mag, E_h, E_0, |E_h - E_0|)`` along decreasing ``h``.

    ``E_mag`` is the periodic flat-slab stray-field energy of the limiting
    director, so ``grid3``'s section must have power-of-two periodic counts.
    ``E_0`` is the reduced energy from analytic derivatives on ``grid2``
    (default: the section of ``grid3``); the purely discrete value is kept
    in ``e0_discrete`` for comparison.
    """
    if mat is not None and mat != spec.mat:
        spec = AnsatzSpec(spec.name, spec.u, spec.v, spec.zeta, mat)
    hs = [float(h) for h in hs]
    if any(b >= a for a, b in zip(hs[:-1], hs[1:])):
        raise ValueError("h list must be strictly decreasing")
    grid2 = grid2 or grid3.grid2
    ref = reduced_reference(spec, grid2)
    e0 = ref["total"]
    g2 = grid3.grid2
    x, y = g2.mesh
    zeta_nodes = spec.zeta(x, y)[0]
    rows = []
    for h in hs:
        st = recovery_state(spec, h, grid3)
        e_el = bulk_elastic(spec, h, grid3, state=st)
        e_exc = bulk_exchange(spec, h, grid3, state=st)
        e_mag = slab_demag_energy(zeta_nodes, h, g2)
        eh = e_el + e_exc + e_mag
        rows.append((h, e_el, e_exc, e_mag, eh, e0, abs(eh - e0)))
    return GammaTable(spec.name, rows, ref, reduced_reference_discrete(spec, grid2))
