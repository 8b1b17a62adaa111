"""Stray-field energy of a thin periodic slab.

For a thickness-uniform magnetization ``m`` in the slab ``|x3| < h/2`` the
scaled stray-field energy ``(1/2h) int |grad psi|^2`` is diagonal in the
in-plane Fourier modes:

    E = 1/2 area sum_k [ N(|k| h) |m3_k|^2 + (1 - N(|k| h)) |khat . m'_k|^2 ],
    N(q) = (1 - exp(-q)) / q.

``poisson_oracle`` recomputes the same energy by a brute-force trilinear
finite-element solve on a periodic 3D box and is meant for verification only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .fields import Grid2


def demag_factor(q):
    """``N(q) = (1 - e^-q)/q`` with ``N(0) = 1``; stable for small ``q``."""
    q = np.asarray(q, dtype=float)
    out = np.ones_like(q)
    nz = q != 0.0
    out[nz] = -np.expm1(-q[nz]) / q[nz]
    return out if out.ndim else float(out)


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _periodic_samples(zeta: np.ndarray, grid: Grid2) -> np.ndarray:
    """Drop the duplicated wrap-around row/column of a periodic node field."""
    n, m = grid.nx - 1, grid.ny - 1
    if not (_is_pow2(n) and _is_pow2(m)):
        raise ValueError(f"periodic counts nx-1={n}, ny-1={m} must be powers of two")
    if zeta.shape != grid.shape + (3,):
        raise ValueError("director field does not live on the grid")
    return zeta[:n, :m]


def slab_demag_energy(zeta: np.ndarray, h: float, grid: Grid2) -> float:
    """Scaled stray-field energy of the periodic slab of thickness ``h``.

    ``zeta`` lives on the nodes of ``grid`` and is periodic: the last row and
    column repeat the first and are ignored.
    """
    if h <= 0:
        raise ValueError("thickness must be positive")
    m = _periodic_samples(np.asarray(zeta, float), grid)
    n1, n2 = m.shape[:2]
    dx, dy = grid.lx / n1, grid.ly / n2
    mk = np.fft.fft2(m, axes=(0, 1)) / (n1 * n2)
    kx = 2 * np.pi * np.fft.fftfreq(n1, d=dx)[:, None]
    ky = 2 * np.pi * np.fft.fftfreq(n2, d=dy)[None, :]
    kn = np.hypot(kx, ky)
    N = demag_factor(kn * h)
    with np.errstate(invalid="ignore", divide="ignore"):
        khx = np.where(kn > 0, kx / kn, 0.0)
        khy = np.where(kn > 0, ky / kn, 0.0)
    inplane = np.abs(khx * mk[..., 0] + khy * mk[..., 1]) ** 2
    dens = N * np.abs(mk[..., 2]) ** 2 + (1.0 - N) * inplane
    return 0.5 * grid.area * float(np.sum(dens))


def magnetostatic_limit_check(zeta: np.ndarray, hs: Sequence[float], grid: Grid2):
    """Rows ``(h, E_h, E_0, ratio)`` with ``E_0 = 1/2 int (zeta^3)^2``.

    ``E_0`` is evaluated with the same periodic rectangle rule as the kernel,
    so single-mode profiles give ``ratio = N(2 pi |k| h)`` to roundoff.  A
    vanishing pair ``0/0`` is reported as ratio 1.
    """
    hs = [float(h) for h in hs]
    if any(b >= a for a, b in zip(hs[:-1], hs[1:])):
        raise ValueError("h list must be strictly decreasing")
    m = _periodic_samples(np.asarray(zeta, float), grid)
    e0 = 0.5 * grid.area * float(np.mean(m[..., 2] ** 2))
    rows = []
    for h in hs:
        eh = slab_demag_energy(zeta, h, grid)
        if e0 == 0.0:
            ratio = 1.0 if eh == 0.0 else np.inf
        else:
            ratio = eh / e0
        rows.append((h, eh, e0, ratio))
    return rows


# ---------------------------------------------------------------------------
# brute-force oracle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Box3:
    """Periodic box: in-plane cells follow the director grid, ``cells_per_h`` cells across the slab."""

    cells_per_h: int = 2
    lz: float = 4.0

    def __post_init__(self):
        if self.cells_per_h < 1 or self.lz <= 0:
            raise ValueError("invalid box")


def poisson_oracle(zeta: np.ndarray, h: float, grid: Grid2, box: Box3 = Box3()) -> float:
    """Stray-field energy from a trilinear FE solve on a periodic box.

    Cell ``(i, j)`` in the plane carries ``zeta[i, j]``; the slab occupies
    ``cells_per_h`` layers of cells and the box is padded with empty layers up
    to height ``lz``.  The FE system is diagonal in the discrete Fourier basis,
    so the solve is exact up to roundoff; the mean of the potential is fixed
    to zero.
    """
    m = _periodic_samples(np.asarray(zeta, float), grid)
    n1, n2 = m.shape[:2]
    dx, dy = grid.lx / n1, grid.ly / n2
    dz = h / box.cells_per_h
    n3 = max(int(round(box.lz / dz)), box.cells_per_h + 2)
    cells = np.zeros((n1, n2, n3, 3))
    cells[:, :, : box.cells_per_h, :] = m[:, :, None, :]

    th = [2 * np.pi * np.fft.fftfreq(n) for n in (n1, n2, n3)]
    tx, ty, tz = np.meshgrid(*th, indexing="ij")

    def k1(t, s):
        return (2.0 - 2.0 * np.cos(t)) / s

    def m1(t, s):
        return s * (4.0 + 2.0 * np.cos(t)) / 6.0

    K = (k1(tx, dx) * m1(ty, dy) * m1(tz, dz)
         + m1(tx, dx) * k1(ty, dy) * m1(tz, dz)
         + m1(tx, dx) * m1(ty, dy) * k1(tz, dz))
    # node i is the right corner of cell i-1 and the left corner of cell i
    ex, ey, ez = (np.exp(-1j * t) for t in (tx, ty, tz))
    ch = np.fft.fftn(cells, axes=(0, 1, 2))
    b = (dy * dz / 4) * (ex - 1) * (1 + ey) * (1 + ez) * ch[..., 0]
    b += (dx * dz / 4) * (1 + ex) * (ey - 1) * (1 + ez) * ch[..., 1]
    b += (dx * dy / 4) * (1 + ex) * (1 + ey) * (ez - 1) * ch[..., 2]
    K.flat[0] = 1.0
    b.flat[0] = 0.0
    quad = float(np.sum(np.abs(b) ** 2 / K)) / (n1 * n2 * n3)
    return quad / (2.0 * h)
