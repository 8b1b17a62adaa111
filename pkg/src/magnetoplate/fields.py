"""Uniform tensor grids, finite-difference stencils and trapezoidal quadrature.

Fields are plain numpy arrays indexed ``[i, j, ...]`` with ``i`` running along
x and ``j`` along y (``indexing="ij"``).  A field with ``d`` components has
shape ``(nx, ny, d)``; scalar fields may also be passed as ``(nx, ny)``.
Three-dimensional fields on a :class:`Grid3` have shape ``(nx, ny, nz, d)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateDirectorError, GridMismatchError

DEGENERATE_NORM = 1e-14


@dataclass(frozen=True)
class Grid2:
    """Node-centred uniform grid on the rectangle ``[0, lx] x [0, ly]``."""

    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise ValueError("node counts must be integers")
        if self.nx < 3 or self.ny < 3:
            raise ValueError(f"need nx, ny >= 3, got ({self.nx}, {self.ny})")
        if not (self.lx > 0 and self.ly > 0):
            raise ValueError("side lengths must be positive")

    @property
    def dx(self) -> float:
        return self.lx / (self.nx - 1)

    @property
    def dy(self) -> float:
        return self.ly / (self.ny - 1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def area(self) -> float:
        return self.lx * self.ly

    @cached_property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, self.lx, self.nx)

    @cached_property
    def y(self) -> np.ndarray:
        return np.linspace(0.0, self.ly, self.ny)

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, indexing="ij")

    @cached_property
    def weights(self) -> np.ndarray:
        """Tensor-product trapezoid weights, shape ``(nx, ny)``."""
        return np.outer(trapezoid_weights(self.nx, self.dx), trapezoid_weights(self.ny, self.dy))

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[0, :] = mask[-1, :] = True
        mask[:, 0] = mask[:, -1] = True
        return mask


@dataclass(frozen=True)
class Grid3:
    """A :class:`Grid2` section times ``nz`` nodes across ``x3 in [-1/2, 1/2]``."""

    grid2: Grid2
    nz: int

    def __post_init__(self):
        if self.nz < 3:
            raise ValueError(f"need nz >= 3, got {self.nz}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.grid2.nx, self.grid2.ny, self.nz)

    @property
    def dz(self) -> float:
        return 1.0 / (self.nz - 1)

    @cached_property
    def z(self) -> np.ndarray:
        z = np.linspace(-0.5, 0.5, self.nz)
        # exact antisymmetry about 0
        return 0.5 * (z - z[::-1])

    @cached_property
    def z_weights(self) -> np.ndarray:
        """Thickness weights: composite Simpson for odd ``nz``, trapezoid otherwise."""
        if self.nz % 2 == 1:
            w = np.ones(self.nz)
            w[1:-1:2] = 4.0
            w[2:-1:2] = 2.0
            return w * self.dz / 3.0
        return trapezoid_weights(self.nz, self.dz)

    @cached_property
    def weights(self) -> np.ndarray:
        return self.grid2.weights[:, :, None] * self.z_weights[None, None, :]


def trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


# ---------------------------------------------------------------------------
# one-dimensional stencils (sparse, CSR)
# ---------------------------------------------------------------------------

def diff1d(n: int, h: float) -> sp.csr_matrix:
    """First derivative: central inside, second-order one-sided at both ends."""
    m = sp.lil_matrix((n, n))
    m[0, 0:3] = [-1.5, 2.0, -0.5]
    m[n - 1, n - 3:n] = [0.5, -2.0, 1.5]
    for i in range(1, n - 1):
        m[i, i - 1] = -0.5
        m[i, i + 1] = 0.5
    return (m / h).tocsr()


def second_diff1d(n: int, h: float, clamped: bool = False) -> sp.csr_matrix:
    """Second derivative, 3-point stencil.

    ``clamped=True`` uses a reflected ghost node (``f[-1] = f[1]``), i.e. the
    first derivative vanishes at the ends.  Otherwise the boundary rows reuse
    the adjacent 3-point stencil (exact on quadratics).
    """
    m = sp.lil_matrix((n, n))
    for i in range(1, n - 1):
        m[i, i - 1 : i + 2] = [1.0, -2.0, 1.0]
    if clamped:
        m[0, 0:2] = [-2.0, 2.0]
        m[n - 1, n - 2 :] = [2.0, -2.0]
    else:
        m[0, 0:3] = [1.0, -2.0, 1.0]
        m[n - 1, n - 3 :] = [1.0, -2.0, 1.0]
    return (m / h**2).tocsr()


def central1d_reflect(n: int, h: float) -> sp.csr_matrix:
    """Central first difference with reflected ghosts (zero rows at the ends)."""
    m = sp.lil_matrix((n, n))
    for i in range(1, n - 1):
        m[i, i - 1] = -0.5
        m[i, i + 1] = 0.5
    return (m / h).tocsr()


def _apply_axis(mat: sp.spmatrix, f: np.ndarray, axis: int) -> np.ndarray:
    moved = np.moveaxis(f, axis, 0)
    out = mat @ moved.reshape(moved.shape[0], -1)
    return np.moveaxis(np.asarray(out).reshape(moved.shape), 0, axis)


class Stencils2:
    """Sparse 2D operators on a flattened ``(nx*ny,)`` node vector (C order)."""

    def __init__(self, grid: Grid2):
        self.grid = grid
        nx, ny = grid.shape
        ix, iy = sp.identity(nx, format="csr"), sp.identity(ny, format="csr")
        self.dx1 = diff1d(nx, grid.dx)
        self.dy1 = diff1d(ny, grid.dy)
        self.Dx = sp.kron(self.dx1, iy, format="csr")
        self.Dy = sp.kron(ix, self.dy1, format="csr")
        self.Hxx = sp.kron(second_diff1d(nx, grid.dx, clamped=True), iy, format="csr")
        self.Hyy = sp.kron(ix, second_diff1d(ny, grid.dy, clamped=True), format="csr")
        self.Hxy = sp.kron(central1d_reflect(nx, grid.dx), central1d_reflect(ny, grid.dy), format="csr")
        self.w = grid.weights.ravel()
        self.W = sp.diags(self.w)


_STENCIL_CACHE: dict[Grid2, Stencils2] = {}


def stencils(grid: Grid2) -> Stencils2:
    st = _STENCIL_CACHE.get(grid)
    if st is None:
        st = _STENCIL_CACHE[grid] = Stencils2(grid)
    return st


# ---------------------------------------------------------------------------
# field operations
# ---------------------------------------------------------------------------

def _check_field(field: np.ndarray, grid: Grid2) -> np.ndarray:
    field = np.asarray(field, dtype=float)
    if field.shape[:2] != grid.shape or field.ndim not in (2, 3):
        raise GridMismatchError(f"field of shape {field.shape} does not live on grid {grid.shape}")
    return field


def grad2(field: np.ndarray, grid: Grid2) -> np.ndarray:
    """In-plane gradient.

    Returns shape ``(nx, ny, 2)`` for a scalar field and ``(nx, ny, d, 2)``
    for a ``d``-component field; the last axis is (d/dx, d/dy).
    """
    f = _check_field(field, grid)
    fx = _apply_axis(diff1d(grid.nx, grid.dx), f, 0)
    fy = _apply_axis(diff1d(grid.ny, grid.dy), f, 1)
    return np.stack([fx, fy], axis=-1)


def hessian2(field: np.ndarray, grid: Grid2, clamped: bool = False) -> np.ndarray:
    """Hessian of a scalar field, shape ``(nx, ny, 2, 2)``, symmetric by construction.

    With ``clamped=True`` a reflected ghost layer enforces a vanishing normal
    derivative on the boundary (the clamped-plate convention); the mixed
    derivative then uses the 4-point cross stencil everywhere.
    """
    f = _check_field(field, grid)
    if f.ndim != 2:
        raise GridMismatchError("hessian2 expects a scalar field")
    fxx = _apply_axis(second_diff1d(grid.nx, grid.dx, clamped), f, 0)
    fyy = _apply_axis(second_diff1d(grid.ny, grid.dy, clamped), f, 1)
    if clamped:
        fxy = _apply_axis(central1d_reflect(grid.ny, grid.dy), _apply_axis(central1d_reflect(grid.nx, grid.dx), f, 0), 1)
    else:
        fxy = _apply_axis(diff1d(grid.ny, grid.dy), _apply_axis(diff1d(grid.nx, grid.dx), f, 0), 1)
    out = np.empty(grid.shape + (2, 2))
    out[..., 0, 0] = fxx
    out[..., 1, 1] = fyy
    out[..., 0, 1] = out[..., 1, 0] = fxy
    return out


def integrate2(field: np.ndarray, grid: Grid2) -> float:
    """Trapezoidal integral of a scalar field over the section."""
    f = _check_field(field, grid)
    if f.ndim != 2:
        raise GridMismatchError("integrate2 expects a scalar field")
    return float(np.sum(grid.weights * f))


def integrate3(field: np.ndarray, grid: Grid3) -> float:
    f = np.asarray(field, dtype=float)
    if f.shape != grid.shape:
        raise GridMismatchError(f"field of shape {f.shape} does not live on grid {grid.shape}")
    return float(np.sum(grid.weights * f))


def project_sphere(field: np.ndarray) -> np.ndarray:
    """Normalize every 3-vector in ``field`` (last axis) to unit length."""
    f = np.asarray(field, dtype=float)
    if f.shape[-1] != 3:
        raise GridMismatchError("project_sphere expects 3-component vectors")
    norms = np.linalg.norm(f, axis=-1, keepdims=True)
    if np.any(norms < DEGENERATE_NORM):
        bad = np.argwhere(norms[..., 0] < DEGENERATE_NORM)[0]
        raise DegenerateDirectorError(f"zero director at node {tuple(int(i) for i in bad)}")
    return f / norms


def constant_field(grid: Grid2, value) -> np.ndarray:
    value = np.atleast_1d(np.asarray(value, dtype=float))
    return np.broadcast_to(value, grid.shape + value.shape).copy()


# ---------------------------------------------------------------------------
# CSV field dumps
# ---------------------------------------------------------------------------

def write_field_csv(path, grid, values: np.ndarray) -> None:
    """Dump a node field as ``x,y[,z],c0,...`` rows, x varying fastest."""
    if isinstance(grid, Grid3):
        coords = np.meshgrid(grid.grid2.x, grid.grid2.y, grid.z, indexing="ij")
        names = ["x", "y", "z"]
        nodal_shape = grid.shape
    else:
        coords = list(grid.mesh)
        names = ["x", "y"]
        nodal_shape = grid.shape
    vals = np.asarray(values, dtype=float)
    if vals.shape[: len(nodal_shape)] != nodal_shape:
        raise GridMismatchError(f"values of shape {vals.shape} do not match grid {nodal_shape}")
    vals = vals.reshape(nodal_shape + (-1,))
    ncomp = vals.shape[-1]
    # Fortran order over the node axes puts x fastest
    cols = [c.ravel(order="F") for c in coords]
    cols += [vals[..., k].ravel(order="F") for k in range(ncomp)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names + [f"c{k}" for k in range(ncomp)])
        for row in zip(*cols):
            writer.writerow([repr(float(v)) for v in row])


def read_field_csv(path) -> tuple[Grid2 | Grid3, np.ndarray]:
    """Inverse of :func:`write_field_csv`; returns the grid and a ``(..., d)`` array."""
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(v) for v in row] for row in reader])
    ndim = 3 if header[:3] == ["x", "y", "z"] else 2
    xs = np.unique(data[:, 0])
    ys = np.unique(data[:, 1])
    g2 = Grid2(len(xs), len(ys), float(xs[-1] - xs[0]), float(ys[-1] - ys[0]))
    if ndim == 3:
        zs = np.unique(data[:, 2])
        grid = Grid3(g2, len(zs))
        shape = grid.shape
    else:
        grid = g2
        shape = g2.shape
    vals = data[:, ndim:]
    out = np.stack([vals[:, k].reshape(shape, order="F") for k in range(vals.shape[1])], axis=-1)
    return grid, out
