"""Stored energy, its quadratic forms and the magnetoelastic density.

The stored-energy function is the concrete, frame-indifferent choice

    Phi(Y) = mu |U - I|^2 + lambda/2 tr(U - I)^2 + cp |U - I|^pexp,
    U = sqrt(Y^T Y),

whose Hessian at the identity is ``Q(Y) = 2 mu |sym Y|^2 + lambda (tr Y)^2``.
All matrix routines accept stacks of matrices with shape ``(..., 3, 3)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDirectorError, OrientationError, SpectralError

JACOBI_MAX_SWEEPS = 30
JACOBI_TOL = 1e-14
_PAIRS = ((0, 1), (0, 2), (1, 2))
E3 = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class Material:
    mu: float = 1.0
    lam: float = 1.0
    cp: float = 1.0
    pexp: float = 4.0
    beta: float = 8.0

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"Material invariant violated: mu > 0 (got mu={self.mu})")
        if not 2 * self.mu + 3 * self.lam > 0:
            raise ValueError(
                f"Material invariant violated: 2*mu + 3*lambda > 0 (got {2 * self.mu + 3 * self.lam})"
            )
        if not self.cp >= 0:
            raise ValueError(f"Material invariant violated: cp >= 0 (got cp={self.cp})")
        if not self.pexp > 3:
            raise ValueError(f"Material invariant violated: pexp > 3 (got pexp={self.pexp})")
        if not self.beta > max(6.0, self.pexp):
            raise ValueError(
                f"Material invariant violated: beta > max(6, pexp) (got beta={self.beta}, pexp={self.pexp})"
            )

    @property
    def lam_red(self) -> float:
        """Trace coefficient of the reduced form: 2 mu lambda / (2 mu + lambda)."""
        return 2 * self.mu * self.lam / (2 * self.mu + self.lam)

    def scale(self, h: float) -> float:
        """The film parameter h**(beta/2)."""
        return h ** (self.beta / 2)

    def as_dict(self) -> dict:
        return {"mu": self.mu, "lambda": self.lam, "cp": self.cp, "pexp": self.pexp, "beta": self.beta}


# ---------------------------------------------------------------------------
# 3x3 algebra
# ---------------------------------------------------------------------------

def sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def adjugate3(F: np.ndarray) -> np.ndarray:
    """Transpose of the cofactor matrix, so that ``F @ adj F = det F * I``."""
    F = np.asarray(F, dtype=float)
    a = np.empty_like(F)
    a[..., 0, 0] = F[..., 1, 1] * F[..., 2, 2] - F[..., 1, 2] * F[..., 2, 1]
    a[..., 0, 1] = F[..., 0, 2] * F[..., 2, 1] - F[..., 0, 1] * F[..., 2, 2]
    a[..., 0, 2] = F[..., 0, 1] * F[..., 1, 2] - F[..., 0, 2] * F[..., 1, 1]
    a[..., 1, 0] = F[..., 1, 2] * F[..., 2, 0] - F[..., 1, 0] * F[..., 2, 2]
    a[..., 1, 1] = F[..., 0, 0] * F[..., 2, 2] - F[..., 0, 2] * F[..., 2, 0]
    a[..., 1, 2] = F[..., 0, 2] * F[..., 1, 0] - F[..., 0, 0] * F[..., 1, 2]
    a[..., 2, 0] = F[..., 1, 0] * F[..., 2, 1] - F[..., 1, 1] * F[..., 2, 0]
    a[..., 2, 1] = F[..., 0, 1] * F[..., 2, 0] - F[..., 0, 0] * F[..., 2, 1]
    a[..., 2, 2] = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
    return a


def det3(F: np.ndarray) -> np.ndarray:
    F = np.asarray(F, dtype=float)
    return (
        F[..., 0, 0] * (F[..., 1, 1] * F[..., 2, 2] - F[..., 1, 2] * F[..., 2, 1])
        - F[..., 0, 1] * (F[..., 1, 0] * F[..., 2, 2] - F[..., 1, 2] * F[..., 2, 0])
        + F[..., 0, 2] * (F[..., 1, 0] * F[..., 2, 1] - F[..., 1, 1] * F[..., 2, 0])
    )


def det_identity_plus(G: np.ndarray) -> np.ndarray:
    """``det(I + G)`` expanded in invariants of ``G`` (accurate for small G)."""
    tr = np.trace(G, axis1=-2, axis2=-1)
    tr2 = np.einsum("...ij,...ji->...", G, G)
    return 1.0 + tr + 0.5 * (tr * tr - tr2) + det3(G)


def jacobi_eigh3(A: np.ndarray, vectors: bool = True):
    """Cyclic Jacobi eigendecomposition of symmetric 3x3 matrices.

    Sweeps over the pairs (0,1), (0,2), (1,2) in that fixed order until the
    off-diagonal Frobenius norm falls below ``JACOBI_TOL`` times the matrix
    norm, or ``JACOBI_MAX_SWEEPS`` sweeps.  Returns eigenvalues (unsorted) and,
    if requested, the orthogonal matrix ``V`` with ``A = V diag(w) V^T``.
    """
    a = np.array(A, dtype=float, copy=True)
    batch = a.shape[:-2]
    a = a.reshape(-1, 3, 3)
    v = np.broadcast_to(np.eye(3), a.shape).copy() if vectors else None
    scale = np.linalg.norm(a, axis=(1, 2))
    for _ in range(JACOBI_MAX_SWEEPS):
        off = np.sqrt(2.0 * (a[:, 0, 1] ** 2 + a[:, 0, 2] ** 2 + a[:, 1, 2] ** 2))
        if np.all(off <= JACOBI_TOL * scale):
            break
        for p, q in _PAIRS:
            apq = a[:, p, q]
            active = np.abs(apq) > 0.0
            if not np.any(active):
                continue
            safe = np.where(active, apq, 1.0)
            # tiny a_pq may overflow tau; t -> 0 is then the correct limit
            with np.errstate(over="ignore"):
                tau = (a[:, q, q] - a[:, p, p]) / (2.0 * safe)
                t = np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.hypot(1.0, tau))
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            # A <- J^T A J with J = identity except J_pp = J_qq = c, J_pq = s, J_qp = -s
            ap = a[:, :, p].copy()
            aq = a[:, :, q].copy()
            a[:, :, p] = c[:, None] * ap - s[:, None] * aq
            a[:, :, q] = s[:, None] * ap + c[:, None] * aq
            rp = a[:, p, :].copy()
            rq = a[:, q, :].copy()
            a[:, p, :] = c[:, None] * rp - s[:, None] * rq
            a[:, q, :] = s[:, None] * rp + c[:, None] * rq
            a[:, p, q] = a[:, q, p] = 0.0
            if vectors:
                vp = v[:, :, p].copy()
                vq = v[:, :, q].copy()
                v[:, :, p] = c[:, None] * vp - s[:, None] * vq
                v[:, :, q] = s[:, None] * vp + c[:, None] * vq
    w = np.stack([a[:, 0, 0], a[:, 1, 1], a[:, 2, 2]], axis=-1).reshape(batch + (3,))
    if vectors:
        return w, v.reshape(batch + (3, 3))
    return w


def _check_symmetric(A: np.ndarray, tol: float = 1e-12) -> None:
    asym = np.abs(A - np.swapaxes(A, -1, -2))
    scale = np.maximum(1.0, np.abs(A).max(axis=(-1, -2), keepdims=True))
    if np.any(asym > tol * scale):
        raise SpectralError("matrix is not symmetric")


def sqrt_spd3(A: np.ndarray) -> np.ndarray:
    """Principal square root of symmetric positive definite 3x3 matrices."""
    A = np.asarray(A, dtype=float)
    _check_symmetric(A)
    w, v = jacobi_eigh3(sym(A))
    wmin = float(np.min(w))
    if wmin <= 0:
        raise SpectralError(f"matrix is not positive definite (smallest eigenvalue {wmin:.3e})", wmin)
    return np.einsum("...ik,...k,...jk->...ij", v, np.sqrt(w), v)


# ---------------------------------------------------------------------------
# stored energy
# ---------------------------------------------------------------------------

def _stretch_excess(ec_w: np.ndarray) -> np.ndarray:
    """Eigenvalues of ``sqrt(I + E) - I`` from the eigenvalues of ``E`` (no cancellation)."""
    return ec_w / (1.0 + np.sqrt(1.0 + ec_w))


def phi_from_excess(ec: np.ndarray, mat: Material) -> np.ndarray:
    """Phi as a function of ``E = Y^T Y - I``; only the spectrum of E matters."""
    w = jacobi_eigh3(sym(ec), vectors=False)
    if np.any(w <= -1.0):
        raise OrientationError("Y^T Y is not positive definite")
    s = _stretch_excess(w)
    dist2 = np.sum(s * s, axis=-1)
    tr = np.sum(s, axis=-1)
    return mat.mu * dist2 + 0.5 * mat.lam * tr * tr + mat.cp * dist2 ** (0.5 * mat.pexp)


def _excess_from_displacement(D: np.ndarray) -> np.ndarray:
    """``(I + D)^T (I + D) - I`` without forming ``I + D``."""
    return D + np.swapaxes(D, -1, -2) + np.swapaxes(D, -1, -2) @ D


def phi(Y: np.ndarray, mat: Material) -> np.ndarray:
    """Stored energy Phi(Y) for ``det Y > 0``."""
    Y = np.asarray(Y, dtype=float)
    if np.any(det3(Y) <= 0):
        raise OrientationError("Phi requires det Y > 0")
    out = phi_from_excess(_excess_from_displacement(Y - np.eye(3)), mat)
    return out if out.ndim else float(out)


def dist_so3(Y: np.ndarray) -> np.ndarray:
    """Distance from SO(3) (Frobenius), valid for ``det Y > 0``."""
    Y = np.asarray(Y, dtype=float)
    if np.any(det3(Y) <= 0):
        raise OrientationError("dist to SO(3) formula requires det Y > 0")
    w = jacobi_eigh3(sym(_excess_from_displacement(Y - np.eye(3))), vectors=False)
    return np.sqrt(np.sum(_stretch_excess(w) ** 2, axis=-1))


def q_phi(Y: np.ndarray, mat: Material) -> np.ndarray:
    """Quadratic form ``Q(Y) = D^2 Phi(I)(Y, Y) = 2 mu |sym Y|^2 + lambda (tr Y)^2``."""
    S = sym(np.asarray(Y, dtype=float))
    tr = np.trace(S, axis1=-2, axis2=-1)
    out = 2 * mat.mu * np.sum(S * S, axis=(-1, -2)) + mat.lam * tr * tr
    return out if np.ndim(out) else float(out)


def _shift_basis() -> np.ndarray:
    basis = np.zeros((3, 3, 3))
    for k in range(3):
        basis[k, k, 2] += 1.0
        basis[k, 2, k] += 1.0
    return basis


_SHIFT = _shift_basis()


def _bilinear(X: np.ndarray, Y: np.ndarray, mat: Material) -> np.ndarray:
    trx = np.trace(X, axis1=-2, axis2=-1)
    tr_y = np.trace(Y, axis1=-2, axis2=-1)
    return 2 * mat.mu * np.sum(X * Y, axis=(-1, -2)) + mat.lam * trx * tr_y


def optimal_shift(B: np.ndarray, mat: Material, method: str = "closed"):
    """Minimize ``c -> Q(B + c (x) e3 + e3 (x) c)`` over ``c in R^3``.

    ``method="closed"`` uses the explicit minimizer; ``method="linear"``
    solves the 3x3 normal equations.  Returns ``(c, value)``; ``c`` depends
    linearly on ``B``.
    """
    B = sym(np.asarray(B, dtype=float))
    if method == "closed":
        c = np.empty(B.shape[:-2] + (3,))
        c[..., 0] = -B[..., 0, 2]
        c[..., 1] = -B[..., 1, 2]
        tr2 = B[..., 0, 0] + B[..., 1, 1]
        c[..., 2] = 0.5 * (-mat.lam * tr2 / (2 * mat.mu + mat.lam) - B[..., 2, 2])
    elif method == "linear":
        gram = _bilinear(_SHIFT[:, None], _SHIFT[None, :], mat)
        rhs = -np.stack([_bilinear(_SHIFT[k], B, mat) for k in range(3)], axis=-1)
        c = np.linalg.solve(gram, rhs[..., None])[..., 0]
    else:
        raise ValueError(f"unknown method {method!r}")
    S = B + np.einsum("...k,kij->...ij", c, _SHIFT)
    return c, q_phi(S, mat)


def embed2(Xi: np.ndarray) -> np.ndarray:
    """Place a 2x2 block in the upper-left corner of a zero 3x3 matrix."""
    Xi = np.asarray(Xi, dtype=float)
    out = np.zeros(Xi.shape[:-2] + (3, 3))
    out[..., :2, :2] = Xi
    return out


def q_phi_red(Xi: np.ndarray, mat: Material, method: str = "closed") -> np.ndarray:
    """Reduced form ``2 mu |sym Xi|^2 + 2 mu lambda/(2 mu + lambda) (tr Xi)^2``.

    ``method="shift"`` evaluates it through :func:`optimal_shift` instead.
    """
    Xi = np.asarray(Xi, dtype=float)
    if method == "closed":
        S = sym(Xi)
        tr = S[..., 0, 0] + S[..., 1, 1]
        out = 2 * mat.mu * np.sum(S * S, axis=(-1, -2)) + mat.lam_red * tr * tr
        return out if np.ndim(out) else float(out)
    _, value = optimal_shift(embed2(Xi), mat, method="linear" if method == "shift" else method)
    return value


# ---------------------------------------------------------------------------
# magnetoelastic density
# ---------------------------------------------------------------------------

def _axis(adjF: np.ndarray, lam: np.ndarray) -> np.ndarray:
    n = np.einsum("...ij,...j->...i", adjF, lam)
    norm = np.linalg.norm(n, axis=-1, keepdims=True)
    if np.any(norm <= 1e-300):
        raise DegenerateDirectorError("(adj F) lambda vanishes")
    return n / norm


def _check_unit(lam: np.ndarray) -> None:
    if np.any(np.abs(np.linalg.norm(lam, axis=-1) - 1.0) > 1e-12):
        raise ValueError("lambda must be a unit vector")


def k_h(F: np.ndarray, lam: np.ndarray, h: float, mat: Material) -> np.ndarray:
    """``I + h^(beta/2) n (x) n`` with ``n = adj(F) lam / |adj(F) lam|``."""
    F, lam = np.asarray(F, float), np.asarray(lam, float)
    n = _axis(adjugate3(F), lam)
    return np.eye(3) + mat.scale(h) * np.einsum("...i,...j->...ij", n, n)


def k_h_inverse(F: np.ndarray, lam: np.ndarray, h: float, mat: Material) -> np.ndarray:
    F, lam = np.asarray(F, float), np.asarray(lam, float)
    if np.any(det3(F) <= 0):
        raise OrientationError("K_h requires det F > 0")
    _check_unit(lam)
    if h <= 0:
        raise ValueError("thickness must be positive")
    n = _axis(adjugate3(F), lam)
    a = mat.scale(h)
    return np.eye(3) - (a / (1.0 + a)) * np.einsum("...i,...j->...ij", n, n)


def w_h_from_displacement_gradient(G: np.ndarray, lam: np.ndarray, h: float, mat: Material) -> np.ndarray:
    """W_h(I + G, lam), evaluated without forming ``I + G``.

    Uses ``Y^T Y - I = K^-1 (E - (K^2 - I)) K^-1`` with ``E = F^T F - I``,
    which keeps full relative precision when ``G`` is of order h^(beta/2).
    """
    G = np.asarray(G, dtype=float)
    F = np.eye(3) + G
    if np.any(det_identity_plus(G) <= 0):
        raise OrientationError("W_h requires det F > 0")
    n = _axis(adjugate3(F), np.asarray(lam, float))
    a = mat.scale(h)
    nn = np.einsum("...i,...j->...ij", n, n)
    kinv = np.eye(3) - (a / (1.0 + a)) * nn
    E = _excess_from_displacement(G)
    ec = kinv @ (E - (2 * a + a * a) * nn) @ kinv
    return phi_from_excess(ec, mat)


def w_h(F: np.ndarray, lam: np.ndarray, h: float, mat: Material) -> np.ndarray:
    """Magnetoelastic density ``Phi(sqrt(F^T F) K_h(F, lam)^-1)``."""
    F, lam = np.asarray(F, float), np.asarray(lam, float)
    if np.any(det3(F) <= 0):
        raise OrientationError("W_h requires det F > 0")
    _check_unit(lam)
    if h <= 0:
        raise ValueError("thickness must be positive")
    out = w_h_from_displacement_gradient(F - np.eye(3), lam, h, mat)
    return out if np.ndim(out) else float(out)


def w_h_direct(F: np.ndarray, lam: np.ndarray, h: float, mat: Material) -> float:
    """Literal evaluation through :func:`sqrt_spd3` and :func:`k_h_inverse` (cross-check path)."""
    F = np.asarray(F, dtype=float)
    Y = sqrt_spd3(np.swapaxes(F, -1, -2) @ F) @ k_h_inverse(F, lam, h, mat)
    return phi(Y, mat)
