"""Shared numerical routines: Newton solves, null spaces, deduplication."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class NewtonResult:
    z: np.ndarray
    residual: float
    converged: bool
    iterations: int


def newton(residual_fn, jacobian_fn, z0, tol=1e-12, max_iter=60, damping=True):
    """Newton iteration on a square or rectangular system via least squares.

    Rectangular systems are solved in the minimal-norm / least-squares sense,
    which keeps iterates near the starting sheet of a positive-dimensional
    solution set.
    """
    z = np.asarray(z0, dtype=float).copy()
    res = np.asarray(residual_fn(z), dtype=float)
    norm = float(np.max(np.abs(res))) if res.size else 0.0
    for it in range(1, max_iter + 1):
        if norm <= tol:
            return NewtonResult(z, norm, True, it - 1)
        J = np.asarray(jacobian_fn(z), dtype=float)
        try:
            step = np.linalg.lstsq(J, -res, rcond=None)[0]
        except np.linalg.LinAlgError:
            return NewtonResult(z, norm, False, it)
        if not np.all(np.isfinite(step)):
            return NewtonResult(z, norm, False, it)
        scale = 1.0
        if damping:
            for _ in range(12):
                z_try = z + scale * step
                res_try = np.asarray(residual_fn(z_try), dtype=float)
                norm_try = float(np.max(np.abs(res_try)))
                if np.isfinite(norm_try) and (norm_try < norm or norm <= tol):
                    break
                scale *= 0.5
            else:
                return NewtonResult(z, norm, False, it)
            z, res, norm = z_try, res_try, norm_try
        else:
            z = z + step
            res = np.asarray(residual_fn(z), dtype=float)
            norm = float(np.max(np.abs(res)))
    return NewtonResult(z, norm, norm <= tol, max_iter)


def nullspace(A, rtol=1e-9):
    """Orthonormal basis (columns) of the null space of A."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    _, s, vt = np.linalg.svd(A)
    cutoff = rtol * (s[0] if s.size else 1.0)
    rank = int(np.sum(s > max(cutoff, np.finfo(float).tiny)))
    return vt[rank:].T


def smallest_singular_triplet(A):
    """(sigma_min, left vector, right vector) of A."""
    u, s, vt = np.linalg.svd(np.atleast_2d(np.asarray(A, dtype=float)))
    return float(s[-1]), u[:, len(s) - 1], vt[len(s) - 1]


def sign_normalize(v, tol=1e-12):
    """Flip v so its first component larger than tol in magnitude is positive."""
    v = np.asarray(v, dtype=float)
    for c in v:
        if abs(c) > tol:
            return v if c > 0 else -v
    return v


def dedup_points(points, radius):
    """Deterministic dedup: lexicographic sort then greedy radius filtering.

    Returns indices into ``points`` of the retained representatives.
    """
    pts = np.asarray(points, dtype=float)
    if len(pts) == 0:
        return []
    order = np.lexsort(pts.T[::-1])
    kept: list[int] = []
    for idx in order:
        p = pts[idx]
        if all(np.linalg.norm(p - pts[j]) > radius for j in kept):
            kept.append(int(idx))
    return kept


def eig_sign_counts(H, zero_tol_factor=1e-6):
    """Counts of (positive, negative, near-zero) eigenvalues of symmetric H.

    An eigenvalue counts as zero when |lambda| < zero_tol_factor * max(|lambda|_max, 1).
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    vals = np.linalg.eigvalsh(0.5 * (H + H.T))
    scale = max(float(np.max(np.abs(vals))) if vals.size else 0.0, 1.0)
    cut = zero_tol_factor * scale
    n_zero = int(np.sum(np.abs(vals) < cut))
    n_plus = int(np.sum(vals >= cut))
    n_minus = int(np.sum(vals <= -cut))
    return n_plus, n_minus, n_zero


def fd_hessian(grad_fn, z, step=1e-5):
    """Symmetric finite-difference Hessian from an analytic gradient."""
    z = np.asarray(z, dtype=float)
    d = len(z)
    H = np.empty((d, d))
    for i in range(d):
        e = np.zeros(d)
        e[i] = step
        gp = np.asarray(grad_fn(z + e), dtype=float)
        gm = np.asarray(grad_fn(z - e), dtype=float)
        H[i] = (gp - gm) / (2 * step)
    return 0.5 * (H + H.T)


def fd_jacobian(fn, z, step=1e-7):
    """Central-difference Jacobian of a vector function."""
    z = np.asarray(z, dtype=float)
    f0 = np.asarray(fn(z), dtype=float)
    J = np.empty((len(f0), len(z)))
    for i in range(len(z)):
        e = np.zeros(len(z))
        e[i] = step
        J[:, i] = (np.asarray(fn(z + e), dtype=float) - np.asarray(fn(z - e), dtype=float)) / (2 * step)
    return J
