"""Implicit manifolds M = {x in R^N : g(x) = 0} and their tangent geometry.

Manifolds are always presented by polynomial constraints, never by charts.
Tangent and normal frames are produced deterministically so point indices
and signs are reproducible across runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import expr as ex
from ._numeric import newton, sign_normalize

RANK_TOL = 1e-8
FRAME_TOL = 1e-10


class ManifoldError(ValueError):
    """Manifold construction or validation failure."""


class RegularityError(ManifoldError):
    """Constraint Jacobian loses rank on (a projection to) the manifold."""


class ProjectionError(ManifoldError):
    """Gauss-Newton projection failed to reach the manifold."""


@dataclass(frozen=True)
class TangentFrame:
    """Orthonormal bases of T_pM (rows of ``tangent``) and its normal space."""

    point: np.ndarray
    tangent: np.ndarray
    normal: np.ndarray


@dataclass(frozen=True)
class RegularityReport:
    ok: bool
    checked: int
    min_singular_value: float
    failures: tuple


class ImplicitManifold:
    """Compact manifold presented as the common zero set of polynomial constraints.

    Compactness itself is asserted by the scenario author (``compact``) and is
    only spot-checked by sampling; there is no decision procedure for it.
    """

    def __init__(self, ambient_dim, constraints, intrinsic_dim, sample_seeds=(),
                 chi_expected=None, compact=True, sample_halfwidth=1.5):
        constraints = tuple(c.with_nvars(ambient_dim) for c in constraints)
        if intrinsic_dim < 1:
            raise ManifoldError("intrinsic dimension must be at least 1")
        if ambient_dim <= intrinsic_dim:
            raise ManifoldError("ambient dimension must exceed intrinsic dimension")
        if len(constraints) != ambient_dim - intrinsic_dim:
            raise ManifoldError(
                f"{ambient_dim - intrinsic_dim} constraints expected, got {len(constraints)}"
            )
        self.ambient_dim = int(ambient_dim)
        self.intrinsic_dim = int(intrinsic_dim)
        self.constraints = constraints
        self.sample_seeds = tuple(tuple(float(c) for c in s) for s in sample_seeds)
        self.chi_expected = chi_expected
        self.compact = bool(compact)
        self.sample_halfwidth = float(sample_halfwidth)
        grads = [[ex.differentiate(c, i) for i in range(ambient_dim)] for c in constraints]
        self.constraint_gradients = tuple(tuple(row) for row in grads)
        N, c = ambient_dim, len(constraints)
        upper = [(i, j) for i in range(N) for j in range(i, N)]
        family = list(constraints)
        family += [row[i] for row in grads for i in range(N)]
        family += [ex.differentiate(row[i], j) for row in grads for (i, j) in upper]
        self._block = ex.ExprBlock(family, N)
        self._upper = upper
        self._ui = np.array([i for i, _ in upper])
        self._uj = np.array([j for _, j in upper])
        self._memo = (None, None)

    # numeric evaluators; one basis product per point, memoized for the
    # residual/jacobian call pairs issued by the solvers
    def _eval(self, x):
        x = np.asarray(x, dtype=float)
        key = x.tobytes()
        memo = self._memo          # single read keeps the pair consistent
        if key == memo[0]:
            return memo[1]
        N, c = self.ambient_dim, len(self.constraints)
        vals = self._block(x)
        g = vals[:c]
        Dg = vals[c:c + c * N].reshape(c, N)
        Hg = np.zeros((c, N, N))
        tri = vals[c + c * N:].reshape(c, len(self._upper))
        Hg[:, self._ui, self._uj] = tri
        Hg[:, self._uj, self._ui] = tri
        out = (g, Dg, Hg)
        self._memo = (key, out)
        return out

    def g(self, x):
        return self._eval(x)[0]

    def jacobian(self, x):
        return self._eval(x)[1]

    def constraint_hessians(self, x):
        return self._eval(x)[2]

    def residual(self, x):
        return float(np.max(np.abs(self.g(x)))) if self.constraints else 0.0

    def __repr__(self):
        return (f"ImplicitManifold(N={self.ambient_dim}, m={self.intrinsic_dim}, "
                f"constraints={[ex.to_prefix(c) for c in self.constraints]})")


def project_to_manifold(M: ImplicitManifold, x0, residual_tol=1e-12, max_iters=60):
    """Gauss-Newton projection of an ambient point onto M."""

    def res(z):
        return M.g(z)

    def jac(z):
        return M.jacobian(z)

    out = newton(res, jac, np.asarray(x0, dtype=float), tol=residual_tol, max_iter=max_iters)
    if not out.converged:
        raise ProjectionError(f"projection stalled at residual {out.residual:.3e}")
    return out.z


def tangent_frame(M: ImplicitManifold, p, tol=FRAME_TOL) -> TangentFrame:
    """Deterministic orthonormal frames at a point satisfying the constraints.

    The tangent basis is the coordinate basis projected to ker Dg(p) and
    orthonormalized in fixed index order; the normal basis comes from the
    constraint gradients in declaration order.
    """
    p = np.asarray(p, dtype=float)
    if M.residual(p) > 1e-8:
        raise ManifoldError(f"point off the manifold (residual {M.residual(p):.3e})")
    J = M.jacobian(p)
    sv = np.linalg.svd(J, compute_uv=False)
    if sv[-1] < RANK_TOL:
        raise RegularityError(f"constraint Jacobian rank-deficient at {p}")

    normal = []
    for row in J:
        v = row.copy()
        for q in normal:
            v -= (v @ q) * q
        norm = np.linalg.norm(v)
        if norm < RANK_TOL:
            raise RegularityError("constraint gradients numerically dependent")
        normal.append(v / norm)
    normal = np.array(normal)

    tangent = []
    for i in range(M.ambient_dim):
        v = np.zeros(M.ambient_dim)
        v[i] = 1.0
        for q in normal:
            v -= (v @ q) * q
        for q in tangent:
            v -= (v @ q) * q
        norm = np.linalg.norm(v)
        if norm > 1e-6:
            tangent.append(sign_normalize(v / norm))
        if len(tangent) == M.intrinsic_dim:
            break
    if len(tangent) != M.intrinsic_dim:
        raise RegularityError("could not complete a tangent basis")
    tangent = np.array(tangent)

    if float(np.max(np.abs(J @ tangent.T))) > 1e-6:
        raise RegularityError("tangent basis fails the constraint Jacobian test")
    return TangentFrame(point=p, tangent=tangent, normal=normal)


def validate_regularity(M: ImplicitManifold, count: int, seed: int,
                        rank_tol=1e-4) -> RegularityReport:
    """Project seeded random points onto M and check full constraint rank there.

    The audit threshold is coarse on purpose: a double root passes the solver
    residual test while its gradient scales like sqrt(residual), so a tight
    threshold would miss it.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = np.random.default_rng([int(seed), 11])
    starts = [np.asarray(s, dtype=float) for s in M.sample_seeds]
    w = M.sample_halfwidth
    while len(starts) < count:
        starts.append(rng.uniform(-w, w, M.ambient_dim))
    min_sv = np.inf
    failures = []
    checked = 0
    for x0 in starts[: max(count, len(M.sample_seeds))]:
        try:
            p = project_to_manifold(M, x0)
        except ProjectionError:
            continue
        checked += 1
        sv = np.linalg.svd(M.jacobian(p), compute_uv=False)
        min_sv = min(min_sv, float(sv[-1]))
        if sv[-1] < rank_tol:
            failures.append(tuple(p))
    if checked == 0:
        raise RegularityError("no random point could be projected onto the manifold")
    return RegularityReport(
        ok=not failures,
        checked=checked,
        min_singular_value=float(min_sv),
        failures=tuple(failures),
    )


def standard_manifold(name: str, **params) -> ImplicitManifold:
    """Library of scenario manifolds with known Euler characteristic metadata.

    Names: ``sphere`` (param m), ``torus``, ``product_of_spheres`` (params a, b),
    and ``custom`` (ambient_dim, constraints as prefix strings, intrinsic_dim,
    optional chi_expected / compact / sample_seeds).
    """
    if name == "sphere":
        m = int(params["m"])
        n_amb = m + 1
        g = sum((ex.Expr.variable(i, n_amb) ** 2 for i in range(n_amb)),
                ex.Expr.constant(-1, n_amb))
        return ImplicitManifold(n_amb, [g], m, chi_expected=1 + (-1) ** m,
                                sample_seeds=[(1.0,) + (0.0,) * m])
    if name == "torus":
        # (x^2 + y^2 + z^2 + 3)^2 - 16 (x^2 + y^2) = 0, the R=2, r=1 torus
        v = [ex.Expr.variable(i, 3) for i in range(3)]
        rad = v[0] ** 2 + v[1] ** 2 + v[2] ** 2 + 3
        g = rad**2 - 16 * (v[0] ** 2 + v[1] ** 2)
        return ImplicitManifold(3, [g], 2, chi_expected=0, sample_halfwidth=3.5,
                                sample_seeds=[(2.0, 0.0, 1.0), (1.0, 0.0, 0.0)])
    if name == "product_of_spheres":
        a, b = int(params["a"]), int(params["b"])
        n_amb = a + b + 2
        g1 = sum((ex.Expr.variable(i, n_amb) ** 2 for i in range(a + 1)),
                 ex.Expr.constant(-1, n_amb))
        g2 = sum((ex.Expr.variable(i, n_amb) ** 2 for i in range(a + 1, n_amb)),
                 ex.Expr.constant(-1, n_amb))
        chi = (1 + (-1) ** a) * (1 + (-1) ** b)
        seed_pt = (1.0,) + (0.0,) * a + (1.0,) + (0.0,) * b
        return ImplicitManifold(n_amb, [g1, g2], a + b, chi_expected=chi,
                                sample_seeds=[seed_pt])
    if name == "custom":
        constraints = [ex.parse_prefix(s, int(params["ambient_dim"]))
                       for s in params["constraints"]]
        return ImplicitManifold(
            int(params["ambient_dim"]),
            constraints,
            int(params["intrinsic_dim"]),
            sample_seeds=params.get("sample_seeds", ()),
            chi_expected=params.get("chi_expected"),
            compact=params.get("compact", True),
            sample_halfwidth=params.get("sample_halfwidth", 1.5),
        )
    raise ManifoldError(f"unknown manifold {name!r}")
