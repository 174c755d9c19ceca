"""Singular stratification of f restricted to an implicit manifold.

A point is singular when some unit covector u annihilates the image of the
restricted differential; the solution set of the resulting Lagrange-type
system is the depth-1 closure.  Depth and the plus/minus split of odd-depth
strata are read off the kernel Hessian of <u, f> corrected by the constraint
multipliers.  For two-dimensional targets the depth-1 set is a union of
closed curves, traced by pseudo-arclength continuation; cusps are bracketed
by the sign of the kernel-Hessian determinant and refined by bisection.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import expr as ex
from ._numeric import (
    dedup_points,
    eig_sign_counts,
    newton,
    nullspace,
    sign_normalize,
    smallest_singular_triplet,
)
from .manifold import (
    ImplicitManifold,
    ManifoldError,
    ProjectionError,
    RegularityError,
    project_to_manifold,
    tangent_frame,
    validate_regularity,
)


class ScenarioFormatError(ValueError):
    """Scenario file fails parsing or the theorem hypotheses."""


class MorinnessError(RuntimeError):
    """The map is not Morin at some located point (or the stratification failed)."""


class StratificationError(RuntimeError):
    """Structural failure while computing the singular set."""


@dataclass(frozen=True)
class Tolerances:
    residual: float = 1e-12
    dedup_radius: float = 1e-6
    eigen_zero: float = 1e-6
    correctness: float = 1e-8
    curve_step: float = 1e-2
    depth_slope: float = 1e-4
    max_resamples: int = 16
    multistart_density: int = 200

    @staticmethod
    def from_dict(d: dict) -> "Tolerances":
        base = Tolerances()
        kwargs = {}
        for name in base.__dataclass_fields__:
            if name in d:
                kwargs[name] = type(getattr(base, name))(d[name])
        unknown = set(d) - set(base.__dataclass_fields__)
        if unknown:
            raise ScenarioFormatError(f"unknown tolerance keys {sorted(unknown)}")
        return Tolerances(**kwargs)

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


class MorinScenario:
    """An implicit manifold together with map components and reproducibility data."""

    def __init__(self, name, manifold: ImplicitManifold, target_dim, components,
                 seed=0, tolerances: Tolerances | None = None, chi_expected=None):
        n = int(target_dim)
        m = manifold.intrinsic_dim
        if n < 1:
            raise ScenarioFormatError("target dimension must be at least 1")
        if m <= n:
            raise ScenarioFormatError(f"need dim M > target dimension, got m={m}, n={n}")
        if (m - n) % 2 == 0:
            raise ScenarioFormatError(f"hypothesis violated: m - n = {m - n} is even")
        if len(components) != n:
            raise ScenarioFormatError(f"{n} map components expected, got {len(components)}")
        self.name = str(name)
        self.manifold = manifold
        self.target_dim = n
        self.components = tuple(c.with_nvars(manifold.ambient_dim) for c in components)
        self.seed = int(seed)
        self.tolerances = tolerances or Tolerances()
        self.chi_expected = chi_expected if chi_expected is None else int(chi_expected)

        N = manifold.ambient_dim
        grads = [[ex.differentiate(c, i) for i in range(N)] for c in self.components]
        self.component_gradients = tuple(tuple(r) for r in grads)
        upper = [(i, j) for i in range(N) for j in range(i, N)]
        family = list(self.components)
        family += [row[i] for row in grads for i in range(N)]
        family += [ex.differentiate(row[i], j) for row in grads for (i, j) in upper]
        self._block = ex.ExprBlock(family, N)
        self._upper = upper
        self._ui = np.array([i for i, _ in upper])
        self._uj = np.array([j for _, j in upper])
        self._memo = (None, None)

    # shorthand dimensions
    @property
    def N(self):
        return self.manifold.ambient_dim

    @property
    def m(self):
        return self.manifold.intrinsic_dim

    @property
    def n(self):
        return self.target_dim

    @property
    def c(self):
        return self.N - self.m

    def _eval(self, x):
        x = np.asarray(x, dtype=float)
        key = x.tobytes()
        memo = self._memo          # single read keeps the pair consistent
        if key == memo[0]:
            return memo[1]
        N, n = self.N, self.n
        vals = self._block(x)
        f = vals[:n]
        Df = vals[n:n + n * N].reshape(n, N)
        Hf = np.zeros((n, N, N))
        tri = vals[n + n * N:].reshape(n, len(self._upper))
        Hf[:, self._ui, self._uj] = tri
        Hf[:, self._uj, self._ui] = tri
        out = (f, Df, Hf)
        self._memo = (key, out)
        return out

    def f(self, x):
        return self._eval(x)[0]

    def Df(self, x):
        return self._eval(x)[1]

    def Hf(self, x):
        return self._eval(x)[2]

    def lagrangian_hessian(self, x, u, mu):
        """Ambient Hessian of <u, f> - <mu, g> at x."""
        W = np.einsum("l,lij->ij", np.asarray(u, dtype=float), self.Hf(x))
        if self.c:
            W = W - np.einsum("k,kij->ij", np.asarray(mu, dtype=float),
                              self.manifold.constraint_hessians(x))
        return W

    def _ensure_third_tensors(self):
        if hasattr(self, "_t3"):
            return
        N = self.N
        entries = []
        exprs = list(self.components) + list(self.manifold.constraints)
        for idx, e in enumerate(exprs):
            for i in range(N):
                di = ex.differentiate(e, i)
                for j in range(i, N):
                    dij = ex.differentiate(di, j)
                    for k in range(j, N):
                        dijk = ex.differentiate(dij, k)
                        if not dijk.is_zero():
                            entries.append((idx, i, j, k, ex.compiled(dijk)))
        self._t3 = entries

    def third_tensors(self, x):
        """Symmetric third-derivative tensors of (f_1..f_n, g_1..g_c) at x."""
        self._ensure_third_tensors()
        x = np.atleast_2d(np.asarray(x, dtype=float))
        N = self.N
        T = np.zeros((self.n + self.c, N, N, N))
        for idx, i, j, k, fn in self._t3:
            val = fn(x)
            for perm in {(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)}:
                T[idx][perm] = val
        return T[:self.n], T[self.n:]

    def __repr__(self):
        comps = [ex.to_prefix(c) for c in self.components]
        return f"MorinScenario({self.name!r}, m={self.m}, n={self.n}, f={comps})"


def load_scenario(source) -> MorinScenario:
    """Build a scenario from a JSON file path or an already-parsed dict."""
    if isinstance(source, (str, Path)):
        try:
            data = json.loads(Path(source).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ScenarioFormatError(f"cannot read scenario: {exc}") from exc
        default_name = Path(source).stem
    else:
        data = dict(source)
        default_name = "scenario"
    try:
        N = int(data["ambient_dim"])
        m = int(data["intrinsic_dim"])
        constraints = [ex.parse_prefix(s, N) for s in data["constraints"]]
        components = [ex.parse_prefix(s, N) for s in data["components"]]
        n = int(data["target_dim"])
    except (KeyError, TypeError, ex.ExprError) as exc:
        raise ScenarioFormatError(f"bad scenario fields: {exc}") from exc
    try:
        manifold = ImplicitManifold(
            N, constraints, m,
            sample_seeds=data.get("sample_seeds", ()),
            chi_expected=data.get("chi_expected"),
            compact=data.get("compact", True),
            sample_halfwidth=data.get("sample_halfwidth", 1.5),
        )
    except ManifoldError as exc:
        raise ScenarioFormatError(str(exc)) from exc
    return MorinScenario(
        name=data.get("name", default_name),
        manifold=manifold,
        target_dim=n,
        components=components,
        seed=data.get("seed", 0),
        tolerances=Tolerances.from_dict(data.get("tolerances", {})),
        chi_expected=data.get("chi_expected"),
    )


# -- domain types -------------------------------------------------------------


@dataclass(frozen=True)
class QuadraticSignature:
    """Eigenvalue sign counts of the kernel Hessian, and the index parity."""

    n_plus: int
    n_minus: int
    n_zero: int

    @property
    def lambda_parity(self) -> str:
        return "even" if self.n_minus % 2 == 0 else "odd"


@dataclass
class StratumPoint:
    x: np.ndarray
    depth: int
    cokernel: np.ndarray
    multiplier: np.ndarray
    kernel_basis: np.ndarray            # columns span ker d(f|M)(x)
    signature: QuadraticSignature | None = None
    degenerate_direction: np.ndarray | None = None
    sign: str = "unsigned"              # plus | minus | unsigned
    residuals: dict = field(default_factory=dict)
    depth_verified: bool = True
    eig_slope: float | None = None

    def as_row(self):
        return tuple(self.x) + (self.depth, self.sign, self.residuals.get("system", 0.0))


# -- the singular system ------------------------------------------------------


class SingularSystem:
    """The system {g = 0, Df^T u - Dg^T mu = 0, |u|^2 = 1} in z = (x, u, mu).

    Its solution set projects onto the depth-1 closure; the expected solution
    dimension is n - 1.  For n = 1 a reduced chart with u fixed to (1,) is
    used, since the unit 0-sphere is the discrete set {+1, -1} and the two
    points give identical stratification data.
    """

    def __init__(self, scenario: MorinScenario):
        self.S = scenario
        self.reduced = scenario.n == 1
        N, n, c = scenario.N, scenario.n, scenario.c
        self.dim_z = N + c if self.reduced else N + n + c
        self.n_eqs = c + N if self.reduced else c + N + 1
        self.solution_dim = n - 1

    def pack(self, x, u, mu):
        if self.reduced:
            return np.concatenate([x, mu])
        return np.concatenate([x, u, mu])

    def unpack(self, z):
        N, n, c = self.S.N, self.S.n, self.S.c
        z = np.asarray(z, dtype=float)
        if self.reduced:
            return z[:N], np.array([1.0]), z[N:]
        return z[:N], z[N:N + n], z[N + n:]

    def residual(self, z):
        S = self.S
        x, u, mu = self.unpack(z)
        g = S.manifold.g(x)
        stat = S.Df(x).T @ u - (S.manifold.jacobian(x).T @ mu if S.c else 0.0)
        if self.reduced:
            return np.concatenate([g, stat])
        return np.concatenate([g, stat, [u @ u - 1.0]])

    def jacobian(self, z):
        S = self.S
        x, u, mu = self.unpack(z)
        N, n, c = S.N, S.n, S.c
        Dg = S.manifold.jacobian(x)
        W = S.lagrangian_hessian(x, u, mu)
        if self.reduced:
            J = np.zeros((c + N, N + c))
            J[:c, :N] = Dg
            J[c:, :N] = W
            J[c:, N:] = -Dg.T
            return J
        J = np.zeros((c + N + 1, N + n + c))
        J[:c, :N] = Dg
        J[c:c + N, :N] = W
        J[c:c + N, N:N + n] = S.Df(x).T
        J[c:c + N, N + n:] = -Dg.T
        J[c + N, N:N + n] = 2 * u
        return J

    def describe(self) -> dict:
        """Symbolic description of the equation groups (prefix strings)."""
        S = self.S
        return {
            "constraints": [ex.to_prefix(g) for g in S.manifold.constraints],
            "map_gradients": [[ex.to_prefix(g) for g in row]
                              for row in S.component_gradients],
            "constraint_gradients": [[ex.to_prefix(g) for g in row]
                                     for row in S.manifold.constraint_gradients],
            "stationarity": "sum_l u_l * d f_l / d x_i - sum_j mu_j * d g_j / d x_i = 0",
            "normalization": None if self.reduced else "|u|^2 = 1",
            "solution_dim": self.solution_dim,
        }


def singular_system(scenario: MorinScenario) -> SingularSystem:
    return SingularSystem(scenario)


# -- pointwise stratum data ---------------------------------------------------


def _kernel_data(S: MorinScenario, x, u):
    """Orthonormal ambient kernel basis of d(f|M)(x) at a corank-1 point."""
    frame = tangent_frame(S.manifold, x)
    A = S.Df(x) @ frame.tangent.T            # (n, m) differential in the frame
    svals = np.linalg.svd(A, compute_uv=False)
    scale = max(float(svals[0]) if len(svals) else 1.0, 1.0)
    corank = int(np.sum(svals < 1e-7 * scale)) if len(svals) else S.n
    if corank == 0:
        raise StratificationError("point is not singular (full-rank differential)")
    if corank > 1:
        raise MorinnessError(f"corank {corank} > 1 at {x}: map is not Morin there")
    # kernel in frame coordinates, then back to ambient; with full_matrices the
    # trailing right-singular vectors span the null space of the rank-(n-1) map
    _, _, vt = np.linalg.svd(A, full_matrices=True)
    kdim = S.m - (S.n - 1)
    K_frame = vt[S.n - 1:].T
    K = frame.tangent.T @ K_frame
    # deterministic column signs
    K = np.column_stack([sign_normalize(K[:, j]) for j in range(K.shape[1])])
    if K.shape[1] != kdim:
        raise StratificationError(f"kernel dimension {K.shape[1]} != {kdim}")
    return frame, K


def kernel_hessian(S: MorinScenario, p: StratumPoint) -> QuadraticSignature:
    """Sign counts of the kernel Hessian of <u, f> - <mu, g> at p.

    Rejects the scenario when more than one eigenvalue is numerically zero,
    since a corank-1 chain admits at most one degenerate kernel direction.
    """
    W = S.lagrangian_hessian(p.x, p.cokernel, p.multiplier)
    HK = p.kernel_basis.T @ W @ p.kernel_basis
    n_plus, n_minus, n_zero = eig_sign_counts(HK, S.tolerances.eigen_zero)
    sig = QuadraticSignature(n_plus, n_minus, n_zero)
    if n_zero > 1:
        raise MorinnessError(
            f"kernel Hessian has {n_zero} near-zero eigenvalues at {p.x}: not Morin"
        )
    p.signature = sig
    if n_zero == 1:
        vals, vecs = np.linalg.eigh(0.5 * (HK + HK.T))
        j = int(np.argmin(np.abs(vals)))
        p.degenerate_direction = sign_normalize(p.kernel_basis @ vecs[:, j])
    p.residuals["kernel_hessian_zero_gap"] = _zero_gap(HK, S.tolerances.eigen_zero)
    return sig


def _zero_gap(HK, factor):
    vals = np.abs(np.linalg.eigvalsh(0.5 * (HK + HK.T)))
    scale = max(float(vals.max()) if vals.size else 0.0, 1.0)
    return float(vals.min() / scale) if vals.size else 0.0


def sign_split(S: MorinScenario, p: StratumPoint) -> str:
    """Plus/minus split of odd-depth points by kernel-index parity.

    Well defined because m - n + 1 is even: flipping u complements the
    nondegenerate eigenvalue signs, which preserves the parity of the
    negative count.
    """
    if p.depth % 2 == 0:
        raise StratificationError("sign split applies to odd depths only")
    if p.signature is None:
        kernel_hessian(S, p)
    p.sign = "plus" if p.signature.n_minus % 2 == 0 else "minus"
    return p.sign


# -- solving ------------------------------------------------------------------


def _multistart_seeds(S: MorinScenario, count, tag):
    rng = np.random.default_rng([S.seed, 23, tag])
    pts = [np.asarray(s, dtype=float) for s in S.manifold.sample_seeds]
    w = S.manifold.sample_halfwidth
    while len(pts) < count:
        pts.append(rng.uniform(-w, w, S.N))
    return pts


def _initial_guess(S: MorinScenario, system: SingularSystem, x0):
    """Project to M and estimate (u, mu) from the smallest singular direction."""
    x = project_to_manifold(S.manifold, x0)
    frame = tangent_frame(S.manifold, x)
    A = S.Df(x) @ frame.tangent.T
    _, u0, _ = smallest_singular_triplet(A)
    u0 = sign_normalize(u0)
    Dg = S.manifold.jacobian(x)
    rhs = S.Df(x).T @ u0
    mu0 = np.linalg.lstsq(Dg.T, rhs, rcond=None)[0] if S.c else np.zeros(0)
    if system.reduced:
        return system.pack(x, None, mu0)
    return system.pack(x, u0, mu0)


def solve_stratum1(S: MorinScenario, density=None) -> list[StratumPoint]:
    """Multistart Newton on the singular system, deduplicated by base point.

    Non-converged starts are silently discarded.  An empty result on a
    compact manifold is an error: any map from a compact manifold with
    m > n must have singular points.
    """
    system = SingularSystem(S)
    tol = S.tolerances
    count = (density or tol.multistart_density) * S.n
    solutions = []
    for x0 in _multistart_seeds(S, count, tag=1):
        try:
            z0 = _initial_guess(S, system, x0)
        except (ProjectionError, RegularityError):
            continue
        out = newton(system.residual, system.jacobian, z0, tol=tol.residual,
                     max_iter=30)
        if not out.converged:
            continue
        solutions.append(out.z)
    points = _points_from_solutions(S, system, solutions)
    if not points and S.manifold.compact:
        raise StratificationError(
            "no singular points found on a compact manifold with m > n; "
            "the singular set cannot be empty"
        )
    return points


def _normalize_pair(u, mu, tol=1e-12):
    """Flip (u, mu) together so the first significant cokernel entry is positive.

    The stationarity equations are linear in the pair, so only a joint flip
    preserves them (and the Lagrangian Hessian built from them).
    """
    u = np.asarray(u, dtype=float)
    mu = np.asarray(mu, dtype=float)
    for c in u:
        if abs(c) > tol:
            return (u, mu) if c > 0 else (-u, -mu)
    return u, mu


def _points_from_solutions(S, system, solutions) -> list[StratumPoint]:
    if not solutions:
        return []
    xs = np.array([system.unpack(z)[0] for z in solutions])
    kept = dedup_points(xs, S.tolerances.dedup_radius)
    points = []
    for idx in kept:
        z = solutions[idx]
        x, u, mu = system.unpack(z)
        u, mu = _normalize_pair(u, mu)
        try:
            p = _make_point(S, x, u, mu, system)
        except (StratificationError, RegularityError):
            continue
        points.append(p)
    points.sort(key=lambda p: tuple(np.round(p.x, 9)))
    return points


def _make_point(S, x, u, mu, system=None) -> StratumPoint:
    system = system or SingularSystem(S)
    z = system.pack(x, None if system.reduced else u, mu)
    res = float(np.max(np.abs(system.residual(z))))
    _, K = _kernel_data(S, x, u)
    p = StratumPoint(
        x=np.asarray(x, dtype=float),
        depth=1,
        cokernel=np.asarray(u, dtype=float),
        multiplier=np.asarray(mu, dtype=float),
        kernel_basis=K,
        residuals={"system": res},
    )
    kernel_hessian(S, p)
    if p.signature.n_zero == 0:
        # a nondegenerate kernel form already certifies depth 1
        p.depth = 1
        p.sign = "plus" if p.signature.n_minus % 2 == 0 else "minus"
    return p


# -- depth classification -------------------------------------------------------


def _corrector(system, z_pred, t):
    """Newton step back to the curve inside the plane through z_pred normal to t."""
    return _snap_to_plane(system, z_pred, z_pred, t)


def _snap_to_plane(system, z_start, anchor, t):
    """Newton from z_start onto {F = 0} intersected with the plane through anchor."""

    def res(w):
        return np.concatenate([system.residual(w), [t @ (w - anchor)]])

    def jac(w):
        return np.vstack([system.jacobian(w), t])

    return newton(res, jac, np.asarray(z_start, dtype=float),
                  tol=system.S.tolerances.residual, max_iter=40)


def _plain_correct(system, z0):
    return newton(system.residual, system.jacobian, z0,
                  tol=system.S.tolerances.residual, max_iter=60)


def _curve_tangent(system, z, prev=None):
    ns = nullspace(system.jacobian(z), rtol=1e-8)
    if ns.shape[1] != 1:
        raise MorinnessError(
            f"singular-set dimension audit failed: nullity {ns.shape[1]} != 1 "
            f"(solution variety is not a smooth curve here)"
        )
    t = ns[:, 0]
    if prev is not None and t @ prev < 0:
        t = -t
    return sign_normalize(t) if prev is None else t


def _near_zero_eig(S, x, u, mu):
    """The smallest-magnitude eigenvalue of the kernel Hessian (signed)."""
    _, K = _kernel_data(S, x, u)
    HK = K.T @ S.lagrangian_hessian(x, u, mu) @ K
    vals = np.linalg.eigvalsh(0.5 * (HK + HK.T))
    return float(vals[np.argmin(np.abs(vals))])


def degenerate_eigenvalue_slope(S: MorinScenario, p: StratumPoint, delta=None):
    """Arc-length slope and curvature of the flattening kernel eigenvalue at p.

    Moving along the depth-1 curve in the direction of the degenerate kernel
    vector, the near-zero eigenvalue crosses zero; its slope is the intrinsic
    analog of the leading higher-order coefficient of the local normal form
    (6 for the standard depth-2 model), so a simple transversal crossing
    certifies depth 2.  The second-order variation separates deeper points
    from outright classification failures.
    """
    if p.degenerate_direction is None:
        raise StratificationError("no degenerate direction at this point")
    system = SingularSystem(S)
    z = system.pack(p.x, p.cokernel, p.multiplier)
    t = _curve_tangent(system, z)
    # orient the curve tangent along the degenerate kernel direction
    x_dir = t[:S.N]
    align = float(x_dir @ p.degenerate_direction)
    if abs(align) < 1e-3 * np.linalg.norm(x_dir):
        raise MorinnessError(
            "degenerate kernel direction is not tangent to the singular curve"
        )
    if align < 0:
        t = -t
    delta = delta or S.tolerances.curve_step / 4
    vals = []
    for s in (-delta, 0.0, delta):
        if s == 0.0:
            vals.append(_near_zero_eig(S, p.x, p.cokernel, p.multiplier))
            continue
        out = _corrector(system, z + s * t, t)
        if not out.converged:
            raise StratificationError("could not sample the curve near the point")
        xx, uu, mm = system.unpack(out.z)
        if uu @ p.cokernel < 0:
            uu, mm = -uu, -mm
        vals.append(_near_zero_eig(S, xx, uu, mm))
    # measure per unit arc of the base curve in x-space, not of the lifted
    # curve in (x, u, mu)-space, matching the chart normal-form coefficient
    x_speed = float(np.linalg.norm(t[:S.N]))
    slope = (vals[2] - vals[0]) / (2 * delta * x_speed)
    curvature = (vals[2] - 2 * vals[1] + vals[0]) / (delta * x_speed) ** 2
    return slope, curvature


def classify_depth(S: MorinScenario, p: StratumPoint) -> int:
    """Depth of a located singular point.

    Depth 1 when the kernel Hessian is nondegenerate.  With exactly one flat
    direction, a transversal zero crossing of that eigenvalue along the
    singular curve certifies depth 2.  A vanishing slope with a nonzero
    second-order variation marks depth 3 and up, reported with
    depth_verified=False since those numerics are not certified here; when
    every tested order vanishes the classification fails with the measured
    values.
    """
    if p.signature is None:
        kernel_hessian(S, p)
    if p.signature.n_zero == 0:
        p.depth = 1
        return 1
    if S.n == 1:
        raise MorinnessError(
            "degenerate kernel Hessian with a 1-dimensional target: not Morin"
        )
    slope, curvature = degenerate_eigenvalue_slope(S, p)
    p.eig_slope = float(slope)
    thr = S.tolerances.depth_slope
    if abs(slope) > thr:
        p.depth = 2
        p.depth_verified = True
        return 2
    if abs(curvature) > thr:
        p.depth = 3
        p.depth_verified = False
        return 3
    raise StratificationError(
        f"depth classification failed at {np.round(p.x, 6)}: eigenvalue slope "
        f"{slope:.3e} and curvature {curvature:.3e} both below {thr:.1e}"
    )


# -- curve tracing (n = 2) ------------------------------------------------------


@dataclass
class Arc:
    sign: str
    start_cusp: int | None          # indices into FoldCurve.cusps, None on circles
    end_cusp: int | None
    node_span: tuple                # (start node pos, end node pos), cyclic


@dataclass
class FoldCurve:
    nodes: np.ndarray               # (K, dim_z) ordered along the curve
    closed: bool
    closure_error: float
    det_values: np.ndarray          # det of kernel Hessian per node
    parities: np.ndarray            # negative-eigenvalue parity per node (0/1)
    cusps: list = field(default_factory=list)       # StratumPoint, depth 2
    cusp_positions: list = field(default_factory=list)  # fractional node index
    arcs: list = field(default_factory=list)

    def x_nodes(self, N):
        return self.nodes[:, :N]


def _node_metrics(S, system, z):
    x, u, mu = system.unpack(z)
    _, K = _kernel_data(S, x, u)
    HK = K.T @ S.lagrangian_hessian(x, u, mu) @ K
    HK = 0.5 * (HK + HK.T)
    vals = np.linalg.eigvalsh(HK)
    det = float(np.prod(vals))
    # strict sign count: near a cusp the crossing eigenvalue must contribute
    # its side's sign rather than falling into the zero bucket
    parity = int(np.sum(vals < 0)) % 2
    n_zero = eig_sign_counts(HK, S.tolerances.eigen_zero)[2]
    return det, parity, n_zero


def trace_fold_curve(S: MorinScenario, z_start, max_steps=200000) -> FoldCurve:
    """Pseudo-arclength trace of one closed component of the singular curve.

    The cokernel may return to minus itself after one loop of the base curve;
    tracing continues until the full (x, u, mu) state closes, so each
    geometric point appears once or twice and duplicates are cleaned up by
    the caller via the base-point dedup radius.
    """
    system = SingularSystem(S)
    if system.solution_dim != 1:
        raise StratificationError("curve tracing requires a 1-dimensional stratum")
    h = S.tolerances.curve_step
    start = _plain_correct(system, np.asarray(z_start, dtype=float))
    if not start.converged:
        raise StratificationError("could not land on the singular curve")
    z0 = start.z
    t = _curve_tangent(system, z0)
    nodes = [z0]
    tangents = [t]
    z, closed, closure_error = z0, False, np.inf
    for step in range(max_steps):
        out = _corrector(system, z + h * t, t)
        if not out.converged:
            # halve the step locally rather than failing the whole trace
            out = _corrector(system, z + 0.5 * h * t, t)
            if not out.converged:
                raise StratificationError("continuation corrector failed")
        z_new = out.z
        t_new = _curve_tangent(system, z_new, prev=t)
        if step > 2 and np.linalg.norm(z_new - z0) < h:
            # land the returning branch on the plane through the start point
            snap = _snap_to_plane(system, z_new, z0, tangents[0])
            closure_error = float(np.linalg.norm(snap.z - z0)) if snap.converged else np.inf
            closed = True
            break
        nodes.append(z_new)
        tangents.append(t_new)
        z, t = z_new, t_new
    if not closed:
        raise StratificationError("trace did not close (open curve or step budget hit)")

    nodes = np.array(nodes)
    dets, pars = [], []
    for zn in nodes:
        det, par, _ = _node_metrics(S, system, zn)
        dets.append(det)
        pars.append(par)
    curve = FoldCurve(
        nodes=nodes,
        closed=True,
        closure_error=closure_error,
        det_values=np.array(dets),
        parities=np.array(pars, dtype=int),
    )
    _locate_cusps(S, system, curve)
    _build_arcs(S, curve)
    return curve


def _locate_cusps(S, system, curve: FoldCurve):
    dets = curve.det_values
    K = len(dets)
    for i in range(K):
        j = (i + 1) % K
        if dets[i] == 0.0:
            raise StratificationError("exact zero determinant at a trace node")
        if dets[i] * dets[j] > 0:
            continue
        za, zb = curve.nodes[i], curve.nodes[j]
        da = dets[i]
        for _ in range(60):
            mid = _plain_correct(system, 0.5 * (za + zb))
            if not mid.converged:
                raise StratificationError("cusp bisection lost the curve")
            dm, _, _ = _node_metrics(S, system, mid.z)
            if dm == 0.0 or np.linalg.norm(zb - za) < 1e-14:
                za = zb = mid.z
                break
            if da * dm < 0:
                zb = mid.z
            else:
                za, da = mid.z, dm
        z_cusp = 0.5 * (za + zb)
        land = _plain_correct(system, z_cusp)
        x, u, mu = system.unpack(land.z)
        u, mu = _normalize_pair(u, mu)
        p = _make_point(S, x, u, mu, system)
        if p.signature.n_zero != 1:
            # determinant changed sign yet no flat direction: conditioning issue
            raise MorinnessError(f"inconsistent degeneracy at cusp candidate {x}")
        classify_depth(S, p)
        if p.depth != 2:
            raise MorinnessError(
                f"degenerate point at {x} is not a certified depth-2 point "
                f"(eigenvalue slope {p.eig_slope})"
            )
        curve.cusps.append(p)
        curve.cusp_positions.append(i + 0.5)
    # a cokernel that returns to minus itself makes the trace cover the base
    # curve twice; cusp bookkeeping would then double-count, so fail loudly
    for i in range(len(curve.cusps)):
        for j in range(i + 1, len(curve.cusps)):
            if np.linalg.norm(curve.cusps[i].x - curve.cusps[j].x) < S.tolerances.dedup_radius:
                raise StratificationError(
                    "singular curve is doubly covered by its cokernel lift; "
                    "this configuration is not supported"
                )


def _build_arcs(S, curve: FoldCurve):
    K = len(curve.nodes)
    if not curve.cusps:
        # a whole circle of constant parity
        if len(set(curve.parities.tolist())) != 1:
            raise MorinnessError("kernel index parity changed without a cusp")
        sign = "plus" if curve.parities[0] == 0 else "minus"
        curve.arcs.append(Arc(sign=sign, start_cusp=None, end_cusp=None,
                              node_span=(0, K)))
        return
    order = np.argsort(curve.cusp_positions)
    positions = [curve.cusp_positions[i] for i in order]
    curve.cusps = [curve.cusps[i] for i in order]
    curve.cusp_positions = positions
    n_cusps = len(positions)
    for a in range(n_cusps):
        b = (a + 1) % n_cusps
        start, end = positions[a], positions[b]
        node_ids = _nodes_between(K, start, end)
        if not node_ids:
            raise StratificationError("empty arc between adjacent cusps")
        par = {int(curve.parities[i]) for i in node_ids}
        if len(par) != 1:
            raise MorinnessError("parity not constant along an arc between cusps")
        sign = "plus" if par.pop() == 0 else "minus"
        curve.arcs.append(Arc(sign=sign, start_cusp=a, end_cusp=b,
                              node_span=(start, end)))


def _nodes_between(K, start, end):
    """Integer node positions strictly between two cyclic fractional positions."""
    if end <= start:
        end += K
    ids = []
    i = int(np.ceil(start))
    while i < end:
        ids.append(i % K)
        i += 1
    return ids


# -- bundle ---------------------------------------------------------------------


@dataclass
class Stratification:
    scenario: MorinScenario
    points: list                    # depth-1 sample points (the dense cloud)
    curves: list                    # FoldCurve, only when n = 2
    cusps: list                     # depth-2 points in deterministic order
    audits: dict = field(default_factory=dict)

    def stratum_points(self, depth):
        if depth == 1:
            return self.points
        if depth == 2:
            return self.cusps
        return []


def compute_stratification(S: MorinScenario, regularity_count=20) -> Stratification:
    """Full stratification pipeline: regularity, depth-1 solve, tracing, audits."""
    report = validate_regularity(S.manifold, count=regularity_count, seed=S.seed)
    if not report.ok:
        raise RegularityError(
            f"manifold regularity audit failed at {report.failures[0]}"
        )
    points = solve_stratum1(S)
    audits = {
        "regularity_min_singular_value": report.min_singular_value,
        "stratum1_count": len(points),
    }

    curves: list = []
    cusps: list = []
    if S.n == 1:
        for p in points:
            if p.signature.n_zero != 0:
                raise MorinnessError(
                    f"degenerate critical point at {p.x} with n = 1: not Morin"
                )
            p.depth = 1
            sign_split(S, p)
    elif S.n == 2:
        curves = _trace_all_curves(S, points)
        for curve in curves:
            cusps.extend(curve.cusps)
        cusps.sort(key=lambda p: tuple(np.round(p.x, 9)))
        _classify_cloud(S, points, cusps)
        audits["curve_count"] = len(curves)
        audits["closure_errors"] = [c.closure_error for c in curves]
        audits["cusp_count"] = len(cusps)
        audits["alternation_violations"] = _alternation_violations(curves)
    else:
        for p in points:
            if p.signature.n_zero != 0:
                raise MorinnessError(
                    "degenerate singular points with a target dimension above 2 "
                    "are out of certified scope; scenario rejected"
                )
            p.depth = 1
            sign_split(S, p)
        nullities = _dimension_audit(S, points)
        audits["dimension_nullity"] = nullities
        if nullities and nullities != [S.n - 1]:
            raise MorinnessError(
                f"singular-set dimension audit failed: nullities {nullities}, "
                f"expected [{S.n - 1}]"
            )

    audits["nesting_max_residual"] = _nesting_audit(S, cusps)
    return Stratification(scenario=S, points=points, curves=curves, cusps=cusps,
                          audits=audits)


def _trace_all_curves(S, points):
    if not points:
        return []
    system = SingularSystem(S)
    curves = []
    h = S.tolerances.curve_step
    remaining = list(points)
    while remaining:
        p0 = remaining[0]
        z0 = system.pack(p0.x, p0.cokernel, p0.multiplier)
        curve = trace_fold_curve(S, z0)
        curves.append(curve)
        covered = curve.x_nodes(S.N)
        still = []
        for p in remaining:
            d = float(np.min(np.linalg.norm(covered - p.x, axis=1)))
            if d > 2 * h:
                still.append(p)
        if len(still) == len(remaining):
            raise StratificationError("trace did not cover its own starting point")
        remaining = still
    return curves


def _classify_cloud(S, points, cusps):
    for p in points:
        if p.signature.n_zero == 0:
            p.depth = 1
            sign_split(S, p)
        else:
            # a multistart point that landed on (or next to) a cusp
            near = min((float(np.linalg.norm(p.x - q.x)) for q in cusps), default=np.inf)
            if near > 10 * S.tolerances.dedup_radius:
                raise MorinnessError(
                    f"degenerate stratum point at {p.x} away from every detected cusp"
                )
            p.depth = 2
            p.sign = "unsigned"


def _alternation_violations(curves):
    bad = 0
    for curve in curves:
        k = len(curve.arcs)
        if k <= 1:
            continue
        for a in range(k):
            b = (a + 1) % k
            if curve.arcs[a].sign == curve.arcs[b].sign:
                bad += 1
    return bad


def _dimension_audit(S, points):
    system = SingularSystem(S)
    nullities = set()
    for p in points[: min(len(points), 10)]:
        z = system.pack(p.x, None if system.reduced else p.cokernel, p.multiplier)
        ns = nullspace(system.jacobian(z), rtol=1e-8)
        nullities.add(ns.shape[1])
    return sorted(nullities)


def _nesting_audit(S, cusps):
    """Depth-2 points must satisfy the depth-1 system within tolerance."""
    system = SingularSystem(S)
    worst = 0.0
    for p in cusps:
        z = system.pack(p.x, p.cokernel, p.multiplier)
        worst = max(worst, float(np.max(np.abs(system.residual(z)))))
    return worst
