"""Morse data of generic linear functionals on the singular strata.

A unit covector a turns the map into the scalar function h = <a, f>.  For
almost every a, h and its restrictions to every stratum closure are Morse;
this module locates the critical points stratum by stratum, computes their
indices through reduced Hessians, classifies boundary critical points as
correct or not, determines the side a correct gradient points into, and
certifies that each non-correct boundary point cancels against its paired
interior critical point.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._numeric import dedup_points, eig_sign_counts, newton, nullspace
from .manifold import ProjectionError, RegularityError, project_to_manifold, tangent_frame
from .strata import (
    MorinScenario,
    MorinnessError,
    SingularSystem,
    Stratification,
    StratificationError,
    _corrector,
    _curve_tangent,
    _make_point,
    _multistart_seeds,
    _normalize_pair,
    _plain_correct,
)


class GenericityFailure(RuntimeError):
    """The sampled covector violates one of the genericity properties."""


class GenericityExhausted(RuntimeError):
    """No covector passed the genericity audit within the resample budget."""


class MorseAuditError(RuntimeError):
    """A structural Morse-theory identity failed numerically."""


# -- covectors -----------------------------------------------------------------


@dataclass(frozen=True)
class Covector:
    a: np.ndarray
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float))
        if abs(np.linalg.norm(self.a) - 1.0) > 1e-12:
            raise ValueError("covector must be a unit vector")


def sample_covector(n: int, seed) -> Covector:
    """Deterministic unit covector from a seed (gaussian direction, normalized).

    The same seed always yields the same vector; distinct seeds yield distinct
    vectors except on a measure-zero set of collisions.
    """
    seed_key = [int(s) for s in np.atleast_1d(seed)]
    rng = np.random.default_rng([7, *seed_key])
    v = rng.standard_normal(int(n))
    norm = np.linalg.norm(v)
    while norm < 1e-12:
        v = rng.standard_normal(int(n))
        norm = np.linalg.norm(v)
    return Covector(a=v / norm, seed=seed_key[-1])


# -- records -------------------------------------------------------------------


@dataclass
class CriticalRecord:
    """A critical point of h restricted to a stratum (or stratum closure)."""

    x: np.ndarray
    stratum_depth: int              # depth of the stratum containing x
    on_closure_of: int              # the closure the criticality refers to
    morse_index: int
    index_basis_dim: int
    correct: bool | None = None
    inward_into: str = "n/a"        # plus-stratum | minus-stratum | n/a
    eta_sign: int | None = None
    residual: float = 0.0
    seed: int = 0
    fold_sign: str | None = None    # plus/minus membership of x when depth 1
    closure_index: int | None = None  # index of h on the 1-dim closure (cusps)
    kernel_zero_gap: float | None = None
    hessian_eigs: tuple = ()


@dataclass
class PerturbationCertificate:
    """Pairing of a non-correct boundary point with its interior partner."""

    p: np.ndarray
    p_tilde: np.ndarray
    eps: float
    sign_xnk: int                   # side of the partner: +1 plus arc, -1 minus arc
    det_sign_closure: int
    det_sign_boundary: int
    boundary_index: int             # index of h on the boundary stratum (0-dim: 0)
    interior_index: int             # index of h on the closure at the partner
    cancels: bool
    chi_contribution: int           # added to chi of EACH signed closure


@dataclass
class MorseData:
    covector: Covector
    k0_records: list
    stratum_records: dict           # depth -> list[CriticalRecord]
    boundary_records: list          # cusps as critical points of the closure
    certificates: list
    audits: dict = field(default_factory=dict)


# -- k = 0: critical points of h on M itself ------------------------------------


class _AmbientCriticalSystem:
    """{g = 0, Df^T a - Dg^T lam = 0} in (x, lam); square."""

    def __init__(self, S: MorinScenario, a):
        self.S = S
        self.a = np.asarray(a, dtype=float)

    def residual(self, z):
        S = self.S
        x, lam = z[:S.N], z[S.N:]
        stat = S.Df(x).T @ self.a - (S.manifold.jacobian(x).T @ lam if S.c else 0.0)
        return np.concatenate([S.manifold.g(x), stat])

    def jacobian(self, z):
        S = self.S
        x, lam = z[:S.N], z[S.N:]
        Dg = S.manifold.jacobian(x)
        W = S.lagrangian_hessian(x, self.a, lam)
        J = np.zeros((S.c + S.N, S.N + S.c))
        J[:S.c, :S.N] = Dg
        J[S.c:, :S.N] = W
        J[S.c:, S.N:] = -Dg.T
        return J


def _reduced_hessian_on_M(S, x, a, lam):
    frame = tangent_frame(S.manifold, x)
    W = S.lagrangian_hessian(x, a, lam)
    return frame.tangent @ W @ frame.tangent.T


def _index_or_fail(H, zero_tol, what):
    n_plus, n_minus, n_zero = eig_sign_counts(H, zero_tol)
    if n_zero:
        raise GenericityFailure(f"degenerate reduced Hessian at {what}")
    return n_minus


def _k0_records(S: MorinScenario, a: Covector) -> list:
    sys0 = _AmbientCriticalSystem(S, a.a)
    tol = S.tolerances
    found = []
    for x0 in _multistart_seeds(S, tol.multistart_density * (S.n + 1), tag=2):
        try:
            x = project_to_manifold(S.manifold, x0)
        except (ProjectionError, RegularityError):
            continue
        Dg = S.manifold.jacobian(x)
        lam0 = np.linalg.lstsq(Dg.T, S.Df(x).T @ a.a, rcond=None)[0] if S.c else np.zeros(0)
        out = newton(sys0.residual, sys0.jacobian, np.concatenate([x, lam0]),
                     tol=tol.residual, max_iter=30)
        if out.converged:
            found.append((out.z, out.residual))
    if not found:
        raise GenericityFailure("no critical points of the functional found on M")
    xs = np.array([z[:S.N] for z, _ in found])
    records = []
    for idx in dedup_points(xs, tol.dedup_radius):
        z, res = found[idx]
        x, lam = z[:S.N], z[S.N:]
        Hred = _reduced_hessian_on_M(S, x, a.a, lam)
        index = _index_or_fail(Hred, tol.eigen_zero, f"k=0 point {np.round(x, 6)}")
        # every critical point of h lies on the depth-1 stratum with cokernel a
        u, mu = _normalize_pair(a.a, lam)
        p = _make_point(S, x, u, mu)
        if p.signature.n_zero:
            raise GenericityFailure(
                f"critical point of the functional sits on the depth-2 closure at {x}"
            )
        rec = CriticalRecord(
            x=np.asarray(x, dtype=float),
            stratum_depth=1,
            on_closure_of=0,
            morse_index=int(index),
            index_basis_dim=S.m,
            correct=None,
            residual=float(res),
            seed=a.seed,
            fold_sign=p.sign,
            kernel_zero_gap=p.residuals.get("kernel_hessian_zero_gap"),
            hessian_eigs=tuple(np.linalg.eigvalsh(Hred)),
        )
        records.append(rec)
    records.sort(key=lambda r: tuple(np.round(r.x, 9)))
    return records


# -- on-stratum critical points: the augmented Lagrange system -------------------


class StratumCriticalSystem:
    """Critical points of h(z) = <a, f(x)> on the singular solution manifold.

    Unknowns (z, nu) where z solves the singular system F(z) = 0 and nu are
    the multipliers of the stationarity condition grad h = DF^T nu.  The
    Jacobian is analytic; the only second-derivative data it needs beyond
    the Hessians are the third derivative tensors of f and g.
    """

    def __init__(self, S: MorinScenario, a):
        self.S = S
        self.a = np.asarray(a, dtype=float)
        self.base = SingularSystem(S)
        if self.base.reduced:
            raise StratificationError("augmented system needs target dimension >= 2")
        self.D = self.base.dim_z
        self.E = self.base.n_eqs

    def grad_h(self, z):
        S = self.S
        x, _, _ = self.base.unpack(z)
        g = np.zeros(self.D)
        g[:S.N] = S.Df(x).T @ self.a
        return g

    def residual(self, w):
        z, nu = w[:self.D], w[self.D:]
        return np.concatenate([
            self.base.residual(z),
            self.grad_h(z) - self.base.jacobian(z).T @ nu,
        ])

    def hess_lagrangian(self, z, nu):
        """A = hess_z h - sum_r nu_r hess_z F_r, in (x, u, mu) block form."""
        S = self.S
        N, n, c = S.N, S.n, S.c
        x, u, mu = self.base.unpack(z)
        nu_g, nu_s, nu_n = nu[:c], nu[c:c + N], nu[c + N]
        Hf = S.Hf(x)
        Hg = S.manifold.constraint_hessians(x) if c else np.zeros((0, N, N))
        T3f, T3g = S.third_tensors(x)
        A = np.zeros((self.D, self.D))
        Axx = np.einsum("l,lpq->pq", self.a, Hf)
        if c:
            Axx -= np.einsum("j,jpq->pq", nu_g, Hg)
        Ms = np.einsum("i,l,lipq->pq", nu_s, u, T3f)
        if c:
            Ms -= np.einsum("i,j,jipq->pq", nu_s, mu, T3g)
        Axx -= Ms
        A[:N, :N] = Axx
        Axu = -np.einsum("lpi,i->pl", Hf, nu_s)      # column l is -Hf_l nu_s
        A[:N, N:N + n] = Axu
        A[N:N + n, :N] = Axu.T
        if c:
            Axm = np.einsum("jpi,i->pj", Hg, nu_s)
            A[:N, N + n:] = Axm
            A[N + n:, :N] = Axm.T
        A[N:N + n, N:N + n] = -2.0 * nu_n * np.eye(n)
        return A

    def jacobian(self, w):
        z, nu = w[:self.D], w[self.D:]
        DF = self.base.jacobian(z)
        J = np.zeros((self.E + self.D, self.D + self.E))
        J[:self.E, :self.D] = DF
        J[self.E:, :self.D] = self.hess_lagrangian(z, nu)
        J[self.E:, self.D:] = -DF.T
        return J

    def initial_nu(self, z):
        return np.linalg.lstsq(self.base.jacobian(z).T, self.grad_h(z), rcond=None)[0]

    def reduced_hessian(self, z, nu):
        B = nullspace(self.base.jacobian(z), rtol=1e-8)
        A = self.hess_lagrangian(z, nu)
        return B.T @ A @ B


def _polish_stratum_critical(S, a, z_guess):
    sysc = StratumCriticalSystem(S, a)
    w0 = np.concatenate([z_guess, sysc.initial_nu(z_guess)])
    out = newton(sysc.residual, sysc.jacobian, w0, tol=S.tolerances.residual)
    if not out.converged:
        return None
    z, nu = out.z[:sysc.D], out.z[sysc.D:]
    return z, nu, out.residual, sysc


def _stratum_record(S, a, z, nu, res, sysc) -> CriticalRecord:
    x, u, mu = sysc.base.unpack(z)
    u, mu = _normalize_pair(u, mu)
    Hred = sysc.reduced_hessian(z, nu)
    index = _index_or_fail(Hred, S.tolerances.eigen_zero,
                           f"stratum critical point {np.round(x, 6)}")
    p = _make_point(S, x, u, mu)
    return CriticalRecord(
        x=np.asarray(x, dtype=float),
        stratum_depth=p.depth,
        on_closure_of=1,
        morse_index=int(index),
        index_basis_dim=S.n - 1,
        correct=None,
        residual=float(res),
        seed=a.seed,
        fold_sign=p.sign if p.depth == 1 else None,
        kernel_zero_gap=p.residuals.get("kernel_hessian_zero_gap"),
        hessian_eigs=tuple(np.linalg.eigvalsh(Hred)),
    )


def _curve_phi_values(S, a, curve):
    """Derivative of h along the curve at every node, with a consistent orientation."""
    system = SingularSystem(S)
    phis = []
    tangents = []
    prev = None
    for z in curve.nodes:
        t = _curve_tangent(system, z, prev=prev)
        x = z[:S.N]
        phis.append(float((S.Df(x).T @ a) @ t[:S.N]))
        tangents.append(t)
        prev = t
    return np.array(phis), tangents


def _bisect_phi_zero(S, a, system, za, zb, phi_a):
    for _ in range(60):
        mid = _plain_correct(system, 0.5 * (za + zb))
        if not mid.converged:
            raise StratificationError("lost the curve while refining a critical point")
        seg = zb - za
        t_mid = _curve_tangent(system, mid.z, prev=seg / np.linalg.norm(seg))
        x = mid.z[:S.N]
        phi_m = float((S.Df(x).T @ a) @ t_mid[:S.N])
        if np.linalg.norm(zb - za) < 1e-13 or phi_m == 0.0:
            return mid.z
        if phi_a * phi_m < 0:
            zb = mid.z
        else:
            za, phi_a = mid.z, phi_m
    return 0.5 * (za + zb)


def _critical_points_on_curves(S, a: Covector, strat: Stratification):
    """Zeros of dh/ds on every traced curve; cusps come back separately."""
    system = SingularSystem(S)
    tol = S.tolerances
    fold_zeros = []
    cusp_hits = {}
    for curve in strat.curves:
        phis, _ = _curve_phi_values(S, a.a, curve)
        K = len(phis)
        for i in range(K):
            j = (i + 1) % K
            if phis[i] == 0.0:
                raise GenericityFailure("exact zero derivative at a trace node")
            if phis[i] * phis[j] > 0:
                continue
            z_star = _bisect_phi_zero(S, a.a, system, curve.nodes[i].copy(),
                                      curve.nodes[j].copy(), phis[i])
            x_star = z_star[:S.N]
            near_cusp = None
            for ci, cp in enumerate(strat.cusps):
                if np.linalg.norm(cp.x - x_star) < max(10 * tol.dedup_radius, 1e-5):
                    near_cusp = ci
                    break
            if near_cusp is not None:
                cusp_hits[near_cusp] = z_star
                continue
            polished = _polish_stratum_critical(S, a.a, z_star)
            if polished is None:
                raise GenericityFailure("stratum critical point failed to polish")
            # the cusp itself solves the augmented system; a polish that slid
            # into it is a cusp hit, not an interior critical point
            x_pol = polished[0][:S.N]
            slid = None
            for ci, cp in enumerate(strat.cusps):
                if np.linalg.norm(cp.x - x_pol) < max(10 * tol.dedup_radius, 1e-5):
                    slid = ci
                    break
            if slid is not None:
                cusp_hits[slid] = polished[0]
                continue
            fold_zeros.append(polished)
    records = []
    if fold_zeros:
        xs = np.array([sysc.base.unpack(z)[0] for z, _, _, sysc in fold_zeros])
        for idx in dedup_points(xs, tol.dedup_radius):
            z, nu, res, sysc = fold_zeros[idx]
            records.append(_stratum_record(S, a, z, nu, res, sysc))
    records.sort(key=lambda r: tuple(np.round(r.x, 9)))
    return records, cusp_hits


def _critical_points_on_surface(S, a: Covector, strat: Stratification):
    """Multistart solve on a stratum of dimension >= 2, seeded by the point cloud."""
    tol = S.tolerances
    base = SingularSystem(S)
    found = []
    for p in strat.points:
        z0 = base.pack(p.x, p.cokernel, p.multiplier)
        polished = _polish_stratum_critical(S, a.a, z0)
        if polished is None:
            continue
        found.append(polished)
    if not found:
        raise GenericityFailure("no critical points found on the singular surface")
    xs = np.array([sysc.base.unpack(z)[0] for z, _, _, sysc in found])
    records = []
    for idx in dedup_points(xs, tol.dedup_radius):
        z, nu, res, sysc = found[idx]
        records.append(_stratum_record(S, a, z, nu, res, sysc))
    records.sort(key=lambda r: tuple(np.round(r.x, 9)))
    return records


def critical_points_on_stratum(S: MorinScenario, a: Covector, k: int,
                               strat: Stratification | None = None):
    """Critical records of h on the depth-k stratum (k = 0 means M itself)."""
    if k == 0:
        return _k0_records(S, a)
    if k != 1:
        raise StratificationError("only the depth-1 stratum carries critical solves")
    if strat is None:
        raise ValueError("stratification required for stratum-level solves")
    if S.n == 1:
        records = []
        for p in strat.points:
            records.append(CriticalRecord(
                x=p.x, stratum_depth=1, on_closure_of=1,
                morse_index=0, index_basis_dim=0,
                residual=p.residuals.get("system", 0.0), seed=a.seed,
                fold_sign=p.sign,
            ))
        return records
    if S.n == 2:
        records, _ = _critical_points_on_curves(S, a, strat)
        return records
    return _critical_points_on_surface(S, a, strat)


# -- correctness, eta, xi ---------------------------------------------------------


def _tangential_gradient_on_M(S, a, x):
    frame = tangent_frame(S.manifold, x)
    w = S.Df(x).T @ a
    return frame.tangent.T @ (frame.tangent @ w)


def _gradient_scale(S, a, x):
    return float(np.linalg.norm(a)) * max(1.0, float(np.linalg.norm(S.Df(x))))


def classify_correctness(S: MorinScenario, a: Covector, rec: CriticalRecord,
                         closure_depth: int, strat: Stratification | None = None,
                         point=None, boundary_critical=False):
    """Correctness of a critical point with respect to the given closure.

    Correct means the gradient of h restricted to the closure manifold does
    not vanish at the point.  When the point is known to be a critical point
    of the boundary restriction, the numeric verdict is cross-checked
    against the structural dichotomy: points two levels deeper than the
    closure are correct, points one level deeper are not.
    """
    x = rec.x
    thr = S.tolerances.correctness * _gradient_scale(S, a.a, x)
    if closure_depth == 0:
        grad_norm = float(np.linalg.norm(_tangential_gradient_on_M(S, a.a, x)))
    elif closure_depth == 1:
        system = SingularSystem(S)
        if point is not None:
            # the located point solves the curve system already; use it as is
            z0 = system.pack(point.x, point.cokernel, point.multiplier)
        else:
            z0 = _embed_on_curve(S, strat, x)
        land = _plain_correct(system, z0)
        t = _curve_tangent(system, land.z)
        tx = t[:S.N]
        xl = land.z[:S.N]
        grad_norm = abs(float((S.Df(xl).T @ a.a) @ tx)) / max(np.linalg.norm(tx), 1e-12)
    else:
        raise StratificationError("correctness beyond closure depth 1 is out of scope")
    verdict = bool(grad_norm > thr)
    expected = None
    if boundary_critical:
        if rec.stratum_depth == closure_depth + 2:
            expected = True
        elif rec.stratum_depth == closure_depth + 1:
            expected = False
    if expected is not None and verdict != expected:
        raise MorseAuditError(
            f"correctness dichotomy violated at {np.round(x, 6)}: numeric "
            f"gradient {grad_norm:.3e} vs threshold {thr:.3e}, expected "
            f"{'correct' if expected else 'non-correct'}"
        )
    rec.correct = verdict
    rec.residual = max(rec.residual, 0.0)
    return rec


def _embed_on_curve(S, strat, x):
    best = None
    best_d = np.inf
    for curve in strat.curves:
        d = np.linalg.norm(curve.x_nodes(S.N) - x, axis=1)
        i = int(np.argmin(d))
        if d[i] < best_d:
            best_d = d[i]
            best = curve.nodes[i].copy()
    if best is None:
        raise StratificationError("no traced curve to embed the point into")
    # replace the base point, keep (u, mu) from the nearest node as the guess
    best[:S.N] = x
    return best


def eta_sign(S: MorinScenario, a: Covector, p, strat: Stratification) -> int:
    """Sign of the factor linking the closure gradient of h to the gradient of
    the next degeneracy function at a depth-2 point (closure depth 0).

    Both gradients live in the orthogonal complement of the kernel inside
    the tangent space and must be parallel; the sign is normalized so the
    leading coefficient of the local chain (the flattening-eigenvalue slope
    along the degenerate direction) is positive.
    """
    if p.degenerate_direction is None or p.eig_slope is None:
        raise StratificationError("eta needs a classified depth-2 point")
    x, v = p.x, p.degenerate_direction
    frame = tangent_frame(S.manifold, x)
    w_l = _tangential_gradient_on_M(S, a.a, x)
    W = S.lagrangian_hessian(x, p.cokernel, p.multiplier)
    w_d = frame.tangent.T @ (frame.tangent @ (W @ v))
    nl, nd = np.linalg.norm(w_l), np.linalg.norm(w_d)
    if nl < 1e-10 or nd < 1e-10:
        raise MorseAuditError(f"vanishing gradient in the eta comparison at {x}")
    cosang = float(w_l @ w_d) / (nl * nd)
    angle = float(np.arccos(np.clip(abs(cosang), -1.0, 1.0)))
    if angle > 1e-4:
        raise MorseAuditError(
            f"closure gradient and degeneracy gradient not parallel at "
            f"{np.round(x, 6)} (angle {angle:.2e} rad)"
        )
    return int(np.sign(cosang) * np.sign(p.eig_slope))


def xi_sign(S: MorinScenario, a: Covector, p, strat: Stratification) -> int:
    """Specialization of the eta comparison to deepest-stratum points (odd n).

    For n = 1 the pairing manifold does not exist, and for n >= 3 the deeper
    strata are rejected upstream of this call, so in certified scope the
    operation is exercised only vacuously.
    """
    if S.n % 2 == 0:
        raise StratificationError("xi is defined for odd target dimensions only")
    if p.depth != S.n:
        raise StratificationError("xi applies to points of the deepest stratum")
    if S.n == 1:
        raise StratificationError(
            "xi needs the closure two levels up, which does not exist for n = 1"
        )
    raise MorinnessError(
        "deepest-stratum points with n >= 3 are outside the certified scope"
    )


# -- the index-parity audit --------------------------------------------------------


@dataclass
class ParityAudit:
    checked: int
    violations: list

    @property
    def ok(self):
        return not self.violations


def check_fold_index_parity(S: MorinScenario, a: Covector, k0_records,
                            stratum_records) -> ParityAudit:
    """Ambient vs on-stratum Morse index parities at every k = 0 critical point.

    On the plus side the parities agree, on the minus side they differ by one;
    a violation is a hard failure of either the numerics or the hypotheses.
    """
    violations = []
    for rec in k0_records:
        if S.n == 1:
            on_idx = 0
        else:
            partner = _nearest_record(stratum_records, rec.x)
            if partner is None or np.linalg.norm(partner.x - rec.x) > 1e-6:
                violations.append((tuple(rec.x), "no on-stratum partner"))
                continue
            on_idx = partner.morse_index
        if rec.fold_sign == "plus":
            ok = (rec.morse_index - on_idx) % 2 == 0
        else:
            ok = (rec.morse_index - on_idx) % 2 == 1
        if not ok:
            violations.append((tuple(rec.x),
                               f"ambient {rec.morse_index} vs stratum {on_idx} "
                               f"on {rec.fold_sign}"))
    return ParityAudit(checked=len(k0_records), violations=violations)


def _nearest_record(records, x):
    best, best_d = None, np.inf
    for r in records:
        d = float(np.linalg.norm(r.x - x))
        if d < best_d:
            best, best_d = r, d
    return best


# -- cusp boundary records and perturbation certificates ----------------------------


def _curve_context_at(S, strat, p):
    """(curve, oriented tangent into the plus arc, h'' along the curve) at a cusp."""
    system = SingularSystem(S)
    z = system.pack(p.x, p.cokernel, p.multiplier)
    land = _plain_correct(system, z)
    t = _curve_tangent(system, land.z)
    delta = S.tolerances.curve_step / 2
    sides = {}
    for s in (-delta, delta):
        out = _corrector(system, land.z + s * t, t)
        if not out.converged:
            raise StratificationError("could not sample the two arcs at a cusp")
        x, u, mu = system.unpack(out.z)
        u, mu = _normalize_pair(u, mu)
        q = _make_point(S, x, u, mu)
        if q.depth != 1:
            raise StratificationError("arc sample at a cusp is not a fold point")
        sides[np.sign(s)] = (q.sign, out.z)
    if sides[-1.0][0] == sides[1.0][0]:
        raise MorseAuditError(f"arcs adjacent to the cusp at {p.x} carry equal signs")
    if sides[1.0][0] != "plus":
        t = -t
        sides = {-k: v for k, v in sides.items()}
    return system, land.z, t, sides


def _h_second_derivative_along(S, a, system, z_c, t, delta):
    vals = []
    for s in (-delta, 0.0, delta):
        if s == 0.0:
            z = z_c
        else:
            out = _corrector(system, z_c + s * t, t)
            if not out.converged:
                raise StratificationError("curve sampling failed near a cusp")
            z = out.z
        vals.append(float(a @ S.f(z[:S.N])))
    return (vals[0] - 2 * vals[1] + vals[2]) / delta**2


def perturbation_certificate(S: MorinScenario, a: Covector, p,
                             strat: Stratification) -> PerturbationCertificate:
    """Pair a non-correct cusp with the unique nearby interior critical point.

    The construction follows the local picture: adding eps times the inward
    coordinate makes the cusp a correct boundary point whose gradient points
    into the plus side, and moves the old interior criticality to a fold
    point on the side determined by the closure Hessian sign.
    """
    system, z_c, t, sides = _curve_context_at(S, strat, p)
    delta = S.tolerances.curve_step / 2
    h2 = _h_second_derivative_along(S, a.a, system, z_c, t, delta)
    thr = S.tolerances.correctness * _gradient_scale(S, a.a, p.x)
    if abs(h2) < thr:
        raise GenericityFailure(f"degenerate closure Hessian at the cusp {p.x}")
    interior_index = 1 if h2 < 0 else 0
    eps = 1e-4 * abs(h2)
    tilde = None
    for _ in range(8):
        s_tilde = -eps / h2
        out = _corrector(system, z_c + s_tilde * t, t)
        if out.converged:
            x_t = out.z[:S.N]
            if np.linalg.norm(x_t - p.x) > S.tolerances.dedup_radius:
                tilde = out.z
                break
        eps *= 0.5
    if tilde is None:
        raise StratificationError(f"no separated interior partner at the cusp {p.x}")
    x_t, u_t, mu_t = system.unpack(tilde)
    u_t, mu_t = _normalize_pair(u_t, mu_t)
    q = _make_point(S, x_t, u_t, mu_t)
    if q.depth != 1:
        raise StratificationError("interior partner is not a fold point")
    sign_xnk = 1 if q.sign == "plus" else -1
    det_sign_closure = 1 if h2 > 0 else -1
    det_sign_boundary = -1          # -eps times the (empty) boundary Hessian
    predicted = (-1) ** (0 + 1) * (-1) ** interior_index
    return PerturbationCertificate(
        p=p.x,
        p_tilde=x_t,
        eps=eps,
        sign_xnk=sign_xnk,
        det_sign_closure=det_sign_closure,
        det_sign_boundary=det_sign_boundary,
        boundary_index=0,
        interior_index=interior_index,
        cancels=(sign_xnk == predicted),
        chi_contribution=1 if interior_index == 0 else 0,
    )


def _boundary_records(S, a: Covector, strat: Stratification, cusp_hits):
    """Cusps as critical points of h on the depth-1 closure (all non-correct)."""
    records = []
    certificates = []
    eta_checks = []
    system = SingularSystem(S)
    for ci, p in enumerate(strat.cusps):
        if ci not in cusp_hits:
            raise MorseAuditError(
                f"cusp at {np.round(p.x, 6)} is not a critical point of the "
                f"restricted functional (boundary-criticality equivalence fails)"
            )
        _, z_c, t, _ = _curve_context_at(S, strat, p)
        delta = S.tolerances.curve_step / 2
        h2 = _h_second_derivative_along(S, a.a, system, z_c, t, delta)
        closure_index = 1 if h2 < 0 else 0
        rec = CriticalRecord(
            x=p.x, stratum_depth=2, on_closure_of=1,
            morse_index=0, index_basis_dim=0,
            residual=p.residuals.get("system", 0.0), seed=a.seed,
            closure_index=closure_index,
        )
        classify_correctness(S, a, rec, closure_depth=1, strat=strat, point=p,
                             boundary_critical=True)
        eta = eta_sign(S, a, p, strat)
        rec.eta_sign = eta
        # closure-gradient on M is nonzero at a cusp: correct for closure depth 0
        rec0 = CriticalRecord(
            x=p.x, stratum_depth=2, on_closure_of=0,
            morse_index=closure_index, index_basis_dim=1,
            residual=rec.residual, seed=a.seed,
        )
        classify_correctness(S, a, rec0, closure_depth=0, boundary_critical=True)
        expected_eta = -((-1) ** closure_index) * ((-1) ** 0)
        eta_checks.append({
            "x": tuple(p.x),
            "eta": eta,
            "closure_index": closure_index,
            "identity_ok": eta == expected_eta,
        })
        cert = perturbation_certificate(S, a, p, strat)
        records.append(rec)
        certificates.append(cert)
    return records, certificates, eta_checks


# -- assembly and the genericity loop -------------------------------------------------


def compute_morse_data(S: MorinScenario, strat: Stratification, a: Covector) -> MorseData:
    k0 = critical_points_on_stratum(S, a, 0)
    audits = {}
    if S.n == 1:
        k1 = critical_points_on_stratum(S, a, 1, strat)
        boundary, certs, eta_checks = [], [], []
    elif S.n == 2:
        k1, cusp_hits = _critical_points_on_curves(S, a, strat)
        boundary, certs, eta_checks = _boundary_records(S, a, strat, cusp_hits)
    else:
        k1 = critical_points_on_stratum(S, a, 1, strat)
        boundary, certs, eta_checks = [], [], []
        if strat.cusps:
            raise MorinnessError("deep strata with n >= 3 are outside certified scope")
    parity = check_fold_index_parity(S, a, k0, k1)
    audits["eta_checks"] = eta_checks
    audits["parity"] = parity
    audits["separation"] = _boundary_equivalence_audit(S, k0, k1, strat)
    audits["block_hessian_ok"] = all(c["identity_ok"] for c in eta_checks)
    return MorseData(
        covector=a,
        k0_records=k0,
        stratum_records={1: k1},
        boundary_records=boundary,
        certificates=certs,
        audits=audits,
    )


@dataclass
class SeparationAudit:
    matched: int
    max_distance: float
    unmatched_k0: list
    unmatched_k1: list

    @property
    def ok(self):
        return not self.unmatched_k0 and not self.unmatched_k1


def _boundary_equivalence_audit(S, k0_records, k1_records, strat) -> SeparationAudit:
    """Critical points of h on M and interior critical points of h on the
    depth-1 stratum must be the same set, point for point."""
    used = set()
    max_d = 0.0
    unmatched_k0 = []
    for rec in k0_records:
        best_j, best_d = None, np.inf
        for j, r1 in enumerate(k1_records):
            if j in used:
                continue
            d = float(np.linalg.norm(r1.x - rec.x))
            if d < best_d:
                best_j, best_d = j, d
        if best_j is None or best_d > 1e-6:
            unmatched_k0.append(tuple(rec.x))
        else:
            used.add(best_j)
            max_d = max(max_d, best_d)
    unmatched_k1 = [tuple(r.x) for j, r in enumerate(k1_records) if j not in used]
    return SeparationAudit(
        matched=len(used),
        max_distance=max_d,
        unmatched_k0=unmatched_k0,
        unmatched_k1=unmatched_k1,
    )


@dataclass
class GenericityAudit:
    ok: bool
    failures: list
    attempt: int


def validate_genericity(S: MorinScenario, a: Covector, strat: Stratification,
                        data: MorseData, attempt: int = 0) -> GenericityAudit:
    """Checks the almost-every-covector properties on the computed Morse data.

    Nondegeneracy failures raise during computation; this audit re-checks the
    set-level properties and collects anything that should trigger resampling
    with the next seed.
    """
    failures = []
    sep = data.audits["separation"]
    if not sep.ok:
        failures.append(
            f"boundary-criticality equivalence: unmatched {sep.unmatched_k0} "
            f"{sep.unmatched_k1}"
        )
    for rec in data.k0_records:
        if rec.kernel_zero_gap is not None and rec.kernel_zero_gap < S.tolerances.eigen_zero:
            failures.append(f"critical point on the deeper closure at {tuple(rec.x)}")
        for cusp in strat.cusps:
            if np.linalg.norm(rec.x - cusp.x) < 10 * S.tolerances.dedup_radius:
                failures.append(f"critical point of h collides with a cusp at {tuple(rec.x)}")
    if not data.audits["parity"].ok:
        failures.append(f"index parity: {data.audits['parity'].violations}")
    if not data.audits["block_hessian_ok"]:
        failures.append("block Hessian sign identity failed at a cusp")
    for cert in data.certificates:
        if not cert.cancels:
            failures.append(f"perturbation pair at {tuple(cert.p)} does not cancel")
    return GenericityAudit(ok=not failures, failures=failures, attempt=attempt)


def run_with_genericity(S: MorinScenario, strat: Stratification):
    """Sample covectors until the genericity audit passes, within the budget."""
    history = []
    for attempt in range(S.tolerances.max_resamples):
        a = sample_covector(S.n, [S.seed, attempt])
        try:
            data = compute_morse_data(S, strat, a)
        except (GenericityFailure, MorseAuditError) as exc:
            history.append(f"attempt {attempt}: {exc}")
            continue
        audit = validate_genericity(S, a, strat, data, attempt)
        if audit.ok:
            return a, data, audit, history
        history.append(f"attempt {attempt}: {'; '.join(audit.failures)}")
    raise GenericityExhausted(
        f"no covector passed the genericity audit in "
        f"{S.tolerances.max_resamples} attempts: {history}"
    )
