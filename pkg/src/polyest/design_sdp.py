"""Contrast design by semidefinite relaxation.

The designed estimate reports max-affine disagreement with the observation,
so its worst-case error is a maximum of a bilinear form over the product of
the conjugate-norm ball and the symmetrized signal set, subject to the
quadratic constraints |h_l' A z| <= 1 carried by the contrast columns.
Aggregating those constraints with weights lam and relaxing the bilinear
maximum through compatibility cones turns the design problem into one
semidefinite program over (Theta, mu, X, t, U, s):

    minimize 2 (t + s + mu)
    s.t.     (Theta, mu) in H-cone, (X, t) in X-cone, (U, s) in U-cone,
             [[U, B/2], [B'/2, A' Theta A + X]] psd.

The H-cone consists of pairs (Theta, mu) that can be factored as
Theta = H Diag{lam} H' with sum(lam) <= mu and every column of H of unit
tail norm or less, so 2(t + s + mu) certifies the risk of the polyhedral
estimate built from H.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import problem_model as pm
from .compat_cones import AbsNormCone, CompatCone
from .conic import (
    AffExpr,
    Program,
    SolverError,
    block_mat,
    concat,
    congruence,
    diag_of,
)
from .estimator import ContrastMatrix
from .observation import ZSet

_OK_STATUSES = ("optimal", "near_optimal")


# ---------------------------------------------------------------------------
# The cone of factorable (Theta, mu) pairs
# ---------------------------------------------------------------------------


class HCone(CompatCone):
    """Pairs (Theta, mu) convertible to unit-tail-norm contrast factorizations.

    Singleton variant (Z = {zbar}, Euclidean tail norm): membership is
    mu >= sum_i zbar_i Theta_ii, and the conversion is exact via an
    eigendecomposition. General variant: membership is
    mu >= kappa * phi(diag Theta) with phi the support function of Z and
    kappa = 6 ln(2 sqrt(3) m^2); the conversion is randomized and loses the
    factor kappa, which is why it is baked into the membership constraint.
    """

    def __init__(self, z: ZSet):
        super().__init__(z.m, sharp=True, complete=True,
                         theta=1.0 if z.is_singleton else None)
        self.z = z
        self.m = z.m
        self.variant = "singleton" if z.is_singleton else "general"
        self.kappa = None if z.is_singleton else 6.0 * np.log(2.0 * np.sqrt(3.0) * z.m**2)

    def _diag_expr(self, V) -> AffExpr:
        if isinstance(V, np.ndarray):
            return AffExpr.constant(np.diag(V).copy())
        if isinstance(V, tuple):
            t, V0 = V
            return concat([float(V0[i, i]) * t for i in range(self.m)])
        return V.diag()

    def _emit(self, prog: Program, V, tau: AffExpr) -> None:
        d = self._diag_expr(V)
        if self.z.is_singleton:
            prog.add_nonneg(tau - self.z.zbar @ d)
            return
        s = prog.scalar()
        self.z.phi_epigraph(prog, d, s)
        prog.add_nonneg(tau - self.kappa * s)

    def required_mu(self, Theta: np.ndarray) -> float:
        """Smallest mu making (Theta, mu) a member (Theta assumed psd)."""
        r = np.diag(np.asarray(Theta, dtype=float))
        if self.z.is_singleton:
            return float(self.z.zbar @ r)
        return self.kappa * self.z.phi(r)


def build_h_cone(z: ZSet, m: int) -> HCone:
    """Contrast-factorization cone for the tail norm induced by Z."""
    if m != z.m:
        raise ValueError(f"dimension mismatch: m={m} but Z lives in R^{z.m}")
    cone = HCone(z)
    cone._probe()
    return cone


# ---------------------------------------------------------------------------
# (Theta, mu) -> (H, lam) conversion
# ---------------------------------------------------------------------------


def cosine_transform_matrix(m: int) -> np.ndarray:
    """Orthogonal type-II cosine matrix; every entry has magnitude <= sqrt(2/m).

    Verified at runtime: orthogonality residual <= 1e-12 and the entry bound.
    """
    k = np.arange(m)[:, None]
    j = np.arange(m)[None, :]
    V = np.sqrt(2.0 / m) * np.cos(np.pi * (2 * j + 1) * k / (2 * m))
    V[0] /= np.sqrt(2.0)
    if np.abs(V @ V.T - np.eye(m)).max() > 1e-12:
        raise AssertionError("cosine matrix failed the orthogonality check")
    if np.abs(V).max() > np.sqrt(2.0 / m) + 1e-12:
        raise AssertionError("cosine matrix entry exceeds sqrt(2/m)")
    return V


def _psd_eigh(Theta: np.ndarray, floor_rel: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition with tiny negative eigenvalues zeroed.

    Negativity is tolerated up to floor_rel relative to the spectral scale;
    anything beyond that is a genuine violation and raises. Callers cleaning
    solver output may pass floor_rel = inf: replacing Theta by its psd part
    only adds a psd correction, so downstream feasibility is preserved as
    long as the mu budget is recomputed for the projected matrix.
    """
    Theta = np.asarray(Theta, dtype=float)
    Theta = 0.5 * (Theta + Theta.T)
    w, E = np.linalg.eigh(Theta)
    floor = -floor_rel * max(1.0, float(w[-1]) if w.size else 0.0)
    if w.size and w[0] < floor:
        raise ValueError(f"matrix is not positive semidefinite (eigenvalue {w[0]:.3e})")
    return np.maximum(w, 0.0), E


def theta_to_contrast(
    Theta: np.ndarray, mu: float, h_cone: HCone, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Factor a cone member (Theta, mu) as Theta = H Diag{lam} H'.

    The returned columns all have tail norm at most one and sum(lam) <= mu.
    Singleton variant: deterministic, S = Diag{sqrt(zbar)}, eigendecompose
    S Theta S = U Diag{lam} U', H = S^{-1} U. General variant: lam = mu/m
    per column and H = sqrt(m/mu) Q Diag{chi} V with Theta = QQ', V the
    orthogonal cosine matrix, and chi a sign vector redrawn until every
    column passes the tail-norm check (each draw succeeds with probability
    at least 1/2; 64 draws are allowed).
    """
    Theta = np.asarray(Theta, dtype=float)
    m = h_cone.m
    if Theta.shape != (m, m):
        raise ValueError("Theta dimension does not match the cone")
    mu = float(mu)
    if mu < -1e-12:
        raise ValueError("mu must be nonnegative")
    need = h_cone.required_mu(np.maximum(Theta, Theta.T))
    if mu < need * (1.0 - 1e-6) - 1e-9:
        raise ValueError(f"(Theta, mu) is not a cone member: mu={mu:.6g} < {need:.6g}")
    if mu <= 1e-12:
        return np.zeros((m, m)), np.zeros(m)
    if h_cone.variant == "singleton":
        sq = np.sqrt(h_cone.z.zbar)
        lam, U = _psd_eigh(sq[:, None] * Theta * sq[None, :])
        return U / sq[:, None], lam
    w, E = _psd_eigh(Theta)
    Q = E * np.sqrt(w)[None, :]
    V = cosine_transform_matrix(m)
    lam = np.full(m, mu / m)
    scale = np.sqrt(m / mu)
    for _ in range(64):
        chi = rng.integers(0, 2, size=m) * 2.0 - 1.0
        H = scale * (Q * chi[None, :]) @ V
        if all(h_cone.z.pi(H[:, j]) <= 1.0 + 1e-9 for j in range(m)):
            return H, lam
    raise RuntimeError("sign resampling exhausted 64 draws without a unit-norm factor")


# ---------------------------------------------------------------------------
# Quadratic-form majorant
# ---------------------------------------------------------------------------


def mfunc_value(M: np.ndarray, X_cone: CompatCone, U_cone: CompatCone) -> float:
    """Certified upper bound on the quadratic form [u;z]' M [u;z].

    The maximum runs over u in the conjugate-norm ball covered by U_cone and
    z in the symmetrized signal set covered by X_cone; the bound is
    inf{t + s: (X,t), (U,s) members, Diag{U, X} >= M}.
    """
    M = np.asarray(M, dtype=float)
    nu, n = U_cone.dim, X_cone.dim
    if M.shape != (nu + n, nu + n):
        raise ValueError(f"matrix must be {(nu + n, nu + n)}, got {M.shape}")
    M = 0.5 * (M + M.T)
    prog = Program()
    U = prog.sym_var(nu)
    s = prog.scalar()
    X = prog.sym_var(n)
    t = prog.scalar()
    U_cone.emit(prog, U, s)
    X_cone.emit(prog, X, t)
    prog.add_psd(block_mat([[U.expr(), None], [None, X.expr()]]) - M)
    prog.minimize(t + s)
    sol = prog.solve()
    if sol.status not in _OK_STATUSES:
        raise SolverError(f"majorant solve ended with status {sol.status}")
    return float(sol.objective)


# ---------------------------------------------------------------------------
# Master design program
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SdpDesignResult:
    """Feasible design-program point plus the materialized contrast.

    The certificate `opt` = 2(t + s + mu) always comes from the achieved
    feasible values, so it bounds the estimate's risk even when the solve
    stopped short of true optimality.
    """

    theta: np.ndarray
    mu: float
    t: float
    s: float
    X: np.ndarray
    U: np.ndarray
    opt: float
    H: ContrastMatrix
    lam: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float))
        object.__setattr__(self, "lam", np.asarray(self.lam, dtype=float))
        if (self.lam < -1e-12).any():
            raise ValueError("column weights must be nonnegative")
        object.__setattr__(self, "lam", np.maximum(self.lam, 0.0))
        scale = max(1.0, float(np.linalg.norm(self.theta)))
        recon = self.H.H @ (self.lam[:, None] * self.H.H.T)
        if np.linalg.norm(self.theta - recon) > 1e-8 * scale:
            raise ValueError("contrast factorization does not reproduce Theta")
        if self.lam.sum() > self.mu + 1e-8 * max(1.0, abs(self.mu)):
            raise ValueError("column weights exceed the mu budget")
        if abs(self.opt - 2.0 * (self.t + self.s + self.mu)) > 1e-9 * max(1.0, self.opt):
            raise ValueError("certificate value is inconsistent with (t, s, mu)")


def _is_spectral_ball_cone(cone: CompatCone) -> bool:
    """The exact cone of the Euclidean ball: members are ||U||_sp <= tau."""
    return (
        isinstance(cone, AbsNormCone)
        and cone.s == 2.0
        and cone.r == 1.0
        and cone.form == "auto"
    )


def solve_design_sdp(
    problem,
    X_cone: CompatCone,
    U_cone: CompatCone,
    h_cone: HCone,
    rng: np.random.Generator | None = None,
    tol: float = 1e-8,
    max_iter: int = 200,
) -> SdpDesignResult:
    """Design a contrast matrix by solving the master semidefinite program.

    X_cone must cover the symmetrized signal set, U_cone the unit ball of
    the norm conjugate to the error norm, and h_cone the tail norm of the
    observation scheme at tolerance eps/m. When U_cone is the exact
    Euclidean-ball cone, the matrix variable U is replaced by s I, which
    is lossless there (s I dominates any member with the same s) and
    removes nu(nu+1)/2 variables.
    """
    A = problem.A
    B = problem.B
    m, n = A.shape
    nu = B.shape[0]
    if X_cone.dim != n:
        raise ValueError(f"X cone dimension {X_cone.dim} != signal dimension {n}")
    if U_cone.dim != nu:
        raise ValueError(f"U cone dimension {U_cone.dim} != target dimension {nu}")
    if h_cone.m != m:
        raise ValueError(f"contrast cone dimension {h_cone.m} != observation dimension {m}")
    if rng is None:
        rng = np.random.default_rng(0)
    if not B.any():
        H = ContrastMatrix(np.zeros((m, m)), np.zeros(m), problem.eps / m, "design-II")
        return SdpDesignResult(
            np.zeros((m, m)), 0.0, 0.0, 0.0, np.zeros((n, n)), np.zeros((nu, nu)),
            0.0, H, np.zeros(m),
        )

    prog = Program()
    Theta = prog.sym_var(m)
    mu = prog.scalar()
    h_cone.emit(prog, Theta, mu)
    X = prog.sym_var(n)
    t = prog.scalar()
    X_cone.emit(prog, X, t)
    spectral = _is_spectral_ball_cone(U_cone)
    if spectral:
        s = prog.scalar()
        prog.add_nonneg(s)
        U_expr = diag_of(s, nu)
    else:
        U = prog.sym_var(nu)
        s = prog.scalar()
        U_cone.emit(prog, U, s)
        U_expr = U.expr()
    bottom = congruence(Theta, A.T) + X.expr()
    prog.add_psd(block_mat([[U_expr, 0.5 * B], [None, bottom]]))
    prog.minimize(2.0 * (t + s + mu))
    sol = prog.solve(tol=tol, max_iter=max_iter)
    if sol.status not in _OK_STATUSES:
        raise SolverError(f"design solve ended with status {sol.status}")

    theta_v = np.asarray(sol.value(Theta), dtype=float)
    w, E = _psd_eigh(theta_v, floor_rel=np.inf)
    theta_v = (E * w[None, :]) @ E.T
    theta_v = 0.5 * (theta_v + theta_v.T)
    # Projecting onto the psd cone can nudge the diagonal up; restore exact
    # membership by lifting mu to the projected requirement. The lift is on
    # the order of the solver tolerance and only enlarges the certificate.
    mu_v = max(float(sol.value(mu)), 0.0, h_cone.required_mu(theta_v))
    t_v = max(float(sol.value(t)), 0.0)
    s_v = max(float(sol.value(s)), 0.0)
    X_v = np.asarray(sol.value(X), dtype=float)
    U_v = s_v * np.eye(nu) if spectral else np.asarray(sol.value(U), dtype=float)

    H, lam = theta_to_contrast(theta_v, mu_v, h_cone, rng)
    mu_v = max(mu_v, float(lam.sum()))
    pis = np.array([h_cone.z.pi(H[:, j]) for j in range(m)])
    contrast = ContrastMatrix(H, pis, problem.eps / m, "design-II")
    return SdpDesignResult(
        theta_v, mu_v, t_v, s_v, X_v, U_v,
        2.0 * (t_v + s_v + mu_v), contrast, lam,
    )


# ---------------------------------------------------------------------------
# Combining designs
# ---------------------------------------------------------------------------


def _min_tail_ratio(ctx_num, ctx_den) -> float:
    """min over h != 0 of pi_num(h) / pi_den(h) for two tolerances.

    Both contexts share the scheme and geometry; only delta differs, with
    ctx_num.delta >= ctx_den.delta so the ratio is at most one. For the
    Gaussian-type norm the ratio is constant in h. Otherwise
    pi(h)^2 = 4 th d(h) + c th^2 z(h)^2 with d the support of the squares
    and z the peak magnitude; the ratio is increasing in d/z^2, and the
    smallest value of d/z^2 over h is attained at a coordinate vector, so
    the minimum is a closed form in min_i support(X, row_i(A)).
    """
    from .observation import Discrete, Poisson, SubGaussian

    th1, th2 = ctx_num.theta, ctx_den.theta
    if isinstance(ctx_num.scheme, SubGaussian):
        return th1 / th2
    c = 64.0 / 9.0 if isinstance(ctx_num.scheme, Discrete) else 16.0 / 9.0
    if not isinstance(ctx_num.scheme, (Discrete, Poisson)):
        raise TypeError(f"unknown scheme {ctx_num.scheme!r}")
    u = min(
        pm.support_function(ctx_num.X, ctx_num.A[i]) for i in range(ctx_num.A.shape[0])
    )
    u = max(u, 0.0)
    return float(
        np.sqrt((4.0 * th1 * u + c * th1 * th1) / (4.0 * th2 * u + c * th2 * th2))
    )


def aggregate_contrasts(
    designs: list[ContrastMatrix], eps: float, ctx
) -> tuple[ContrastMatrix, np.ndarray]:
    """Merge contrast matrices into one whose columns are unit at eps / N total.

    Each input carries columns of tail norm at most one at its own (smaller
    or equal) per-column tolerance; the merged matrix renormalizes every
    column to unit tail norm at delta = eps / N, N the total column count.
    Returns the merged contrast plus per-design factors theta_k in (0, 1]:
    every rescaling coefficient of design k is at least theta_k, so the
    merged estimate's risk is at most min_k risk_k / theta_k.

    `ctx` supplies the scheme and problem geometry; its own delta is ignored.
    """
    from dataclasses import replace

    from .observation import pi_norm

    if not designs:
        raise ValueError("need at least one design to aggregate")
    N = sum(d.n_columns for d in designs)
    if N == 0:
        raise ValueError("no columns to aggregate")
    delta = eps / N
    ctx_total = replace(ctx, delta=delta)
    cols = []
    pis = []
    factors = np.empty(len(designs))
    for k, d in enumerate(designs):
        if d.delta < delta - 1e-15:
            raise ValueError(
                "design tolerance is already stricter than the combined one"
            )
        ctx_k = replace(ctx, delta=d.delta)
        factors[k] = min(_min_tail_ratio(ctx_k, ctx_total), 1.0)
        for j in range(d.n_columns):
            h = d.H[:, j]
            p = pi_norm(ctx_total, h)
            if p <= 1e-300:
                cols.append(h)
                pis.append(0.0)
                continue
            cols.append(h / p)
            pis.append(pi_norm(ctx_total, h / p))
    H = np.column_stack(cols)
    merged = ContrastMatrix(H, np.array(pis), delta, "aggregated")
    return merged, factors
