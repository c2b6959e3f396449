"""Compatibility cones: certificates bounding quadratic forms over signal sets.

A cone Y in S^N_+ x R_+ is *compatible* with a convex compact set C when
every member (V, tau) certifies max_{y in C} y'Vy <= tau. Cones are
represented as emitters of conic constraints (fresh auxiliaries per
emission); that is the form that composes through the calculus rules and
plugs directly into design programs. Membership is decided by a
feasibility solve (tau-minimization along the given V).

Constructors cover spectratopes, ellitopes, and unit balls of l_s norms
(three interchangeable conic forms for the latter), a calculus over
existing cones (intersection, convex hull, direct product, linear image,
inverse linear image, arithmetic sum), and the factor-4 widening that
turns a cone compatible with the symmetrization C_s into one compatible
with C itself (requires 0 in C).
"""

from __future__ import annotations

import numpy as np

from .conic import (
    AffExpr,
    MatExpr,
    Program,
    SolverError,
    concat,
    congruence,
    diag_of,
    dyads_term,
)
from .conic.norms import dual_exponent, norm_epigraph, vec_norm
from .problem_model import Ellitope, Spectratope, _var_indices

_OK_STATUSES = ("optimal", "near_optimal")


def _tau_expr(tau) -> AffExpr:
    return tau if isinstance(tau, AffExpr) else AffExpr.constant(float(tau))


def _ray_matexpr(t: AffExpr, V0: np.ndarray) -> MatExpr:
    """t * V0 as a MatExpr, t a single scalar variable."""
    (ti,) = _var_indices(t)
    w, Q = np.linalg.eigh(0.5 * (V0 + V0.T))
    keep = np.abs(w) > 1e-14 * max(1.0, np.abs(w).max())
    cols = Q[:, keep]
    return dyads_term(
        V0.shape,
        np.full(int(keep.sum()), ti, dtype=np.intp),
        w[keep],
        cols,
        cols,
    )


def _vmat(V) -> MatExpr:
    """V as a square MatExpr; V is a SymVar, numeric matrix, or ray (t, V0)."""
    if isinstance(V, np.ndarray):
        return MatExpr(V.shape) + 0.5 * (V + V.T)
    if isinstance(V, tuple):
        t, V0 = V
        return _ray_matexpr(t, np.asarray(V0, dtype=float))
    return V.expr()


def _congr(V, M: np.ndarray) -> MatExpr:
    """M' V M as a MatExpr; V is a SymVar, numeric matrix, or ray (t, V0)."""
    if isinstance(V, np.ndarray):
        k = M.shape[1]
        return MatExpr((k, k)) + M.T @ (0.5 * (V + V.T)) @ M
    if isinstance(V, tuple):
        t, V0 = V
        return _ray_matexpr(t, M.T @ (np.asarray(V0, dtype=float)) @ M)
    return congruence(V, F=np.ascontiguousarray(M.T))


def conjugate_pencil_sum(prog: Program, groups) -> tuple[MatExpr, AffExpr]:
    """Fresh Lambda_l >= 0 per pencil group l and sum_l Rstar_l[Lambda_l].

    groups is a sequence of pencil groups, each a sequence of symmetric
    d_l x d_l matrices R^{li}, one per latent coordinate i. The returned
    matrix expression has entry (i, j) equal to sum_l Tr(R^{li} Lambda_l
    R^{lj}); the vector expression collects the traces of the Lambda_l.
    """
    acc = None
    traces = []
    for Rl in groups:
        dl = Rl[0].shape[0]
        lam = prog.sym_var(dl)
        prog.add_psd(lam.expr())
        # Rstar_l[S] = sum_p F' S F with F[i, :] = row p of R^{li}; one
        # congruence term per row index p of the pencil dimension.
        for p in range(dl):
            term = congruence(lam, F=np.array([Ri[p, :] for Ri in Rl]))
            acc = term if acc is None else acc + term
        traces.append(lam.trace())
    return acc, concat(traces)


def _entry(V, i: int, j: int):
    if isinstance(V, np.ndarray):
        return V[i, j]
    if isinstance(V, tuple):
        t, V0 = V
        return t * float(V0[i, j])
    return V.entry(i, j)


def _affsum(exprs: list) -> AffExpr:
    out = exprs[0]
    for e in exprs[1:]:
        out = out + e
    return out


class CompatCone:
    """Base class: a closed convex cone in S^N_+ x R_+, upward closed in tau.

    Subclasses implement _emit(prog, V, tau) with V a SymVar or numeric
    matrix and tau an AffExpr; emit() wraps it with the S^N_+ x R_+ part.
    `sharp` records closedness-by-construction per the source rule;
    `complete` records downward monotonicity in V (if (V,tau) is a member
    and 0 <= V' <= V then (V',tau) is one); `theta` is an optional
    tightness factor, reported as metadata only.
    """

    def __init__(self, dim: int, sharp: bool, complete: bool, theta: float | None = None):
        self.dim = int(dim)
        self.sharp = bool(sharp)
        self.complete = bool(complete)
        self.theta = theta
        self.tau_identity: float | None = None

    def _emit(self, prog: Program, V, tau: AffExpr) -> None:
        raise NotImplementedError

    def emit(self, prog: Program, V, tau) -> None:
        """Add constraints equivalent to (V, tau) being a member.

        V: SymVar, numeric matrix (fixed-V feasibility probe), or a ray
        (t, V0) with t a scalar variable kept nonnegative by the caller
        and V0 a numeric psd matrix; tau: scalar AffExpr or number.
        Fresh auxiliaries are created per call, so repeated emissions
        into one program are independent.
        """
        tau = _tau_expr(tau)
        if not isinstance(V, (np.ndarray, tuple)):
            prog.add_psd(V.expr())
        prog.add_nonneg(tau)
        self._emit(prog, V, tau)

    def min_tau(self, V: np.ndarray, tol: float = 1e-8) -> float:
        """Smallest tau with (V, tau) a member; inf when V is not psd."""
        V = np.asarray(V, dtype=float)
        V = 0.5 * (V + V.T)
        w = np.linalg.eigvalsh(V)
        if w[0] < -1e-8 * max(1.0, abs(w[-1])):
            return np.inf
        prog = Program()
        s = prog.scalar()
        self.emit(prog, V, s)
        prog.minimize(s)
        sol = prog.solve(tol=tol)
        if sol.status == "infeasible":
            return np.inf
        if sol.status not in _OK_STATUSES:
            raise SolverError(f"membership solve ended with status {sol.status}")
        return float(sol.value(s))

    def contains(self, V: np.ndarray, tau: float, tol: float = 1e-6) -> bool:
        """Membership of a numeric pair, to tolerance, via a feasibility solve."""
        tau = float(tau)
        if tau < -tol:
            return False
        t = self.min_tau(V)
        return t <= tau + tol * (1.0 + abs(tau))

    def _probe(self) -> float:
        """Require a member with V > 0 (V = I, tau from a minimization)."""
        try:
            t = self.min_tau(np.eye(self.dim))
        except SolverError as e:
            raise ValueError("cone has no member with positive definite V") from e
        if not np.isfinite(t):
            raise ValueError("cone has no member with positive definite V")
        self.tau_identity = t
        return t

    def sample_member(self, rng: np.random.Generator, cap: float = 1e3):
        """Random member (V, tau), biased toward the compatibility boundary.

        Draws a psd direction V0 and maximizes t with (t V0, 1) a member
        (capped), then rescales along the cone's rays.
        """
        N = self.dim
        if rng.uniform() < 0.3:
            g = rng.standard_normal(N)
            V0 = np.outer(g, g)
        else:
            G = rng.standard_normal((N, N))
            V0 = G @ G.T / N
        V0 /= max(np.linalg.norm(V0), 1e-300)
        prog = Program()
        t = prog.scalar()
        prog.add_nonneg(t)
        prog.add_nonneg(cap - t)
        self.emit(prog, (t, V0), 1.0)
        prog.minimize(-t)
        sol = prog.solve()
        if sol.status not in _OK_STATUSES:
            raise SolverError(f"member sampling solve ended with status {sol.status}")
        tstar = max(float(sol.value(t)), 0.0)
        scale = float(np.exp(rng.uniform(-0.7, 1.0)))
        shrink = 1.0 if rng.uniform() < 0.6 else float(rng.uniform(0.3, 1.0))
        return shrink * tstar * scale * V0, scale


# ---------------------------------------------------------------------------
# Base constructors
# ---------------------------------------------------------------------------


class SpectratopeCone(CompatCone):
    """Cone compatible with {M y: R_l[y]^2 <= r_l I, some r in calR}.

    Membership introduces Lambda_l >= 0 with M'VM <= sum_l Rstar_l[Lambda_l]
    and phi_calR(tr Lambda_1, ..., tr Lambda_L) <= tau, where
    Rstar_l[S]_{ij} = Tr(R^{li} S R^{lj}).
    """

    def __init__(self, spec: Spectratope):
        n, k = spec.M.shape
        dsum = sum(Rl[0].shape[0] for Rl in spec.Rmats)
        sharp = np.linalg.matrix_rank(spec.M, tol=1e-10) == n
        super().__init__(n, sharp, True, theta=float(np.log(2.0 * dsum)))
        self.spec = spec

    def _emit(self, prog: Program, V, tau: AffExpr) -> None:
        acc, traces = conjugate_pencil_sum(prog, self.spec.Rmats)
        prog.add_psd(acc - _congr(V, self.spec.M))
        self.spec.calR.support_epigraph(prog, traces, tau)


class EllitopeCone(CompatCone):
    """Cone compatible with {M y: y'R_l y <= r_l, some r in calR}.

    Membership introduces lambda >= 0 with M'VM <= sum_l lambda_l R_l and
    phi_calR(lambda) <= tau.
    """

    def __init__(self, ell: Ellitope):
        n = ell.M.shape[0]
        sharp = np.linalg.matrix_rank(ell.M, tol=1e-10) == n
        super().__init__(n, sharp, True, theta=float(np.log(2.0 * len(ell.Rs))))
        self.ell = ell

    def _emit(self, prog: Program, V, tau: AffExpr) -> None:
        k = self.ell.M.shape[1]
        lam = prog.var(len(self.ell.Rs))
        prog.add_nonneg(lam)
        li = _var_indices(lam)
        idx, alpha, U = [], [], []
        for l, R in enumerate(self.ell.Rs):
            w, Q = np.linalg.eigh(0.5 * (R + R.T))
            for j in range(len(w)):
                if abs(w[j]) > 1e-12:
                    idx.append(li[l])
                    alpha.append(w[j])
                    U.append(Q[:, j])
        cols = np.column_stack(U) if U else np.zeros((k, 0))
        pencil = dyads_term(
            (k, k),
            np.asarray(idx, dtype=np.intp),
            np.asarray(alpha, dtype=float),
            cols,
            cols,
        )
        prog.add_psd(pencil - _congr(V, self.ell.M))
        self.ell.calR.support_epigraph(prog, lam, tau)


class AbsNormCone(CompatCone):
    """Cone compatible with the unit ball of the l_s norm on R^N.

    Three conic forms:
      * s = 1 (default fit): the exact closed form V >= 0, max|V_ij| <= tau.
      * s in [2, inf] with the fitting norm r = l_{s/2}: the diagonal
        majorization V <= Diag(w), ||w||_{s/(s-2)} <= tau.
      * general lifted form (any valid pair, or form="lifted"): auxiliaries
        (W, w) with V <= W + Diag(w) and the conjugate of the entrywise
        lifting of l_s on W plus the conjugate of l_r on w bounded by tau.
    """

    def __init__(self, s: float, N: int, r: float | None = None, form: str = "auto"):
        s = float(s)
        if s < 1.0:
            raise ValueError("exponent must be >= 1")
        fit = 1.0 if s <= 2.0 else s / 2.0
        r = fit if r is None else float(r)
        if r < 1.0 or r < fit - 1e-12:
            raise ValueError(f"norm pair not supported: l_{r} does not fit l_{s}")
        if form not in ("auto", "lifted"):
            raise ValueError(f"unknown form {form!r}")
        theta = 1.0 if s in (1.0, 2.0) and r == fit else None
        super().__init__(N, True, True, theta=theta)
        self.s = s
        self.r = r
        self.form = form
        if form == "lifted" or r != fit:
            self._mode = "lifted"
        elif s == 1.0:
            self._mode = "entry"
        else:
            self._mode = "diag"

    def _emit(self, prog: Program, V, tau: AffExpr) -> None:
        N = self.dim
        if self._mode == "entry":
            for i in range(N):
                for j in range(i, N):
                    e = _entry(V, i, j)
                    prog.add_nonneg(tau - e)
                    prog.add_nonneg(tau + e)
            return
        if self._mode == "diag":
            w = prog.var(N)
            prog.add_nonneg(w)
            prog.add_psd(diag_of(w) - _vmat(V))
            if np.isinf(self.s):
                e = 1.0
            elif self.s == 2.0:
                e = np.inf
            else:
                e = self.s / (self.s - 2.0)
            norm_epigraph(prog, w, tau, e)
            return
        W = prog.sym_var(N)
        w = prog.var(N)
        prog.add_nonneg(w)
        prog.add_psd(W.expr() + diag_of(w) - _vmat(V))
        t1, t2 = prog.scalar(), prog.scalar()
        entries = concat([W.entry(i, j) for i in range(N) for j in range(N)])
        norm_epigraph(prog, entries, t1, dual_exponent(self.s))
        norm_epigraph(prog, w, t2, dual_exponent(self.r))
        prog.add_nonneg(tau - t1 - t2)


def spectratope_cone(spec: Spectratope) -> CompatCone:
    """Cone compatible with the given spectratope."""
    cone = SpectratopeCone(spec)
    cone._probe()
    return cone


def ellitope_cone(ell: Ellitope) -> CompatCone:
    """Cone compatible with the given ellitope."""
    cone = EllitopeCone(ell)
    cone._probe()
    return cone


def absolute_norm_cone(
    s: float, N: int, r: float | None = None, form: str = "auto"
) -> CompatCone:
    """Cone compatible with the unit l_s ball in R^N (fitting norm l_r)."""
    cone = AbsNormCone(s, N, r=r, form=form)
    cone._probe()
    return cone


# ---------------------------------------------------------------------------
# Calculus over existing cones
# ---------------------------------------------------------------------------


class DerivedCone(CompatCone):
    """Cone produced by a calculus rule over operand cones."""

    def __init__(self, rule: str, operands, maps, dim, sharp, complete, theta=None):
        super().__init__(dim, sharp, complete, theta=theta)
        self.rule = rule
        self.operands = tuple(operands)
        self.maps = tuple(np.asarray(A, dtype=float) for A in maps)

    def _emit(self, prog: Program, V, tau: AffExpr) -> None:
        ops = self.operands
        if self.rule == "intersection":
            taus = []
            acc = None
            for op in ops:
                Vj = prog.sym_var(op.dim)
                tj = prog.scalar()
                term = Vj.expr()
                acc = term if acc is None else acc + term
                op.emit(prog, Vj, tj)
                taus.append(tj)
            prog.add_psd(acc - _vmat(V))
            prog.add_nonneg(tau - _affsum(taus))
        elif self.rule == "convex_hull":
            for op in ops:
                op.emit(prog, V, tau)
        elif self.rule == "product":
            taus = []
            acc = None
            off = 0
            for op in ops:
                Vj = prog.sym_var(op.dim)
                tj = prog.scalar()
                term = congruence(Vj, out_dim=self.dim, r0=off)
                acc = term if acc is None else acc + term
                op.emit(prog, Vj, tj)
                taus.append(tj)
                off += op.dim
            prog.add_psd(acc - _vmat(V))
            prog.add_nonneg(tau - _affsum(taus))
        elif self.rule == "linear_image":
            A = self.maps[0]
            U = prog.sym_var(A.shape[1])
            prog.add_psd(U.expr() - _congr(V, A))
            ops[0].emit(prog, U, tau)
        elif self.rule == "inverse_image":
            A = self.maps[0]
            U = prog.sym_var(A.shape[0])
            prog.add_psd(congruence(U, F=np.ascontiguousarray(A.T)) - _vmat(V))
            ops[0].emit(prog, U, tau)
        elif self.rule == "widen":
            ops[0].emit(prog, V, tau * 0.25)
        else:
            raise ValueError(f"unknown rule {self.rule!r}")


def cone_calculus(rule: str, operands, maps=None) -> CompatCone:
    """Combine cones per the stated rule.

    intersection/convex_hull/sum: operands share one dimension N; product:
    block dimensions add; linear_image/inverse_image: maps = [A] with A
    mapping, respectively, the operand space onto the image space (K x N)
    or the new space into the operand space (N x K, trivial kernel).
    """
    operands = list(operands)
    maps = [] if maps is None else list(maps)
    if not operands:
        raise ValueError("no operand cones")
    if rule in ("intersection", "convex_hull", "sum"):
        dims = {op.dim for op in operands}
        if len(dims) != 1:
            raise ValueError("operand dimensions must agree")
        N = operands[0].dim
        if rule == "sum":
            inner = cone_calculus("product", operands)
            return cone_calculus(
                "linear_image", [inner], [np.hstack([np.eye(N)] * len(operands))]
            )
        sharp = (
            all(op.sharp for op in operands)
            if rule == "intersection"
            else any(op.sharp for op in operands)
        )
        complete = all(op.complete for op in operands) if rule == "convex_hull" else True
        cone = DerivedCone(rule, operands, [], N, sharp, complete)
    elif rule == "product":
        N = sum(op.dim for op in operands)
        cone = DerivedCone(rule, operands, [], N, all(op.sharp for op in operands), True)
    elif rule in ("linear_image", "inverse_image"):
        if len(operands) != 1 or len(maps) != 1:
            raise ValueError(f"{rule} takes one operand cone and one map")
        (op,) = operands
        A = np.asarray(maps[0], dtype=float)
        if A.ndim != 2:
            raise ValueError("map must be a matrix")
        if rule == "linear_image":
            if A.shape[1] != op.dim:
                raise ValueError("map width must match the operand dimension")
            if not (op.sharp or op.complete):
                raise ValueError("operand cone must be sharp or complete")
            K = A.shape[0]
            sharp = op.sharp and np.linalg.matrix_rank(A, tol=1e-10) == K
        else:
            if A.shape[0] != op.dim:
                raise ValueError("map height must match the operand dimension")
            K = A.shape[1]
            if np.linalg.matrix_rank(A, tol=1e-10) < K:
                raise ValueError("inverse image requires a map with trivial kernel")
            sharp = op.sharp
        cone = DerivedCone(rule, operands, [A], K, sharp, True)
    else:
        raise ValueError(f"unknown rule {rule!r}")
    cone._probe()
    return cone


def widen_cone(cone: CompatCone) -> CompatCone:
    """The widening {(V, tau): (V, tau/4) in cone}.

    Turns a cone compatible with the symmetrization C_s of a set C with
    0 in C into a cone compatible with C itself; the factor is exactly 4.
    """
    out = DerivedCone(
        "widen", [cone], [], cone.dim, cone.sharp, cone.complete, theta=cone.theta
    )
    out._probe()
    return out


def lifted_entry_norm(Y: np.ndarray, s: float) -> float:
    """The lifting of l_s to symmetric matrices: l_s of the column norms."""
    Y = np.asarray(Y, dtype=float)
    cols = np.array([vec_norm(Y[:, j], s) for j in range(Y.shape[1])])
    return vec_norm(cols, s)
