"""Per-coordinate saddle-point contrast design and its risk bound.

Each recovery coordinate gets a contrast column from the convex problem

    Opt_l = min_g [ pi(g) + support(X_s, B_l - A^T g) ]

whose value certifies max{|B_l . x| : x in X_s, |h_l . A x| <= 1} <= Opt_l
for the normalized column h_l = g / pi(g). The bound Psi(varsigma) then turns
the per-coordinate values into an l_r risk certificate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import problem_model as pm
from .conic import AffExpr, Program, SolverError, vec_norm
from .conic.kernels import maxplus_conv
from .estimator import ContrastMatrix
from .observation import SubGaussian, TailNormContext, pi_epigraph, pi_norm

_OK_STATUSES = ("optimal", "near_optimal")


@dataclass(frozen=True, eq=False)
class DirectDesignResult:
    """Contrast matrix, per-coordinate values, and the Psi risk bound."""

    H: ContrastMatrix
    varsigma: np.ndarray
    psi: float
    gamma: np.ndarray
    rho: float

    def __post_init__(self):
        vs = np.asarray(self.varsigma, dtype=float).reshape(-1)
        if (vs < -1e-12).any():
            raise ValueError("per-coordinate values must be nonnegative")
        gm = np.asarray(self.gamma, dtype=float).reshape(-1)
        if gm.size != vs.size or (gm <= 0).any():
            raise ValueError("gamma must be positive with one entry per coordinate")
        object.__setattr__(self, "varsigma", np.maximum(vs, 0.0))
        object.__setattr__(self, "gamma", gm)


def tail_context(problem, n_columns: int) -> TailNormContext:
    """Tail-norm context at per-column tolerance eps / n_columns."""
    delta = problem.eps / max(n_columns, 1)
    if isinstance(problem.scheme, SubGaussian):
        return TailNormContext(problem.scheme, delta)
    return TailNormContext(problem.scheme, delta, A=problem.A, X=problem.X)


def solve_saddle_column(problem, ell: int, ctx: TailNormContext):
    """Value and normalized contrast column of the ell-th design problem.

    Returns (opt, h) with opt = min_g [pi(g) + support(X_s, B_l - A^T g)]
    and h the pi-unit rescaling of the minimizer. When the minimizer is g = 0
    the column constrains nothing; h is returned as the zero vector and the
    caller drops it.
    """
    A = problem.A
    b = np.asarray(problem.B[ell], dtype=float)
    m = A.shape[0]
    Xs = pm.symmetrize(problem.X)
    prog = Program()
    g = prog.var(m)
    t_pi = prog.scalar()
    t_sup = prog.scalar()
    pi_epigraph(ctx, prog, g, t_pi)
    pm.support_epigraph(Xs, prog, AffExpr.constant(b) - A.T @ g, t_sup)
    prog.minimize(t_pi + t_sup)
    sol = prog.solve()
    if sol.status not in _OK_STATUSES:
        raise SolverError(f"saddle solve for coordinate {ell} ended with {sol.status}")
    opt = max(float(sol.objective), 0.0)
    gval = np.asarray(sol.value(g), dtype=float)
    scale = pi_norm(ctx, gval)
    if scale <= 1e-7 * (1.0 + opt):
        return opt, np.zeros(m)
    return opt, gval / scale


def psi_bound(varsigma, gamma, rho, r, dp_levels: int = 2000) -> float:
    """2 * max{||v / gamma||_r : ||v||_rho <= 1, 0 <= v <= gamma * varsigma}.

    Exact when r = inf, rho = inf, or r <= rho. For finite r > rho the
    maximum of the (then convex) budget objective is computed by a dynamic
    program over u_l = v_l^rho on a grid of `dp_levels` budget steps. The
    grid allows one extra budget step per coordinate and rounds the caps up,
    so rounding any feasible point up coordinatewise keeps it feasible on the
    grid; the returned value is therefore always a valid upper bound.
    """
    varsigma = np.asarray(varsigma, dtype=float).reshape(-1)
    gamma = np.asarray(gamma, dtype=float).reshape(-1)
    if varsigma.size != gamma.size:
        raise ValueError("varsigma and gamma must have matching lengths")
    if varsigma.size == 0:
        return 0.0
    if (varsigma < -1e-12).any():
        raise ValueError("varsigma must be nonnegative")
    if (gamma <= 0).any():
        raise ValueError("gamma must be positive")
    rho, r = float(rho), float(r)
    if rho < 1.0 or r < 1.0:
        raise ValueError("exponents must be >= 1")
    vbar = np.minimum(1.0, gamma * np.maximum(varsigma, 0.0))
    if np.isinf(r):
        return 2.0 * float((vbar / gamma).max())
    if np.isinf(rho):
        return 2.0 * vec_norm(vbar / gamma, r)
    coef = gamma ** (-r)
    beta = vbar**rho
    kappa = r / rho
    if beta.sum() <= 1.0:
        best = float(coef @ beta**kappa)
    elif kappa <= 1.0:
        best = _budget_concave_max(coef, beta, kappa)
    else:
        best = _budget_dp_max(coef, beta, kappa, dp_levels)
    return 2.0 * float(best) ** (1.0 / r)


def _budget_concave_max(coef: np.ndarray, beta: np.ndarray, kappa: float) -> float:
    """max sum coef*u^kappa over sum(u) <= 1, 0 <= u <= beta, for kappa <= 1.

    The caller guarantees beta.sum() > 1, so the budget binds.
    """
    if kappa == 1.0:
        left, total = 1.0, 0.0
        for i in np.argsort(-coef):
            take = min(float(beta[i]), left)
            total += float(coef[i]) * take
            left -= take
            if left <= 0.0:
                break
        return total
    act = beta > 0

    def used(lam: float) -> float:
        lev = (coef[act] * kappa / lam) ** (1.0 / (1.0 - kappa))
        return float(np.minimum(beta[act], lev).sum())

    lo = hi = float((coef[act] * kappa).max())
    while used(hi) > 1.0:
        hi *= 2.0
    while used(lo) < 1.0:
        lo *= 0.5
    for _ in range(200):
        mid = np.sqrt(lo * hi)
        if used(mid) > 1.0:
            lo = mid
        else:
            hi = mid
    lam = np.sqrt(lo * hi)
    u = np.zeros_like(beta)
    u[act] = np.minimum(beta[act], (coef[act] * kappa / lam) ** (1.0 / (1.0 - kappa)))
    total = u.sum()
    if total > 1.0:
        u /= total
    return float(coef @ u**kappa)


def _budget_dp_max(coef: np.ndarray, beta: np.ndarray, kappa: float, levels: int) -> float:
    """Upper bound on max sum coef*u^kappa (kappa > 1) over the budget polytope.

    Grid of `levels` budget steps extended by one step per coordinate, caps
    rounded up to the grid: any feasible point rounds up into the relaxed
    grid problem, so the dynamic program's value dominates the true maximum.
    """
    step = 1.0 / levels
    budget = levels + len(coef)
    value = np.zeros(budget + 1)
    for i in range(len(coef)):
        cap = min(int(np.ceil(beta[i] / step - 1e-12)), budget)
        if cap <= 0 or coef[i] <= 0.0:
            continue
        profile = coef[i] * (np.arange(cap + 1) * step) ** kappa
        value = maxplus_conv(value, profile)
    return float(value[budget])


def build_contrast_direct(problem, gamma=None, rho=None, r=None) -> DirectDesignResult:
    """Design one contrast column per recovery coordinate and certify the risk.

    gamma/rho describe a scaled l_rho ball containing the image of X_s under
    B; when omitted they default to the always-valid box data
    gamma_l = 1 / support(X_s, B_l), rho = inf. r defaults to the problem's
    norm exponent. Coordinates whose design problem is minimized at g = 0
    keep their value but contribute no column.
    """
    B = problem.B
    nu = B.shape[0]
    if r is None:
        if not isinstance(problem.norm, pm.LpNorm):
            raise ValueError("the direct design certifies l_r norms; pass r explicitly")
        r = problem.norm.r
    if (gamma is None) != (rho is None):
        raise ValueError("gamma and rho must be supplied together")
    if gamma is None:
        Xs = pm.symmetrize(problem.X)
        sup = np.array([pm.support_function(Xs, B[ell]) for ell in range(nu)])
        gamma = np.where(sup > 1e-12, 1.0 / np.maximum(sup, 1e-300), 1.0)
        rho = np.inf
    gamma = np.asarray(gamma, dtype=float).reshape(-1)
    ctx = tail_context(problem, nu)
    cols, pis, values = [], [], []
    for ell in range(nu):
        opt, h = solve_saddle_column(problem, ell, ctx)
        values.append(opt)
        if np.any(h):
            cols.append(h)
            pis.append(pi_norm(ctx, h))
    H = np.column_stack(cols) if cols else np.zeros((problem.A.shape[0], 0))
    contrast = ContrastMatrix(H, np.asarray(pis, dtype=float), ctx.delta, "design-I")
    varsigma = np.asarray(values, dtype=float)
    psi = psi_bound(varsigma, gamma, rho, r)
    return DirectDesignResult(contrast, varsigma, float(psi), gamma, float(rho))


def diagonal_design(a, d, b, sigma, eps, rho, r):
    """Closed-form design for diagonal sensing on a scaled l_rho ball.

    For observations omega_l = a_l x_l + sigma xi_l over the signal set
    {||Diag(d) x||_rho <= 1} and targets w_l = b_l x_l, returns
    (frak_n, bound, contrast): the effective dimension (shortest prefix whose
    noise-to-signal mass exceeds one), the l_r risk bound
    2 * (sum_{l <= frak_n} (theta b_l / a_l)^r)^(1/r), and the contrast
    matrix theta^{-1} I with theta = sigma * sqrt(2 ln(2n/eps)).

    Requires 1 <= rho <= r < inf and both a/d and b/a nonincreasing.
    """
    a = np.asarray(a, dtype=float).reshape(-1)
    d = np.asarray(d, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    n = a.size
    if d.size != n or b.size != n:
        raise ValueError("a, d, b must have matching lengths")
    if (a <= 0).any() or (d <= 0).any() or (b <= 0).any():
        raise ValueError("a, d, b must be positive")
    rho, r = float(rho), float(r)
    if not 1.0 <= rho <= r or np.isinf(r):
        raise ValueError("the closed form needs 1 <= rho <= r < inf")
    for name, ratio in (("a/d", a / d), ("b/a", b / a)):
        bad = np.nonzero(np.diff(ratio) > 1e-12 * np.abs(ratio[:-1]))[0]
        if bad.size:
            raise ValueError(
                f"{name} must be nonincreasing; it increases at index {int(bad[0]) + 1}"
            )
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    theta = float(sigma * np.sqrt(2.0 * np.log(2.0 * n / eps)))
    over = np.nonzero(np.cumsum((theta * d / a) ** rho) > 1.0)[0]
    frak = n if over.size == 0 else int(over[0]) + 1
    bound = 2.0 * float(np.sum((theta * b[:frak] / a[:frak]) ** r)) ** (1.0 / r)
    contrast = ContrastMatrix(np.eye(n) / theta, np.ones(n), eps / n, "design-I")
    return frak, bound, contrast
