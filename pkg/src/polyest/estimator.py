"""Estimate execution: contrast bookkeeping, recovery programs, risk certificates.

The recovery program returns the minimizer of ||H'(omega - A u)||_inf over the
signal set. Its sup-norm risk is evaluated exactly as a maximum of nu linear
maximizations; for other l_r recovery norms an upper bound is computed by
scalarizing per-row maxima through an envelope of the symmetrized image B X_s.
A comparison linear estimate w = H'omega is designed by a semidefinite program
over spectratope descriptions of the signal set and of the unit ball of the
conjugate recovery norm. Empirical risk is measured as an error quantile over
sampled signals and noise draws.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import problem_model as pm
from .compat_cones import conjugate_pencil_sum
from .conic import Program, SolverError, block_mat, congruence, sandwich
from .observation import sample_noise

_PROVENANCES = ("design-I", "design-II", "identity", "aggregated")
_OK_STATUSES = ("optimal", "near_optimal")


@dataclass(frozen=True, eq=False)
class ContrastMatrix:
    """Contrast columns plus the tail-norm bookkeeping the certificates rely on.

    Every column must have tail norm at most one at the recorded per-column
    tolerance delta; the estimator then controls each |h . xi| <= 1 with
    probability 1 - delta.
    """

    H: np.ndarray
    pi_values: np.ndarray
    delta: float
    provenance: str = "identity"

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float)
        if H.ndim != 2:
            raise ValueError("contrast matrix must be two-dimensional")
        pi = np.asarray(self.pi_values, dtype=float).reshape(-1)
        if pi.size != H.shape[1]:
            raise ValueError("one tail-norm value per column is required")
        if (pi > 1.0 + 1e-8).any():
            raise ValueError("contrast columns must have unit tail norm or less")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.provenance not in _PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "pi_values", pi)

    @property
    def m(self) -> int:
        return self.H.shape[0]

    @property
    def n_columns(self) -> int:
        return self.H.shape[1]


@dataclass(frozen=True)
class RiskCertificate:
    """An upper bound on the (epsilon, norm)-risk, with its provenance."""

    bound: float
    epsilon: float
    norm: str
    provenance: str

    def __post_init__(self):
        if not self.bound >= 0.0:
            raise ValueError("risk bound must be nonnegative")
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")


def _contrast_array(H) -> np.ndarray:
    arr = H.H if isinstance(H, ContrastMatrix) else np.asarray(H, dtype=float)
    if arr.ndim != 2:
        raise ValueError("contrast matrix must be two-dimensional")
    return arr


def _norm_tag(norm) -> str:
    if isinstance(norm, pm.LpNorm):
        return "linf" if np.isinf(norm.r) else f"l{norm.r:g}"
    return "dual-ball"


# ---------------------------------------------------------------------------
# Recovery program
# ---------------------------------------------------------------------------


def polyhedral_estimate(problem, H, omega) -> tuple[np.ndarray, np.ndarray, float]:
    """Minimize ||H'(omega - A u)||_inf over u in the signal set.

    Returns (x_hat, w_hat, objective) with w_hat = B x_hat. Any solver
    optimum is accepted; the risk certificates cover every minimizer. With
    no contrast columns the objective is constant and the interior-point
    solver returns its barrier-centered feasible point of X (a
    Chebyshev-style default), reported with objective 0.
    """
    Hm = _contrast_array(H)
    omega = np.asarray(omega, dtype=float).reshape(-1)
    A, B = problem.A, problem.B
    if omega.shape[0] != A.shape[0]:
        raise ValueError("observation length mismatch")
    if not np.isfinite(omega).all():
        raise ValueError("observation must be finite")
    if Hm.shape[0] != A.shape[0]:
        raise ValueError("contrast row count mismatch")
    prog = Program()
    x = pm.conic_representation(problem.X).embed(prog)
    if Hm.shape[1]:
        t = prog.scalar()
        resid = Hm.T @ omega - (Hm.T @ A) @ x
        prog.add_nonneg(t - resid)
        prog.add_nonneg(t + resid)
        prog.minimize(t)
    sol = prog.solve()
    if sol.status not in _OK_STATUSES:
        raise SolverError(f"recovery solve failed: {sol.status}")
    x_hat = np.asarray(sol.value(x), dtype=float)
    objective = (
        float(np.abs(Hm.T @ (omega - A @ x_hat)).max()) if Hm.shape[1] else 0.0
    )
    return x_hat, B @ x_hat, objective


# ---------------------------------------------------------------------------
# Risk certificates
# ---------------------------------------------------------------------------


def _row_gains(problem, Hm: np.ndarray) -> np.ndarray:
    """Per-row maxima of b_i . x over the symmetrized signal set, subject to
    ||H'Ax||_inf <= 1 (all-zero contrast columns dropped as vacuous)."""
    Xs = pm.symmetrize(problem.X)
    keep = np.abs(Hm).max(axis=0) > 0.0 if Hm.size else np.zeros(0, dtype=bool)
    if not keep.any():
        return np.array([pm.support_function(Xs, row) for row in problem.B])
    G = Hm[:, keep].T @ problem.A
    block = pm.conic_representation(Xs)
    gains = np.empty(problem.B.shape[0])
    for i, row in enumerate(problem.B):
        prog = Program()
        x = block.embed(prog)
        gx = G @ x
        prog.add_nonneg(1.0 - gx)
        prog.add_nonneg(1.0 + gx)
        prog.minimize(-(row @ x))
        sol = prog.solve()
        if sol.status not in _OK_STATUSES:
            raise SolverError(f"row maximization failed: {sol.status}")
        gains[i] = -sol.objective
    return gains


def risk_linf_exact(problem, H) -> RiskCertificate:
    """Exact sup-norm risk of the recovery yielded by the contrast matrix H.

    The value is 2 max_i max{b_i . x : x in X_s, ||H'Ax||_inf <= 1}, a
    maximum of nu linear maximizations, each solved exactly up to solver
    tolerance. With no (nonzero) contrast columns the constraint is vacuous
    and each inner maximum is the support function of X_s along b_i.
    """
    norm = problem.norm
    if not (isinstance(norm, pm.LpNorm) and np.isinf(norm.r)):
        raise ValueError("exact risk evaluation requires the sup recovery norm")
    gains = _row_gains(problem, _contrast_array(H))
    bound = 2.0 * float(gains.max(initial=0.0))
    return RiskCertificate(max(bound, 0.0), problem.eps, "linf", "exact-linf")


def risk_norm_bound(problem, H, gamma, rho: float) -> RiskCertificate:
    """Upper bound on the l_r risk through an envelope of the image B X_s.

    gamma > 0 and rho describe a superset {y : ||Diag(gamma) y||_rho <= 1}
    of B X_s; the caller is responsible for the inclusion. The certificate
    scalarizes the per-row maxima under ||H'Ax||_inf <= 1 through that
    envelope, so it upper-bounds the exact sup-norm value and extends it to
    every l_r recovery norm.
    """
    norm = problem.norm
    if not isinstance(norm, pm.LpNorm):
        raise ValueError("norm bound requires an l_r recovery norm")
    gamma = np.asarray(gamma, dtype=float).reshape(-1)
    if gamma.shape[0] != problem.B.shape[0]:
        raise ValueError("one envelope weight per recovery coordinate is required")
    if (gamma <= 0).any():
        raise ValueError("envelope weights must be positive")
    from .design_direct import psi_bound

    gains = _row_gains(problem, _contrast_array(H))
    bound = psi_bound(np.maximum(gains, 0.0), gamma, rho, norm.r)
    return RiskCertificate(
        float(bound), problem.eps, _norm_tag(norm), "envelope-bound"
    )


# ---------------------------------------------------------------------------
# Linear-estimate baseline
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _SpectData:
    """Spectratope description: {M y : S_l[y]^2 <= r_l I for some r in radii}."""

    M: np.ndarray
    groups: tuple
    radii: pm.MonotoneSet


def _arrow_group(L: np.ndarray) -> tuple:
    """Pencils S_i with S[y] = arrow(L y), so S[y]^2 <= r I iff ||L y||^2 <= r."""
    p, k = L.shape
    out = []
    for i in range(k):
        S = np.zeros((p + 1, p + 1))
        S[0, 1:] = L[:, i]
        S[1:, 0] = L[:, i]
        out.append(S)
    return tuple(out)


def _spectratope_data(s) -> _SpectData:
    """Canonical spectratope data for the supported signal-set variants."""
    if isinstance(s, pm.Spectratope):
        return _SpectData(s.M, s.Rmats, s.calR)
    if isinstance(s, pm.Ellitope):
        groups = tuple(_arrow_group(pm._psd_sqrt(R)) for R in s.Rs)
        return _SpectData(s.M, groups, s.calR)
    if isinstance(s, pm.Box):
        if (s.upper <= 0).any() or not np.allclose(s.lower, -s.upper):
            raise ValueError(
                "only a centered box with positive half-widths is a spectratope"
            )
        n = s.dim
        groups = tuple(
            tuple(
                np.array([[1.0 / s.upper[i] if j == i else 0.0]]) for j in range(n)
            )
            for i in range(n)
        )
        return _SpectData(np.eye(n), groups, pm.MonotoneSet("box", upper=np.ones(n)))
    if isinstance(s, pm.ScaledBall):
        if s.p == 2.0:
            groups = (_arrow_group(np.diag(s.gamma)),)
            return _SpectData(
                np.eye(s.dim), groups, pm.MonotoneSet("box", upper=np.ones(1))
            )
        if np.isinf(s.p):
            return _spectratope_data(pm.Box(-1.0 / s.gamma, 1.0 / s.gamma))
        raise ValueError("a scaled ball is a spectratope only for exponent 2 or inf")
    if isinstance(s, pm.LinearImage):
        inner = _spectratope_data(s.inner)
        return _SpectData(s.M @ inner.M, inner.groups, inner.radii)
    raise ValueError(f"no spectratope description for {type(s).__name__}")


def _conjugate_ball_data(norm, nu: int) -> _SpectData:
    """Spectratope data of the unit ball of the norm conjugate to `norm`."""
    if isinstance(norm, pm.SpectratopeDual):
        if norm.ball.dim != nu:
            raise ValueError("norm ball dimension mismatch")
        return _SpectData(norm.ball.M, norm.ball.Rmats, norm.ball.calR)
    if isinstance(norm, pm.LpNorm):
        if norm.r == 2.0:
            return _SpectData(
                np.eye(nu),
                (_arrow_group(np.eye(nu)),),
                pm.MonotoneSet("box", upper=np.ones(1)),
            )
        if norm.r == 1.0:
            return _spectratope_data(pm.Box(-np.ones(nu), np.ones(nu)))
        raise ValueError(
            "the conjugate norm ball is a spectratope only for exponents 1 and 2"
        )
    raise TypeError(f"unknown norm spec {norm!r}")


def linear_design_baseline(problem) -> tuple[np.ndarray, float]:
    """Design the comparison linear estimate w_lin(omega) = H_lin' omega.

    Semidefinite program over (Theta, H, multiplier blocks) requiring
    sub-Gaussian noise and spectratope descriptions of the signal set and of
    the unit ball of the conjugate recovery norm. Two coupled blocks certify
    the worst-case bias max_{x in X} ||(B - H'A) x|| and the expected noise
    contribution of ||H'xi||; the returned opt_star bounds the expected
    recovery error sup_{x in X} E ||Bx - H'(Ax + xi)||.
    """
    if getattr(problem.scheme, "kind", "") != "subgaussian":
        raise ValueError("linear design requires the sub-Gaussian scheme")
    A, B = problem.A, problem.B
    m, n = A.shape
    nu = B.shape[0]
    sig = _spectratope_data(problem.X)
    ball = _conjugate_ball_data(problem.norm, nu)
    if not B.any():
        return np.zeros((m, nu)), 0.0
    MX = sig.M
    Mb = ball.M
    prog = Program()
    theta = prog.sym_var(m)
    prog.add_psd(theta.expr())
    Hv = prog.mat_var(m, nu)
    lam_sum, lam_tr = conjugate_pencil_sum(prog, sig.groups)
    up_sum, up_tr = conjugate_pencil_sum(prog, ball.groups)
    upp_sum, upp_tr = conjugate_pencil_sum(prog, ball.groups)
    bias_coupling = 0.5 * (Mb.T @ B @ MX) - sandwich(
        Hv, L=0.5 * Mb.T, R=A @ MX, transpose=True
    )
    prog.add_psd(block_mat([[up_sum, bias_coupling], [None, lam_sum]]))
    noise_coupling = sandwich(Hv, L=0.5 * Mb.T, transpose=True)
    prog.add_psd(block_mat([[upp_sum, noise_coupling], [None, congruence(theta)]]))
    t1, t2, t3 = prog.scalar(), prog.scalar(), prog.scalar()
    sig.radii.support_epigraph(prog, lam_tr, t1)
    ball.radii.support_epigraph(prog, up_tr, t2)
    ball.radii.support_epigraph(prog, upp_tr, t3)
    sigma = problem.scheme.sigma
    prog.minimize(t1 + t2 + t3 + sigma**2 * theta.trace())
    sol = prog.solve()
    if sol.status not in _OK_STATUSES:
        raise SolverError(f"linear design solve failed: {sol.status}")
    H_lin = np.asarray(sol.value(Hv), dtype=float)
    return H_lin, max(float(sol.objective), 0.0)


# ---------------------------------------------------------------------------
# Empirical risk measurement
# ---------------------------------------------------------------------------


def _support_maximizer(X, d: np.ndarray) -> np.ndarray:
    """A point of X attaining max_{x in X} d . x (closed forms, else a solve)."""
    if isinstance(X, pm.Box):
        return np.where(d >= 0.0, X.upper, X.lower)
    if isinstance(X, pm.ScaledBall):
        c = d / X.gamma
        q = pm.dual_exponent(X.p)
        scale = pm.vec_norm(c, q)
        if scale <= 0.0:
            return np.zeros(X.dim)
        if np.isinf(X.p):
            y = np.sign(c)
        elif X.p == 1.0:
            y = np.zeros(X.dim)
            j = int(np.argmax(np.abs(c)))
            y[j] = np.sign(c[j])
        else:
            y = np.sign(c) * (np.abs(c) / scale) ** (q - 1.0)
        return y / X.gamma
    if isinstance(X, pm.SimplexSubset) and X.C is None:
        x = np.zeros(X.n)
        x[int(np.argmax(d))] = 1.0
        return x
    prog = Program()
    x = pm.conic_representation(X).embed(prog)
    prog.minimize(-(d @ x))
    sol = prog.solve()
    if sol.status not in _OK_STATUSES:
        raise SolverError(f"support maximization failed: {sol.status}")
    return np.asarray(sol.value(x), dtype=float)


def _sample_signal(X, rng: np.random.Generator) -> np.ndarray:
    """One signal draw: 70% extreme points (box vertices where enumerable,
    support maximizers otherwise), 20% boundary support maximizers, 10%
    interior points on a chord between two member samples."""
    u = rng.uniform()
    if u < 0.7 and isinstance(X, pm.Box):
        return np.where(rng.integers(0, 2, X.dim) == 1, X.upper, X.lower)
    if u < 0.9:
        return _support_maximizer(X, rng.standard_normal(X.dim))
    a = pm.sample_point(X, rng)
    b = pm.sample_point(X, rng)
    return a + rng.uniform() * (b - a)


def empirical_quantile_risk(problem, estimate_fn, trials: int, rng):
    """Empirical (1 - eps)-quantile of recovery errors over sampled signals.

    estimate_fn maps an observation omega to the recovered w. rng is either
    a single generator (sequential draws) or a per-trial stream exposing
    .trial(index), which makes the draws independent of execution order.
    The quantile is the k-th smallest error with k the least integer
    exceeding (1 - eps) * trials, capped at trials (conservative side).
    Errors are measured over the sampled signals only, not over all of X.
    """
    trials = int(trials)
    if trials < 1:
        raise ValueError("at least one trial is required")
    per_trial = getattr(rng, "trial", None)
    errors = np.empty(trials)
    for t in range(trials):
        gen = per_trial(t) if per_trial is not None else rng
        x = _sample_signal(problem.X, gen)
        xi = sample_noise(problem.scheme, x, problem.A, gen)
        w = np.asarray(estimate_fn(problem.A @ x + xi), dtype=float)
        errors[t] = pm.norm_value(problem.norm, problem.B @ x - w)
    # Least k with k > (1 - eps) * trials; the small slop keeps an exactly
    # integral product (e.g. 0.9 * 10) from rounding down in floating point.
    k = min(trials, int(np.floor((1.0 - problem.eps) * trials + 1e-9)) + 1)
    return float(np.sort(errors)[k - 1]), errors
