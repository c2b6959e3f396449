"""Signal sets, norms, and the estimation-problem container.

Every set variant provides three oracles consumed elsewhere: an exact or
solver-based support function, a conic membership representation, and a
point sampler. All objects are immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .conic import AffExpr, Program, block_mat, concat, diag_of, dyads_term
from .conic.norms import dual_exponent, norm_epigraph, vec_norm


def _arr(x, ndim: int) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim != ndim:
        raise ValueError(f"expected {ndim}-dim array, got shape {a.shape}")
    return a


def _psd_sqrt(R: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Factor L with L^T L = R for R >= 0, rows = numerical rank."""
    w, V = np.linalg.eigh(0.5 * (R + R.T))
    if w[0] < -tol * max(1.0, abs(w[-1])):
        raise ValueError("matrix is not positive semidefinite")
    keep = w > tol * max(1.0, abs(w[-1]))
    return (np.sqrt(w[keep])[:, None]) * V[:, keep].T


# ---------------------------------------------------------------------------
# Monotone parameter sets (the admissible r in ellitope/spectratope variants)
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MonotoneSet:
    """Convex compact subset of the nonnegative orthant, downward closed.

    kinds: "box" {0 <= r <= upper}; "ballpos" {r >= 0, ||gamma*r||_p <= 1};
    "simplex" {r >= 0, sum r <= total}.
    """

    kind: str
    upper: np.ndarray | None = None
    gamma: np.ndarray | None = None
    p: float = 2.0
    total: float = 1.0
    ndim: int = 1

    def __post_init__(self):
        if self.kind == "box":
            u = _arr(self.upper, 1)
            if (u <= 0).any():
                raise ValueError("box upper bounds must be positive")
            object.__setattr__(self, "upper", u)
        elif self.kind == "ballpos":
            g = _arr(self.gamma, 1)
            if (g <= 0).any():
                raise ValueError("scaling must be positive")
            object.__setattr__(self, "gamma", g)
            if self.p < 1:
                raise ValueError("exponent must be >= 1")
        elif self.kind == "simplex":
            if self.total <= 0:
                raise ValueError("simplex total must be positive")
        else:
            raise ValueError(f"unknown monotone set kind {self.kind!r}")

    @property
    def dim(self) -> int:
        if self.kind == "box":
            return len(self.upper)
        if self.kind == "ballpos":
            return len(self.gamma)
        return self.ndim

    def support(self, v: np.ndarray) -> float:
        """max_{r in set} v . r (exact)."""
        v = np.asarray(v, dtype=float)
        if self.kind == "box":
            return float(np.maximum(v, 0.0) @ self.upper)
        if self.kind == "ballpos":
            q = dual_exponent(self.p)
            return vec_norm(np.maximum(v, 0.0) / self.gamma, q)
        return self.total * float(max(0.0, v.max(initial=0.0)))

    def contains(self, r: np.ndarray, tol: float = 1e-9) -> bool:
        r = np.asarray(r, dtype=float)
        if (r < -tol).any():
            return False
        if self.kind == "box":
            return bool((r <= self.upper + tol).all())
        if self.kind == "ballpos":
            return vec_norm(self.gamma * r, self.p) <= 1 + tol
        return float(r.sum()) <= self.total + tol

    def emit(self, prog: Program, r: AffExpr) -> None:
        prog.add_nonneg(r)
        if self.kind == "box":
            prog.add_nonneg(self.upper - r)
        elif self.kind == "ballpos":
            norm_epigraph(prog, np.diag(self.gamma) @ r, 1.0, self.p)
        else:
            prog.add_nonneg(self.total - r.sum())

    def support_epigraph(self, prog: Program, v: AffExpr, t: AffExpr) -> None:
        """Add conic constraints enforcing support(v) <= t (v of any sign)."""
        if not isinstance(t, AffExpr):
            t = AffExpr.constant(float(t))
        if self.kind == "simplex":
            prog.add_nonneg(t)
            prog.add_nonneg(t - v * self.total)
            return
        w = prog.var(self.dim)
        prog.add_nonneg(w)
        prog.add_nonneg(w - v)
        if self.kind == "box":
            prog.add_nonneg(t - self.upper.reshape(1, -1) @ w)
        else:
            norm_epigraph(prog, np.diag(1.0 / self.gamma) @ w, t, dual_exponent(self.p))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "box":
            return self.upper * rng.uniform(0.05, 1.0, size=self.dim)
        if self.kind == "ballpos":
            g = np.abs(rng.standard_normal(self.dim))
            g /= max(vec_norm(self.gamma * g, self.p), 1e-300)
            return g * rng.uniform(0.05, 1.0)
        w = rng.dirichlet(np.ones(self.dim))
        return self.total * w * rng.uniform(0.05, 1.0)


# ---------------------------------------------------------------------------
# Signal-set variants
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Box:
    """{x: lower <= x <= upper} (lower = upper allowed: a singleton)."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo, up = _arr(self.lower, 1), _arr(self.upper, 1)
        if lo.shape != up.shape or (lo > up).any():
            raise ValueError("invalid box bounds")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)

    @property
    def dim(self) -> int:
        return len(self.lower)


@dataclass(frozen=True, eq=False)
class ScaledBall:
    """{x: ||Diag(gamma) x||_p <= 1}."""

    gamma: np.ndarray
    p: float = 2.0

    def __post_init__(self):
        g = _arr(self.gamma, 1)
        if (g <= 0).any():
            raise ValueError("scaling must be positive")
        if self.p < 1:
            raise ValueError("exponent must be >= 1")
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "p", float(self.p))

    @property
    def dim(self) -> int:
        return len(self.gamma)


@dataclass(frozen=True, eq=False)
class SimplexSubset:
    """{x >= 0, sum x = 1, C x <= d} (C, d optional extra rows)."""

    n: int
    C: np.ndarray | None = None
    d: np.ndarray | None = None

    def __post_init__(self):
        if (self.C is None) != (self.d is None):
            raise ValueError("C and d must be given together")
        if self.C is not None:
            C, d = _arr(self.C, 2), _arr(self.d, 1)
            if C.shape != (len(d), self.n):
                raise ValueError("constraint shape mismatch")
            object.__setattr__(self, "C", C)
            object.__setattr__(self, "d", d)

    @property
    def dim(self) -> int:
        return self.n


@dataclass(frozen=True, eq=False)
class Ellitope:
    """{x = M y: exists r in calR with y' R_l y <= r_l for every l}."""

    M: np.ndarray
    Rs: tuple
    calR: MonotoneSet

    def __post_init__(self):
        M = _arr(self.M, 2)
        k = M.shape[1]
        Rs = tuple(_arr(R, 2) for R in self.Rs)
        if self.calR.dim != len(Rs):
            raise ValueError("calR dimension must match the number of quadratic forms")
        tot = np.zeros((k, k))
        for R in Rs:
            if R.shape != (k, k):
                raise ValueError("quadratic form shape mismatch")
            w = np.linalg.eigvalsh(0.5 * (R + R.T))
            if w[0] < -1e-10 * max(1.0, abs(w[-1])):
                raise ValueError("quadratic forms must be positive semidefinite")
            tot += R
        if np.linalg.eigvalsh(tot)[0] <= 1e-12:
            raise ValueError("set unbounded in direction")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "Rs", Rs)

    @property
    def dim(self) -> int:
        return self.M.shape[0]


@dataclass(frozen=True, eq=False)
class Spectratope:
    """{x = M y: exists r in calR with R_l[y]^2 <= r_l I for every l}.

    R_l[y] = sum_i y_i Rmats[l][i], a symmetric d_l x d_l matrix pencil.
    """

    M: np.ndarray
    Rmats: tuple
    calR: MonotoneSet

    def __post_init__(self):
        M = _arr(self.M, 2)
        k = M.shape[1]
        Rmats = tuple(tuple(_arr(Ri, 2) for Ri in Rl) for Rl in self.Rmats)
        if self.calR.dim != len(Rmats):
            raise ValueError("calR dimension must match the number of pencils")
        rows = []
        for Rl in Rmats:
            if len(Rl) != k:
                raise ValueError("each pencil needs one matrix per y coordinate")
            dl = Rl[0].shape[0]
            for Ri in Rl:
                if Ri.shape != (dl, dl) or not np.allclose(Ri, Ri.T, atol=1e-12):
                    raise ValueError("pencil matrices must be square symmetric")
            rows.append(np.column_stack([Ri.ravel() for Ri in Rl]))
        stacked = np.vstack(rows)
        if np.linalg.matrix_rank(stacked, tol=1e-10) < k:
            raise ValueError("set unbounded in direction")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "Rmats", Rmats)

    @property
    def dim(self) -> int:
        return self.M.shape[0]

    def pencil_value(self, l: int, y: np.ndarray) -> np.ndarray:
        out = np.zeros_like(self.Rmats[l][0])
        for i, Ri in enumerate(self.Rmats[l]):
            out = out + y[i] * Ri
        return out


@dataclass(frozen=True, eq=False)
class LinearImage:
    """{M u: u in inner}."""

    M: np.ndarray
    inner: object

    def __post_init__(self):
        M = _arr(self.M, 2)
        if M.shape[1] != self.inner.dim:
            raise ValueError("image map width mismatch")
        object.__setattr__(self, "M", M)

    @property
    def dim(self) -> int:
        return self.M.shape[0]


@dataclass(frozen=True, eq=False)
class Intersection:
    """Intersection of finitely many sets in the same space."""

    sets: tuple

    def __post_init__(self):
        sets = tuple(self.sets)
        if not sets:
            raise ValueError("empty intersection")
        if len({s.dim for s in sets}) != 1:
            raise ValueError("dimension mismatch across members")
        object.__setattr__(self, "sets", sets)

    @property
    def dim(self) -> int:
        return self.sets[0].dim


@dataclass(frozen=True, eq=False)
class Symmetrized:
    """(inner - inner) / 2: support h(d) = (h_inner(d) + h_inner(-d)) / 2."""

    inner: object

    @property
    def dim(self) -> int:
        return self.inner.dim


# ---------------------------------------------------------------------------
# Norm specifications on the recovery space
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LpNorm:
    r: float = np.inf

    def __post_init__(self):
        if self.r < 1:
            raise ValueError("exponent must be >= 1")
        object.__setattr__(self, "r", float(self.r))


@dataclass(frozen=True, eq=False)
class SpectratopeDual:
    """Norm whose value is the support function of the given symmetric ball.

    The ball describes the unit ball of the conjugate norm, so
    ||w|| = max_{z in ball} z . w.
    """

    ball: Spectratope


def norm_value(spec, w: np.ndarray) -> float:
    if isinstance(spec, LpNorm):
        return vec_norm(w, spec.r)
    if isinstance(spec, SpectratopeDual):
        return support_function(spec.ball, w)
    raise TypeError(f"unknown norm spec {spec!r}")


# ---------------------------------------------------------------------------
# Support functions
# ---------------------------------------------------------------------------


def _support_by_solver(s, d: np.ndarray) -> float:
    prog = Program()
    x = conic_representation(s).embed(prog)
    prog.minimize(-(np.asarray(d, dtype=float) @ x))
    sol = prog.solve()
    if sol.status == "unbounded":
        raise ValueError("set unbounded in direction")
    sol.require_optimal()
    return -sol.objective


def support_function(s, d) -> float:
    """max_{x in s} d . x; closed forms where available, else a conic solve."""
    d = np.asarray(d, dtype=float)
    if isinstance(s, Box):
        return float(np.maximum(d, 0.0) @ s.upper + np.minimum(d, 0.0) @ s.lower)
    if isinstance(s, ScaledBall):
        return vec_norm(d / s.gamma, dual_exponent(s.p))
    if isinstance(s, SimplexSubset):
        if s.C is None:
            return float(d.max())
        return _support_by_solver(s, d)
    if isinstance(s, LinearImage):
        return support_function(s.inner, s.M.T @ d)
    if isinstance(s, Symmetrized):
        return 0.5 * (support_function(s.inner, d) + support_function(s.inner, -d))
    if isinstance(s, (Ellitope, Spectratope, Intersection)):
        return _support_by_solver(s, d)
    raise TypeError(f"unknown set {s!r}")


def support_epigraph(s, prog: Program, v: AffExpr, t: AffExpr) -> None:
    """Add constraints enforcing support_function(s, v) <= t for variable v.

    Available for the variants whose support function is linear- or
    cone-representable in the direction argument.
    """
    if isinstance(s, Box):
        n = s.dim
        w = prog.var(n)
        prog.add_nonneg(w - np.diag(s.upper) @ v)
        prog.add_nonneg(w - np.diag(s.lower) @ v)
        prog.add_nonneg(t - w.sum())
        return
    if isinstance(s, ScaledBall):
        norm_epigraph(prog, np.diag(1.0 / s.gamma) @ v, t, dual_exponent(s.p))
        return
    if isinstance(s, SimplexSubset) and s.C is None:
        prog.add_nonneg(t - v)
        return
    if isinstance(s, LinearImage):
        support_epigraph(s.inner, prog, s.M.T @ v, t)
        return
    if isinstance(s, Symmetrized):
        t1, t2 = prog.scalar(), prog.scalar()
        support_epigraph(s.inner, prog, v, t1)
        support_epigraph(s.inner, prog, -1.0 * v, t2)
        prog.add_nonneg(t - 0.5 * (t1 + t2))
        return
    if isinstance(s, Intersection):
        # support of an intersection is the infimal convolution of supports
        parts_v, parts_t = [], []
        for m in s.sets:
            vi, ti = prog.var(s.dim), prog.scalar()
            support_epigraph(m, prog, vi, ti)
            parts_v.append(vi)
            parts_t.append(ti)
        tot_v = parts_v[0]
        tot_t = parts_t[0]
        for vi, ti in zip(parts_v[1:], parts_t[1:]):
            tot_v = tot_v + vi
            tot_t = tot_t + ti
        prog.add_eq(tot_v - v)
        prog.add_nonneg(t - tot_t)
        return
    raise TypeError(f"support epigraph unavailable for {type(s).__name__}")


# ---------------------------------------------------------------------------
# Conic representations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConicConstraintBlock:
    """Recipe that adds membership constraints for one set to a program."""

    dim: int
    _emit: object = field(repr=False)

    def embed(self, prog: Program, x: AffExpr | None = None) -> AffExpr:
        """Bind to x (created if None), add the constraints, return x."""
        if x is None:
            x = prog.var(self.dim)
        self._emit(prog, x)
        return x


def _emit_ellitope(s: Ellitope, prog: Program, x: AffExpr) -> None:
    k = s.M.shape[1]
    y = prog.var(k)
    r = prog.var(s.calR.dim)
    s.calR.emit(prog, r)
    prog.add_eq(s.M @ y - x)
    for l, R in enumerate(s.Rs):
        L = _psd_sqrt(R)
        # y'Ry <= r_l  <=>  ||(2Ly, r_l - 1)|| <= r_l + 1
        prog.add_soc(r[l] + 1.0, concat([2.0 * (L @ y), r[l] - 1.0]))


def _emit_spectratope(s: Spectratope, prog: Program, x: AffExpr) -> None:
    k = s.M.shape[1]
    y = prog.var(k)
    r = prog.var(s.calR.dim)
    s.calR.emit(prog, r)
    prog.add_eq(s.M @ y - x)
    y0 = _var_indices(y)
    for l, Rl in enumerate(s.Rmats):
        dl = Rl[0].shape[0]
        idx, alpha, U, V = [], [], [], []
        for i, Ri in enumerate(Rl):
            w, Vec = np.linalg.eigh(Ri)
            for j in range(dl):
                if abs(w[j]) > 1e-12:
                    idx.append(y0[i])
                    alpha.append(w[j])
                    U.append(Vec[:, j])
                    V.append(Vec[:, j])
        pencil = dyads_term(
            (dl, dl),
            np.asarray(idx, dtype=np.intp),
            np.asarray(alpha, dtype=float),
            np.column_stack(U) if U else np.zeros((dl, 0)),
            np.column_stack(V) if V else np.zeros((dl, 0)),
        )
        lmi = block_mat([[diag_of(r[l], dl), pencil], [None, np.eye(dl)]])
        prog.add_psd(lmi)


def _var_indices(x: AffExpr) -> np.ndarray:
    """Global column indices of a pure variable expression."""
    C = x.C.tocoo()
    if len(C.data) != x.size or not np.allclose(C.data, 1.0) or x.d.any():
        raise ValueError("expected a pure variable expression")
    order = np.argsort(C.row)
    return C.col[order].astype(np.intp)


def conic_representation(s) -> ConicConstraintBlock:
    """Variables plus cone constraints whose projection onto x equals s."""
    if isinstance(s, Box):
        def emit(prog, x, s=s):
            prog.add_nonneg(x - s.lower)
            prog.add_nonneg(s.upper - x)
        return ConicConstraintBlock(s.dim, emit)
    if isinstance(s, ScaledBall):
        def emit(prog, x, s=s):
            norm_epigraph(prog, np.diag(s.gamma) @ x, 1.0, s.p)
        return ConicConstraintBlock(s.dim, emit)
    if isinstance(s, SimplexSubset):
        def emit(prog, x, s=s):
            prog.add_nonneg(x)
            prog.add_eq(x.sum() - 1.0)
            if s.C is not None:
                prog.add_nonneg(s.d - s.C @ x)
        return ConicConstraintBlock(s.dim, emit)
    if isinstance(s, Ellitope):
        return ConicConstraintBlock(s.dim, lambda prog, x, s=s: _emit_ellitope(s, prog, x))
    if isinstance(s, Spectratope):
        return ConicConstraintBlock(s.dim, lambda prog, x, s=s: _emit_spectratope(s, prog, x))
    if isinstance(s, LinearImage):
        inner = conic_representation(s.inner)
        def emit(prog, x, s=s, inner=inner):
            u = inner.embed(prog)
            prog.add_eq(s.M @ u - x)
        return ConicConstraintBlock(s.dim, emit)
    if isinstance(s, Intersection):
        blocks = [conic_representation(m) for m in s.sets]
        def emit(prog, x, blocks=blocks):
            for b in blocks:
                b.embed(prog, x)
        return ConicConstraintBlock(s.dim, emit)
    if isinstance(s, Symmetrized):
        inner = conic_representation(s.inner)
        def emit(prog, x, inner=inner):
            x1 = inner.embed(prog)
            x2 = inner.embed(prog)
            prog.add_eq(0.5 * (x1 - x2) - x)
        return ConicConstraintBlock(s.dim, emit)
    raise TypeError(f"unknown set {s!r}")


def contains(s, x, tol: float = 1e-8) -> bool:
    """Membership test; closed forms where available, else a feasibility solve."""
    x = np.asarray(x, dtype=float)
    if isinstance(s, Box):
        return bool((x >= s.lower - tol).all() and (x <= s.upper + tol).all())
    if isinstance(s, ScaledBall):
        return vec_norm(s.gamma * x, s.p) <= 1 + tol
    if isinstance(s, SimplexSubset):
        ok = (x >= -tol).all() and abs(x.sum() - 1.0) <= tol * max(1, s.n)
        if ok and s.C is not None:
            ok = bool((s.C @ x <= s.d + tol).all())
        return bool(ok)
    if isinstance(s, Intersection):
        return all(contains(m, x, tol) for m in s.sets)
    prog = Program()
    block = conic_representation(s)
    v = block.embed(prog)
    prog.add_eq(v - x)
    prog.minimize(AffExpr.constant(0.0))
    sol = prog.solve()
    return sol.status == "optimal"


# ---------------------------------------------------------------------------
# Samplers (membership-valid points; boundary-biased, not uniform)
# ---------------------------------------------------------------------------


def sample_point(s, rng: np.random.Generator) -> np.ndarray:
    """Random point of the set: boundary-scaled with an interior mix."""
    shrink = 1.0 if rng.uniform() < 0.7 else rng.uniform(0.0, 1.0)
    if isinstance(s, Box):
        if rng.uniform() < 0.5:
            pick = rng.integers(0, 2, size=s.dim).astype(bool)
            return np.where(pick, s.upper, s.lower)
        return s.lower + rng.uniform(size=s.dim) * (s.upper - s.lower)
    if isinstance(s, ScaledBall):
        g = rng.standard_normal(s.dim)
        g /= max(vec_norm(s.gamma * g, s.p), 1e-300)
        return g * shrink
    if isinstance(s, SimplexSubset):
        for _ in range(200):
            x = rng.dirichlet(np.ones(s.n))
            if s.C is None or (s.C @ x <= s.d + 1e-12).all():
                return x
        raise RuntimeError("rejection sampling failed; constraints too tight")
    if isinstance(s, Ellitope):
        r = s.calR.sample(rng)
        g = rng.standard_normal(s.M.shape[1])
        denom = max(
            (float(g @ R @ g) / r[l]) for l, R in enumerate(s.Rs) if r[l] > 0
        )
        y = g / np.sqrt(max(denom, 1e-300)) * shrink
        return s.M @ y
    if isinstance(s, Spectratope):
        r = s.calR.sample(rng)
        g = rng.standard_normal(s.M.shape[1])
        denom = max(
            float(np.linalg.norm(s.pencil_value(l, g), 2)) / np.sqrt(r[l])
            for l in range(len(s.Rmats))
            if r[l] > 0
        )
        y = g / max(denom, 1e-300) * shrink
        return s.M @ y
    if isinstance(s, LinearImage):
        return s.M @ sample_point(s.inner, rng)
    if isinstance(s, Symmetrized):
        return 0.5 * (sample_point(s.inner, rng) - sample_point(s.inner, rng))
    if isinstance(s, Intersection):
        for _ in range(200):
            x = sample_point(s.sets[0], rng)
            if all(contains(m, x, 1e-9) for m in s.sets[1:]):
                return x
        raise RuntimeError("rejection sampling failed for intersection")
    raise TypeError(f"unknown set {s!r}")


# ---------------------------------------------------------------------------
# Symmetrization
# ---------------------------------------------------------------------------


def is_symmetric(s) -> bool:
    if isinstance(s, (ScaledBall, Ellitope, Spectratope, Symmetrized)):
        return True
    if isinstance(s, Box):
        return bool(np.allclose(s.lower, -s.upper))
    if isinstance(s, LinearImage):
        return is_symmetric(s.inner)
    if isinstance(s, Intersection):
        return all(is_symmetric(m) for m in s.sets)
    return False


def symmetrize(s):
    """The set (s - s)/2; returns s itself when already origin-symmetric."""
    if is_symmetric(s):
        return s
    if isinstance(s, Box):
        half = 0.5 * (s.upper - s.lower)
        return Box(-half, half)
    if isinstance(s, LinearImage):
        return LinearImage(s.M, symmetrize(s.inner))
    return Symmetrized(s)


# ---------------------------------------------------------------------------
# The assembled problem
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EstimationProblem:
    """Observation omega = A x + noise, recovery target w = B x, x in X."""

    A: np.ndarray
    B: np.ndarray
    X: object
    norm: object
    scheme: object
    eps: float

    def __post_init__(self):
        A, B = _arr(self.A, 2), _arr(self.B, 2)
        if A.shape[1] != self.X.dim or B.shape[1] != self.X.dim:
            raise ValueError("matrix widths must match the signal dimension")
        if not 0 < self.eps < 1:
            raise ValueError("reliability tolerance must lie in (0, 1)")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        kind = getattr(self.scheme, "kind", None)
        if kind == "discrete":
            self._check_simplex_domain(A)
        elif kind == "poisson":
            self._check_nonneg_domain(A)

    def _check_simplex_domain(self, A: np.ndarray):
        n = self.X.dim
        tol = 1e-7
        for i in range(n):
            e = np.zeros(n)
            e[i] = -1.0
            if support_function(self.X, e) > tol:
                raise ValueError("discrete scheme requires a nonnegative signal set")
        ones = np.ones(n)
        if abs(support_function(self.X, ones) - 1.0) > tol or abs(
            support_function(self.X, -ones) + 1.0
        ) > tol:
            raise ValueError("discrete scheme requires signals on the probability simplex")
        if (A < -1e-12).any() or not np.allclose(A.sum(axis=0), 1.0, atol=1e-9):
            raise ValueError("discrete scheme requires a column-stochastic sensing matrix")

    def _check_nonneg_domain(self, A: np.ndarray):
        n = self.X.dim
        for i in range(n):
            e = np.zeros(n)
            e[i] = -1.0
            if support_function(self.X, e) > 1e-7:
                raise ValueError("poisson scheme requires a nonnegative signal set")
        if (A < -1e-12).any():
            raise ValueError("poisson scheme requires a nonnegative sensing matrix")

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def nu(self) -> int:
        return self.B.shape[0]


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------


def _num_to_json(x: float):
    return "inf" if np.isinf(x) else float(x)


def _num_from_json(x) -> float:
    return np.inf if x == "inf" else float(x)


def monotone_to_json(m: MonotoneSet) -> dict:
    if m.kind == "box":
        return {"kind": "box", "upper": m.upper.tolist()}
    if m.kind == "ballpos":
        return {"kind": "ballpos", "gamma": m.gamma.tolist(), "p": _num_to_json(m.p)}
    return {"kind": "simplex", "total": m.total, "dim": m.dim}


def monotone_from_json(d: dict) -> MonotoneSet:
    if d["kind"] == "box":
        return MonotoneSet("box", upper=np.asarray(d["upper"]))
    if d["kind"] == "ballpos":
        return MonotoneSet("ballpos", gamma=np.asarray(d["gamma"]), p=_num_from_json(d["p"]))
    return MonotoneSet("simplex", total=float(d["total"]), ndim=int(d["dim"]))


def set_to_json(s) -> dict:
    if isinstance(s, Box):
        return {"type": "box", "lower": s.lower.tolist(), "upper": s.upper.tolist()}
    if isinstance(s, ScaledBall):
        return {"type": "ball", "gamma": s.gamma.tolist(), "p": _num_to_json(s.p)}
    if isinstance(s, SimplexSubset):
        out = {"type": "simplex", "n": s.n}
        if s.C is not None:
            out["C"] = s.C.tolist()
            out["d"] = s.d.tolist()
        return out
    if isinstance(s, Ellitope):
        return {
            "type": "ellitope",
            "M": s.M.tolist(),
            "R": [R.tolist() for R in s.Rs],
            "calR": monotone_to_json(s.calR),
        }
    if isinstance(s, Spectratope):
        return {
            "type": "spectratope",
            "M": s.M.tolist(),
            "R": [[Ri.tolist() for Ri in Rl] for Rl in s.Rmats],
            "calR": monotone_to_json(s.calR),
        }
    if isinstance(s, LinearImage):
        return {"type": "image", "M": s.M.tolist(), "inner": set_to_json(s.inner)}
    if isinstance(s, Intersection):
        return {"type": "intersection", "sets": [set_to_json(m) for m in s.sets]}
    if isinstance(s, Symmetrized):
        return {"type": "symmetrized", "inner": set_to_json(s.inner)}
    raise TypeError(f"unknown set {s!r}")


def set_from_json(d: dict):
    t = d["type"]
    if t == "box":
        return Box(np.asarray(d["lower"]), np.asarray(d["upper"]))
    if t == "ball":
        return ScaledBall(np.asarray(d["gamma"]), _num_from_json(d["p"]))
    if t == "simplex":
        C = np.asarray(d["C"]) if "C" in d else None
        dd = np.asarray(d["d"]) if "d" in d else None
        return SimplexSubset(int(d["n"]), C, dd)
    if t == "ellitope":
        return Ellitope(
            np.asarray(d["M"]),
            tuple(np.asarray(R) for R in d["R"]),
            monotone_from_json(d["calR"]),
        )
    if t == "spectratope":
        return Spectratope(
            np.asarray(d["M"]),
            tuple(tuple(np.asarray(Ri) for Ri in Rl) for Rl in d["R"]),
            monotone_from_json(d["calR"]),
        )
    if t == "image":
        return LinearImage(np.asarray(d["M"]), set_from_json(d["inner"]))
    if t == "intersection":
        return Intersection(tuple(set_from_json(m) for m in d["sets"]))
    if t == "symmetrized":
        return Symmetrized(set_from_json(d["inner"]))
    raise ValueError(f"unknown set type {t!r}")


def norm_to_json(spec) -> dict:
    if isinstance(spec, LpNorm):
        return {"type": "lp", "r": _num_to_json(spec.r)}
    if isinstance(spec, SpectratopeDual):
        return {"type": "spectratope_dual", "ball": set_to_json(spec.ball)}
    raise TypeError(f"unknown norm spec {spec!r}")


def norm_from_json(d: dict):
    if d["type"] == "lp":
        return LpNorm(_num_from_json(d["r"]))
    if d["type"] == "spectratope_dual":
        return SpectratopeDual(set_from_json(d["ball"]))
    raise ValueError(f"unknown norm type {d['type']!r}")


def problem_to_json(p: EstimationProblem) -> dict:
    from . import observation

    return {
        "A": p.A.tolist(),
        "B": p.B.tolist(),
        "X": set_to_json(p.X),
        "norm": norm_to_json(p.norm),
        "scheme": observation.scheme_to_json(p.scheme),
        "eps": p.eps,
    }


def problem_from_json(d: dict) -> EstimationProblem:
    from . import observation

    return EstimationProblem(
        A=np.asarray(d["A"], dtype=float),
        B=np.asarray(d["B"], dtype=float),
        X=set_from_json(d["X"]),
        norm=norm_from_json(d["norm"]),
        scheme=observation.scheme_from_json(d["scheme"]),
        eps=float(d["eps"]),
    )
