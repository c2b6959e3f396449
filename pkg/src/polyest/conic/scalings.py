"""Nesterov-Todd scalings and Jordan-algebra operations for the mixed cone.

The cone is a product of a nonnegative orthant, second-order cones, and
semidefinite cones (in scaled lower-triangular vectorization). `ConeLayout`
fixes the block slices; `Scaling` holds the per-iteration NT scaling computed
from a strictly feasible primal-dual pair and exposes the scaled-space
operations the interior-point solver needs.
"""

from __future__ import annotations

import numpy as np

from .expr import svec_indices

_SQRT2 = np.sqrt(2.0)
_svec_cache: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}


def _svec_ix(d: int):
    hit = _svec_cache.get(d)
    if hit is None:
        r, c = svec_indices(d)
        off = (r != c).astype(float)
        hit = (r, c, off)
        _svec_cache[d] = hit
    return hit


def fast_svec(X: np.ndarray) -> np.ndarray:
    d = X.shape[0]
    r, c, off = _svec_ix(d)
    v = X[r, c] * (1.0 + off * (_SQRT2 - 1.0))
    return v


def fast_smat(v: np.ndarray, d: int) -> np.ndarray:
    r, c, off = _svec_ix(d)
    w = v * (1.0 - off * (1.0 - 1.0 / _SQRT2))
    X = np.zeros((d, d))
    X[r, c] = w
    X[c, r] = w
    return X


class ConeLayout:
    """Block slices of the mixed-cone vector: [lp | soc ... | psd(svec) ...]."""

    def __init__(self, l: int, soc_dims: list[int], psd_dims: list[int]):
        self.l = l
        self.soc_dims = list(soc_dims)
        self.psd_dims = list(psd_dims)
        pos = l
        self.soc_slices = []
        for q in self.soc_dims:
            self.soc_slices.append(slice(pos, pos + q))
            pos += q
        self.psd_slices = []
        for d in self.psd_dims:
            sd = d * (d + 1) // 2
            self.psd_slices.append(slice(pos, pos + sd))
            pos += sd
        self.dim = pos
        self.degree = l + len(self.soc_dims) + sum(self.psd_dims)

    def e_vector(self) -> np.ndarray:
        e = np.zeros(self.dim)
        e[: self.l] = 1.0
        for sl in self.soc_slices:
            e[sl.start] = 1.0
        for sl, d in zip(self.psd_slices, self.psd_dims):
            e[sl] = fast_svec(np.eye(d))
        return e

    def sup_violation(self, s: np.ndarray) -> float:
        """max over blocks of (distance outside the cone); negative if interior."""
        worst = -np.inf
        if self.l:
            worst = max(worst, float(-s[: self.l].min()))
        for sl in self.soc_slices:
            blk = s[sl]
            worst = max(worst, float(np.linalg.norm(blk[1:]) - blk[0]))
        for sl, d in zip(self.psd_slices, self.psd_dims):
            X = fast_smat(s[sl], d)
            worst = max(worst, float(-np.linalg.eigvalsh(X)[0]))
        return worst

    def compute_scaling(self, s: np.ndarray, z: np.ndarray) -> "Scaling":
        return Scaling(self, s, z)


class Scaling:
    """NT scaling W with lambda = W z = W^{-T} s for the current iterate.

    Raises FloatingPointError when (s, z) is not strictly interior; the solver
    treats that as end-of-progress and returns its best iterate.
    """

    def __init__(self, lay: ConeLayout, s: np.ndarray, z: np.ndarray):
        self.lay = lay
        l = lay.l
        if l and (s[:l].min() <= 0.0 or z[:l].min() <= 0.0):
            raise FloatingPointError("iterate left the nonnegative cone")
        self.w_lp = np.sqrt(s[:l] / z[:l]) if l else np.zeros(0)
        self.lam = np.zeros(lay.dim)
        self.lam[:l] = np.sqrt(s[:l] * z[:l])
        self.soc = []
        for sl in lay.soc_slices:
            sb, zb = s[sl], z[sl]
            ress = _jnrm_sq(sb)
            resz = _jnrm_sq(zb)
            snorm = sb / np.sqrt(ress)
            znorm = zb / np.sqrt(resz)
            gamma = np.sqrt((1.0 + snorm @ znorm) / 2.0)
            wbar = (snorm + _jmul(znorm)) / (2.0 * gamma)
            # hyperbolic Householder vector: maps e to wbar, giving W z = W^{-1} s
            v = wbar.copy()
            v[0] += 1.0
            v /= np.sqrt(2.0 * (wbar[0] + 1.0))
            beta = (ress / resz) ** 0.25
            self.soc.append((beta, v))
            self.lam[sl] = _soc_apply_w(beta, v, zb)
        self.psd = []
        for sl, d in zip(lay.psd_slices, lay.psd_dims):
            S = fast_smat(s[sl], d)
            Z = fast_smat(z[sl], d)
            ws, Us = np.linalg.eigh(S)
            if ws[0] <= 0.0:
                raise FloatingPointError("iterate left the semidefinite cone")
            Shalf = (Us * np.sqrt(ws)) @ Us.T
            Sneg = (Us / np.sqrt(ws)) @ Us.T
            T = Shalf @ Z @ Shalf
            T = 0.5 * (T + T.T)
            dT, U = np.linalg.eigh(T)
            if dT[0] <= 0.0:
                raise FloatingPointError("iterate left the semidefinite cone")
            R = Shalf @ U / dT**0.25
            Rinv = (dT**0.25)[:, None] * (U.T @ Sneg)
            lam_d = np.sqrt(dT)
            self.psd.append((R, Rinv, lam_d))
            self.lam[sl] = fast_svec(np.diag(lam_d))

    # --- full-vector scaling applies -------------------------------------------

    def _apply(self, u, lp_fn, soc_fn, psd_fn) -> np.ndarray:
        lay = self.lay
        out = np.empty_like(u)
        if lay.l:
            out[: lay.l] = lp_fn(u[: lay.l])
        for (beta, wbar), sl in zip(self.soc, lay.soc_slices):
            out[sl] = soc_fn(beta, wbar, u[sl])
        for (R, Rinv, lam_d), sl, d in zip(self.psd, lay.psd_slices, lay.psd_dims):
            out[sl] = psd_fn(R, Rinv, u[sl], d)
        return out

    def W(self, u):
        return self._apply(
            u,
            lambda v: self.w_lp * v,
            _soc_apply_w,
            lambda R, Ri, v, d: fast_svec(R.T @ fast_smat(v, d) @ R),
        )

    def WT(self, u):
        return self._apply(
            u,
            lambda v: self.w_lp * v,
            _soc_apply_w,
            lambda R, Ri, v, d: fast_svec(R @ fast_smat(v, d) @ R.T),
        )

    def Winv(self, u):
        return self._apply(
            u,
            lambda v: v / self.w_lp,
            _soc_apply_winv,
            lambda R, Ri, v, d: fast_svec(Ri.T @ fast_smat(v, d) @ Ri),
        )

    def WinvT(self, u):
        return self._apply(
            u,
            lambda v: v / self.w_lp,
            _soc_apply_winv,
            lambda R, Ri, v, d: fast_svec(Ri @ fast_smat(v, d) @ Ri.T),
        )

    def WtW(self, u):
        return self.WT(self.W(u))

    def WtWinv(self, u):
        return self.Winv(self.WinvT(u))

    def psd_quad_inv(self, k: int) -> np.ndarray:
        """Q with (W^T W)^{-1} X = Q Mat(X) Q for psd block k."""
        R, Rinv, _ = self.psd[k]
        Q = Rinv.T @ Rinv
        return 0.5 * (Q + Q.T)

    # --- Jordan algebra ----------------------------------------------------------

    def lam_sq(self) -> np.ndarray:
        """lambda o lambda."""
        return self.jprod(self.lam, self.lam)

    def jprod(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        lay = self.lay
        out = np.empty_like(u)
        if lay.l:
            out[: lay.l] = u[: lay.l] * v[: lay.l]
        for sl in lay.soc_slices:
            ub, vb = u[sl], v[sl]
            out[sl.start] = ub @ vb
            out[sl.start + 1 : sl.stop] = ub[0] * vb[1:] + vb[0] * ub[1:]
        for sl, d in zip(lay.psd_slices, lay.psd_dims):
            U = fast_smat(u[sl], d)
            V = fast_smat(v[sl], d)
            P = U @ V
            out[sl] = fast_svec(0.5 * (P + P.T))
        return out

    def lam_div(self, v: np.ndarray) -> np.ndarray:
        """Solve lambda o u = v for u."""
        lay = self.lay
        out = np.empty_like(v)
        if lay.l:
            out[: lay.l] = v[: lay.l] / self.lam[: lay.l]
        for sl in lay.soc_slices:
            lb = self.lam[sl]
            vb = v[sl]
            den = lb[0] ** 2 - lb[1:] @ lb[1:]
            u0 = (lb[0] * vb[0] - lb[1:] @ vb[1:]) / den
            out[sl.start] = u0
            out[sl.start + 1 : sl.stop] = (vb[1:] - u0 * lb[1:]) / lb[0]
        for (R, Ri, lam_d), sl, d in zip(self.psd, lay.psd_slices, lay.psd_dims):
            V = fast_smat(v[sl], d)
            U = 2.0 * V / (lam_d[:, None] + lam_d[None, :])
            out[sl] = fast_svec(U)
        return out

    def max_step(self, u: np.ndarray) -> float:
        """sup alpha such that lambda + alpha * u stays in the cone."""
        lay = self.lay
        amax = np.inf
        if lay.l:
            ub = u[: lay.l]
            neg = ub < 0
            if neg.any():
                amax = min(amax, float((-self.lam[: lay.l][neg] / ub[neg]).min()))
        for sl in lay.soc_slices:
            lb = self.lam[sl]
            ub = u[sl]
            a = ub[0] ** 2 - ub[1:] @ ub[1:]
            b = lb[0] * ub[0] - lb[1:] @ ub[1:]
            c = lb[0] ** 2 - lb[1:] @ lb[1:]
            amax = min(amax, _soc_boundary_step(a, b, c))
        for (R, Ri, lam_d), sl, d in zip(self.psd, lay.psd_slices, lay.psd_dims):
            U = fast_smat(u[sl], d)
            M = U / np.sqrt(lam_d)[:, None] / np.sqrt(lam_d)[None, :]
            wmin = float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])
            if wmin < 0:
                amax = min(amax, -1.0 / wmin)
        return amax


def _jnrm_sq(x: np.ndarray) -> float:
    """Hyperbolic norm squared x0^2 - ||x1||^2, factored against cancellation."""
    nrm1 = float(np.linalg.norm(x[1:]))
    hi = float(x[0]) + nrm1
    lo = float(x[0]) - nrm1
    if lo <= 0.0 or hi <= 0.0:
        raise FloatingPointError("iterate left the second-order cone")
    return lo * hi


def _jmul(x: np.ndarray) -> np.ndarray:
    """Reflection J x = (x0, -xbar)."""
    y = -x
    y[0] = x[0]
    return y


def _soc_apply_w(beta: float, wbar: np.ndarray, u: np.ndarray) -> np.ndarray:
    # W u = beta * (2 wbar (wbar' u) - J u)
    return beta * (2.0 * wbar * (wbar @ u) - _jmul(u))


def _soc_apply_winv(beta: float, wbar: np.ndarray, u: np.ndarray) -> np.ndarray:
    # W^{-1} = beta^{-1} (2 J wbar wbar' J - J)
    ju = _jmul(u)
    return (2.0 * _jmul(wbar) * (wbar @ ju) - ju) / beta


def _soc_boundary_step(a: float, b: float, c: float) -> float:
    """Largest step keeping lambda + alpha u in the second-order cone.

    Quadratic (a alpha^2 + 2 b alpha + c) with c > 0; the linear face condition
    is implied, so only the quadratic roots matter.
    """
    if a >= 0 and b >= 0:
        return np.inf
    disc = b * b - a * c
    if disc < 0:
        return np.inf
    sq = np.sqrt(disc)
    if a == 0:
        return -c / (2.0 * b) if b < 0 else np.inf
    qf = -(b + np.copysign(sq, b))
    roots = []
    if a != 0:
        roots.append(qf / a)
    if qf != 0:
        roots.append(c / qf)
    pos = [r for r in roots if r > 0]
    return min(pos) if pos else np.inf
