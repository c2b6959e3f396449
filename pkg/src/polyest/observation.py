"""Observation schemes: noise samplers, tail norms, and the sets Z they induce.

Each scheme pairs a simulable noise law with a tail norm pi such that
P(|h . xi_x| >= 1) <= delta whenever pi(h) <= 1, uniformly over the signal
set. The Z-set descriptor re-expresses that guarantee as a convex set
Z with pi(h)^2 = max_{z in Z} sum_i z_i h_i^2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import problem_model as pm
from .conic import AffExpr, hyperbolic_constraint


@dataclass(frozen=True)
class SubGaussian:
    """Noise sub-Gaussian with parameters (0, sigma^2 I); sampled as Gaussian.

    sigma = 0 is allowed and gives the degenerate noiseless instance used by
    zero-noise simulations.
    """

    sigma: float
    kind: str = "subgaussian"

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")


@dataclass(frozen=True)
class Discrete:
    """omega = (1/K) sum of K categorical draws with outcome probabilities Ax."""

    K: int
    kind: str = "discrete"

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("repetition count must be a positive integer")


@dataclass(frozen=True)
class Poisson:
    """omega_i independent Poisson with rates [Ax]_i."""

    kind: str = "poisson"


def theta_value(scheme, delta: float) -> float:
    """The scale factor in the scheme's tail norm."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if isinstance(scheme, SubGaussian):
        return scheme.sigma * np.sqrt(2.0 * np.log(2.0 / delta))
    if isinstance(scheme, Discrete):
        return np.log(2.0 / delta) / scheme.K
    if isinstance(scheme, Poisson):
        return np.log(2.0 / delta)
    raise TypeError(f"unknown scheme {scheme!r}")


@dataclass(frozen=True, eq=False)
class TailNormContext:
    """Scheme + tolerance + problem geometry needed to evaluate the tail norm."""

    scheme: object
    delta: float
    A: np.ndarray | None = None
    X: object | None = None

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if not isinstance(self.scheme, SubGaussian):
            if self.A is None or self.X is None:
                raise ValueError("this scheme's tail norm needs A and the signal set")
            object.__setattr__(self, "A", np.asarray(self.A, dtype=float))

    @property
    def theta(self) -> float:
        return theta_value(self.scheme, self.delta)


def pi_norm(ctx: TailNormContext, h: np.ndarray) -> float:
    """Tail norm of a candidate contrast column."""
    h = np.asarray(h, dtype=float)
    if not np.isfinite(h).all():
        raise ValueError("contrast column must be finite")
    th = ctx.theta
    if isinstance(ctx.scheme, SubGaussian):
        return th * float(np.linalg.norm(h))
    data = pm.support_function(ctx.X, ctx.A.T @ (h * h))
    hinf = float(np.abs(h).max(initial=0.0))
    if isinstance(ctx.scheme, Discrete):
        return 2.0 * np.sqrt(th * data + (16.0 / 9.0) * th * th * hinf * hinf)
    if isinstance(ctx.scheme, Poisson):
        return 2.0 * np.sqrt(th * data + (4.0 / 9.0) * th * th * hinf * hinf)
    raise TypeError(f"unknown scheme {ctx.scheme!r}")


def pi_epigraph(ctx: TailNormContext, prog, h, t) -> None:
    """Conic constraints enforcing pi_norm(ctx, h) <= t for a variable column h.

    The discrete/Poisson norm is sqrt(4*th*data(h) + c*th^2*||h||_inf^2) with
    data(h) = support(X, A^T [h]^2), a support function of the squares of h.
    Dividing through by t turns the epigraph into rotated-cone rows: with
    s_i >= h_i^2 / t and zeta >= ||h||_inf^2 / t the constraint becomes
    4*th*support(X, A^T s) + c*th^2*zeta <= t, which is exact because the
    sensing map takes the signal set into the nonnegative orthant, making the
    data term monotone in s.
    """
    if not isinstance(t, AffExpr):
        t = AffExpr.constant(float(t))
    th = ctx.theta
    if isinstance(ctx.scheme, SubGaussian):
        prog.add_soc(t, th * h)
        return
    if not isinstance(ctx.scheme, (Discrete, Poisson)):
        raise TypeError(f"unknown scheme {ctx.scheme!r}")
    m = h.size
    s = prog.var(m)
    z = prog.scalar()
    zeta = prog.scalar()
    data = prog.scalar()
    prog.add_nonneg(z - h)
    prog.add_nonneg(z + h)
    for i in range(m):
        hyperbolic_constraint(prog, h[i], s[i], t)
    hyperbolic_constraint(prog, z, zeta, t)
    pm.support_epigraph(ctx.X, prog, ctx.A.T @ s, data)
    c = 64.0 / 9.0 if isinstance(ctx.scheme, Discrete) else 16.0 / 9.0
    prog.add_nonneg(t - 4.0 * th * data - c * th * th * zeta)


# ---------------------------------------------------------------------------
# Z-set descriptors
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ZSet:
    """Convex compact Z inducing pi(h) = sqrt(max_{z in Z} sum z_i h_i^2).

    Either a singleton {zbar}, or the Minkowski sum
    c_image * (A X) + c_simplex * Simplex_m with support function
    phi(r) = c_image * h_X(A^T r) + c_simplex * max_i r_i.
    """

    m: int
    zbar: np.ndarray | None = None
    c_image: float = 0.0
    c_simplex: float = 0.0
    A: np.ndarray | None = None
    X: object | None = None

    @property
    def is_singleton(self) -> bool:
        return self.zbar is not None

    def phi(self, r: np.ndarray) -> float:
        """Support function max_{z in Z} z . r."""
        r = np.asarray(r, dtype=float)
        if self.is_singleton:
            return float(self.zbar @ r)
        return self.c_image * pm.support_function(self.X, self.A.T @ r) + (
            self.c_simplex * float(r.max())
        )

    def phi_epigraph(self, prog, r, t) -> None:
        """Conic constraints enforcing phi(r) <= t for a variable direction r."""
        if self.is_singleton:
            prog.add_nonneg(t - self.zbar @ r)
            return
        s1 = prog.scalar()
        s2 = prog.scalar()
        pm.support_epigraph(self.X, prog, self.A.T @ r, s1)
        prog.add_nonneg(s2 - r)
        prog.add_nonneg(t - self.c_image * s1 - self.c_simplex * s2)

    def pi(self, h: np.ndarray) -> float:
        return float(np.sqrt(max(self.phi(np.asarray(h) ** 2), 0.0)))


def z_set(scheme, eps: float, m: int, X=None, A=None) -> ZSet:
    """The set Z certifying the scheme's tail guarantee at tolerance eps/m."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    ln = np.log(2.0 * m / eps)
    if isinstance(scheme, SubGaussian):
        return ZSet(m=m, zbar=np.full(m, 2.0 * scheme.sigma**2 * ln))
    if X is None or A is None:
        raise ValueError("this scheme's Z set needs A and the signal set")
    A = np.asarray(A, dtype=float)
    if isinstance(scheme, Discrete):
        return ZSet(
            m=m,
            c_image=4.0 * ln / scheme.K,
            c_simplex=64.0 * ln * ln / (9.0 * scheme.K**2),
            A=A,
            X=X,
        )
    if isinstance(scheme, Poisson):
        return ZSet(m=m, c_image=4.0 * ln, c_simplex=16.0 * ln * ln / 9.0, A=A, X=X)
    raise TypeError(f"unknown scheme {scheme!r}")


# ---------------------------------------------------------------------------
# Noise sampling
# ---------------------------------------------------------------------------


def sample_noise(scheme, x: np.ndarray, A: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One draw of xi_x = omega - A x."""
    A = np.asarray(A, dtype=float)
    x = np.asarray(x, dtype=float)
    mean = A @ x
    if isinstance(scheme, SubGaussian):
        return scheme.sigma * rng.standard_normal(A.shape[0])
    if (mean < -1e-12).any():
        raise ValueError("negative outcome probabilities or rates")
    mean = np.maximum(mean, 0.0)
    if isinstance(scheme, Discrete):
        tot = mean.sum()
        if abs(tot - 1.0) > 1e-8:
            raise ValueError("outcome probabilities must sum to one")
        counts = rng.multinomial(scheme.K, mean / tot)
        return counts / scheme.K - mean
    if isinstance(scheme, Poisson):
        return rng.poisson(mean).astype(float) - mean
    raise TypeError(f"unknown scheme {scheme!r}")


@dataclass(frozen=True)
class RngStream:
    """Counter-based RNG factory: independent deterministic per-trial streams."""

    seed: int

    def trial(self, index: int) -> np.random.Generator:
        key = np.array(
            [self.seed & 0xFFFFFFFFFFFFFFFF, index & 0xFFFFFFFFFFFFFFFF],
            dtype=np.uint64,
        )
        return np.random.Generator(np.random.Philox(key=key))


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------


def scheme_to_json(scheme) -> dict:
    if isinstance(scheme, SubGaussian):
        return {"type": "subgaussian", "sigma": scheme.sigma}
    if isinstance(scheme, Discrete):
        return {"type": "discrete", "K": scheme.K}
    if isinstance(scheme, Poisson):
        return {"type": "poisson"}
    raise TypeError(f"unknown scheme {scheme!r}")


def scheme_from_json(d: dict):
    t = d["type"]
    if t == "subgaussian":
        return SubGaussian(float(d["sigma"]))
    if t == "discrete":
        return Discrete(int(d["K"]))
    if t == "poisson":
        return Poisson()
    raise ValueError(f"unknown scheme type {t!r}")
