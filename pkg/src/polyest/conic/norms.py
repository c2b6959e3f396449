"""Norm epigraphs as conic constraints, for p in [1, inf]."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .expr import AffExpr, concat


def dual_exponent(p: float) -> float:
    """Conjugate exponent q with 1/p + 1/q = 1."""
    p = float(p)
    if p < 1.0:
        raise ValueError("exponent must be >= 1")
    if p == 1.0:
        return np.inf
    if np.isinf(p):
        return 1.0
    return p / (p - 1.0)


def vec_norm(x: np.ndarray, p: float) -> float:
    """Numeric l_p norm, accepting p = inf."""
    x = np.asarray(x, dtype=float)
    if np.isinf(p):
        return float(np.abs(x).max(initial=0.0))
    return float(np.linalg.norm(x.ravel(), ord=float(p)))


def hyperbolic_constraint(prog, x: AffExpr, a: AffExpr, b: AffExpr) -> None:
    """Add ||x||^2 <= a*b (rotated second-order cone; forces a, b >= 0)."""
    prog.add_soc(a + b, concat([2.0 * x, a - b]))


def _geomean_epigraph(prog, target: AffExpr, factors: list) -> None:
    """Constrain target <= (prod factors)^(1/len), len a power of two.

    All factors must be nonnegative at any feasible point (the rotated-cone
    pairings enforce that themselves for the slots they touch).
    """
    level = list(factors)
    while len(level) > 2:
        nxt = []
        for i in range(0, len(level), 2):
            a, b = level[i], level[i + 1]
            u = prog.scalar()
            prog.add_soc(a + b, concat([u * 2.0, a - b]))
            nxt.append(u)
        level = nxt
    a, b = level if len(level) == 2 else (level[0], level[0])
    prog.add_soc(a + b, concat([target * 2.0, a - b]))


def norm_epigraph(prog, x: AffExpr, t: AffExpr, p: float) -> None:
    """Add conic constraints enforcing ||x||_p <= t.

    p = 1, 2, inf use direct formulations; other rational p use the
    coordinate-wise power inequalities |x_i|^a <= v_i^b t^(a-b) with
    sum(v) <= t, each built from a geometric-mean cone tower.
    """
    n = x.size
    p = float(p)
    if not isinstance(t, AffExpr):
        t = AffExpr.constant(float(t))
    if p < 1.0:
        raise ValueError("exponent must be >= 1")
    if p == 1.0:
        w = prog.var(n)
        prog.add_nonneg(w - x)
        prog.add_nonneg(w + x)
        prog.add_nonneg(t - w.sum())
        return
    if p == 2.0:
        prog.add_soc(t, x)
        return
    if np.isinf(p):
        prog.add_nonneg(t - x)
        prog.add_nonneg(t + x)
        return
    frac = Fraction(p).limit_denominator(32)
    if abs(float(frac) - p) > 1e-12:
        raise ValueError(f"exponent {p} not representable with denominator <= 32")
    a, b = frac.numerator, frac.denominator
    k = 1 << (a - 1).bit_length()  # next power of two >= a
    v = prog.var(n)
    prog.add_nonneg(v)
    prog.add_nonneg(t)
    prog.add_nonneg(t - v.sum())
    for i in range(n):
        w = prog.scalar()
        prog.add_nonneg(w - x[i])
        prog.add_nonneg(w + x[i])
        factors = [v[i]] * b + [t] * (a - b) + [w] * (k - a)
        _geomean_epigraph(prog, w, factors)
