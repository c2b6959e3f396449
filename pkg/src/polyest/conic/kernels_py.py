"""Pure-numpy implementations of the two hot kernels.

`symkron_gather` builds the Schur-complement block coupling two
symmetric-matrix variables through a congruence pair: given the cross matrix
C = F_a^T Q F_b, the entry for svec coordinates (p_a, q_a) and (p_b, q_b) is

    w_a * w_b * (C[pa, pb] * C[qa, qb] + C[pa, qb] * C[qa, pb])

with w = 1/sqrt(2) on diagonal coordinates and 1 off the diagonal.

`maxplus_conv` is the inner step of the budget dynamic program:
W[b] = max_k V[b - k] + f[k], k running over the profile window.
"""

from __future__ import annotations

import numpy as np


def symkron_gather(
    C: np.ndarray,
    pa: np.ndarray,
    qa: np.ndarray,
    wa: np.ndarray,
    pb: np.ndarray,
    qb: np.ndarray,
    wb: np.ndarray,
    chunk: int = 512,
) -> np.ndarray:
    """Schur block between two svec coordinate systems through cross matrix C."""
    na, nb = len(pa), len(pb)
    out = np.empty((na, nb))
    Cpb = C[:, pb]
    Cqb = C[:, qb]
    for lo in range(0, na, chunk):
        hi = min(lo + chunk, na)
        A1 = Cpb[pa[lo:hi], :]
        A2 = Cqb[qa[lo:hi], :]
        A3 = Cqb[pa[lo:hi], :]
        A4 = Cpb[qa[lo:hi], :]
        np.multiply(A1, A2, out=out[lo:hi])
        out[lo:hi] += A3 * A4
        out[lo:hi] *= wa[lo:hi, None]
    out *= wb[None, :]
    return out


def maxplus_conv(V: np.ndarray, f: np.ndarray) -> np.ndarray:
    """W[b] = max over k of V[b-k] + f[k], with k limited to the window of f."""
    G = len(V)
    K = len(f)
    W = np.full(G, -np.inf)
    for k in range(min(K, G)):
        np.maximum(W[k:], V[: G - k] + f[k], out=W[k:])
    return W
