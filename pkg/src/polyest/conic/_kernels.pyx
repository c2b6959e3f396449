# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in kernels_py; same contracts."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def symkron_gather(
    double[:, ::1] C,
    cnp.intp_t[::1] pa,
    cnp.intp_t[::1] qa,
    double[::1] wa,
    cnp.intp_t[::1] pb,
    cnp.intp_t[::1] qb,
    double[::1] wb,
    int chunk=512,
):
    cdef Py_ssize_t na = pa.shape[0]
    cdef Py_ssize_t nb = pb.shape[0]
    out_arr = np.empty((na, nb))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef Py_ssize_t ra, sa
    cdef double wi
    for i in range(na):
        ra = pa[i]
        sa = qa[i]
        wi = wa[i]
        for j in range(nb):
            out[i, j] = wi * wb[j] * (
                C[ra, pb[j]] * C[sa, qb[j]] + C[ra, qb[j]] * C[sa, pb[j]]
            )
    return out_arr


def maxplus_conv(double[::1] V, double[::1] f):
    cdef Py_ssize_t G = V.shape[0]
    cdef Py_ssize_t K = f.shape[0]
    out_arr = np.empty(G)
    cdef double[::1] W = out_arr
    cdef Py_ssize_t b, k, kmax
    cdef double best, cand
    for b in range(G):
        kmax = K - 1
        if b < kmax:
            kmax = b
        best = V[b] + f[0]
        for k in range(1, kmax + 1):
            cand = V[b - k] + f[k]
            if cand > best:
                best = cand
        W[b] = best
    return out_arr
