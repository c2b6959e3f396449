"""Affine expressions over program variables.

Two expression kinds coexist:

* `AffExpr` -- flat scalar/vector expressions stored as a sparse coefficient
  matrix against the program's scalar-variable vector. Used for objectives,
  equalities, nonnegativity rows, and second-order-cone members.
* `MatExpr` -- structured matrix-valued expressions built from typed terms
  (congruences of symmetric-matrix variables, sandwiches of full matrix
  variables, rank-one dyad placements of scalar variables). The structure is
  preserved down to the interior-point solver so Schur-complement assembly can
  exploit it.

Symmetric-matrix variables are stored in scaled lower-triangular vectorization
(off-diagonal entries carry a factor sqrt(2)), the canonical symmetric encoding
used throughout the solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

_SQRT2 = np.sqrt(2.0)


def svec_indices(d: int) -> tuple[np.ndarray, np.ndarray]:
    """Row/column index arrays of the lower triangle in svec order."""
    rows = np.concatenate([np.full(i + 1, i, dtype=np.intp) for i in range(d)]) if d else np.empty(0, np.intp)
    cols = np.concatenate([np.arange(i + 1, dtype=np.intp) for i in range(d)]) if d else np.empty(0, np.intp)
    return rows, cols


def svec(X: np.ndarray) -> np.ndarray:
    """Scaled vectorization of a symmetric matrix (lower triangle, sqrt2 off-diag)."""
    d = X.shape[0]
    r, c = svec_indices(d)
    v = X[r, c].astype(float).copy()
    v[r != c] *= _SQRT2
    return v


def smat(v: np.ndarray, d: int) -> np.ndarray:
    """Inverse of svec."""
    r, c = svec_indices(d)
    X = np.zeros((d, d))
    off = r != c
    w = v.copy()
    w[off] /= _SQRT2
    X[r, c] = w
    X[c, r] = w
    return X


def svec_dim(d: int) -> int:
    return d * (d + 1) // 2


def _as_csr(C, shape) -> sp.csr_matrix:
    M = sp.csr_matrix(C)
    if M.shape != shape:
        M = sp.csr_matrix((M.data, M.indices, M.indptr), shape=shape)
    return M


class AffExpr:
    """Flat affine expression: value = C @ xvars + d, reshaped to `shape`.

    `shape` is () for scalars or (k,) for vectors. C columns are indexed by the
    owning program's scalar variables; expressions from the same program can be
    combined freely (column counts are padded to match).
    """

    __slots__ = ("C", "d", "shape")
    __array_ufunc__ = None  # numpy defers binary ops to this class

    def __init__(self, C: sp.csr_matrix, d: np.ndarray, shape: tuple):
        self.C = C
        self.d = np.asarray(d, dtype=float).ravel()
        self.shape = shape

    @property
    def size(self) -> int:
        return int(np.prod(self.shape)) if self.shape else 1

    @staticmethod
    def constant(value, nv: int = 0) -> "AffExpr":
        arr = np.atleast_1d(np.asarray(value, dtype=float))
        shape = () if np.isscalar(value) or np.asarray(value).shape == () else arr.shape
        size = arr.size
        return AffExpr(sp.csr_matrix((size, nv)), arr.ravel(), shape)

    def _pad(self, nv: int) -> sp.csr_matrix:
        if self.C.shape[1] == nv:
            return self.C
        return _as_csr(self.C, (self.C.shape[0], nv))

    def _coerce(self, other) -> "AffExpr":
        if isinstance(other, AffExpr):
            return other
        return AffExpr.constant(other, self.C.shape[1])

    def __add__(self, other) -> "AffExpr":
        o = self._coerce(other)
        nv = max(self.C.shape[1], o.C.shape[1])
        if self.shape == o.shape:
            shape = self.shape
        elif self.size == 1 or o.size == 1:
            shape = self.shape if o.size == 1 else o.shape
        else:
            raise ValueError(f"shape mismatch {self.shape} vs {o.shape}")
        a, b = self._pad(nv), o._pad(nv)
        if self.size == 1 and o.size > 1:
            ones = sp.csr_matrix(np.ones((o.size, 1)))
            a = ones @ a
            da = np.full(o.size, self.d[0])
            return AffExpr(a + b, da + o.d, shape)
        if o.size == 1 and self.size > 1:
            ones = sp.csr_matrix(np.ones((self.size, 1)))
            b = ones @ b
            db = np.full(self.size, o.d[0])
            return AffExpr(a + b, self.d + db, shape)
        return AffExpr(a + b, self.d + o.d, shape)

    def __radd__(self, other) -> "AffExpr":
        return self.__add__(other)

    def __sub__(self, other) -> "AffExpr":
        return self.__add__(-self._coerce(other))

    def __rsub__(self, other) -> "AffExpr":
        return (-self).__add__(other)

    def __neg__(self) -> "AffExpr":
        return AffExpr(-self.C, -self.d, self.shape)

    def __mul__(self, a) -> "AffExpr":
        a = float(a)
        return AffExpr(self.C * a, self.d * a, self.shape)

    __rmul__ = __mul__

    def __truediv__(self, a) -> "AffExpr":
        return self.__mul__(1.0 / float(a))

    def __rmatmul__(self, A) -> "AffExpr":
        A = np.asarray(A, dtype=float)
        if A.ndim == 1:
            A = A[None, :]
            C = sp.csr_matrix(A) @ self.C
            return AffExpr(sp.csr_matrix(C), A @ self.d, ())
        C = sp.csr_matrix(A) @ self.C
        return AffExpr(sp.csr_matrix(C), A @ self.d, (A.shape[0],))

    def __getitem__(self, idx) -> "AffExpr":
        if self.shape == ():
            raise IndexError("scalar expression")
        sel = np.arange(self.size)[idx]
        if np.isscalar(sel) or sel.shape == ():
            sel = np.atleast_1d(sel)
            return AffExpr(sp.csr_matrix(self.C[sel.tolist()]), self.d[sel], ())
        return AffExpr(sp.csr_matrix(self.C[sel.tolist()]), self.d[sel], (len(sel),))

    def sum(self) -> "AffExpr":
        ones = np.ones(self.size)
        return ones @ self


def concat(exprs: list) -> AffExpr:
    """Stack scalar/vector expressions into one vector expression."""
    exprs = [e if isinstance(e, AffExpr) else AffExpr.constant(e) for e in exprs]
    nv = max(e.C.shape[1] for e in exprs)
    C = sp.vstack([e._pad(nv) for e in exprs], format="csr")
    d = np.concatenate([e.d for e in exprs])
    return AffExpr(C, d, (C.shape[0],))


# ---------------------------------------------------------------------------
# Structured matrix expressions
# ---------------------------------------------------------------------------


@dataclass
class TermSym:
    """coef * F @ Mat(theta) @ F.T with theta a symmetric-matrix variable.

    F is a dense (dout, dv) matrix; None means the identity embedding placing
    the variable's matrix at diagonal offset r0.
    """

    var: "object"  # SymVar
    F: np.ndarray | None
    r0: int
    coef: float


@dataclass
class TermLin:
    """coef * L @ X @ R (X full matrix variable, optionally transposed).

    L is (dout, a), R is (b, dout); None means identity placed at the term's
    row/column offsets. The term content is generally non-symmetric; the PSD
    compiler symmetrizes the assembled constraint.
    """

    var: "object"  # MatVar
    L: np.ndarray | None
    R: np.ndarray | None
    r0: int
    c0: int
    transpose: bool
    coef: float


@dataclass
class TermDyads:
    """Rank-one placements of scalar variables.

    Content: sum_t alpha[t] * x[idx[t]] * outer(U[:, t], V[:, t]), with U of
    shape (rows, T) and V of shape (cols, T). Sparse entry placements are the
    special case of unit columns.
    """

    idx: np.ndarray
    alpha: np.ndarray
    U: np.ndarray
    V: np.ndarray


class MatExpr:
    """Matrix-valued affine expression as a list of typed terms plus a constant."""

    __array_ufunc__ = None  # numpy defers binary ops to this class

    def __init__(self, shape: tuple[int, int], terms: list | None = None, const: np.ndarray | None = None):
        self.shape = shape
        self.terms = terms if terms is not None else []
        self.const = const if const is not None else np.zeros(shape)

    def copy(self) -> "MatExpr":
        return MatExpr(self.shape, list(self.terms), self.const.copy())

    def __add__(self, other) -> "MatExpr":
        if isinstance(other, MatExpr):
            if other.shape != self.shape:
                raise ValueError("shape mismatch")
            return MatExpr(self.shape, self.terms + other.terms, self.const + other.const)
        other = np.asarray(other, dtype=float)
        if other.shape != self.shape:
            raise ValueError("shape mismatch")
        return MatExpr(self.shape, list(self.terms), self.const + other)

    __radd__ = __add__

    def __sub__(self, other) -> "MatExpr":
        if isinstance(other, MatExpr):
            return self.__add__(other.__neg__())
        return self.__add__(-np.asarray(other, dtype=float))

    def __rsub__(self, other) -> "MatExpr":
        return self.__neg__().__add__(other)

    def __neg__(self) -> "MatExpr":
        return self.__mul__(-1.0)

    def __mul__(self, a) -> "MatExpr":
        a = float(a)
        out = []
        for t in self.terms:
            if isinstance(t, TermSym):
                out.append(TermSym(t.var, t.F, t.r0, t.coef * a))
            elif isinstance(t, TermLin):
                out.append(TermLin(t.var, t.L, t.R, t.r0, t.c0, t.transpose, t.coef * a))
            else:
                out.append(TermDyads(t.idx, t.alpha * a, t.U, t.V))
        return MatExpr(self.shape, out, self.const * a)

    __rmul__ = __mul__

    @property
    def T(self) -> "MatExpr":
        d1, d2 = self.shape
        out = []
        for t in self.terms:
            if isinstance(t, TermSym):
                if t.F is None:
                    if t.r0 != 0 or d1 != d2:
                        raise ValueError("transpose of offset symmetric term unsupported")
                    out.append(t)
                else:
                    out.append(t)  # F Theta F^T is symmetric
            elif isinstance(t, TermLin):
                a, b = (t.var.shape if not t.transpose else t.var.shape[::-1])
                Lm = t.L if t.L is not None else _embed_left(d1, a, t.r0)
                Rm = t.R if t.R is not None else _embed_right(b, d2, t.c0)
                out.append(TermLin(t.var, Rm.T.copy(), Lm.T.copy(), 0, 0, not t.transpose, t.coef))
            else:
                out.append(TermDyads(t.idx, t.alpha, t.V, t.U))
        return MatExpr((d2, d1), out, self.const.T.copy())


def _embed_left(d1: int, a: int, r0: int) -> np.ndarray:
    """(d1, a) identity factor placing an a-row block at row offset r0."""
    M = np.zeros((d1, a))
    M[r0 : r0 + a, :] = np.eye(a)
    return M


def _embed_right(b: int, d2: int, c0: int) -> np.ndarray:
    """(b, d2) identity factor placing a b-column block at column offset c0."""
    M = np.zeros((b, d2))
    M[:, c0 : c0 + b] = np.eye(b)
    return M


def congruence(theta, F=None, out_dim: int | None = None, r0: int = 0, coef: float = 1.0) -> MatExpr:
    """F @ Mat(theta) @ F.T (F None: identity embedding at diagonal offset r0)."""
    dv = theta.d
    if F is not None:
        F = np.ascontiguousarray(np.asarray(F, dtype=float))
        if F.shape[1] != dv:
            raise ValueError("congruence factor width mismatch")
        d = F.shape[0]
        return MatExpr((d, d), [TermSym(theta, F, 0, coef)])
    d = out_dim if out_dim is not None else dv
    return MatExpr((d, d), [TermSym(theta, None, r0, coef)])


def sandwich(var, L=None, R=None, shape=None, r0: int = 0, c0: int = 0, transpose: bool = False, coef: float = 1.0) -> MatExpr:
    """coef * L @ X @ R with X a full matrix variable (transpose: use X^T)."""
    a, b = var.shape if not transpose else (var.shape[1], var.shape[0])
    d1 = L.shape[0] if L is not None else (shape[0] if shape else a)
    d2 = R.shape[1] if R is not None else (shape[1] if shape else b)
    if L is not None:
        L = np.ascontiguousarray(np.asarray(L, dtype=float))
        if L.shape[1] != a:
            raise ValueError("left factor width mismatch")
    if R is not None:
        R = np.ascontiguousarray(np.asarray(R, dtype=float))
        if R.shape[0] != b:
            raise ValueError("right factor height mismatch")
    return MatExpr((d1, d2), [TermLin(var, L, R, r0, c0, transpose, coef)])


def entries_term(shape, idx, rows, cols, vals) -> MatExpr:
    """Sparse placements: sum_t vals[t] * x[idx[t]] at position (rows[t], cols[t])."""
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)
    T = len(rows)
    U = np.zeros((shape[0], T))
    V = np.zeros((shape[1], T))
    U[rows, np.arange(T)] = 1.0
    V[cols, np.arange(T)] = 1.0
    t = TermDyads(np.asarray(idx, dtype=np.intp), np.asarray(vals, dtype=float), U, V)
    return MatExpr(shape, [t])


def dyads_term(shape, idx, alpha, U, V) -> MatExpr:
    t = TermDyads(
        np.asarray(idx, dtype=np.intp),
        np.asarray(alpha, dtype=float),
        np.ascontiguousarray(U, dtype=float),
        np.ascontiguousarray(V, dtype=float),
    )
    if t.U.shape != (shape[0], len(t.idx)) or t.V.shape != (shape[1], len(t.idx)):
        raise ValueError("dyad factor shape mismatch")
    return MatExpr(shape, [t])


def diag_of(vec: AffExpr, d: int | None = None) -> MatExpr:
    """Diagonal matrix with the given expression on the diagonal.

    A scalar expression with d > 1 yields (scalar) * identity.
    """
    n = vec.size if d is None else d
    C = sp.coo_matrix(vec.C)
    if vec.size == 1 and n > 1:
        nnz = len(C.col)
        idx = np.tile(C.col.astype(np.intp), n)
        pos = np.repeat(np.arange(n, dtype=np.intp), nnz)
        vals = np.tile(C.data.astype(float), n)
        m = entries_term((n, n), idx, pos, pos, vals)
        m.const = np.eye(n) * vec.d[0]
        return m
    if vec.size != n:
        raise ValueError("diagonal length mismatch")
    m = entries_term((n, n), C.col.astype(np.intp), C.row.astype(np.intp), C.row.astype(np.intp), C.data.astype(float))
    m.const = np.diag(vec.d)
    return m


def _shift_term(t, dr: int, dc: int, d1: int, d2: int, old_shape: tuple[int, int]):
    """Re-embed a term of an (a,b) block at offset (dr,dc) inside a (d1,d2) matrix."""
    a, b = old_shape
    if isinstance(t, TermSym):
        if t.F is None:
            if dr != dc:
                raise ValueError("symmetric congruence term placed off-diagonal; use sandwich")
            return TermSym(t.var, None, t.r0 + dr, t.coef)
        F = np.zeros((d1, t.F.shape[1]))
        F[dr : dr + a, :] = t.F
        if dr != dc:
            raise ValueError("symmetric congruence term placed off-diagonal; use sandwich")
        return TermSym(t.var, F, 0, t.coef)
    if isinstance(t, TermLin):
        va, vb = t.var.shape if not t.transpose else (t.var.shape[1], t.var.shape[0])
        L = t.L if t.L is not None else _embed_left(a, va, t.r0)
        R = t.R if t.R is not None else _embed_right(vb, b, t.c0)
        Lp = np.zeros((d1, va))
        Lp[dr : dr + a, :] = L
        Rp = np.zeros((vb, d2))
        Rp[:, dc : dc + b] = R
        return TermLin(t.var, Lp, Rp, 0, 0, t.transpose, t.coef)
    Up = np.zeros((d1, t.U.shape[1]))
    Up[dr : dr + a, :] = t.U
    Vp = np.zeros((d2, t.V.shape[1]))
    Vp[dc : dc + b, :] = t.V
    return TermDyads(t.idx, t.alpha, Up, Vp)


def congr_map(m: MatExpr, M: np.ndarray) -> MatExpr:
    """Two-sided congruence M.T @ m @ M of a square matrix expression."""
    M = np.ascontiguousarray(np.asarray(M, dtype=float))
    d1, d2 = m.shape
    if d1 != d2 or M.shape[0] != d1:
        raise ValueError("congruence map shape mismatch")
    k = M.shape[1]
    out = MatExpr((k, k))
    out.const = M.T @ m.const @ M
    for t in m.terms:
        if isinstance(t, TermSym):
            F = t.F if t.F is not None else _embed_left(d1, t.var.d, t.r0)
            out.terms.append(TermSym(t.var, np.ascontiguousarray(M.T @ F), 0, t.coef))
        elif isinstance(t, TermLin):
            a, b = (t.var.shape if not t.transpose else t.var.shape[::-1])
            L = t.L if t.L is not None else _embed_left(d1, a, t.r0)
            R = t.R if t.R is not None else _embed_right(b, d2, t.c0)
            out.terms.append(TermLin(t.var, np.ascontiguousarray(M.T @ L), np.ascontiguousarray(R @ M), 0, 0, t.transpose, t.coef))
        else:
            out.terms.append(TermDyads(t.idx, t.alpha, M.T @ t.U, M.T @ t.V))
    return out


def block_mat(blocks: list[list]) -> MatExpr:
    """Assemble a block matrix from MatExpr / ndarray / None cells.

    For symmetric constructions the caller may leave the mirror cell None: when
    cell (i,j) is present and (j,i) is None, the transpose is placed there.
    """
    nbr = len(blocks)
    nbc = len(blocks[0])
    cells: list[list] = [[blocks[i][j] for j in range(nbc)] for i in range(nbr)]
    for i in range(nbr):
        for j in range(nbc):
            if cells[i][j] is None and i != j and j < nbr and i < nbc and cells[j][i] is not None:
                c = cells[j][i]
                cells[i][j] = c.T if isinstance(c, MatExpr) else np.asarray(c, dtype=float).T
    # infer block sizes
    rh = [None] * nbr
    cw = [None] * nbc
    for i in range(nbr):
        for j in range(nbc):
            c = cells[i][j]
            if c is None:
                continue
            shape = c.shape if isinstance(c, MatExpr) else np.asarray(c).shape
            rh[i] = shape[0] if rh[i] is None else rh[i]
            cw[j] = shape[1] if cw[j] is None else cw[j]
    if any(v is None for v in rh) or any(v is None for v in cw):
        raise ValueError("cannot infer block sizes")
    ro = np.concatenate([[0], np.cumsum(rh)])
    co = np.concatenate([[0], np.cumsum(cw)])
    d1, d2 = int(ro[-1]), int(co[-1])
    out = MatExpr((d1, d2))
    for i in range(nbr):
        for j in range(nbc):
            c = cells[i][j]
            if c is None:
                continue
            if isinstance(c, MatExpr):
                if c.shape != (rh[i], cw[j]):
                    raise ValueError("block shape mismatch")
                for t in c.terms:
                    out.terms.append(_shift_term(t, int(ro[i]), int(co[j]), d1, d2, c.shape))
                out.const[ro[i] : ro[i + 1], co[j] : co[j + 1]] += c.const
            else:
                arr = np.asarray(c, dtype=float)
                if arr.shape != (rh[i], cw[j]):
                    raise ValueError("block shape mismatch")
                out.const[ro[i] : ro[i + 1], co[j] : co[j + 1]] += arr
    return out
