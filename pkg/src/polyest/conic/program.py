"""Conic program container: variables, constraints, compilation, solutions.

A program owns a growing vector of scalar decision variables. Vector variables
are contiguous slices; symmetric-matrix variables are stored in scaled
lower-triangular vectorization. Constraints live in four groups: equalities,
nonnegativity rows, second-order cones, and semidefinite blocks. Semidefinite
blocks keep their structured term lists (congruences / dyad sandwiches) so the
interior-point solver can assemble Schur complements from Gram-matrix gathers.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .expr import (
    AffExpr,
    MatExpr,
    TermDyads,
    TermLin,
    TermSym,
    smat,
    svec,
    svec_dim,
    svec_indices,
)


class SolverError(RuntimeError):
    """Raised when a solve ends without a usable solution."""


class SymVar:
    """Symmetric d x d matrix variable handle."""

    __slots__ = ("prog", "offset", "d", "sd")

    def __init__(self, prog: "Program", offset: int, d: int):
        self.prog = prog
        self.offset = offset
        self.d = d
        self.sd = svec_dim(d)

    def _svec_index(self, i: int, j: int) -> int:
        i, j = (i, j) if i >= j else (j, i)
        return self.offset + i * (i + 1) // 2 + j

    def diag(self) -> AffExpr:
        idx = [self._svec_index(i, i) for i in range(self.d)]
        C = sp.csr_matrix(
            (np.ones(self.d), (np.arange(self.d), idx)), shape=(self.d, self.prog.nv)
        )
        return AffExpr(C, np.zeros(self.d), (self.d,))

    def trace(self) -> AffExpr:
        return self.diag().sum()

    def entry(self, i: int, j: int) -> AffExpr:
        val = 1.0 if i == j else 1.0 / np.sqrt(2.0)
        C = sp.csr_matrix(([val], ([0], [self._svec_index(i, j)])), shape=(1, self.prog.nv))
        return AffExpr(C, np.zeros(1), ())

    def expr(self) -> MatExpr:
        return MatExpr((self.d, self.d), [TermSym(self, None, 0, 1.0)])


class MatVar:
    """Full r x c matrix variable handle (row-major scalar storage)."""

    __slots__ = ("prog", "offset", "shape")

    def __init__(self, prog: "Program", offset: int, r: int, c: int):
        self.prog = prog
        self.offset = offset
        self.shape = (r, c)

    @property
    def size(self) -> int:
        return self.shape[0] * self.shape[1]

    def flat(self) -> AffExpr:
        idx = np.arange(self.offset, self.offset + self.size)
        C = sp.csr_matrix((np.ones(self.size), (np.arange(self.size), idx)), shape=(self.size, self.prog.nv))
        return AffExpr(C, np.zeros(self.size), (self.size,))

    def expr(self) -> MatExpr:
        return MatExpr(self.shape, [TermLin(self, None, None, 0, 0, False, 1.0)])


class _PsdBlock:
    """Compiled semidefinite block: structured coefficients + constant."""

    def __init__(self, d: int):
        self.d = d
        self.sd = svec_dim(d)
        self.sym_terms: list[tuple[SymVar, np.ndarray | None, int, float]] = []
        self.dict_cols: list[np.ndarray] = []
        self._dict_keys: dict[bytes, int] = {}
        self.dyads: dict[int, list[tuple[float, int, int]]] = {}
        self.const = np.zeros((d, d))
        # filled by finalize()
        self.Dmat = None
        self.h = None
        self.single = None
        self.multi = None
        self.p_idx, self.q_idx = svec_indices(d)
        self.w_sym = np.where(self.p_idx == self.q_idx, 1.0 / np.sqrt(2.0), 1.0)
        self.sc_svec = np.where(self.p_idx == self.q_idx, 1.0, np.sqrt(2.0))

    def _dict_id(self, v: np.ndarray) -> int:
        v = np.ascontiguousarray(v, dtype=float)
        key = v.tobytes()
        hit = self._dict_keys.get(key)
        if hit is not None:
            return hit
        self.dict_cols.append(v)
        self._dict_keys[key] = len(self.dict_cols) - 1
        return len(self.dict_cols) - 1

    def _basis(self, p: int) -> np.ndarray:
        e = np.zeros(self.d)
        e[p] = 1.0
        return e

    def add_dyad(self, var_id: int, alpha: float, u: np.ndarray, v: np.ndarray):
        self.dyads.setdefault(var_id, []).append((alpha, self._dict_id(u), self._dict_id(v)))

    def add_term(self, t, prog: "Program"):
        if isinstance(t, TermSym):
            self.sym_terms.append((t.var, t.F, t.r0, t.coef))
            return
        if isinstance(t, TermLin):
            a, b = t.var.shape
            d = self.d
            for p in range(a):
                for q in range(b):
                    i, l = (p, q) if not t.transpose else (q, p)
                    u = t.L[:, i].copy() if t.L is not None else self._embedded_basis(t.r0 + i)
                    v = t.R[l, :].copy() if t.R is not None else self._embedded_basis(t.c0 + l)
                    var_id = t.var.offset + p * b + q
                    self.add_dyad(var_id, t.coef / 2.0, u, v)
            return
        if isinstance(t, TermDyads):
            for k in range(len(t.idx)):
                self.add_dyad(int(t.idx[k]), t.alpha[k] / 2.0, t.U[:, k], t.V[:, k])
            return
        raise TypeError(f"unknown term {t!r}")

    def _embedded_basis(self, p: int) -> np.ndarray:
        return self._basis(p)

    def finalize(self):
        self.const = 0.5 * (self.const + self.const.T)
        self.h = svec(self.const)
        self.Dmat = (
            np.column_stack(self.dict_cols) if self.dict_cols else np.zeros((self.d, 0))
        )
        singles_v, singles_a, singles_u, singles_w = [], [], [], []
        multi = []
        for var_id, lst in self.dyads.items():
            if len(lst) == 1:
                a, ui, vi = lst[0]
                singles_v.append(var_id)
                singles_a.append(a)
                singles_u.append(ui)
                singles_w.append(vi)
            else:
                multi.append((var_id, lst))
        self.single = (
            np.asarray(singles_v, dtype=np.intp),
            np.asarray(singles_a, dtype=float),
            np.asarray(singles_u, dtype=np.intp),
            np.asarray(singles_w, dtype=np.intp),
        )
        self.multi = multi
        # precompute svec index arrays for each sym term
        self._sym_cache = []
        for var, F, r0, coef in self.sym_terms:
            p, q = svec_indices(var.d)
            w = np.where(p == q, 1.0 / np.sqrt(2.0), 1.0)
            self._sym_cache.append((var, F, r0, coef, p, q, w))

    # --- linear-operator hooks used by the solver ---------------------------

    def eval_raw(self, x: np.ndarray) -> np.ndarray:
        """Symmetrized constraint matrix value minus constant, as a matrix."""
        d = self.d
        M = np.zeros((d, d))
        for var, F, r0, coef in self.sym_terms:
            Th = smat(x[var.offset : var.offset + var.sd], var.d)
            if F is None:
                M[r0 : r0 + var.d, r0 : r0 + var.d] += coef * Th
            else:
                M += coef * (F @ Th @ F.T)
        sv, sa, su, sw = self.single
        if len(sv):
            w = sa * x[sv]
            U = self.Dmat[:, su] * w
            M += U @ self.Dmat[:, sw].T
            V = self.Dmat[:, sw] * w
            M += V @ self.Dmat[:, su].T
        for var_id, lst in self.multi:
            xv = x[var_id]
            for a, ui, vi in lst:
                u = self.Dmat[:, ui]
                v = self.Dmat[:, vi]
                M += (a * xv) * (np.outer(u, v) + np.outer(v, u))
        return M

    def gx(self, x: np.ndarray) -> np.ndarray:
        """G_block @ x (the cone equation is G x + s = h with G = -coeff)."""
        return -svec(self.eval_raw(x))

    def gt(self, zblk: np.ndarray, out: np.ndarray):
        """Accumulate G^T z into out."""
        Z = smat(zblk, self.d)
        for var, F, r0, coef, p, q, w in self._sym_cache:
            Zt = Z[r0 : r0 + var.d, r0 : r0 + var.d] if F is None else F.T @ Z @ F
            g = Zt[p, q].copy()
            off = p != q
            g[off] *= np.sqrt(2.0)
            out[var.offset : var.offset + var.sd] -= coef * g
        sv, sa, su, sw = self.single
        if len(sv):
            ZD = Z @ self.Dmat
            vals = 2.0 * sa * np.einsum("ij,ij->j", self.Dmat[:, su], ZD[:, sw])
            np.subtract.at(out, sv, vals)
        for var_id, lst in self.multi:
            acc = 0.0
            for a, ui, vi in lst:
                acc += 2.0 * a * float(self.Dmat[:, ui] @ Z @ self.Dmat[:, vi])
            out[var_id] -= acc

    def add_schur(self, H: np.ndarray, Q: np.ndarray, symkron):
        """Accumulate G^T (W^T W)^{-1} G where the inverse scaling is X -> Q X Q."""
        d = self.d
        K = self.Dmat.shape[1]
        QD = Q @ self.Dmat if K else np.zeros((d, 0))
        Gram = self.Dmat.T @ QD if K else np.zeros((0, 0))
        sv, sa, su, sw = self.single
        if len(sv):
            Guu = Gram[np.ix_(su, su)]
            Gvv = Gram[np.ix_(sw, sw)]
            Guv = Gram[np.ix_(su, sw)]
            coef = 2.0 * np.outer(sa, sa)
            Hd = coef * (Guu * Gvv + Guv * Guv.T)
            H[np.ix_(sv, sv)] += Hd
        for mi, (var_id, lst) in enumerate(self.multi):
            # multi vs multi (upper triangle incl. self)
            for var_id2, lst2 in self.multi[mi:]:
                acc = 0.0
                for a1, u1, v1 in lst:
                    for a2, u2, v2 in lst2:
                        acc += 2.0 * a1 * a2 * (
                            Gram[u1, u2] * Gram[v1, v2] + Gram[u1, v2] * Gram[v1, u2]
                        )
                H[var_id, var_id2] += acc
                if var_id2 != var_id:
                    H[var_id2, var_id] += acc
            # multi vs singles
            if len(sv):
                row = np.zeros(len(sv))
                for a1, u1, v1 in lst:
                    row += 2.0 * a1 * sa * (
                        Gram[u1, su] * Gram[v1, sw] + Gram[u1, sw] * Gram[v1, su]
                    )
                H[var_id, sv] += row
                H[sv, var_id] += row
        # symmetric-matrix terms
        n_sym = len(self._sym_cache)
        for a_i in range(n_sym):
            var_a, F_a, r0_a, c_a, p_a, q_a, w_a = self._sym_cache[a_i]
            if F_a is None:
                QFa = Q[:, r0_a : r0_a + var_a.d]
            else:
                QFa = Q @ F_a
            rows_a = np.arange(var_a.offset, var_a.offset + var_a.sd)
            for b_i in range(a_i, n_sym):
                var_b, F_b, r0_b, c_b, p_b, q_b, w_b = self._sym_cache[b_i]
                if F_b is None:
                    C = QFa[r0_b : r0_b + var_b.d, :].T
                else:
                    C = F_b.T @ QFa
                    C = C.T
                # C = F_a^T Q F_b, shape (dva, dvb)
                Kab = symkron(np.ascontiguousarray(C), p_a, q_a, w_a, p_b, q_b, w_b)
                Kab *= c_a * c_b
                cols_b = np.arange(var_b.offset, var_b.offset + var_b.sd)
                H[np.ix_(rows_a, cols_b)] += Kab
                if b_i != a_i:
                    H[np.ix_(cols_b, rows_a)] += Kab.T
            # sym term vs dyads
            if K:
                CaD = QFa.T @ self.Dmat  # (dva, K)
                pa, qa = p_a, q_a
                if len(sv):
                    A1 = CaD[:, su]
                    B1 = CaD[:, sw]
                    cols = (A1[pa, :] * B1[qa, :] + A1[qa, :] * B1[pa, :])
                    sc = np.where(pa == qa, 1.0, np.sqrt(2.0))
                    cols = cols * sc[:, None] * (c_a * sa)[None, :]
                    H[np.ix_(rows_a, sv)] += cols
                    H[np.ix_(sv, rows_a)] += cols.T
                for var_id, lst in self.multi:
                    col = np.zeros(var_a.sd)
                    for a1, u1, v1 in lst:
                        au = CaD[:, u1]
                        bv = CaD[:, v1]
                        sc = np.where(pa == qa, 1.0, np.sqrt(2.0))
                        col += c_a * a1 * sc * (au[pa] * bv[qa] + au[qa] * bv[pa])
                    H[rows_a, var_id] += col
                    H[var_id, rows_a] += col


class _Compiled:
    """Standard-form data consumed by the interior-point solver."""

    def __init__(self):
        self.nv = 0
        self.c = None
        self.obj_const = 0.0
        self.A = None
        self.b = None
        self.Gl = None
        self.hl = None
        self.socs: list[tuple[sp.csr_matrix, np.ndarray]] = []
        self.psds: list[_PsdBlock] = []


class Program:
    """A conic program under construction."""

    def __init__(self):
        self.nv = 0
        self._eqs: list[AffExpr] = []
        self._nonneg: list[AffExpr] = []
        self._socs: list[AffExpr] = []
        self._psds: list[MatExpr] = []
        self._objective: AffExpr | None = None

    # --- variables -----------------------------------------------------------

    def var(self, n: int = 1) -> AffExpr:
        off = self.nv
        self.nv += n
        idx = np.arange(off, off + n)
        C = sp.csr_matrix((np.ones(n), (np.arange(n), idx)), shape=(n, self.nv))
        return AffExpr(C, np.zeros(n), (n,) if n > 1 else (1,))

    def scalar(self) -> AffExpr:
        e = self.var(1)
        return AffExpr(e.C, e.d, ())

    def sym_var(self, d: int) -> SymVar:
        v = SymVar(self, self.nv, d)
        self.nv += v.sd
        return v

    def mat_var(self, r: int, c: int) -> MatVar:
        v = MatVar(self, self.nv, r, c)
        self.nv += r * c
        return v

    # --- constraints ----------------------------------------------------------

    def add_eq(self, expr: AffExpr):
        """expr == 0 (elementwise)."""
        self._eqs.append(expr)

    def add_nonneg(self, expr: AffExpr):
        """expr >= 0 (elementwise)."""
        self._nonneg.append(expr)

    def add_soc(self, t: AffExpr, v: AffExpr):
        """Second-order cone: ||v||_2 <= t."""
        from .expr import concat

        self._socs.append(concat([t, v]))

    def add_psd(self, m: MatExpr):
        """m >= 0 in the semidefinite order (m symmetrized explicitly)."""
        if m.shape[0] != m.shape[1]:
            raise ValueError("semidefinite block must be square")
        self._psds.append(m)

    def minimize(self, expr: AffExpr):
        self._objective = expr

    # --- compilation ----------------------------------------------------------

    def _flat_rows(self, exprs: list[AffExpr]) -> tuple[sp.csr_matrix, np.ndarray]:
        if not exprs:
            return sp.csr_matrix((0, self.nv)), np.zeros(0)
        rows = []
        consts = []
        for e in exprs:
            rows.append(e._pad(self.nv))
            consts.append(e.d)
        return sp.vstack(rows, format="csr"), np.concatenate(consts)

    def compile(self) -> _Compiled:
        comp = _Compiled()
        comp.nv = self.nv
        if self._objective is not None:
            C = self._objective._pad(self.nv)
            comp.c = np.asarray(C.todense()).ravel()
            comp.obj_const = float(self._objective.d[0])
        else:
            comp.c = np.zeros(self.nv)
        Aeq, deq = self._flat_rows(self._eqs)
        comp.A, comp.b = Aeq, -deq
        Cn, dn = self._flat_rows(self._nonneg)
        comp.Gl, comp.hl = (-Cn).tocsr(), dn
        for e in self._socs:
            C = e._pad(self.nv)
            comp.socs.append(((-C).tocsr(), e.d.copy()))
        for m in self._psds:
            blk = _PsdBlock(m.shape[0])
            blk.const += 0.5 * (m.const + m.const.T)
            for t in m.terms:
                blk.add_term(t, self)
            blk.finalize()
            comp.psds.append(blk)
        return comp

    # --- solving ----------------------------------------------------------------

    def solve(self, tol: float = 1e-8, max_iter: int = 200, verbose: bool = False) -> "Solution":
        from .solver import solve_compiled

        comp = self.compile()
        raw = solve_compiled(comp, tol=tol, max_iter=max_iter, verbose=verbose)
        return Solution(self, comp, raw)


class Solution:
    """Solver output with expression evaluation helpers."""

    def __init__(self, prog: Program, comp: _Compiled, raw: dict):
        self._comp = comp
        self.status: str = raw["status"]
        self.x: np.ndarray = raw["x"]
        self.y: np.ndarray = raw["y"]
        self.z: np.ndarray = raw["z"]
        self.s: np.ndarray = raw["s"]
        self.gap: float = raw["gap"]
        self.pres: float = raw["pres"]
        self.dres: float = raw["dres"]
        self.iterations: int = raw["iterations"]
        self.objective: float = (
            float(comp.c @ self.x) + comp.obj_const if self.x is not None else np.nan
        )
        self.dual_objective: float = raw.get("dual_objective", np.nan)
        if not np.isnan(self.dual_objective):
            self.dual_objective += comp.obj_const

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def require_optimal(self):
        if self.status not in ("optimal",):
            raise SolverError(f"solve ended with status {self.status}")
        return self

    def value(self, obj):
        if isinstance(obj, SymVar):
            return smat(self.x[obj.offset : obj.offset + obj.sd], obj.d)
        if isinstance(obj, MatVar):
            return self.x[obj.offset : obj.offset + obj.size].reshape(obj.shape)
        if isinstance(obj, AffExpr):
            val = obj._pad(len(self.x)) @ self.x + obj.d
            if obj.shape == ():
                return float(val[0])
            return val
        if isinstance(obj, MatExpr):
            blk = _PsdBlock(obj.shape[0]) if obj.shape[0] == obj.shape[1] else None
            if blk is None:
                raise ValueError("only square matrix expressions supported")
            for t in obj.terms:
                blk.add_term(t, None)
            blk.finalize()
            return blk.eval_raw(self.x) + 0.5 * (obj.const + obj.const.T)
        raise TypeError(f"cannot evaluate {type(obj)}")


def check_membership(cone, point, tol: float = 1e-8) -> bool:
    """Feasibility probe for simple cones and compatibility cones.

    `cone` is ("psd",) | ("soc",) | ("nonneg",) with `point` the candidate, or
    any object exposing `contains(point, tol)` (compatibility cones), in which
    case `point` is forwarded unchanged.
    """
    if hasattr(cone, "contains"):
        return bool(cone.contains(point, tol=tol))
    kind = cone[0] if isinstance(cone, tuple) else cone
    arr = np.asarray(point, dtype=float)
    if kind == "psd":
        arr = 0.5 * (arr + arr.T)
        wmin = float(np.linalg.eigvalsh(arr)[0])
        scale = max(1.0, float(np.abs(arr).max()))
        return wmin >= -tol * scale
    if kind == "soc":
        return float(arr[0]) + tol >= float(np.linalg.norm(arr[1:]))
    if kind == "nonneg":
        return float(arr.min(initial=0.0)) >= -tol
    raise ValueError(f"unknown cone {cone!r}")
