"""Minimal conic-programming layer: linear, second-order, and semidefinite cones.

The public surface is `Program` (model building), `Solution` (results),
`check_membership` (feasibility probes), and the expression helpers in
`expr`. The solver is a dense primal-dual interior-point method with
Nesterov-Todd scaling over the mixed cone; see `solver.py`.
"""

from .expr import (
    AffExpr,
    MatExpr,
    block_mat,
    concat,
    congr_map,
    congruence,
    diag_of,
    dyads_term,
    entries_term,
    sandwich,
    smat,
    svec,
    svec_dim,
)
from .norms import dual_exponent, hyperbolic_constraint, norm_epigraph, vec_norm
from .program import MatVar, Program, Solution, SolverError, SymVar, check_membership

__all__ = [
    "dual_exponent",
    "hyperbolic_constraint",
    "norm_epigraph",
    "vec_norm",
    "AffExpr",
    "MatExpr",
    "Program",
    "Solution",
    "SymVar",
    "MatVar",
    "check_membership",
    "SolverError",
    "concat",
    "congruence",
    "congr_map",
    "diag_of",
    "dyads_term",
    "entries_term",
    "sandwich",
    "block_mat",
    "svec",
    "smat",
    "svec_dim",
]
