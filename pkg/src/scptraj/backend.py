"""Canonical convex program representation and the bound conic solver.

The canonical form is

    minimize    0.5 z'Pz + q'z + r
    subject to  A_eq z == b_eq      (rows partitioned into named tags)
                A_in z <= b_in
                ||z[sel] + offset|| <= z[t]   for each second-order block

with P symmetric positive semidefinite.  Duals are reported under the
convention L = obj + lam'(A_eq z - b_eq) + mu'(A_in z - b_in), mu >= 0, so
stationarity reads P z + q + A_eq' lam + A_in' mu + cone terms = 0.  The
bound solver (Clarabel) natively uses this convention; validate_kkt checks
it independently of the solver's own reporting.
"""

from __future__ import annotations

import enum
import json
import pathlib
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp

import clarabel

Array = np.ndarray


@dataclass(frozen=True)
class SocBlock:
    """Constraint ||z[sel] + offset|| <= z[t]."""

    sel: Array
    offset: Array
    t: int

    def __post_init__(self):
        sel = np.asarray(self.sel, dtype=int)
        off = np.asarray(self.offset, dtype=float)
        if sel.ndim != 1 or off.shape != sel.shape:
            raise ValueError("sel and offset must be 1-d arrays of equal length")
        object.__setattr__(self, "sel", sel)
        object.__setattr__(self, "offset", off)


@dataclass
class ConvexProgram:
    num_vars: int
    q: Array
    A_eq: sp.csc_matrix
    b_eq: Array
    eq_tags: Dict[str, slice]
    P: Optional[sp.csc_matrix] = None
    r: float = 0.0
    A_in: Optional[sp.csc_matrix] = None
    b_in: Optional[Array] = None
    soc: Tuple[SocBlock, ...] = ()

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.b_eq = np.asarray(self.b_eq, dtype=float)
        self.A_eq = sp.csc_matrix(self.A_eq)
        if self.P is not None:
            self.P = sp.csc_matrix(self.P)
        if self.A_in is not None:
            self.A_in = sp.csc_matrix(self.A_in)
            self.b_in = np.asarray(self.b_in, dtype=float)
        self.soc = tuple(self.soc)
        self.validate()

    def validate(self, check_psd: bool = False) -> None:
        n = self.num_vars
        if self.q.shape != (n,):
            raise ValueError("q has the wrong length")
        if self.A_eq.shape != (self.b_eq.size, n):
            raise ValueError("equality block shapes disagree")
        covered = np.zeros(self.b_eq.size, dtype=bool)
        for tag, sl in self.eq_tags.items():
            if sl.start < 0 or sl.stop > self.b_eq.size or sl.start > sl.stop:
                raise ValueError(f"tag {tag!r} range out of bounds")
            if covered[sl].any():
                raise ValueError(f"tag {tag!r} overlaps another tag")
            covered[sl] = True
        if not covered.all():
            raise ValueError("equality row tags must partition all rows")
        if self.P is not None:
            if self.P.shape != (n, n):
                raise ValueError("P has the wrong shape")
            asym = abs(self.P - self.P.T)
            if asym.nnz and asym.max() > 1e-10:
                raise ValueError("P must be symmetric")
            if check_psd and self.P.nnz:
                dense = self.P.toarray()
                if np.min(np.linalg.eigvalsh(dense)) < -1e-9:
                    raise ValueError("P must be positive semidefinite")
        if self.A_in is not None:
            if self.A_in.shape != (self.b_in.size, n):
                raise ValueError("inequality block shapes disagree")
        for blk in self.soc:
            if np.any(blk.sel < 0) or np.any(blk.sel >= n) or not 0 <= blk.t < n:
                raise ValueError("second-order block indexes out of range")

    @property
    def num_eq(self) -> int:
        return self.b_eq.size

    @property
    def num_in(self) -> int:
        return 0 if self.b_in is None else self.b_in.size

    def objective_value(self, z: Array) -> float:
        val = float(self.q @ z) + self.r
        if self.P is not None:
            val += 0.5 * float(z @ (self.P @ z))
        return val


class SolveStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITER = "max_iter"
    NUMERICAL_ERROR = "numerical_error"


@dataclass
class ConvexSolution:
    status: SolveStatus
    z: Array
    objective: float
    eq_dual: Array
    ineq_dual: Array
    soc_duals: List[Array]
    eq_tags: Dict[str, slice]
    stats: dict

    def dual(self, tag: str) -> Array:
        if tag not in self.eq_tags:
            raise KeyError(f"no equality rows tagged {tag!r}")
        return self.eq_dual[self.eq_tags[tag]]


@dataclass(frozen=True)
class SolverConfig:
    tol_feas: float = 1e-8
    tol_gap_abs: float = 1e-8
    tol_gap_rel: float = 1e-8
    max_iter: int = 200
    time_limit: float = 0.0   # seconds; 0 disables
    verbose: bool = False
    cone_support: bool = True


_STATUS_MAP = {
    "Solved": SolveStatus.OPTIMAL,
    "AlmostSolved": SolveStatus.OPTIMAL,
    "PrimalInfeasible": SolveStatus.INFEASIBLE,
    "AlmostPrimalInfeasible": SolveStatus.INFEASIBLE,
    "DualInfeasible": SolveStatus.NUMERICAL_ERROR,
    "AlmostDualInfeasible": SolveStatus.NUMERICAL_ERROR,
    "MaxIterations": SolveStatus.MAX_ITER,
    "MaxTime": SolveStatus.MAX_ITER,
}


def _assemble_conic(program: ConvexProgram):
    """Stack rows as [equalities; inequalities; soc blocks] for the solver."""
    n = program.num_vars
    blocks = [program.A_eq]
    rhs = [program.b_eq]
    cones = [clarabel.ZeroConeT(program.num_eq)] if program.num_eq else []
    if program.A_in is not None and program.num_in:
        blocks.append(program.A_in)
        rhs.append(program.b_in)
        cones.append(clarabel.NonnegativeConeT(program.num_in))
    for blk in program.soc:
        dim = blk.sel.size + 1
        rows = np.arange(dim)
        cols = np.concatenate([[blk.t], blk.sel])
        vals = -np.ones(dim)
        blocks.append(sp.csc_matrix((vals, (rows, cols)), shape=(dim, n)))
        rhs.append(np.concatenate([[0.0], blk.offset]))
        cones.append(clarabel.SecondOrderConeT(dim))
    A = sp.vstack(blocks, format="csc") if blocks else sp.csc_matrix((0, n))
    b = np.concatenate(rhs) if rhs else np.zeros(0)
    return A, b, cones


def solve(program: ConvexProgram, config: SolverConfig = SolverConfig()) -> ConvexSolution:
    """Solve the canonical program; duals follow the documented convention."""
    n = program.num_vars
    P = program.P if program.P is not None else sp.csc_matrix((n, n))
    P_ut = sp.triu(P, format="csc")
    A, b, cones = _assemble_conic(program)

    settings = clarabel.DefaultSettings()
    settings.verbose = config.verbose
    settings.tol_feas = config.tol_feas
    settings.tol_gap_abs = config.tol_gap_abs
    settings.tol_gap_rel = config.tol_gap_rel
    # accept a mildly looser certificate when progress stalls near optimum
    settings.reduced_tol_feas = max(1e-6, config.tol_feas * 100)
    settings.reduced_tol_gap_abs = max(1e-6, config.tol_gap_abs * 100)
    settings.reduced_tol_gap_rel = max(1e-6, config.tol_gap_rel * 100)
    settings.max_iter = config.max_iter
    if config.time_limit > 0:
        settings.time_limit = config.time_limit

    solver = clarabel.DefaultSolver(P_ut, program.q, A, b, cones, settings)
    raw = solver.solve()
    status = _STATUS_MAP.get(str(raw.status), SolveStatus.NUMERICAL_ERROR)

    z = np.asarray(raw.x, dtype=float)
    duals = np.asarray(raw.z, dtype=float)
    n_eq, n_in = program.num_eq, program.num_in
    eq_dual = duals[:n_eq]
    ineq_dual = duals[n_eq:n_eq + n_in]
    soc_duals = []
    at = n_eq + n_in
    for blk in program.soc:
        dim = blk.sel.size + 1
        soc_duals.append(duals[at:at + dim])
        at += dim

    objective = program.objective_value(z) if z.size == n and np.all(np.isfinite(z)) \
        else float("nan")
    stats = {
        "solver": "clarabel",
        "iterations": int(raw.iterations),
        "solve_time": float(raw.solve_time),
        "raw_status": str(raw.status),
        "inaccurate": str(raw.status).startswith("Almost"),
    }
    return ConvexSolution(status=status, z=z, objective=objective,
                          eq_dual=eq_dual, ineq_dual=ineq_dual,
                          soc_duals=soc_duals, eq_tags=dict(program.eq_tags),
                          stats=stats)


def extract_initial_state_dual(solution: ConvexSolution, sign: int = 1) -> Array:
    """Dual block of the x0-pinning rows mapped to the adjoint convention.

    The sign comes from the one-time calibration against the scalar LQ
    fixture (see calibration.adjoint_sign); it is not hard-coded here.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    return sign * solution.dual("initial-state")


@dataclass
class KktReport:
    primal_residual: float
    dual_residual: float
    complementarity: float
    ok: bool


def validate_kkt(program: ConvexProgram, solution: ConvexSolution,
                 tol: float = 1e-6) -> KktReport:
    """Independent KKT check of a solution against the canonical data.

    Uses the full stacked row form: with s = b - A z the primal residual
    measures cone feasibility of s, the dual residual is
    ||P z + q + A' y||_inf over all rows, and complementarity is |s.y|
    normalized per row block.
    """
    z = solution.z
    A, b, _ = _assemble_conic(program)
    y = np.concatenate([solution.eq_dual, solution.ineq_dual]
                       + [d for d in solution.soc_duals])
    s = b - A @ z

    # primal feasibility per cone
    n_eq, n_in = program.num_eq, program.num_in
    primal = float(np.max(np.abs(s[:n_eq]))) if n_eq else 0.0
    if n_in:
        primal = max(primal, float(np.max(-np.minimum(s[n_eq:n_eq + n_in], 0.0))))
    at = n_eq + n_in
    for blk in program.soc:
        dim = blk.sel.size + 1
        sc = s[at:at + dim]
        primal = max(primal, max(0.0, float(np.linalg.norm(sc[1:]) - sc[0])))
        at += dim

    grad = program.q.copy()
    if program.P is not None:
        grad = grad + program.P @ z
    dual = float(np.max(np.abs(grad + A.T @ y))) if y.size else \
        float(np.max(np.abs(grad)))

    comp = abs(float(s @ y)) / (1.0 + abs(solution.objective))
    ok = primal <= tol and dual <= tol and comp <= tol
    return KktReport(primal_residual=primal, dual_residual=dual,
                     complementarity=comp, ok=ok)


def dump_program(program: ConvexProgram, directory) -> List[str]:
    """Write the program as coordinate-format matrix files plus JSON metadata."""
    from scipy.io import mmwrite

    out = pathlib.Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def write_matrix(name, mat):
        path = out / f"{name}.mtx"
        mmwrite(str(path), sp.coo_matrix(mat))
        written.append(str(path))

    def write_vector(name, vec):
        path = out / f"{name}.txt"
        np.savetxt(str(path), np.asarray(vec), fmt="%.17g")
        written.append(str(path))

    if program.P is not None:
        write_matrix("P", program.P)
    write_matrix("A_eq", program.A_eq)
    write_vector("q", program.q)
    write_vector("b_eq", program.b_eq)
    if program.A_in is not None:
        write_matrix("A_in", program.A_in)
        write_vector("b_in", program.b_in)
    meta = {
        "num_vars": program.num_vars,
        "r": program.r,
        "eq_tags": {k: [v.start, v.stop] for k, v in program.eq_tags.items()},
        "soc": [{"sel": blk.sel.tolist(), "offset": blk.offset.tolist(),
                 "t": int(blk.t)} for blk in program.soc],
    }
    meta_path = out / "program.json"
    meta_path.write_text(json.dumps(meta, indent=2))
    written.append(str(meta_path))
    return written
