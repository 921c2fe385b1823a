"""Linear conic programs with small PSD blocks, and the adapters that solve them.

Programs are stated as

    minimize    c^T x
    subject to  A_eq x = b_eq,   A_ub x <= b_ub,   M_k(x) PSD for every block k

where each block's upper triangle (column-major order) is an affine map
``coef @ x + const``. The adapter is picked by the CPAGAIN_SOLVER environment
variable: ``clarabel`` (default, native interface) or ``cvxpy``.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
NUMERICAL_FAILURE = "numerical-failure"


def triu_index(size: int) -> list[tuple[int, int]]:
    """(row, col) of each stored entry, column by column."""
    return [(r, c) for c in range(size) for r in range(c + 1)]


@dataclass
class PsdBlocks:
    """``count`` blocks of equal ``size``; rows of coef/const hold the stacked upper triangles."""

    size: int
    coef: sp.csr_matrix
    const: np.ndarray

    @property
    def width(self) -> int:
        return self.size * (self.size + 1) // 2

    @property
    def count(self) -> int:
        return len(self.const) // self.width

    def matrices(self, x) -> np.ndarray:
        """Evaluate every block at x; returns (count, size, size) symmetric matrices."""
        vals = (self.coef @ x + self.const).reshape(self.count, self.width)
        out = np.zeros((self.count, self.size, self.size))
        for k, (r, c) in enumerate(triu_index(self.size)):
            out[:, r, c] = vals[:, k]
            out[:, c, r] = vals[:, k]
        return out


@dataclass
class ConicProgram:
    nvar: int
    objective: np.ndarray = None
    eq: list = field(default_factory=list)  # (A, b) pairs
    ub: list = field(default_factory=list)
    psd: list = field(default_factory=list)

    def __post_init__(self):
        if self.objective is None:
            self.objective = np.zeros(self.nvar)

    def add_eq(self, A, b):
        self.eq.append((sp.csr_matrix(A), np.atleast_1d(np.asarray(b, dtype=float))))

    def add_le(self, A, b):
        self.ub.append((sp.csr_matrix(A), np.atleast_1d(np.asarray(b, dtype=float))))

    def add_psd(self, size: int, coef, const):
        const = np.asarray(const, dtype=float).ravel()
        coef = sp.csr_matrix(coef)
        if coef.shape != (len(const), self.nvar) or len(const) % (size * (size + 1) // 2):
            raise ValueError("PSD block data has inconsistent shape")
        self.psd.append(PsdBlocks(size, coef, const))

    def add_nsd(self, size: int, coef, const):
        """Blocks required to be negative semidefinite."""
        self.add_psd(size, -sp.csr_matrix(coef), -np.asarray(const, dtype=float))

    def stacked(self, kind: str):
        parts = self.eq if kind == "eq" else self.ub
        if not parts:
            return sp.csr_matrix((0, self.nvar)), np.zeros(0)
        return sp.vstack([a for a, _ in parts]).tocsr(), np.concatenate([b for _, b in parts])

    def check(self, max_block: int | None = None):
        for blk in self.psd:
            if max_block is not None and blk.size > max_block:
                raise ValueError(f"PSD block of size {blk.size} exceeds the limit {max_block}")
        for A, b in self.eq + self.ub:
            if A.shape != (len(b), self.nvar):
                raise ValueError("constraint matrix shape mismatch")

    def residuals(self, x) -> dict:
        """Worst violation of each constraint family at x (0 when satisfied)."""
        A, b = self.stacked("eq")
        eq = float(np.max(np.abs(A @ x - b), initial=0.0))
        A, b = self.stacked("ub")
        ub = float(np.max(A @ x - b, initial=0.0))
        psd = 0.0
        for blk in self.psd:
            if blk.count:
                psd = max(psd, float(-np.linalg.eigvalsh(blk.matrices(x)).min()))
        return {"eq": max(eq, 0.0), "ub": max(ub, 0.0), "psd": max(psd, 0.0)}


@dataclass
class Solution:
    status: str
    x: np.ndarray | None
    objective: float = math.nan
    inaccurate: bool = False
    message: str = ""


# -- Clarabel --------------------------------------------------------------

def _svec_scale(size: int) -> np.ndarray:
    return np.array([1.0 if r == c else math.sqrt(2.0) for r, c in triu_index(size)])


def solve_clarabel(prog: ConicProgram, tol: float = 1e-8, max_iter: int = 200) -> Solution:
    import clarabel

    A_parts, b_parts, cones = [], [], []
    A, b = prog.stacked("eq")
    if len(b):
        A_parts.append(A)
        b_parts.append(b)
        cones.append(clarabel.ZeroConeT(len(b)))
    A, b = prog.stacked("ub")
    if len(b):
        A_parts.append(A)
        b_parts.append(b)
        cones.append(clarabel.NonnegativeConeT(len(b)))
    for blk in prog.psd:
        if not blk.count:
            continue
        scale = np.tile(_svec_scale(blk.size), blk.count)
        if blk.size == 1:
            cones.append(clarabel.NonnegativeConeT(blk.count))
        else:
            cones.extend(clarabel.PSDTriangleConeT(blk.size) for _ in range(blk.count))
        A_parts.append(-sp.diags(scale) @ blk.coef)
        b_parts.append(scale * blk.const)
    if not A_parts:
        A_parts, b_parts = [sp.csr_matrix((0, prog.nvar))], [np.zeros(0)]
    A_all = sp.vstack(A_parts).tocsc()
    b_all = np.concatenate(b_parts)
    P = sp.csc_matrix((prog.nvar, prog.nvar))
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    settings.tol_feas = tol
    settings.max_iter = max_iter
    try:
        solver = clarabel.DefaultSolver(P, np.asarray(prog.objective, dtype=float), A_all, b_all, cones, settings)
        sol = solver.solve()
    except Exception as err:  # the native solver raises plain exceptions on malformed data
        return Solution(NUMERICAL_FAILURE, None, message=str(err))
    status = str(sol.status)
    x = np.asarray(sol.x, dtype=float)
    if status == "Solved":
        return Solution(OPTIMAL, x, float(sol.obj_val), False, status)
    if status == "AlmostSolved":
        return Solution(OPTIMAL, x, float(sol.obj_val), True, status)
    if "PrimalInfeasible" in status:
        return Solution(INFEASIBLE, None, message=status)
    return Solution(NUMERICAL_FAILURE, x if np.all(np.isfinite(x)) else None, message=status)


# -- cvxpy -----------------------------------------------------------------

def solve_cvxpy(prog: ConicProgram, solver: str | None = None) -> Solution:
    import cvxpy as cp

    x = cp.Variable(prog.nvar)
    cons = []
    A, b = prog.stacked("eq")
    if len(b):
        cons.append(A @ x == b)
    A, b = prog.stacked("ub")
    if len(b):
        cons.append(A @ x <= b)
    for blk in prog.psd:
        if not blk.count:
            continue
        vec = blk.coef @ x + blk.const
        w = blk.width
        if blk.size == 1:
            cons.append(vec >= 0)
        elif blk.size == 2:
            a, off, d = vec[0::w], vec[1::w], vec[2::w]
            cons.append(cp.SOC(a + d, cp.vstack([2 * off, a - d]), axis=0))
        else:
            index = triu_index(blk.size)
            for k in range(blk.count):
                entry = {rc: vec[k * w + j] for j, rc in enumerate(index)}
                rows = [[entry[(min(r, c), max(r, c))] for c in range(blk.size)] for r in range(blk.size)]
                M = cp.bmat(rows)
                cons.append(0.5 * (M + M.T) >> 0)
    problem = cp.Problem(cp.Minimize(prog.objective @ x), cons)
    name = solver or ("CLARABEL" if "CLARABEL" in cp.installed_solvers() else "SCS")
    try:
        problem.solve(solver=name)
    except cp.error.SolverError as err:
        return Solution(NUMERICAL_FAILURE, None, message=str(err))
    status = problem.status
    if status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        return Solution(OPTIMAL, np.asarray(x.value, dtype=float), float(problem.value),
                        status == cp.OPTIMAL_INACCURATE, status)
    if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        return Solution(INFEASIBLE, None, message=status)
    return Solution(NUMERICAL_FAILURE, None, message=str(status))


BACKENDS = {"clarabel": solve_clarabel, "cvxpy": solve_cvxpy}


def solve_conic(prog: ConicProgram, backend: str | None = None) -> Solution:
    name = (backend or os.environ.get("CPAGAIN_SOLVER") or "clarabel").lower()
    if name not in BACKENDS:
        raise ValueError(f"unknown conic backend {name!r}; choose from {sorted(BACKENDS)}")
    prog.check()
    return BACKENDS[name](prog)
