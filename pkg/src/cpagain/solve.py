"""Iterative convex steps for storage and barrier functions, and their initializations.

Each step solves a conic program in the perturbation of the current feasible
point. The zero perturbation is always feasible, so the objective never gets
worse. After the solve the new point is polished: slopes are reset to the
absolute gradients and the margin is recomputed exactly from the vertex
inequalities, so every stored state is feasible by construction.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .bounds import SimplexBounds, compute_bounds
from .certify import VertexData, assemble_Dplus, assemble_H
from .conic import INFEASIBLE, OPTIMAL, ConicProgram, solve_conic, triu_index
from .cpa import LEVEL_MARGIN, simplex_gradients
from .mesh import Region, Triangulation, shell_indices
from .system import SystemSpec

log = logging.getLogger(__name__)

STORAGE, BARRIER = "storage", "barrier"
TAGS = {"-b1": STORAGE, "gamma": STORAGE, "-b2": BARRIER, "-uhat": BARRIER}


class LinearizationError(RuntimeError):
    pass


@dataclass
class StepSettings:
    delta: float = 10.0  # initial trust-region radius, relative to each variable group's size
    delta_max: float = 100.0
    delta_min: float = 1e-6
    retries: int = 4
    gamma_min: float = 1e-6
    b_cap: float = 1e3
    uhat_min: float = 1e-12
    uhat_cap: float = 1e3
    w_min: float = 1e-6
    literal_e: bool = False  # drop the curvature remainder from the coupling block
    containment: bool = True  # keep the inner box strictly below the boundary of the outer domain
    containment_margin: float = 1e-3
    pin_origin: bool = True  # storage function fixed at zero on the origin vertex
    backend: str | None = None


@dataclass
class IterationRecord:
    iter: int
    objective_tag: str
    J: float
    b: float
    s: float  # gamma or uhat
    status: str
    accepted: bool
    delta: float
    wall_ms: float = 0.0

    def to_dict(self, timing: bool = True) -> dict:
        out = {"iter": self.iter, "objective_tag": self.objective_tag, "J": self.J, "b": self.b,
               "s": self.s, "status": self.status, "accepted": self.accepted, "delta": self.delta}
        if timing:
            out["wall_ms"] = self.wall_ms
        return out


@dataclass
class IterationState:
    flavor: str
    values: np.ndarray  # V or W at the vertices
    L: np.ndarray  # (M, n) slope bounds
    b: float  # margin
    s: float  # gamma (storage) or uhat (barrier)
    delta: float = 10.0
    history: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)

    def objective(self, tag: str) -> float:
        return {"-b1": -self.b, "-b2": -self.b, "gamma": self.s, "-uhat": -self.s}[tag]


# -- problems: a mesh plus everything that stays fixed across steps ------

class _Problem:
    def __init__(self, sys: SystemSpec, mesh: Triangulation, bounds: SimplexBounds | None = None,
                 norm_kind: str = "2", threads: int = 1):
        self.sys = sys
        self.mesh = mesh
        self.bounds = bounds if bounds is not None else compute_bounds(sys, mesh, norm_kind, threads)
        self.data = VertexData(sys, mesh)
        self._grad_rows = None

    @property
    def N(self) -> int:
        return self.mesh.num_vertices

    @property
    def n(self) -> int:
        return self.mesh.n

    def gradient_matrix(self, rows: np.ndarray) -> sp.csr_matrix:
        """Sparse map from vertex values to the stacked gradients of the given simplexes."""
        T = self.mesh
        K = T.grad_ops[rows]  # (R, n, n+1)
        R, n = len(rows), T.n
        r_idx = np.repeat(np.arange(R * n), n + 1)
        c_idx = np.repeat(T.simplices[rows], n, axis=0).ravel()
        return sp.csr_matrix((K.reshape(-1), (r_idx, c_idx)), shape=(R * n, self.N))

    def pair_rate_coef(self, rows: np.ndarray, cols: np.ndarray):
        """Coefficients of f(x_ij) . grad_i on the vertex values of simplex i, per pair."""
        T = self.mesh
        f = self.data.f_pair[rows, cols]  # (P, n)
        coef = np.einsum("pn,pnk->pk", f, T.grad_ops[rows])  # (P, n+1)
        return coef, T.simplices[rows]


class StorageProblem(_Problem):
    """Dissipation inequalities on one triangulation.

    With ``pin_origin`` the storage function is held at zero on the origin
    vertex, so V vanishes at the equilibrium and stays nonnegative elsewhere.
    """

    def __init__(self, sys, mesh, bounds=None, norm_kind="2", threads=1, pin_origin: bool = True):
        super().__init__(sys, mesh, bounds, norm_kind, threads)
        self.pin_origin = pin_origin and mesh.origin_id is not None

    @property
    def pairs(self):
        ex = self.data.exempt
        rows, cols = np.nonzero(~ex)
        return rows, cols

    def margin(self, V, L, gamma) -> float:
        H = assemble_H(self.sys, self.mesh, self.bounds, V, L, gamma, self.data)
        return float(-np.nanmax(H)) if np.any(~np.isnan(H)) else 0.0

    def values(self, V, L, gamma) -> np.ndarray:
        return assemble_H(self.sys, self.mesh, self.bounds, V, L, gamma, self.data)

    def polish(self, V, gamma) -> IterationState:
        # Only gradients enter the inequalities, so a constant shift keeps them
        # intact; clipping (rarely needed) is covered by recomputing the margin.
        V = np.asarray(V, dtype=float)
        if self.pin_origin:
            V = np.maximum(V - V[self.mesh.origin_id], 0.0)
        else:
            V = V - V.min()
        L = np.abs(simplex_gradients(self.mesh, V))
        return IterationState(STORAGE, V, L, self.margin(V, L, gamma), float(gamma))


class BarrierProblem(_Problem):
    """Decrease inequalities outside an inner region."""

    def __init__(self, sys, mesh, inner: Region | frozenset, bounds=None, norm_kind="2", threads=1):
        super().__init__(sys, mesh, bounds, norm_kind, threads)
        ids = inner.ids if isinstance(inner, Region) else frozenset(inner)
        self.inner = Region(mesh, frozenset(ids))
        self.shell = np.asarray(shell_indices(mesh, self.inner), dtype=np.int64)
        self.inner_vertices = self.inner.vertex_ids
        self.outer_vertices = mesh.boundary_vertex_ids

    def values(self, W, Lhat, uhat) -> np.ndarray:
        """(M, n+1) decrease values, NaN outside the shell."""
        out = np.full(self.mesh.simplices.shape, np.nan)
        if self.shell.size:
            out[self.shell] = assemble_Dplus(self.sys, self.mesh, self.bounds, W, Lhat, uhat, self.shell, self.data)
        return out

    def margin(self, W, Lhat, uhat) -> float:
        if not self.shell.size:
            return 0.0
        D = assemble_Dplus(self.sys, self.mesh, self.bounds, W, Lhat, uhat, self.shell, self.data)
        return float(-D.max())

    def contained(self, W, margin: float = 0.0) -> bool:
        if not self.inner_vertices.size:
            return True
        outer = (1.0 - LEVEL_MARGIN) * W[self.outer_vertices].min()
        return bool(W[self.inner_vertices].max() * (1.0 + margin) < outer)

    def polish(self, W, uhat, w_min: float = 0.0) -> IterationState:
        W = np.asarray(W, dtype=float)
        if w_min > 0:
            # Constant shifts leave every decrease value unchanged and only sharpen containment.
            W = W - (W.min() - w_min)
        W = np.maximum(W, w_min)
        L = np.zeros((self.mesh.num_simplices, self.n))
        if self.shell.size:
            L[self.shell] = np.abs(simplex_gradients(self.mesh, W)[self.shell])
        return IterationState(BARRIER, W, L, self.margin(W, L, uhat), float(uhat))


# -- program assembly ------------------------------------------------------

class _Layout:
    """Index bookkeeping for the stacked perturbation vector."""

    def __init__(self, **sizes):
        self.slices = {}
        start = 0
        for name, size in sizes.items():
            self.slices[name] = slice(start, start + size)
            start += size
        self.size = start

    def __getitem__(self, name) -> slice:
        return self.slices[name]

    def index(self, name) -> int:
        return self.slices[name].start


def _bounds_rows(lo: np.ndarray, hi: np.ndarray):
    n = len(lo)
    eye = sp.identity(n, format="csr")
    return sp.vstack([eye, -eye]).tocsr(), np.concatenate([hi, -lo])


def _gradient_rows(G: sp.csr_matrix, grads: np.ndarray, L: np.ndarray, lay: _Layout, vals: str, slopes: str):
    """|grad + G dv| <= L + dL as two stacks of linear rows."""
    m = G.shape[0]
    left = sp.csr_matrix((m, lay[vals].start))
    right = sp.csr_matrix((m, lay.size - lay[slopes].stop))
    mid = sp.csr_matrix((m, lay[slopes].start - lay[vals].stop))
    eye = sp.identity(m, format="csr")
    upper = sp.hstack([left, G, mid, -eye, right])
    lower = sp.hstack([left, -G, mid, -eye, right])
    g, l = grads.ravel(), L.ravel()
    return sp.vstack([upper, lower]).tocsr(), np.concatenate([l - g, l + g])


def build_storage_program(problem: StorageProblem, state: IterationState, tag: str, pin, settings: StepSettings,
                          delta: float) -> tuple[ConicProgram, _Layout]:
    T, B, d = problem.mesh, problem.bounds, problem.data
    N, M, n = problem.N, T.num_simplices, problem.n
    lay = _Layout(v=N, l=M * n, b=1, g=1)
    prog = ConicProgram(lay.size)
    V, L, b, gamma = state.values, state.L, state.b, state.s
    grads = simplex_gradients(T, V)

    sV = max(1.0, float(np.abs(V).max(initial=0.0)))
    sL = max(1.0, float(L.max(initial=0.0)))
    sb, sg = max(1.0, abs(b)), max(1.0, gamma)
    lo = np.concatenate([np.maximum(-delta * sV, -V), np.full(M * n, -delta * sL),
                         [-delta * sb if pin is None else max(-delta * sb, pin - b)],
                         [max(-delta * sg, settings.gamma_min - gamma)]])
    hi = np.concatenate([np.full(N, delta * sV), np.full(M * n, delta * sL),
                         [min(delta * sb, max(settings.b_cap, b) - b)], [delta * sg]])
    lo, hi = np.minimum(lo, 0.0), np.maximum(hi, 0.0)
    if problem.pin_origin:
        o = T.origin_id
        lo[o] = hi[o] = -V[o]
    prog.add_le(*_bounds_rows(lo, hi))
    prog.add_le(*_gradient_rows(problem.gradient_matrix(np.arange(M)), grads, L, lay, "v", "l"))

    rows, cols = problem.pairs
    P = len(rows)
    if P:
        c = B.c[rows, cols]
        beta, beta_t, beta_b = B.beta_f[rows], B.beta_hh[rows], B.beta_gbar[rows]
        L1 = L[rows].sum(axis=1)
        gbar = d.gbar[T.simplices[rows, cols]]
        e = 0.5 * gbar if settings.literal_e else 0.5 * (gbar + beta_b * c)
        root_e = np.sqrt(np.maximum(e, 0.0))
        rate_coef, verts = problem.pair_rate_coef(rows, cols)
        rate0 = np.einsum("pn,pn->p", d.f_pair[rows, cols], grads[rows])
        hh = d.hh[T.simplices[rows, cols]]
        phi0 = rate0 + L1 * beta * c + 0.5 * hh + 0.5 * beta_t * c

        lcols = lay["l"].start + rows[:, None] * n + np.arange(n)[None, :]  # (P, n)
        base = np.arange(P) * 3
        r_list, c_list, v_list = [], [], []
        # entry (0,0): -(phi + b + db)
        r_list += [np.repeat(base, n + 1), np.repeat(base, n), base]
        c_list += [verts.ravel(), lcols.ravel(), np.full(P, lay.index("b"))]
        v_list += [-rate_coef.ravel(), np.repeat(-beta * c, n), -np.ones(P)]
        # entry (0,1): -sqrt(e) * (L1 + sum dl)
        r_list.append(np.repeat(base + 1, n))
        c_list.append(lcols.ravel())
        v_list.append(np.repeat(-root_e, n))
        # entry (1,1): gamma + dgamma
        r_list.append(base + 2)
        c_list.append(np.full(P, lay.index("g")))
        v_list.append(np.ones(P))
        coef = sp.csr_matrix((np.concatenate(v_list), (np.concatenate(r_list), np.concatenate(c_list))),
                             shape=(3 * P, lay.size))
        const = np.stack([-(phi0 + b), -root_e * L1, np.full(P, gamma)], axis=1).ravel()
        prog.add_psd(2, coef, const)

    if tag == "-b1":
        prog.objective[lay.index("b")] = -1.0
    elif tag == "gamma":
        prog.objective[lay.index("g")] = 1.0
    else:
        raise ValueError(f"objective {tag!r} does not belong to the storage step")
    prog.check(max_block=3)
    return prog, lay


def build_barrier_program(problem: BarrierProblem, state: IterationState, tag: str, pin, settings: StepSettings,
                          delta: float, containment: bool) -> tuple[ConicProgram, _Layout]:
    T, B, d = problem.mesh, problem.bounds, problem.data
    N, n = problem.N, problem.n
    shell = problem.shell
    S = len(shell)
    lay = _Layout(v=N, l=S * n, b=1, u=1, r=1 if containment else 0)
    prog = ConicProgram(lay.size)
    W, L, b, uhat = state.values, state.L, state.b, state.s
    grads = simplex_gradients(T, W)
    Ls = L[shell]

    sW = max(1.0, float(np.abs(W).max(initial=0.0)))
    sL = max(1.0, float(Ls.max(initial=0.0)))
    sb, su = max(1.0, abs(b)), max(1.0, uhat)
    lo = np.concatenate([np.maximum(-delta * sW, settings.w_min - W), np.full(S * n, -delta * sL),
                         [-delta * sb if pin is None else max(-delta * sb, pin - b)],
                         [max(-delta * su, settings.uhat_min - uhat)]])
    hi = np.concatenate([np.full(N, delta * sW), np.full(S * n, delta * sL),
                         [min(delta * sb, max(settings.b_cap, b) - b)],
                         [min(delta * su, max(settings.uhat_cap, uhat) - uhat)]])
    lo, hi = np.minimum(lo, 0.0), np.maximum(hi, 0.0)
    if containment:
        big = 1e30
        lo, hi = np.concatenate([lo, [-big]]), np.concatenate([hi, [big]])
    prog.add_le(*_bounds_rows(lo, hi))
    if S:
        prog.add_le(*_gradient_rows(problem.gradient_matrix(shell), grads[shell], Ls, lay, "v", "l"))

    if containment:
        r = lay.index("r")
        inner, outer = problem.inner_vertices, problem.outer_vertices
        ki, ko = len(inner), len(outer)
        A_in = sp.csr_matrix((np.concatenate([np.ones(ki), -np.ones(ki)]),
                              (np.concatenate([np.arange(ki)] * 2), np.concatenate([inner, np.full(ki, r)]))),
                             shape=(ki, lay.size))
        A_out = sp.csr_matrix((np.concatenate([-np.ones(ko), np.full(ko, 1.0 + settings.containment_margin)]),
                               (np.concatenate([np.arange(ko)] * 2), np.concatenate([outer, np.full(ko, r)]))),
                              shape=(ko, lay.size))
        prog.add_le(A_in, -W[inner])
        prog.add_le(A_out, W[outer])

    if S:
        rows = np.repeat(shell, n + 1)
        cols = np.tile(np.arange(n + 1), S)
        local = np.repeat(np.arange(S), n + 1)  # position of the simplex within the shell
        P = len(rows)
        c = B.c[rows, cols]
        beta, ghat = B.beta_f[rows], B.ghat[rows]
        L1 = L[rows].sum(axis=1)
        rate_coef, verts = problem.pair_rate_coef(rows, cols)
        rate0 = np.einsum("pn,pn->p", d.f_pair[rows, cols], grads[rows])
        slope_w = beta * c + ghat * uhat
        phi0 = rate0 + L1 * slope_w
        lcols = lay["l"].start + local[:, None] * n + np.arange(n)[None, :]
        width = 6
        base = np.arange(P) * width
        pos = {rc: k for k, rc in enumerate(triu_index(3))}
        u_col = np.full(P, lay.index("u"))
        r_list = [np.repeat(base, n + 1), np.repeat(base, n), base, base,
                  np.repeat(base + pos[(0, 1)], n), base + pos[(0, 2)]]
        c_list = [verts.ravel(), lcols.ravel(), u_col, np.full(P, lay.index("b")),
                  lcols.ravel(), u_col]
        v_list = [-rate_coef.ravel(), np.repeat(-slope_w, n), -L1 * ghat, -np.ones(P),
                  -np.ones(P * n), -ghat]
        coef = sp.csr_matrix((np.concatenate(v_list), (np.concatenate(r_list), np.concatenate(c_list))),
                             shape=(width * P, lay.size))
        const = np.zeros((P, width))
        const[:, pos[(0, 0)]] = -(phi0 + b)
        const[:, pos[(1, 1)]] = 2.0
        const[:, pos[(2, 2)]] = 2.0
        prog.add_psd(3, coef, const.ravel())

    if tag == "-b2":
        prog.objective[lay.index("b")] = -1.0
    elif tag == "-uhat":
        prog.objective[lay.index("u")] = -1.0
    else:
        raise ValueError(f"objective {tag!r} does not belong to the barrier step")
    prog.check(max_block=3)
    return prog, lay


# -- steps -----------------------------------------------------------------

def _improves(old: IterationState, new: IterationState, tag: str) -> bool:
    return new.objective(tag) <= old.objective(tag)


def _step(problem, state: IterationState, tag: str, pin, settings: StepSettings, build, polish, extra_ok):
    start = time.perf_counter()
    delta = state.delta
    status = "rejected"
    for _ in range(settings.retries + 1):
        prog, lay = build(delta)
        sol = solve_conic(prog, settings.backend)
        status = sol.status
        if sol.status == OPTIMAL and sol.x is not None:
            cand = polish(sol.x, lay)
            ok = (np.isfinite(cand.b) and _improves(state, cand, tag)
                  and (pin is None or cand.b > 0) and extra_ok(cand))
            if ok:
                cand.delta = min(2.0 * delta, settings.delta_max)
                cand.history = state.history
                cand.diagnostics = state.diagnostics
                rec = IterationRecord(len(state.history), tag, cand.objective(tag), cand.b, cand.s,
                                      "optimal-inaccurate" if sol.inaccurate else OPTIMAL, True, delta,
                                      1000.0 * (time.perf_counter() - start))
                cand.history.append(rec)
                return cand, rec
            status = "rejected"
        elif sol.status == INFEASIBLE:
            status = INFEASIBLE
        delta *= 0.5
        if delta < settings.delta_min:
            break
    out = replace(state, delta=max(delta, settings.delta_min))
    rec = IterationRecord(len(state.history), tag, state.objective(tag), state.b, state.s, status, False, delta,
                          1000.0 * (time.perf_counter() - start))
    out.history.append(rec)
    return out, rec


def step_hj(problem: StorageProblem, state: IterationState, tag: str = "gamma", pin: float | None = None,
            settings: StepSettings | None = None):
    """One convex step on the storage inequalities; returns (state, record)."""
    settings = settings or StepSettings()

    def build(delta):
        return build_storage_program(problem, state, tag, pin, settings, delta)

    def polish(x, lay):
        gamma = max(state.s + x[lay.index("g")], settings.gamma_min)
        return problem.polish(state.values + x[lay["v"]], gamma)

    return _step(problem, state, tag, pin, settings, build, polish, lambda cand: True)


def step_barrier(problem: BarrierProblem, state: IterationState, tag: str = "-uhat", pin: float | None = None,
                 settings: StepSettings | None = None):
    """One convex step on the barrier inequalities; returns (state, record)."""
    settings = settings or StepSettings()
    enforce = settings.containment and problem.contained(state.values, settings.containment_margin)

    def build(delta):
        return build_barrier_program(problem, state, tag, pin, settings, delta, enforce)

    def polish(x, lay):
        uhat = max(state.s + x[lay.index("u")], settings.uhat_min)
        return problem.polish(state.values + x[lay["v"]], uhat, settings.w_min)

    def extra_ok(cand):
        return cand.s > 0 and bool(np.all(cand.values > 0)) and (not enforce or problem.contained(cand.values))

    return _step(problem, state, tag, pin, settings, build, polish, extra_ok)


def run_phase(problem, state: IterationState, tag: str, settings: StepSettings | None = None, *,
              pin: float | None = None, max_iter: int = 50, until_positive: bool = False,
              rel_tol: float = 1e-3, patience: int = 3) -> IterationState:
    """Repeat steps until the margin turns positive, progress stalls, or the budget runs out."""
    settings = settings or StepSettings()
    step = step_hj if TAGS[tag] == STORAGE else step_barrier
    flat = 0
    for _ in range(max_iter):
        if until_positive and state.b > 0:
            break
        before = state.objective(tag)
        state, rec = step(problem, state, tag, pin, settings)
        after = state.objective(tag)
        gain = (before - after) / max(abs(before), 1e-12)
        log.info("%s iter %d: J=%.6g b=%.4g s=%.6g (%s)", tag, rec.iter, after, state.b, state.s, rec.status)
        flat = flat + 1 if gain < rel_tol else 0
        if flat >= patience:
            break
    return state


# -- linear-algebra initializations ---------------------------------------

def _sym_basis(n: int):
    """Symmetric basis matrices, one per upper-triangle entry."""
    out = []
    for r, c in triu_index(n):
        E = np.zeros((n, n))
        E[r, c] = E[c, r] = 1.0
        out.append(E)
    return out


def _block_rows(size: int, const: np.ndarray, terms: list[tuple[int, np.ndarray]], nvar: int):
    """Triangle rows of an affine matrix  const + sum_k x_k * terms_k."""
    idx = triu_index(size)
    coef = np.zeros((len(idx), nvar))
    for var, mat in terms:
        coef[:, var] = [mat[r, c] for r, c in idx]
    return coef, np.array([const[r, c] for r, c in idx])


def lyapunov_certificate(A) -> np.ndarray:
    """P >= 0 with A^T P + P A <= -I and least trace."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    basis = _sym_basis(n)
    nv = len(basis)
    prog = ConicProgram(nv)
    prog.objective[:] = [np.trace(E) for E in basis]
    coef, const = _block_rows(n, np.eye(n), [(k, A.T @ E + E @ A) for k, E in enumerate(basis)], nv)
    prog.add_nsd(n, coef, const)
    coef, const = _block_rows(n, np.zeros((n, n)), list(enumerate(basis)), nv)
    prog.add_psd(n, coef, const)
    sol = solve_conic(prog)
    if sol.status != OPTIMAL:
        raise LinearizationError(f"no quadratic Lyapunov function for the linearization ({sol.status})")
    P = sum(x * E for x, E in zip(sol.x, basis))
    return 0.5 * (P + P.T)


def kyp_gain(A, B, C) -> tuple[np.ndarray, float]:
    """Least squared gain of (A, B, C) with its storage matrix, via the bounded-real inequality."""
    A, B, C = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (A, B, C))
    n, m = B.shape
    basis = _sym_basis(n)
    nv = len(basis) + 1
    g = nv - 1
    prog = ConicProgram(nv)
    prog.objective[g] = 1.0
    size = n + m
    const = np.zeros((size, size))
    const[:n, :n] = C.T @ C
    terms = []
    for k, E in enumerate(basis):
        T = np.zeros((size, size))
        T[:n, :n] = A.T @ E + E @ A
        T[:n, n:] = E @ B
        T[n:, :n] = B.T @ E
        terms.append((k, T))
    T = np.zeros((size, size))
    T[n:, n:] = -np.eye(m)
    terms.append((g, T))
    coef, c0 = _block_rows(size, const, terms, nv)
    prog.add_nsd(size, coef, c0)
    coef, c0 = _block_rows(n, np.zeros((n, n)), list(enumerate(basis)), nv)
    prog.add_psd(n, coef, c0)
    sol = solve_conic(prog)
    if sol.status != OPTIMAL:
        raise LinearizationError(f"bounded-real inequality infeasible ({sol.status})")
    P = sum(x * E for x, E in zip(sol.x[:g], basis))
    return 0.5 * (P + P.T), float(sol.x[g])


def _quadratic(points: np.ndarray, P: np.ndarray) -> np.ndarray:
    return np.einsum("pi,ij,pj->p", points, P, points)


def init_storage_direct(problem: StorageProblem, gamma0: float = 1.0, profile=None) -> IterationState:
    if not gamma0 > 0:
        raise ValueError("initial gain bound must be positive")
    X = problem.mesh.vertices
    V = np.sum(X ** 2, axis=1) if profile is None else np.asarray(profile(X), dtype=float)
    state = problem.polish(V, gamma0)
    state.history.append(IterationRecord(0, "init", -state.b, state.b, state.s, "init-direct", True, state.delta))
    return state


def init_storage_kyp(problem: StorageProblem, settings: StepSettings | None = None) -> IterationState:
    settings = settings or StepSettings()
    A, B, C = problem.sys.linearization()
    note = None
    try:
        if np.abs(B).max(initial=0.0) > 1e-12:
            P, gamma = kyp_gain(A, B, C)
            branch = "init-kyp"
        else:
            P, gamma = lyapunov_certificate(A), 1.0
            branch = "init-lyapunov"
    except LinearizationError as err:
        note = f"linear initialization failed, using the direct one: {err}"
        log.warning(note)
        state = init_storage_direct(problem)
        state.diagnostics.append(note)
        return state
    gamma = max(gamma, settings.gamma_min)
    state = problem.polish(0.5 * _quadratic(problem.mesh.vertices, P), gamma)
    state.history.append(IterationRecord(0, "init", -state.b, state.b, state.s, branch, True, state.delta))
    return state


def init_barrier_direct(problem: BarrierProblem, uhat0: float = 1e-5, profile=None, eps: float = 0.01) -> IterationState:
    if not uhat0 > 0:
        raise ValueError("initial input cap must be positive")
    X = problem.mesh.vertices
    W = eps + np.sum(X ** 2, axis=1) if profile is None else np.asarray(profile(X), dtype=float)
    state = problem.polish(W, uhat0)
    state.history.append(IterationRecord(0, "init", -state.b, state.b, state.s, "init-direct", True, state.delta))
    return state


def init_barrier_lqr(problem: BarrierProblem, uhat0: float = 1e-5, eps_rel: float = 1e-2) -> IterationState:
    A, _, _ = problem.sys.linearization()
    try:
        P = lyapunov_certificate(A)
    except LinearizationError as err:
        note = f"linear initialization failed, using the direct one: {err}"
        log.warning(note)
        state = init_barrier_direct(problem, uhat0)
        state.diagnostics.append(note)
        return state
    q = _quadratic(problem.mesh.vertices, P)
    scale = q[problem.outer_vertices].min() if problem.outer_vertices.size else q.max(initial=1.0)
    state = problem.polish(eps_rel * max(scale, 1e-12) + q, uhat0)
    state.history.append(IterationRecord(0, "init", -state.b, state.b, state.s, "init-lyapunov", True, state.delta))
    return state
