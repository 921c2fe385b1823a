"""End-to-end analysis: storage function and gain bound, then barrier and input cap."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import __version__
from .certify import (BarrierCertificate, StorageCertificate, check_barrier, check_storage, combine,
                      max_feasible_subtriangulation, worst_pairs)
from .config import AnalysisConfig
from .cpa import ContainmentError, CpaFunction, largest_interior_sublevel
from .mesh import Region, Triangulation, refine, region_from_box
from .solve import (BarrierProblem, IterationRecord, IterationState, StorageProblem, init_barrier_direct,
                    init_barrier_lqr, init_storage_direct, init_storage_kyp, run_phase)
from .system import SystemSpec

log = logging.getLogger(__name__)

INNER_TAG = "inner"


class InfeasibleError(RuntimeError):
    """No certificate could be produced within the configured budget."""


@dataclass
class PhaseResult:
    problem: object
    state: IterationState


def refine_and_warmstart(problem, state: IterationState, fine_problem) -> IterationState:
    """Carry a state to a refined mesh by interpolating the coarse function at the new vertices."""
    coarse, fine = problem.mesh, fine_problem.mesh
    N = coarse.num_vertices
    values = np.empty(fine.num_vertices)
    same = fine.num_vertices >= N and np.array_equal(fine.vertices[:N], coarse.vertices)
    if same:
        values[:N] = state.values
        if fine.num_vertices > N:
            values[N:] = CpaFunction(coarse, state.values).evaluate_many(fine.vertices[N:])
    else:
        values[:] = CpaFunction(coarse, state.values).evaluate_many(fine.vertices)
    if np.any(np.isnan(values)):
        raise ValueError("refined mesh reaches outside the coarse mesh")
    new = fine_problem.polish(values, state.s)
    new.history = state.history
    new.diagnostics = state.diagnostics
    new.delta = state.delta
    new.history.append(IterationRecord(len(new.history), "warm-start", -new.b, new.b, new.s, "warm-start", True,
                                       new.delta))
    return new


def _seed_storage(T: Triangulation) -> frozenset:
    o = T.origin_id
    if o is None:
        return frozenset()
    return frozenset(int(i) for i in np.flatnonzero(np.any(T.simplices == o, axis=1)))


def _storage_phase(sys: SystemSpec, cfg: AnalysisConfig, T: Triangulation, history: list,
                   threads: int = 1) -> PhaseResult:
    settings = cfg.step
    problem = StorageProblem(sys, T, norm_kind=cfg.norm_kind, threads=threads, pin_origin=cfg.step.pin_origin)
    if cfg.storage_init == "kyp":
        state = init_storage_kyp(problem, settings)
    else:
        state = init_storage_direct(problem, cfg.gamma0)
    history.extend(state.history)
    state.history = history
    state.delta = settings.delta
    for round_ in range(cfg.refine_budget + 1):
        state = run_phase(problem, state, "-b1", settings, max_iter=cfg.max_iter, until_positive=True,
                          rel_tol=cfg.rel_tol, patience=cfg.patience)
        if state.b > 0:
            break
        H = problem.values(state.values, state.L, state.s)
        ids = max_feasible_subtriangulation(H, problem.mesh, _seed_storage(problem.mesh))
        inner = problem.mesh.tags.get(INNER_TAG, frozenset())
        if ids and inner <= ids and len(ids) < problem.mesh.num_simplices:
            sub, used = problem.mesh.submesh(ids)
            note = f"storage inequalities hold on a sub-triangulation of {len(ids)} of {problem.mesh.num_simplices} simplexes"
            log.info(note)
            state.diagnostics.append(note)
            problem = StorageProblem(sys, sub, norm_kind=cfg.norm_kind, threads=threads,
                                     pin_origin=cfg.step.pin_origin)
            new = problem.polish(state.values[used], state.s)
            new.history, new.diagnostics, new.delta = state.history, state.diagnostics, state.delta
            state = new
            break
        if round_ < cfg.refine_budget:
            fine = StorageProblem(sys, refine(problem.mesh), norm_kind=cfg.norm_kind, threads=threads,
                                  pin_origin=cfg.step.pin_origin)
            log.info("refining storage mesh to %d simplexes", fine.mesh.num_simplices)
            state = refine_and_warmstart(problem, state, fine)
            problem = fine
    if not state.b > 0:
        worst = worst_pairs(problem.values(state.values, state.L, state.s), problem.mesh)
        raise InfeasibleError("storage phase infeasible: no positive dissipation margin after "
                              f"{cfg.refine_budget} refinements; largest values at " + "; ".join(worst))
    pin = min(cfg.b_floor, state.b)
    state = run_phase(problem, state, "gamma", settings, pin=pin, max_iter=cfg.max_iter,
                      rel_tol=cfg.rel_tol, patience=cfg.patience)
    return PhaseResult(problem, state)


def _barrier_phase(sys: SystemSpec, cfg: AnalysisConfig, T: Triangulation, history: list,
                   threads: int = 1) -> PhaseResult:
    settings = cfg.step
    problem = BarrierProblem(sys, T, T.tags[INNER_TAG], norm_kind=cfg.norm_kind, threads=threads)
    if cfg.barrier_init == "lqr":
        state = init_barrier_lqr(problem, cfg.uhat0)
    else:
        state = init_barrier_direct(problem, cfg.uhat0)
    history.extend(state.history)
    state.history = history
    state.delta = settings.delta
    for round_ in range(cfg.refine_budget + 1):
        state = run_phase(problem, state, "-b2", settings, max_iter=cfg.max_iter, until_positive=True,
                          rel_tol=cfg.rel_tol, patience=cfg.patience)
        if state.b > 0:
            break
        D = problem.values(state.values, state.L, state.s)
        ids = max_feasible_subtriangulation(D, problem.mesh, problem.inner)
        if ids and len(ids) < problem.mesh.num_simplices:
            sub, used = problem.mesh.submesh(ids)
            candidate = BarrierProblem(sys, sub, sub.tags[INNER_TAG], norm_kind=cfg.norm_kind, threads=threads)
            new = candidate.polish(state.values[used], state.s)
            if new.b > 0 and candidate.contained(new.values):
                note = f"barrier inequalities hold on a sub-triangulation of {len(ids)} of {problem.mesh.num_simplices} simplexes"
                log.info(note)
                state.diagnostics.append(note)
                new.history, new.diagnostics, new.delta = state.history, state.diagnostics, state.delta
                problem, state = candidate, new
                break
        if round_ < cfg.refine_budget:
            fine_mesh = refine(problem.mesh)
            fine = BarrierProblem(sys, fine_mesh, fine_mesh.tags[INNER_TAG], norm_kind=cfg.norm_kind, threads=threads)
            log.info("refining barrier mesh to %d simplexes", fine_mesh.num_simplices)
            state = refine_and_warmstart(problem, state, fine)
            problem = fine
    if not state.b > 0:
        worst = worst_pairs(problem.values(state.values, state.L, state.s), problem.mesh)
        raise InfeasibleError("barrier phase infeasible: no positive decrease margin after "
                              f"{cfg.refine_budget} refinements; largest values at " + "; ".join(worst))
    pin = min(cfg.b_floor, state.b)
    state = run_phase(problem, state, "-uhat", settings, pin=pin, max_iter=cfg.max_iter,
                      rel_tol=cfg.rel_tol, patience=cfg.patience)
    return PhaseResult(problem, state)


def build_meshes(cfg: AnalysisConfig) -> tuple[Triangulation, Triangulation]:
    """Storage and barrier meshes, each tagged with the simplexes of the inner box."""
    out = []
    for dom in (cfg.omega, cfg.omega_hat):
        T = dom.build()
        inner = region_from_box(T, cfg.inner_box) if _box_inside(cfg.inner_box, dom.box) else Region(T, frozenset())
        out.append(Triangulation(T.vertices, T.simplices, T.box, {INNER_TAG: inner.ids}, T.axes, T.tiles_box))
    return out[0], out[1]


def _box_inside(inner, outer) -> bool:
    a, b = np.asarray(inner, dtype=float), np.asarray(outer, dtype=float)
    return bool(np.all(a[:, 0] >= b[:, 0]) and np.all(a[:, 1] <= b[:, 1]))


def analyze(sys: SystemSpec, cfg: AnalysisConfig, threads: int = 1):
    """Run both phases and return a checked CombinedCertificate."""
    if len(cfg.omega.box) != sys.n:
        raise ValueError(f"config describes a {len(cfg.omega.box)}-dimensional domain, system has n = {sys.n}")
    T, That = build_meshes(cfg)
    if not That.tags[INNER_TAG]:
        raise ValueError("inner box is not a union of barrier-mesh simplexes")

    storage_hist: list = []
    st = _storage_phase(sys, cfg, T, storage_hist, threads)
    storage = StorageCertificate(sys, st.problem.mesh, st.state.values, st.state.L, st.state.s, st.state.b,
                                 st.problem.bounds)

    barrier_hist: list = []
    bt = _barrier_phase(sys, cfg, That, barrier_hist, threads)
    inner = bt.problem.inner
    try:
        level = largest_interior_sublevel(CpaFunction(bt.problem.mesh, bt.state.values), inner)
    except ContainmentError as err:
        raise InfeasibleError(f"barrier sublevel set does not contain the inner box: {err}") from err
    barrier = BarrierCertificate(sys, bt.problem.mesh, bt.state.values, bt.state.L, bt.state.s, bt.state.b,
                                 level, frozenset(inner.ids), bt.problem.bounds)

    for report in (check_storage(storage, cfg.check_tol), check_barrier(barrier, cfg.check_tol)):
        if not report.passed:
            raise InfeasibleError(f"{report.name} certificate failed its own check: "
                                  f"{[v.to_dict() for v in report.violations[:3]]}")
    history = ([dict(phase="storage", **r.to_dict()) for r in storage_hist]
               + [dict(phase="barrier", **r.to_dict()) for r in barrier_hist])
    metadata = {
        "system_hash": sys.hash,
        "tool_version": __version__,
        "config": cfg.to_dict(),
        "diagnostics": list(st.state.diagnostics) + list(bt.state.diagnostics),
    }
    try:
        return combine(storage, barrier, metadata, history)
    except ContainmentError as err:
        raise InfeasibleError(str(err)) from err
