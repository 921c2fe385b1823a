"""Vertex inequality systems for storage and barrier functions, and their checkers.

Checkers use only the mesh, vertex values, scalars and stored bounds. They
never call a solver.
"""
from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .bounds import SimplexBounds
from .cpa import ContainmentError, CpaFunction, largest_interior_sublevel, simplex_gradients, sublevel_simplices
from .mesh import Region, Triangulation, shell_indices
from .system import SystemSpec

log = logging.getLogger(__name__)


class VertexData:
    """System quantities sampled once per vertex: f, |h|^2 and ||G G^T||_inf."""

    def __init__(self, sys: SystemSpec, T: Triangulation):
        self.f = sys.f_eval(T.vertices)
        self.hh = np.sum(sys.h_eval(T.vertices) ** 2, axis=1)
        self.gbar = sys.gbar_eval(T.vertices)
        self.exempt = np.all(np.abs(T.vertices) <= 1e-12, axis=1)[T.simplices]  # (M, n+1)
        # f at each simplex corner dotted into the gradient operator: rate of each vertex value
        self.f_pair = self.f[T.simplices]  # (M, n+1, n)


def _data(sys, T, data):
    return data if data is not None else VertexData(sys, T)


def assemble_H(sys: SystemSpec, T: Triangulation, bounds: SimplexBounds, V, L, gamma: float,
               data: VertexData | None = None, grads=None) -> np.ndarray:
    """Dissipation values per (simplex, vertex); NaN marks the exempt origin pairs."""
    d = _data(sys, T, data)
    grads = simplex_gradients(T, V) if grads is None else grads
    L1 = np.asarray(L, dtype=float).sum(axis=1)[:, None]
    c = bounds.c
    S = T.simplices
    out = (np.einsum("ijn,in->ij", d.f_pair, grads)
           + 0.5 * d.hh[S]
           + (L1 * bounds.beta_f[:, None] + 0.5 * bounds.beta_hh[:, None]) * c
           + (d.gbar[S] + bounds.beta_gbar[:, None] * c) * L1 ** 2 / (2.0 * gamma))
    return np.where(d.exempt, np.nan, out)


def assemble_Dplus(sys: SystemSpec, T: Triangulation, bounds: SimplexBounds, W, Lhat, uhat: float,
                   shell=None, data: VertexData | None = None, grads=None) -> np.ndarray:
    """Decrease values per (shell simplex, vertex). Rows follow ``shell`` order (default: all)."""
    d = _data(sys, T, data)
    shell = np.arange(T.num_simplices) if shell is None else np.asarray(shell, dtype=np.int64)
    grads = simplex_gradients(T, W) if grads is None else grads
    L1 = np.asarray(Lhat, dtype=float)[shell].sum(axis=1)[:, None]
    rate = np.einsum("ijn,in->ij", d.f_pair[shell], grads[shell])
    return rate + L1 * (bounds.beta_f[shell, None] * bounds.c[shell] + bounds.ghat[shell, None] * uhat)


# -- certificates ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StorageCertificate:
    system: SystemSpec
    mesh: Triangulation
    V: np.ndarray
    L: np.ndarray
    gamma: float
    b1: float
    bounds: SimplexBounds

    @property
    def norm_kind(self) -> str:
        return self.bounds.norm_kind

    @cached_property
    def function(self) -> CpaFunction:
        return CpaFunction(self.mesh, self.V)

    def replace(self, **changes) -> "StorageCertificate":
        fields = dict(system=self.system, mesh=self.mesh, V=self.V, L=self.L, gamma=self.gamma,
                      b1=self.b1, bounds=self.bounds)
        fields.update(changes)
        return StorageCertificate(**fields)


@dataclass(frozen=True, eq=False)
class BarrierCertificate:
    system: SystemSpec
    mesh: Triangulation
    W: np.ndarray
    Lhat: np.ndarray
    uhat: float
    b2: float
    level: float
    A1: frozenset
    bounds: SimplexBounds

    @cached_property
    def function(self) -> CpaFunction:
        return CpaFunction(self.mesh, self.W)

    @cached_property
    def shell(self) -> tuple:
        return shell_indices(self.mesh, self.A1)

    @cached_property
    def region_ids(self) -> np.ndarray:
        """Simplexes lying entirely in the certified sublevel set."""
        return sublevel_simplices(self.function, self.level)

    def replace(self, **changes) -> "BarrierCertificate":
        fields = dict(system=self.system, mesh=self.mesh, W=self.W, Lhat=self.Lhat, uhat=self.uhat,
                      b2=self.b2, level=self.level, A1=self.A1, bounds=self.bounds)
        fields.update(changes)
        return BarrierCertificate(**fields)


@dataclass(frozen=True, eq=False)
class CombinedCertificate:
    storage: StorageCertificate
    barrier: BarrierCertificate
    metadata: dict = field(default_factory=dict)
    history: list = field(default_factory=list)

    @property
    def system(self) -> SystemSpec:
        return self.storage.system

    @property
    def gamma(self) -> float:
        return self.storage.gamma

    @property
    def gain(self) -> float:
        return float(np.sqrt(self.storage.gamma))

    @property
    def uhat(self) -> float:
        return self.barrier.uhat

    @property
    def region_size(self) -> int:
        return int(len(self.barrier.region_ids))

    def bias(self, x0) -> float:
        """Offset term sqrt(2 V(x0)) of the gain inequality."""
        return float(np.sqrt(2.0 * max(self.storage.function.evaluate(x0), 0.0)))


# -- checks ----------------------------------------------------------------

@dataclass
class Violation:
    kind: str
    value: float
    limit: float
    simplex: int | None = None
    vertex: int | None = None

    def to_dict(self) -> dict:
        return {"kind": self.kind, "simplex": self.simplex, "vertex": self.vertex,
                "value": self.value, "limit": self.limit}


@dataclass
class CheckReport:
    name: str
    violations: list = field(default_factory=list)
    margin: float = 0.0
    margin_positive: bool = False
    notes: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def passed(self) -> bool:
        return self.ok and self.margin_positive

    def kinds(self) -> set:
        return {v.kind for v in self.violations}

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "margin": self.margin,
                "margin_positive": self.margin_positive, "notes": list(self.notes),
                "violation_count": len(self.violations),
                "violations": [v.to_dict() for v in self.violations[:200]]}


def _pair_violations(report, kind, values, limit, T, rows, tol):
    bad = np.argwhere(values > limit + tol)
    for r, j in bad:
        i = int(rows[r])
        report.violations.append(Violation(kind, float(values[r, j]), float(limit), i, int(T.simplices[i, j])))


def _gradient_violations(report, grads, L, tol, rows=None):
    excess = np.abs(grads) - np.asarray(L)
    if rows is not None:
        excess = excess[rows]
    for r, k in np.argwhere(excess > tol):
        i = int(rows[r]) if rows is not None else int(r)
        report.violations.append(Violation("gradient-bound", float(abs(grads[i, k])), float(L[i, k]), i))


def check_storage(cert: StorageCertificate, tol: float = 1e-9) -> CheckReport:
    T = cert.mesh
    rep = CheckReport("storage", margin=float(cert.b1), margin_positive=bool(cert.b1 > 0))
    if not cert.gamma > 0:
        rep.violations.append(Violation("gain-bound-positive", float(cert.gamma), 0.0))
        return rep
    V = np.asarray(cert.V, dtype=float)
    L = np.asarray(cert.L, dtype=float)
    for v in np.flatnonzero(V < -tol):
        rep.violations.append(Violation("nonnegativity", float(V[v]), 0.0, None, int(v)))
    for i, k in np.argwhere(L < -tol):
        rep.violations.append(Violation("gradient-bound", float(L[i, k]), 0.0, int(i)))
    grads = simplex_gradients(T, V)
    _gradient_violations(rep, grads, L, tol)
    H = assemble_H(cert.system, T, cert.bounds, V, L, cert.gamma, grads=grads)
    H = np.where(np.isnan(H), -np.inf, H)
    _pair_violations(rep, "dissipation", H, -cert.b1, T, np.arange(T.num_simplices), tol)
    return rep


def check_barrier(cert: BarrierCertificate, tol: float = 1e-9) -> CheckReport:
    T = cert.mesh
    rep = CheckReport("barrier", margin=float(cert.b2), margin_positive=bool(cert.b2 > 0))
    if not cert.uhat > 0:
        rep.violations.append(Violation("input-cap-positive", float(cert.uhat), 0.0))
    W = np.asarray(cert.W, dtype=float)
    Lhat = np.asarray(cert.Lhat, dtype=float)
    for v in np.flatnonzero(~(W > 0)):
        rep.violations.append(Violation("positivity", float(W[v]), 0.0, None, int(v)))
    shell = np.asarray(cert.shell, dtype=np.int64)
    grads = simplex_gradients(T, W)
    if shell.size:
        _gradient_violations(rep, grads, Lhat, tol, rows=shell)
        D = assemble_Dplus(cert.system, T, cert.bounds, W, Lhat, cert.uhat, shell, grads=grads)
        _pair_violations(rep, "decrease", D, -cert.b2, T, shell, tol)
    A1 = Region(T, frozenset(cert.A1))
    try:
        level = largest_interior_sublevel(cert.function, A1)
    except ContainmentError as err:
        rep.violations.append(Violation("containment", float("nan"), float(cert.level), None, err.vertex))
        rep.notes.append(str(err))
        return rep
    if cert.level > level * (1 + 1e-12) + tol:
        rep.violations.append(Violation("containment", float(cert.level), float(level)))
        rep.notes.append("stored level reaches the outer boundary")
    inner = A1.vertex_ids
    if inner.size and W[inner].max() >= cert.level:
        worst = int(inner[np.argmax(W[inner])])
        rep.violations.append(Violation("containment", float(W[worst]), float(cert.level), None, worst))
        rep.notes.append("inner set not strictly inside the stored level")
    return rep


# -- sub-triangulations ----------------------------------------------------

def max_feasible_subtriangulation(values, T: Triangulation, seed) -> frozenset:
    """Connected union of simplexes around ``seed`` on which every non-NaN pair value is < 0.

    Grows from the seed across shared faces, always expanding the lowest
    id first. An infeasible seed yields the empty set.
    """
    vals = np.asarray(values, dtype=float)
    feasible = np.all(np.where(np.isnan(vals), -1.0, vals) < 0.0, axis=1)
    seed_ids = sorted(seed.ids if isinstance(seed, Region) else {int(i) for i in seed})
    bad_seed = [i for i in seed_ids if not feasible[i]]
    if not seed_ids or bad_seed:
        log.warning("seed simplexes infeasible: %s", bad_seed[:10])
        return frozenset()
    chosen = set(seed_ids)
    heap = list(seed_ids)
    heapq.heapify(heap)
    while heap:
        i = heapq.heappop(heap)
        for j in T.neighbors[i]:
            if j not in chosen and feasible[j]:
                chosen.add(j)
                heapq.heappush(heap, j)
    return frozenset(chosen)


def worst_pairs(values, T: Triangulation, rows=None, k: int = 5) -> list[str]:
    """Human-readable list of the k largest pair values."""
    vals = np.where(np.isnan(values), -np.inf, values)
    rows = np.arange(len(vals)) if rows is None else np.asarray(rows)
    flat = np.argsort(vals, axis=None)[::-1][:k]
    out = []
    for f in flat:
        r, j = np.unravel_index(f, vals.shape)
        i = int(rows[r])
        x = T.vertices[T.simplices[i, j]]
        out.append(f"simplex {i} vertex {x.round(4).tolist()}: {vals[r, j]:.4g}")
    return out


def combine(storage: StorageCertificate, barrier: BarrierCertificate,
            metadata: dict | None = None, history=None) -> CombinedCertificate:
    """Join the two certificates after checking that the invariant set lies in the storage domain."""
    Th, Ts = barrier.mesh, storage.mesh
    touching = np.flatnonzero(barrier.W[Th.simplices].min(axis=1) <= barrier.level)
    same = (Th.vertices.shape == Ts.vertices.shape and Th.simplices.shape == Ts.simplices.shape
            and np.array_equal(Th.vertices, Ts.vertices) and np.array_equal(Th.simplices, Ts.simplices))
    if not same and touching.size:
        probes = np.concatenate([Th.vertices[np.unique(Th.simplices[touching])], Th.centroids[touching]])
        miss = np.flatnonzero(Ts.locate_many(probes) < 0)
        if miss.size:
            raise ContainmentError(
                f"invariant set leaves the storage domain near {probes[miss[0]].round(6).tolist()}; "
                "enlarge the storage domain")
    meta = dict(metadata or {})
    meta.setdefault("gain_bound", float(np.sqrt(storage.gamma)))
    meta.setdefault("bias_term", "sqrt(2*V(x0))")
    return CombinedCertificate(storage, barrier, meta, list(history or []))
