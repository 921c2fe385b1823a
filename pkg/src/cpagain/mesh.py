"""Simplicial triangulations of boxes: construction, queries, refinement, checks.

The canonical mesh is a tensor grid split into n! simplexes per cell. Inside
each orthant the cells are split along the diagonal pointing away from the
origin, so that the simplexes fan out symmetrically around 0. Grid lines may
be graded (geometric widths) and pinned to chosen coordinates.
"""
from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

GEO_TOL = 1e-10


class MeshError(ValueError):
    pass


class PointOutsideError(MeshError):
    pass


# -- axis construction -----------------------------------------------------

def _geometric(length: float, cells: int, ratio: float) -> np.ndarray:
    """Breakpoints 0..length whose widths grow by ``ratio`` away from 0."""
    if cells == 0:
        return np.array([0.0])
    if ratio == 1.0:
        w = np.full(cells, length / cells)
    else:
        w = ratio ** np.arange(cells)
        w *= length / w.sum()
    pts = np.concatenate([[0.0], np.cumsum(w)])
    pts[-1] = length
    return pts


def _snap(pts: np.ndarray, targets: Sequence[float]) -> np.ndarray:
    """Move the nearest interior breakpoint onto each target and rescale between fixed points."""
    pts = pts.copy()
    fixed = {0: pts[0], len(pts) - 1: pts[-1]}
    for t in sorted(targets):
        interior = [k for k in range(1, len(pts) - 1) if k not in fixed]
        if not interior:
            raise MeshError(f"no free grid line left to place {t}")
        k = min(interior, key=lambda j: (abs(pts[j] - t), j))
        fixed[k] = t
    keys = sorted(fixed)
    out = pts.copy()
    for a, b in zip(keys[:-1], keys[1:]):
        src = pts[a:b + 1]
        lo, hi = fixed[a], fixed[b]
        if not lo < hi:
            raise MeshError("pinned grid lines are out of order")
        out[a:b + 1] = lo + (src - src[0]) * (hi - lo) / (src[-1] - src[0])
    return out


def graded_axis(lo: float, hi: float, cells: int, ratio: float = 1.0,
                anchors: Iterable[float] = ()) -> np.ndarray:
    """Grid breakpoints on [lo, hi] containing 0.

    ``ratio > 1`` makes cells grow geometrically away from the origin. Each
    anchor strictly inside the interval becomes an exact breakpoint.
    """
    lo, hi = float(lo), float(hi)
    if not hi > lo:
        raise MeshError(f"degenerate interval [{lo}, {hi}]")
    if lo > 0 or hi < 0:
        raise MeshError("origin not on grid: interval does not contain 0")
    if cells < 1:
        raise MeshError("need at least one cell per axis")
    neg_cells = cells * (-lo) / (hi - lo)
    if abs(neg_cells - round(neg_cells)) > 1e-9:
        raise MeshError(f"origin not on grid: {cells} cells on [{lo}, {hi}]")
    neg_cells = int(round(neg_cells))
    pos_cells = cells - neg_cells
    anchors = [float(a) for a in anchors]
    pos = _geometric(hi, pos_cells, ratio)
    neg = _geometric(-lo, neg_cells, ratio)
    pos_targets = [a for a in anchors if 0 < a < hi]
    neg_targets = [-a for a in anchors if lo < a < 0]
    if pos_targets:
        pos = _snap(pos, pos_targets)
    if neg_targets:
        neg = _snap(neg, neg_targets)
    return np.concatenate([-neg[::-1], pos[1:]]) + 0.0


# -- triangulation ---------------------------------------------------------

def _canonical_order(vertices: np.ndarray, simplices: np.ndarray, origin: int | None) -> np.ndarray:
    """Reorder each simplex: origin first if present, else the vertex closest to all others."""
    P = vertices[simplices]  # (M, n+1, n)
    d = np.linalg.norm(P[:, :, None, :] - P[:, None, :, :], axis=-1).max(axis=-1)
    first = np.argmin(d, axis=1)
    if origin is not None:
        has = simplices == origin
        first = np.where(has.any(axis=1), has.argmax(axis=1), first)
    out = simplices.copy()
    k = simplices.shape[1]
    for i in range(simplices.shape[0]):
        j = first[i]
        if j:
            row = simplices[i]
            out[i] = np.concatenate([[row[j]], row[:j], row[j + 1:]]) if j < k else row
    return out


@dataclass(frozen=True, eq=False)
class Triangulation:
    vertices: np.ndarray  # (N, n)
    simplices: np.ndarray  # (M, n+1), ordered by the origin-first convention
    box: np.ndarray  # (n, 2) bounding extents
    tags: dict = field(default_factory=dict)  # name -> frozenset of simplex ids
    axes: tuple | None = None  # grid breakpoints the mesh was cut from, if any
    tiles_box: bool = True  # the simplexes cover the whole box

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        s = np.array(self.simplices, dtype=np.int64)
        if v.ndim != 2 or s.ndim != 2 or s.shape[1] != v.shape[1] + 1:
            raise MeshError("inconsistent vertex/simplex array shapes")
        v.flags.writeable = False
        s.flags.writeable = False
        box = np.array(self.box, dtype=float).reshape(v.shape[1], 2)
        box.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "simplices", s)
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "tags", {k: frozenset(int(i) for i in ids) for k, ids in self.tags.items()})
        if self.axes is not None:
            object.__setattr__(self, "axes", tuple(np.asarray(a, dtype=float) for a in self.axes))

    @property
    def n(self) -> int:
        return self.vertices.shape[1]

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_simplices(self) -> int:
        return self.simplices.shape[0]

    def __len__(self):
        return self.num_simplices

    @cached_property
    def origin_id(self) -> int | None:
        hits = np.flatnonzero(np.all(np.abs(self.vertices) <= 1e-12, axis=1))
        return int(hits[0]) if hits.size else None

    @cached_property
    def X(self) -> np.ndarray:
        """Edge matrices: row j of X[i] is x_{i,j} - x_{i,0}."""
        P = self.vertices[self.simplices]
        return P[:, 1:, :] - P[:, :1, :]

    @cached_property
    def det(self) -> np.ndarray:
        return np.linalg.det(self.X) if self.n > 0 else np.ones(0)

    @cached_property
    def Xinv(self) -> np.ndarray:
        X = self.X
        scale = np.abs(X).max(axis=(1, 2)) ** self.n
        bad = np.abs(self.det) <= 1e-14 * np.maximum(scale, 1e-300)
        out = np.full_like(X, np.nan)
        if np.any(~bad):
            out[~bad] = np.linalg.inv(X[~bad])
        return out

    @cached_property
    def grad_ops(self) -> np.ndarray:
        """K[i] maps the n+1 vertex values of simplex i to its gradient."""
        Xi = self.Xinv
        return np.concatenate([-Xi.sum(axis=2, keepdims=True), Xi], axis=2)

    @cached_property
    def volumes(self) -> np.ndarray:
        return np.abs(self.det) / math.factorial(self.n)

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.simplices].mean(axis=1)

    @cached_property
    def _faces(self):
        """(unique sorted faces, inverse map from (simplex, omitted vertex) to face)."""
        M, k = self.simplices.shape
        faces = np.stack([np.delete(self.simplices, j, axis=1) for j in range(k)], axis=1)
        faces = np.sort(faces, axis=2).reshape(M * k, k - 1)
        uniq, inv, counts = np.unique(faces, axis=0, return_inverse=True, return_counts=True)
        return uniq, inv.reshape(M, k), counts

    @cached_property
    def adjacency(self) -> dict:
        """face (sorted vertex-id tuple) -> tuple of simplex ids sharing it."""
        uniq, inv, _ = self._faces
        owners: dict[int, list[int]] = {}
        for i, row in enumerate(inv):
            for f in row:
                owners.setdefault(int(f), []).append(i)
        return {tuple(int(a) for a in uniq[f]): tuple(ids) for f, ids in owners.items()}

    @cached_property
    def neighbors(self) -> tuple:
        """Per simplex, the sorted ids of face-adjacent simplexes."""
        out = [set() for _ in range(self.num_simplices)]
        for ids in self.adjacency.values():
            for a in ids:
                out[a].update(b for b in ids if b != a)
        return tuple(tuple(sorted(s)) for s in out)

    @cached_property
    def boundary_vertex_ids(self) -> np.ndarray:
        """Vertices on faces that belong to a single simplex."""
        uniq, _, counts = self._faces
        return np.unique(uniq[counts == 1])

    @cached_property
    def _index(self) -> "_BucketIndex":
        return _BucketIndex(self)

    # -- point queries --

    def barycentric(self, i: int, x, tol: float = GEO_TOL) -> np.ndarray:
        lam = self.barycentric_many(np.full(1, i), np.atleast_2d(x))[0]
        if lam.min() < -tol:
            raise PointOutsideError(f"point {np.asarray(x).tolist()} is outside simplex {i}")
        return lam

    def barycentric_many(self, ids, points) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        pts = np.asarray(points, dtype=float)
        d = pts - self.vertices[self.simplices[ids, 0]]
        mu = np.einsum("pn,pnm->pm", d, self.Xinv[ids])
        return np.concatenate([1.0 - mu.sum(axis=1, keepdims=True), mu], axis=1)

    def locate(self, x, tol: float = GEO_TOL) -> int:
        i = int(self.locate_many(np.atleast_2d(x), tol)[0])
        if i < 0:
            raise PointOutsideError(f"point {np.asarray(x).tolist()} is outside the triangulation")
        return i

    def locate_many(self, points, tol: float = GEO_TOL) -> np.ndarray:
        """Lowest-id simplex containing each point, or -1."""
        cand, inside = self._index.query(np.asarray(points, dtype=float), tol)
        hit = inside.any(axis=1)
        first = inside.argmax(axis=1)
        return np.where(hit, cand[np.arange(len(cand)), first], -1)

    def containing(self, x, tol: float = GEO_TOL) -> list[int]:
        """All simplexes containing x, in id order."""
        cand, inside = self._index.query(np.atleast_2d(np.asarray(x, dtype=float)), tol)
        return sorted(int(c) for c in cand[0][inside[0]])

    # -- derived meshes --

    def submesh(self, ids: Iterable[int]):
        """Mesh restricted to ``ids``. Returns (mesh, old vertex id per new vertex)."""
        ids = np.array(sorted(set(int(i) for i in ids)), dtype=np.int64)
        if ids.size == 0:
            raise MeshError("empty sub-triangulation")
        used = np.unique(self.simplices[ids])
        remap = np.full(self.num_vertices, -1, dtype=np.int64)
        remap[used] = np.arange(used.size)
        pos = {int(old): k for k, old in enumerate(ids)}
        tags = {k: [pos[i] for i in v if i in pos] for k, v in self.tags.items()}
        verts = self.vertices[used]
        box = np.stack([verts.min(axis=0), verts.max(axis=0)], axis=1)
        sub = Triangulation(verts, remap[self.simplices[ids]], box, tags, self.axes,
                            tiles_box=bool(self.tiles_box and ids.size == self.num_simplices))
        return sub, used

    def to_dict(self) -> dict:
        out = {
            "n": self.n,
            "vertices": self.vertices.tolist(),
            "simplexes": self.simplices.tolist(),
            "tags": {k: sorted(v) for k, v in sorted(self.tags.items())},
            "box": self.box.tolist(),
            "tiles_box": self.tiles_box,
        }
        if self.axes is not None:
            out["axes"] = [a.tolist() for a in self.axes]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Triangulation":
        try:
            verts = np.asarray(data["vertices"], dtype=float).reshape(-1, int(data["n"]))
            simp = np.asarray(data["simplexes"], dtype=np.int64).reshape(-1, int(data["n"]) + 1)
        except (KeyError, ValueError, TypeError) as err:
            raise MeshError(f"malformed mesh record: {err}") from err
        if simp.size and (simp.min() < 0 or simp.max() >= len(verts)):
            raise MeshError("simplex refers to a missing vertex")
        box = data.get("box")
        if box is None:
            box = np.stack([verts.min(axis=0), verts.max(axis=0)], axis=1)
        axes = data.get("axes")
        return cls(verts, simp, box, data.get("tags", {}),
                   tuple(axes) if axes is not None else None, bool(data.get("tiles_box", True)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "Triangulation":
        return cls.from_dict(json.loads(text))


class _BucketIndex:
    """Uniform bucket grid over the bounding box; each bucket lists overlapping simplexes."""

    def __init__(self, T: Triangulation):
        n, M = T.n, T.num_simplices
        P = T.vertices[T.simplices]
        lo_all = T.vertices.min(axis=0)
        hi_all = T.vertices.max(axis=0)
        span = np.maximum(hi_all - lo_all, 1e-300)
        per_axis = max(1, int(round((M / 2.0) ** (1.0 / n))))
        self.lo, self.span, self.nb = lo_all, span, per_axis
        pad = 1e-9 * span
        smin = np.clip(((P.min(axis=1) - pad - lo_all) / span * per_axis).astype(int), 0, per_axis - 1)
        smax = np.clip(((P.max(axis=1) + pad - lo_all) / span * per_axis).astype(int), 0, per_axis - 1)
        buckets: list[list[int]] = [[] for _ in range(per_axis ** n)]
        strides = per_axis ** np.arange(n)
        for i in range(M):
            ranges = [range(smin[i, a], smax[i, a] + 1) for a in range(n)]
            for cell in itertools.product(*ranges):
                buckets[int(np.dot(cell, strides))].append(i)
        width = max(1, max(len(b) for b in buckets))
        table = np.full((len(buckets), width), -1, dtype=np.int64)
        for k, b in enumerate(buckets):
            table[k, :len(b)] = b
        self.table, self.strides, self.T = table, strides, T
        self.x0 = T.vertices[T.simplices[:, 0]]

    def query(self, pts: np.ndarray, tol: float, chunk: int = 20000):
        """Candidate ids (P, K) and a mask of those whose closed simplex contains the point."""
        T = self.T
        cands, masks = [], []
        for start in range(0, len(pts), chunk):
            p = pts[start:start + chunk]
            rel = (p - self.lo) / self.span
            outside = np.any((rel < -1e-9) | (rel > 1 + 1e-9), axis=1)
            cell = np.clip((rel * self.nb).astype(int), 0, self.nb - 1)
            cand = self.table[cell @ self.strides]
            safe = np.where(cand >= 0, cand, 0)
            d = p[:, None, :] - self.x0[safe]
            with np.errstate(invalid="ignore"):
                mu = np.einsum("pkn,pknm->pkm", d, T.Xinv[safe])
                lam0 = 1.0 - mu.sum(axis=2)
                lam_min = np.minimum(lam0, mu.min(axis=2))
            inside = (cand >= 0) & (lam_min >= -tol) & ~outside[:, None]
            cands.append(cand)
            masks.append(inside)
        if not cands:
            return np.zeros((0, 1), dtype=np.int64), np.zeros((0, 1), dtype=bool)
        return np.concatenate(cands), np.concatenate(masks)


def _box_array(box, n=None) -> np.ndarray:
    b = np.asarray(box, dtype=float)
    if b.ndim == 1 and b.size == 2:
        b = b.reshape(1, 2)
    if b.ndim != 2 or b.shape[1] != 2 or (n is not None and b.shape[0] != n):
        raise MeshError("box must be a list of (lo, hi) pairs")
    if np.any(b[:, 1] <= b[:, 0]):
        raise MeshError("degenerate box")
    return b


def kuhn_from_axes(axes: Sequence[np.ndarray]) -> Triangulation:
    """Split every cell of the tensor grid into n! simplexes, reflected per orthant."""
    axes = [np.asarray(a, dtype=float) for a in axes]
    n = len(axes)
    for a in axes:
        if a.ndim != 1 or a.size < 2 or np.any(np.diff(a) <= 0):
            raise MeshError("grid breakpoints must be strictly increasing")
        if not np.any(a == 0.0):
            raise MeshError("origin not on grid")
    shape = tuple(a.size for a in axes)
    grids = np.meshgrid(*axes, indexing="ij")
    vertices = np.stack([g.ravel() for g in grids], axis=1)

    cells = np.stack(np.meshgrid(*[np.arange(s - 1) for s in shape], indexing="ij"), axis=-1).reshape(-1, n)
    lower = np.stack([axes[k][cells[:, k]] for k in range(n)], axis=1)
    positive = lower >= 0.0
    base = np.where(positive, cells, cells + 1)
    step = np.where(positive, 1, -1)
    perms = list(itertools.permutations(range(n)))
    eye = np.eye(n, dtype=np.int64)
    per_perm = []
    for perm in perms:
        path = [base]
        cur = base
        for k in perm:
            cur = cur + step * eye[k]
            path.append(cur)
        multi = np.stack(path, axis=1)  # (C, n+1, n)
        per_perm.append(np.ravel_multi_index(tuple(multi[..., k] for k in range(n)), shape))
    simplices = np.stack(per_perm, axis=1).reshape(-1, n + 1)
    origin = int(np.ravel_multi_index(tuple(int(np.flatnonzero(a == 0.0)[0]) for a in axes), shape))
    simplices = _canonical_order(vertices, simplices, origin)
    box = np.array([[a[0], a[-1]] for a in axes])
    return Triangulation(vertices, simplices, box, {}, tuple(axes), True)


def kuhn_triangulate(box, grid, ratio: float = 1.0, anchors: Iterable[float] = ()) -> Triangulation:
    """Triangulate an axis-aligned box on a (possibly graded) tensor grid.

    ``grid`` is the cell count, per axis or shared. The origin must fall on a
    grid line of every axis.
    """
    b = _box_array(box)
    n = b.shape[0]
    counts = [int(grid)] * n if np.isscalar(grid) else [int(g) for g in grid]
    if len(counts) != n:
        raise MeshError("grid needs one cell count per axis")
    anchors = list(anchors)
    axes = [graded_axis(b[k, 0], b[k, 1], counts[k], ratio, anchors) for k in range(n)]
    return kuhn_from_axes(axes)


# -- regions ---------------------------------------------------------------

@dataclass(frozen=True)
class Region:
    """A union of simplexes of one triangulation."""

    mesh: Triangulation = field(repr=False)
    ids: frozenset

    @property
    def vertex_ids(self) -> np.ndarray:
        if not self.ids:
            return np.zeros(0, dtype=np.int64)
        return np.unique(self.mesh.simplices[sorted(self.ids)])

    def volume(self) -> float:
        return float(self.mesh.volumes[sorted(self.ids)].sum()) if self.ids else 0.0

    def is_connected(self) -> bool:
        if not self.ids:
            return True
        start = min(self.ids)
        seen, stack = {start}, [start]
        while stack:
            i = stack.pop()
            for j in self.mesh.neighbors[i]:
                if j in self.ids and j not in seen:
                    seen.add(j)
                    stack.append(j)
        return len(seen) == len(self.ids)


def region_from_box(T: Triangulation, box, tol: float = 1e-9) -> Region:
    """Simplexes lying inside ``box``; the box must be an exact union of them."""
    b = _box_array(box, T.n)
    P = T.vertices[T.simplices]
    inside = np.all((P >= b[:, 0] - tol) & (P <= b[:, 1] + tol), axis=(1, 2))
    region = Region(T, frozenset(int(i) for i in np.flatnonzero(inside)))
    target = float(np.prod(b[:, 1] - b[:, 0]))
    if abs(region.volume() - target) > 1e-9 * max(1.0, target):
        raise MeshError(f"box {b.tolist()} is not a union of simplexes (faces off the grid)")
    return region


def shell_indices(T: Triangulation, A1: Region | Iterable[int]) -> tuple[int, ...]:
    """Simplexes not contained in A1."""
    ids = A1.ids if isinstance(A1, Region) else frozenset(int(i) for i in A1)
    bad = [i for i in ids if not 0 <= i < T.num_simplices]
    if bad:
        raise MeshError(f"region refers to missing simplexes {bad[:5]}")
    return tuple(i for i in range(T.num_simplices) if i not in ids)


# -- refinement ------------------------------------------------------------

def _merge_vertices(parent: Triangulation, verts: np.ndarray, simplices: np.ndarray):
    """Renumber so the parent's vertices keep their ids and new ones follow."""
    key = lambda p: tuple(np.round(p, 12) + 0.0)
    index = {key(p): k for k, p in enumerate(parent.vertices)}
    remap = np.empty(len(verts), dtype=np.int64)
    extra = []
    for k, p in enumerate(verts):
        j = index.get(key(p))
        if j is None:
            j = parent.num_vertices + len(extra)
            index[key(p)] = j
            extra.append(p)
        remap[k] = j
    used_parent = set(np.unique(parent.simplices).tolist())
    all_verts = np.concatenate([parent.vertices, np.array(extra).reshape(-1, parent.n)]) if extra else parent.vertices
    new_simp = remap[simplices]
    missing = used_parent - set(np.unique(new_simp).tolist())
    if missing:
        raise MeshError(f"refinement dropped parent vertices {sorted(missing)[:5]}")
    return all_verts, new_simp


def _inherit_tags(parent: Triangulation, parent_of: np.ndarray) -> dict:
    return {name: [c for c, p in enumerate(parent_of) if p in ids] for name, ids in parent.tags.items()}


def _finish(parent: Triangulation, verts, simplices, parent_of, axes, tiles_box):
    origin = None
    hits = np.flatnonzero(np.all(np.abs(verts) <= 1e-12, axis=1))
    if hits.size:
        origin = int(hits[0])
    simplices = _canonical_order(verts, np.asarray(simplices, dtype=np.int64), origin)
    return Triangulation(verts, simplices, parent.box, _inherit_tags(parent, parent_of), axes, tiles_box)


def _refine_grid(T: Triangulation) -> Triangulation:
    axes = [np.sort(np.concatenate([a, 0.5 * (a[1:] + a[:-1])])) for a in T.axes]
    fine = kuhn_from_axes(axes)
    parent_of = T.locate_many(fine.centroids)
    keep = np.flatnonzero(parent_of >= 0)
    sub_simp = fine.simplices[keep]
    used = np.unique(sub_simp)
    remap = np.full(fine.num_vertices, -1, dtype=np.int64)
    remap[used] = np.arange(used.size)
    verts, simp = _merge_vertices(T, fine.vertices[used], remap[sub_simp])
    # drop parent vertices that no simplex used before or after (only possible for sub-meshes)
    return _finish(T, verts, simp, parent_of[keep], tuple(axes), T.tiles_box)


def _refine_1d(T: Triangulation, chosen: set[int]) -> Triangulation:
    verts = [p for p in T.vertices]
    simp, parent_of = [], []
    for i, (a, b) in enumerate(T.simplices):
        if i in chosen:
            verts.append(0.5 * (T.vertices[a] + T.vertices[b]))
            m = len(verts) - 1
            simp += [[a, m], [m, b]]
            parent_of += [i, i]
        else:
            simp.append([a, b])
            parent_of.append(i)
    return _finish(T, np.array(verts), np.array(simp), np.array(parent_of), None, T.tiles_box)


def _edges(tri) -> list[tuple[int, int]]:
    a, b, c = (int(v) for v in tri)
    return [tuple(sorted(e)) for e in ((a, b), (b, c), (a, c))]


def _refine_2d(T: Triangulation, chosen: set[int]) -> Triangulation:
    red = set(chosen)
    while True:
        split = {e for i in red for e in _edges(T.simplices[i])}
        grow = {i for i in range(T.num_simplices) if i not in red
                and sum(e in split for e in _edges(T.simplices[i])) >= 2}
        if not grow:
            break
        red |= grow
    split = {e for i in red for e in _edges(T.simplices[i])}
    verts = [p for p in T.vertices]
    mid: dict[tuple[int, int], int] = {}
    for e in sorted(split):
        verts.append(0.5 * (T.vertices[e[0]] + T.vertices[e[1]]))
        mid[e] = len(verts) - 1
    simp, parent_of = [], []
    for i, tri in enumerate(T.simplices):
        a, b, c = (int(v) for v in tri)
        if i in red:
            ab, bc, ac = mid[tuple(sorted((a, b)))], mid[tuple(sorted((b, c)))], mid[tuple(sorted((a, c)))]
            kids = [[a, ab, ac], [b, bc, ab], [c, ac, bc], [ab, bc, ac]]
        else:
            hit = [e for e in _edges(tri) if e in split]
            if hit:
                p, q = hit[0]
                r = ({a, b, c} - {p, q}).pop()
                kids = [[r, p, mid[hit[0]]], [r, mid[hit[0]], q]]
            else:
                kids = [[a, b, c]]
        simp += kids
        parent_of += [i] * len(kids)
    return _finish(T, np.array(verts), np.array(simp), np.array(parent_of), None, T.tiles_box)


def refine(T: Triangulation, which="all") -> Triangulation:
    """Subdivide the chosen simplexes (or all of them), keeping the mesh conforming.

    Parent vertex ids are preserved; new vertices are appended.
    """
    if isinstance(which, str):
        if which != "all":
            raise MeshError(f"unknown refinement selection {which!r}")
        chosen = set(range(T.num_simplices))
    else:
        chosen = {int(i) for i in which}
        if not chosen:
            return T
        bad = [i for i in chosen if not 0 <= i < T.num_simplices]
        if bad:
            raise MeshError(f"cannot refine missing simplexes {sorted(bad)[:5]}")
    everything = len(chosen) == T.num_simplices
    if T.n == 1:
        return _refine_1d(T, chosen)
    if everything and T.axes is not None:
        return _refine_grid(T)
    if T.n == 2:
        return _refine_2d(T, chosen)
    if T.axes is None:
        raise MeshError("refinement in 3 or more dimensions needs a grid-based mesh")
    log.warning("selective refinement in %d dimensions is expanded to the whole mesh", T.n)
    return _refine_grid(T)


# -- validation ------------------------------------------------------------

def validate(T: Triangulation, tol: float = 1e-9) -> list[str]:
    """Problems found in ``T``; an empty list means the mesh is sound."""
    report: list[str] = []
    if not np.all(np.isfinite(T.vertices)):
        report.append("non-finite vertex coordinates")
        return report
    uniq, inv, counts = np.unique(T.vertices, axis=0, return_inverse=True, return_counts=True)
    for k in np.flatnonzero(counts > 1):
        ids = np.flatnonzero(inv.ravel() == k)
        report.append(f"duplicate vertex coordinates at ids {ids.tolist()}")

    for i, row in enumerate(T.simplices):
        if len(set(row.tolist())) < len(row):
            report.append(f"simplex {i}: repeated vertex id")
    scale = np.abs(T.X).max(axis=(1, 2), initial=0.0) ** T.n
    degenerate = np.abs(T.det) <= 1e-12 * np.maximum(scale, 1e-300)
    for i in np.flatnonzero(degenerate):
        report.append(f"simplex {i}: affine-independence failure (vertices {T.simplices[i].tolist()})")

    origin = T.origin_id
    if origin is not None:
        for i, row in enumerate(T.simplices):
            if origin in row and row[0] != origin:
                report.append(f"simplex {i}: origin vertex not listed first")

    uniq_f, _, fcount = T._faces
    for f in np.flatnonzero(fcount > 2):
        report.append(f"face {uniq_f[f].tolist()} shared by {fcount[f]} simplexes")

    good = np.flatnonzero(~degenerate)
    if good.size:
        probe = T.centroids[good]
        cand, inside = T._index.query(probe, -1e-9)  # strictly interior
        for r, i in enumerate(good):
            others = [int(c) for c in cand[r][inside[r]] if c != i and not degenerate[c]]
            if others:
                report.append(f"simplexes {int(i)} and {others[0]} overlap (face condition violated)")
        cand, inside = T._index.query(T.vertices, GEO_TOL)
        for v in range(T.num_vertices):
            for c in cand[v][inside[v]]:
                if not degenerate[c] and v not in T.simplices[c]:
                    report.append(f"vertex {v} lies in simplex {int(c)} without being one of its vertices")

    if T.tiles_box:
        total = float(T.volumes.sum())
        target = float(np.prod(T.box[:, 1] - T.box[:, 0]))
        if abs(total - target) > tol * max(1.0, target):
            report.append(f"simplex volumes sum to {total}, box volume is {target}")
    return report
