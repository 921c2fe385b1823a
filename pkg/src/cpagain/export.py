"""Plot-ready tables derived from a certificate: mesh edges, level-set contour, histories, sampled fields."""
from __future__ import annotations

from collections import defaultdict

import numpy as np

from .certify import CombinedCertificate
from .cpa import CpaFunction
from .mesh import Triangulation


class UnsupportedExport(ValueError):
    pass


def mesh_edges(T: Triangulation) -> np.ndarray:
    """Unique edges as sorted vertex-id pairs, (E, 2)."""
    n = T.n
    pairs = [T.simplices[:, [a, b]] for a in range(n + 1) for b in range(a + 1, n + 1)]
    e = np.sort(np.concatenate(pairs), axis=1)
    return np.unique(e, axis=0)


def edge_rows(T: Triangulation) -> tuple[list, list]:
    n = T.n
    header = ["a", "b"] + [f"a_x{k + 1}" for k in range(n)] + [f"b_x{k + 1}" for k in range(n)]
    E = mesh_edges(T)
    rows = [[int(a), int(b), *T.vertices[a].tolist(), *T.vertices[b].tolist()] for a, b in E]
    return header, rows


def level_segments(c: CpaFunction, level: float) -> list[tuple]:
    """Per-triangle pieces of {c = level}. Each endpoint comes with a key shared by neighbours."""
    T = c.mesh
    if T.n != 2:
        raise UnsupportedExport(f"level-set contours need a 2-D mesh, got n = {T.n}")
    v = c.values - level
    above = v > 0
    segs = []
    for i, tri in enumerate(T.simplices):
        ends = []
        for a, b in ((0, 1), (1, 2), (0, 2)):
            p, q = int(tri[a]), int(tri[b])
            if above[p] == above[q]:
                continue
            t = v[p] / (v[p] - v[q])
            if t <= 0.0:
                key, x = ("v", p), T.vertices[p]
            elif t >= 1.0:
                key, x = ("v", q), T.vertices[q]
            else:
                key, x = ("e", min(p, q), max(p, q)), T.vertices[p] + t * (T.vertices[q] - T.vertices[p])
            ends.append((key, x))
        if len(ends) == 2 and ends[0][0] != ends[1][0]:
            segs.append((i, ends[0], ends[1]))
    return segs


def level_polylines(c: CpaFunction, level: float) -> list[np.ndarray]:
    """Chain contour segments into polylines; closed ones repeat their first point at the end."""
    segs = level_segments(c, level)
    adj = defaultdict(list)
    point = {}
    for k, (_, (ka, xa), (kb, xb)) in enumerate(segs):
        adj[ka].append((k, kb))
        adj[kb].append((k, ka))
        point[ka], point[kb] = xa, xb
    used = np.zeros(len(segs), dtype=bool)
    lines = []
    # Open chains start at degree-1 ends; remaining segments form loops.
    starts = [key for key in adj if len(adj[key]) == 1] + list(adj)
    for start in starts:
        if not any(not used[k] for k, _ in adj[start]):
            continue
        chain = [start]
        cur = start
        while True:
            nxt = next(((k, other) for k, other in adj[cur] if not used[k]), None)
            if nxt is None:
                break
            used[nxt[0]] = True
            cur = nxt[1]
            chain.append(cur)
            if cur == start:
                break
        lines.append(np.array([point[key] for key in chain]))
    return lines


def winding_number(poly: np.ndarray, x) -> int:
    """Winding number of a closed polyline around x."""
    d = poly - np.asarray(x, dtype=float)
    ang = np.arctan2(d[:, 1], d[:, 0])
    turn = np.diff(ang)
    turn = (turn + np.pi) % (2 * np.pi) - np.pi
    return int(round(turn.sum() / (2 * np.pi)))


def levelset_rows(cert: CombinedCertificate) -> tuple[list, list]:
    lines = level_polylines(cert.barrier.function, cert.barrier.level)
    rows = [[k, j, *p.tolist()] for k, line in enumerate(lines) for j, p in enumerate(line)]
    return ["polyline", "point", "x1", "x2"], rows


def history_tables(history: list) -> dict:
    """Storage rows (iter, J, b1, sqrt_gamma) and barrier rows (iter, J, b2, uhat)."""
    storage, barrier = [], []
    for rec in history:
        tag = rec.get("objective_tag")
        phase = rec.get("phase") or ("storage" if tag in ("-b1", "gamma") else "barrier")
        s = rec.get("s")
        if phase == "storage":
            storage.append([rec.get("iter"), rec.get("J"), rec.get("b"), None if s is None else float(np.sqrt(s))])
        else:
            barrier.append([rec.get("iter"), rec.get("J"), rec.get("b"), s])
    return {
        "storage": (["iter", "J", "b1", "sqrt_gamma"], storage),
        "barrier": (["iter", "J", "b2", "uhat"], barrier),
    }


def field_grid(cert: CombinedCertificate, resolution: int = 100):
    """V and W on a regular grid over the union of both domains. Rows: x..., V, W (NaN outside)."""
    n = cert.storage.mesh.n
    box = np.stack([np.minimum(cert.storage.mesh.box[:, 0], cert.barrier.mesh.box[:, 0]),
                    np.maximum(cert.storage.mesh.box[:, 1], cert.barrier.mesh.box[:, 1])], axis=1)
    axes = [np.linspace(lo, hi, resolution) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    V = cert.storage.function.evaluate_many(pts)
    W = cert.barrier.function.evaluate_many(pts)
    header = [f"x{k + 1}" for k in range(n)] + ["V", "W"]
    return header, pts, V, W, axes
