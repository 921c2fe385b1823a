"""Per-simplex geometric and curvature constants.

For a simplex with base vertex x0 and edge lengths d_j = |x_j - x0| the
interpolation constant is c_j = (n/2) d_j (max_k d_k + d_j). Curvature
constants bound the magnitude of second partial derivatives over the
simplex, using interval arithmetic on its axis-aligned bounding box.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import expr as ex
from .interval import Interval, IntervalDomainError
from .mesh import Triangulation
from .system import SystemSpec

# The interpolation bound needs ||y||_1^2 <= n ||y||^2, which holds for p-norms with 1 <= p <= 2.
NORM_KINDS = {"2": 2, "1": 1}


class BoundsError(ValueError):
    pass


def _check_norm(norm_kind: str) -> int:
    key = str(norm_kind)
    if key not in NORM_KINDS:
        raise BoundsError(f"norm {norm_kind!r} unsupported; the interpolation bound is valid for '1' and '2'")
    return NORM_KINDS[key]


def cij(points, norm_kind: str = "2") -> np.ndarray:
    """Constants for one simplex given as an (n+1, n) array of vertices, base vertex first."""
    return cij_many(np.asarray(points, dtype=float)[None], norm_kind)[0]


def cij_many(P: np.ndarray, norm_kind: str = "2") -> np.ndarray:
    ord_ = _check_norm(norm_kind)
    n = P.shape[2]
    d = np.linalg.norm(P - P[:, :1, :], ord=ord_, axis=2)
    return 0.5 * n * d * (d.max(axis=1, keepdims=True) + d)


def _boxes(P: np.ndarray) -> list[Interval]:
    lo, hi = P.min(axis=1), P.max(axis=1)
    return [Interval(lo[:, k], hi[:, k]) for k in range(P.shape[2])]


def _entry_mags(entries, box, count: int) -> dict:
    """Map (k, r, s) -> magnitude bound array over the boxes."""
    out = {}
    for k, r, s, e in entries:
        out[(k, r, s)] = np.broadcast_to(ex.interval_eval(e, box).mag(), (count,))
    return out


def _hessian_bound(entries, box, count: int) -> np.ndarray:
    mags = _entry_mags(entries, box, count)
    if not mags:
        return np.zeros(count)
    return np.max(np.stack(list(mags.values())), axis=0)


def hessian_bound_f(sys: SystemSpec, points) -> np.ndarray:
    """Largest |d2 f_p / dx_q dx_r| over the bounding box of each simplex. ``points``: (M, n+1, n)."""
    P = np.asarray(points, dtype=float).reshape(-1, sys.n + 1, sys.n)
    return _hessian_bound(sys.f_hessians, _boxes(P), len(P))


def hessian_bound_hh(sys: SystemSpec, points) -> np.ndarray:
    P = np.asarray(points, dtype=float).reshape(-1, sys.n + 1, sys.n)
    return _hessian_bound(sys.hh_hessian, _boxes(P), len(P))


def hessian_bound_gbar(sys: SystemSpec, points) -> np.ndarray:
    """Curvature bound for the max-row-sum norm of G G^T.

    On every smooth piece the Hessian of a row sum of |entries| is a signed sum
    of entry Hessians, so summing the entry bounds along each row covers all
    pieces at once.
    """
    P = np.asarray(points, dtype=float).reshape(-1, sys.n + 1, sys.n)
    n, count = sys.n, len(P)
    mags = _entry_mags(sys.ggt_hessians, _boxes(P), count)
    best = np.zeros(count)
    for row in range(n):
        for r in range(n):
            for s in range(r, n):
                total = np.zeros(count)
                for col in range(n):
                    key = (row * n + col, r, s)
                    if key in mags:
                        total = total + mags[key]
                best = np.maximum(best, total)
    return best


def g_norm_bound(sys: SystemSpec, points) -> np.ndarray:
    """Upper bound of max absolute row sum of G over each bounding box."""
    P = np.asarray(points, dtype=float).reshape(-1, sys.n + 1, sys.n)
    box = _boxes(P)
    best = np.zeros(len(P))
    for row in sys.G:
        total = np.zeros(len(P))
        for e in row:
            total = total + ex.interval_eval(e, box).mag()
        best = np.maximum(best, total)
    return best


@dataclass(frozen=True, eq=False)
class SimplexBounds:
    c: np.ndarray  # (M, n+1)
    beta_f: np.ndarray  # (M,)
    beta_hh: np.ndarray
    beta_gbar: np.ndarray
    ghat: np.ndarray
    norm_kind: str = "2"

    def to_dict(self) -> dict:
        return {
            "norm_kind": self.norm_kind,
            "c": self.c.tolist(),
            "beta_f": self.beta_f.tolist(),
            "beta_hh": self.beta_hh.tolist(),
            "beta_gbar": self.beta_gbar.tolist(),
            "ghat": self.ghat.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SimplexBounds":
        arr = lambda k: np.asarray(data[k], dtype=float)
        return cls(arr("c"), arr("beta_f"), arr("beta_hh"), arr("beta_gbar"), arr("ghat"),
                   str(data.get("norm_kind", "2")))


def _compute_chunk(sys: SystemSpec, P: np.ndarray):
    return (hessian_bound_f(sys, P), hessian_bound_hh(sys, P),
            hessian_bound_gbar(sys, P), g_norm_bound(sys, P))


def compute_bounds(sys: SystemSpec, T: Triangulation, norm_kind: str = "2", threads: int = 1) -> SimplexBounds:
    if T.n != sys.n:
        raise BoundsError(f"mesh dimension {T.n} does not match system dimension {sys.n}")
    P = T.vertices[T.simplices]
    c = cij_many(P, norm_kind)
    chunks = np.array_split(np.arange(len(P)), max(1, int(threads)))
    chunks = [ids for ids in chunks if ids.size]
    try:
        if len(chunks) > 1:
            with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
                parts = list(pool.map(lambda ids: _compute_chunk(sys, P[ids]), chunks))
        else:
            parts = [_compute_chunk(sys, P)]
    except IntervalDomainError as err:
        raise BoundsError(f"curvature bound blew up: {err}; {_first_bad(sys, P)}") from err
    cols = [np.concatenate([p[k] for p in parts]) for k in range(4)]
    return SimplexBounds(c, *cols, norm_kind=str(norm_kind))


def _first_bad(sys: SystemSpec, P: np.ndarray) -> str:
    for i in range(len(P)):
        try:
            _compute_chunk(sys, P[i:i + 1])
        except IntervalDomainError:
            return f"first failing simplex {i} with vertices {P[i].tolist()}"
    return "no single simplex reproduces the failure"
