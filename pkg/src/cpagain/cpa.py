"""Continuous piecewise-affine functions on a triangulation."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .mesh import GEO_TOL, PointOutsideError, Region, Triangulation

LEVEL_MARGIN = 1e-6


class ContainmentError(ValueError):
    def __init__(self, message: str, vertex: int | None = None):
        super().__init__(message)
        self.vertex = vertex


@dataclass(frozen=True, eq=False)
class CpaFunction:
    mesh: Triangulation
    values: np.ndarray  # one value per vertex

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.mesh.num_vertices,):
            raise ValueError(f"expected {self.mesh.num_vertices} vertex values, got shape {v.shape}")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @cached_property
    def gradients(self) -> np.ndarray:
        """(M, n) array; row i is X_i^{-1} applied to the value differences of simplex i."""
        return simplex_gradients(self.mesh, self.values)

    @cached_property
    def offsets(self) -> np.ndarray:
        x0 = self.mesh.vertices[self.mesh.simplices[:, 0]]
        return self.values[self.mesh.simplices[:, 0]] - np.einsum("in,in->i", self.gradients, x0)

    def gradient(self, i: int) -> np.ndarray:
        return self.gradients[i].copy()

    def evaluate(self, x) -> float:
        out = self.evaluate_many(np.atleast_2d(x))
        if np.isnan(out[0]):
            raise PointOutsideError(f"point {np.asarray(x).tolist()} is outside the domain")
        return float(out[0])

    def evaluate_many(self, points) -> np.ndarray:
        """Barycentric interpolation; NaN for points outside the mesh."""
        pts = np.asarray(points, dtype=float)
        ids = self.mesh.locate_many(pts)
        out = np.full(len(pts), np.nan)
        ok = ids >= 0
        if np.any(ok):
            lam = self.mesh.barycentric_many(ids[ok], pts[ok])
            out[ok] = np.einsum("pj,pj->p", lam, self.values[self.mesh.simplices[ids[ok]]])
        return out

    def dini(self, x, v) -> float:
        """Upper directional derivative along v: max rate over the simplexes holding x."""
        v = np.asarray(v, dtype=float)
        if not np.any(v):
            return 0.0
        ids = self.mesh.containing(x)
        if not ids:
            raise PointOutsideError(f"point {np.asarray(x).tolist()} is outside the domain")
        return float(max(self.gradients[i] @ v for i in ids))


def simplex_gradients(T: Triangulation, values: np.ndarray) -> np.ndarray:
    return np.einsum("inj,ij->in", T.grad_ops, np.asarray(values, dtype=float)[T.simplices])


def largest_interior_sublevel(c: CpaFunction, A1: Region, boundary_vertices=None) -> float:
    """Level just below the smallest boundary value; A1 must sit strictly beneath it."""
    T = c.mesh
    bnd = T.boundary_vertex_ids if boundary_vertices is None else np.asarray(boundary_vertices)
    if bnd.size == 0:
        raise ContainmentError("triangulation has no boundary vertices")
    level = (1.0 - LEVEL_MARGIN) * float(c.values[bnd].min())
    inner = A1.vertex_ids
    if inner.size:
        k = int(np.argmax(c.values[inner]))
        worst = int(inner[k])
        if c.values[worst] >= level:
            raise ContainmentError(
                f"inner set not inside the sublevel set: vertex {worst} at {T.vertices[worst].tolist()} "
                f"has value {c.values[worst]:.6g} >= level {level:.6g}", worst)
    return level


def sublevel_membership(c: CpaFunction, level: float, x) -> bool:
    return c.evaluate(x) <= level


def sublevel_simplices(c: CpaFunction, level: float) -> np.ndarray:
    """Ids of simplexes whose vertices all lie in the closed sublevel set."""
    return np.flatnonzero(np.all(c.values[c.mesh.simplices] <= level, axis=1))


__all__ = [
    "ContainmentError", "CpaFunction", "GEO_TOL", "LEVEL_MARGIN", "largest_interior_sublevel",
    "simplex_gradients", "sublevel_membership", "sublevel_simplices",
]
