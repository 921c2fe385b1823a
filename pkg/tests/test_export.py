import numpy as np
import pytest

from cpagain import export as X
from cpagain import mesh as M
from cpagain.cpa import CpaFunction


def test_mesh_edges_counts():
    T = M.kuhn_triangulate([[-1, 1], [-1, 1]], 2)
    assert len(X.mesh_edges(T)) == 16  # V - E + F = 1 for a disc: 9 - 16 + 8
    header, rows = X.edge_rows(T)
    assert header == ["a", "b", "a_x1", "a_x2", "b_x1", "b_x2"] and len(rows) == 16


def test_level_polyline_of_a_cone_is_closed():
    T = M.kuhn_triangulate([[-1, 1], [-1, 1]], 8)
    c = CpaFunction(T, np.abs(T.vertices).sum(axis=1))
    lines = X.level_polylines(c, 0.6)
    assert len(lines) == 1
    loop = lines[0]
    assert np.array_equal(loop[0], loop[-1])
    assert np.allclose(np.abs(loop).sum(axis=1), 0.6)
    assert abs(X.winding_number(loop, [0, 0])) == 1
    assert X.winding_number(loop, [0.9, 0.9]) == 0


def test_level_segments_need_two_dimensions():
    T = M.kuhn_triangulate([[-1, 1]], 4)
    with pytest.raises(X.UnsupportedExport):
        X.level_segments(CpaFunction(T, np.abs(T.vertices[:, 0])), 0.5)


def test_reference_levelset_encloses_origin(reference_cert):
    header, rows = X.levelset_rows(reference_cert)
    assert header == ["polyline", "point", "x1", "x2"]
    lines = X.level_polylines(reference_cert.barrier.function, reference_cert.barrier.level)
    closed = [p for p in lines if np.array_equal(p[0], p[-1])]
    assert closed and any(abs(X.winding_number(p, [0, 0])) == 1 for p in closed)


def test_history_tables_schema(reference_cert):
    tables = X.history_tables(reference_cert.history)
    assert tables["storage"][0] == ["iter", "J", "b1", "sqrt_gamma"]
    assert tables["barrier"][0] == ["iter", "J", "b2", "uhat"]
    assert tables["storage"][1] and tables["barrier"][1]
    last = tables["storage"][1][-1]
    assert last[3] == pytest.approx(reference_cert.gain)


def test_field_grid_rows(reference_cert):
    header, pts, V, W, axes = X.field_grid(reference_cert, 100)
    assert header == ["x1", "x2", "V", "W"] and len(pts) == 10_000
    assert np.all(np.isfinite(V)) and np.all(np.isfinite(W))
