import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cpagain import mesh as M


def unit_triangle():
    return M.Triangulation(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]),
                           [[0, 1], [0, 1]], tiles_box=False)


def brute_locate(T, x, tol=1e-10):
    for i in range(T.num_simplices):
        P = T.vertices[T.simplices[i]]
        lam = np.linalg.solve(np.vstack([P.T, np.ones(T.n + 1)]), np.append(x, 1.0))
        if lam.min() >= -tol:
            return i
    return -1


@pytest.mark.parametrize("box, grid, simplexes, vertices", [
    ([[0, 1], [0, 1]], 1, 2, 4),
    ([[-1, 1], [-1, 1]], 2, 8, 9),
    ([[-1, 1]], 2, 2, 3),
    ([[-1.5, 1.5], [-1.5, 1.5]], 20, 800, 441),
    ([[-1, 1]] * 3, 2, 48, 27),
])
def test_kuhn_counts(box, grid, simplexes, vertices):
    T = M.kuhn_triangulate(box, grid)
    assert T.num_simplices == simplexes and T.num_vertices == vertices
    assert T.origin_id is not None
    assert M.validate(T) == []


def test_origin_listed_first():
    T = M.kuhn_triangulate([[-1, 1], [-1, 1]], 2)
    o = T.origin_id
    rows = [r for r in T.simplices if o in r]
    assert len(rows) == 8 and all(r[0] == o for r in rows)


@pytest.mark.parametrize("box, grid", [([[-1, 2], [-1, 1]], 2), ([[0.5, 1], [-1, 1]], 2)])
def test_origin_must_be_on_grid(box, grid):
    with pytest.raises(M.MeshError, match="origin"):
        M.kuhn_triangulate(box, grid)


def test_degenerate_box_rejected():
    with pytest.raises(M.MeshError, match="degenerate"):
        M.kuhn_triangulate([[0, 0], [-1, 1]], 2)


def test_graded_axis_with_anchors():
    ax = M.graded_axis(-1.5, 1.5, 20, 1.25, [-0.3, 0.3])
    assert 0.0 in ax and 0.3 in ax and -0.3 in ax
    w = np.diff(ax)
    assert np.all(w > 0)
    assert w[10] < w[-1]  # cells grow outwards


def test_barycentric_examples():
    T = unit_triangle()
    assert np.allclose(T.barycentric(0, [1 / 3, 1 / 3]), [1 / 3] * 3)
    assert np.allclose(T.barycentric(0, [0.0, 1.0]), [0, 0, 1])
    assert np.allclose(T.barycentric(0, [0.25, 0.25]), [0.5, 0.25, 0.25])
    with pytest.raises(M.PointOutsideError):
        T.barycentric(0, [0.8, 0.8])


def test_locate_ties_and_interior():
    T = M.kuhn_triangulate([[-1, 1], [-1, 1]], 2)
    i = T.locate([0.0, 0.0])
    assert T.simplices[i, 0] == T.origin_id
    rng = np.random.default_rng(0)
    for x in rng.uniform(-1, 1, size=(200, 2)):
        assert T.locate(x) == brute_locate(T, x)
    # points on shared faces go to the lowest id that holds them
    for a, b in itertools.combinations(range(T.num_simplices), 2):
        shared = set(T.simplices[a]) & set(T.simplices[b])
        if len(shared) == 2:
            p, q = (T.vertices[k] for k in shared)
            mid = 0.5 * (p + q)
            assert T.locate(mid) == min(T.containing(mid))
            assert T.locate(mid) == brute_locate(T, mid)
    with pytest.raises(M.PointOutsideError):
        T.locate([1.5, 0.0])


def test_refine_counts_and_noop():
    T = M.kuhn_triangulate([[0, 1], [0, 1]], 1)
    assert M.refine(T).num_simplices == 8
    assert M.refine(T, []) is T
    big = M.kuhn_triangulate([[-1.5, 1.5], [-1.5, 1.5]], 20)
    assert M.refine(big).num_simplices == 3200


def test_selective_refinement_stays_conforming():
    T = M.kuhn_triangulate([[-1, 1], [-1, 1]], 4)
    for i in (0, 7, 31):
        R = M.refine(T, [i])
        assert M.validate(R) == []
        assert R.num_simplices > T.num_simplices
        assert np.array_equal(R.vertices[:T.num_vertices], T.vertices)
        assert R.volumes.sum() == pytest.approx(4.0, abs=1e-9)


@given(st.integers(1, 3), st.integers(1, 4), st.floats(1.0, 1.5))
def test_refinement_keeps_vertices_and_volume(n, k, ratio):
    T = M.kuhn_triangulate([[-1, 1]] * n, 2 * k, ratio)
    R = M.refine(T)
    assert np.array_equal(R.vertices[:T.num_vertices], T.vertices)
    assert abs(R.volumes.sum() - T.volumes.sum()) <= 1e-9
    assert R.num_simplices == T.num_simplices * 2 ** n


def test_shell_indices_examples():
    T = M.kuhn_triangulate([[-1, 1], [-1, 1]], 2)
    everything = frozenset(range(8))
    assert M.shell_indices(T, everything) == ()
    assert M.shell_indices(T, frozenset()) == tuple(range(8))
    cell = M.region_from_box(T, [[0, 1], [0, 1]])
    assert len(cell.ids) == 2
    shell = M.shell_indices(T, cell)
    assert len(shell) == 6 and not set(shell) & cell.ids
    with pytest.raises(M.MeshError):
        M.region_from_box(T, [[0, 0.5], [0, 1]])


def test_validate_flags_duplicate_vertex():
    T = M.kuhn_triangulate([[-1, 1], [-1, 1]], 2)
    V = T.vertices.copy()
    S = T.simplices.copy()
    a, b = S[3, 1], S[3, 2]
    V[b] = V[a]
    bad = M.Triangulation(V, S, T.box)
    report = M.validate(bad)
    assert any("affine-independence" in r for r in report)
    assert any("duplicate" in r for r in report)


def test_validate_flags_overlap():
    T = M.kuhn_triangulate([[0, 1], [0, 1]], 1)
    V = np.vstack([T.vertices, [[0.6, 0.1]]])
    S = np.vstack([T.simplices, [[0, 1, len(V) - 1]]])
    report = M.validate(M.Triangulation(V, S, T.box))
    assert any("overlap" in r or "face" in r for r in report)


def test_gradient_operators_and_inverse():
    T = M.kuhn_triangulate([[-1.5, 1.5], [-1.5, 1.5]], 20, 1.25, [-0.3, 0.3])
    eye = np.einsum("inm,imk->ink", T.X, T.Xinv)
    assert np.abs(eye - np.eye(2)).max() <= 1e-10


def test_partition_of_unity_ten_thousand_points():
    T = M.kuhn_triangulate([[-1.5, 1.5], [-1.5, 1.5]], 20, 1.25, [-0.3, 0.3])
    x = np.random.default_rng(5).uniform(-1.5, 1.5, size=(10_000, 2))
    ids = T.locate_many(x)
    assert np.all(ids >= 0)
    lam = T.barycentric_many(ids, x)
    assert np.all(lam >= -1e-10)
    assert np.abs(lam.sum(axis=1) - 1).max() <= 1e-9
    back = np.einsum("pj,pjn->pn", lam, T.vertices[T.simplices[ids]])
    assert np.abs(back - x).max() <= 1e-9


def test_json_round_trip_and_submesh():
    T = M.kuhn_triangulate([[-1, 1], [-1, 1]], 2)
    T2 = M.Triangulation.from_json(T.to_json())
    assert np.array_equal(T.vertices, T2.vertices) and np.array_equal(T.simplices, T2.simplices)
    sub, used = T.submesh([0, 1, 2])
    assert sub.num_simplices == 3 and not sub.tiles_box
    assert np.array_equal(sub.vertices, T.vertices[used])
    with pytest.raises(M.MeshError):
        M.Triangulation.from_dict({"n": 2, "vertices": [[0, 0]], "simplexes": [[0, 1, 2]]})
