import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cpagain import cpa
from cpagain import mesh as M


def unit_triangle():
    return M.Triangulation(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]),
                           [[0, 1], [0, 1]], tiles_box=False)


def test_gradient_examples():
    T = unit_triangle()
    assert np.allclose(cpa.CpaFunction(T, [0, 1, 2]).gradient(0), [1, 2])
    assert np.allclose(cpa.CpaFunction(T, [0, 0, 0]).gradient(0), [0, 0])
    assert np.allclose(cpa.CpaFunction(T, T.vertices[:, 0]).gradient(0), [1, 0])


def test_evaluate_examples():
    T = unit_triangle()
    c = cpa.CpaFunction(T, [0, 1, 2])
    assert c.evaluate([1 / 3, 1 / 3]) == pytest.approx(1.0)
    for k, x in enumerate(T.vertices):
        assert c.evaluate(x) == [0, 1, 2][k]
    with pytest.raises(M.PointOutsideError):
        c.evaluate([2.0, 2.0])


def test_gradient_matches_finite_differences():
    T = M.kuhn_triangulate([[-1, 1], [-1, 1]], 4, 1.2)
    c = cpa.CpaFunction(T, np.sin(3 * T.vertices[:, 0]) * T.vertices[:, 1] + T.vertices[:, 1] ** 2)
    h = 1e-6
    for i in range(T.num_simplices):
        x = T.centroids[i]
        fd = [(c.evaluate(x + h * e) - c.evaluate(x - h * e)) / (2 * h) for e in np.eye(2)]
        assert np.allclose(fd, c.gradient(i), atol=1e-7)


def test_dini_examples():
    # two triangles sharing the face x1 = 1, gradients (1, 0) on the left and (2, 0) on the right
    V = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [2.0, 0.0]])
    T = M.Triangulation(V, np.array([[0, 1, 2], [1, 3, 2]]), [[0, 2], [0, 1]], tiles_box=False)
    c = cpa.CpaFunction(T, [0.0, 1.0, 1.0, 3.0])
    assert np.allclose(c.gradient(0), [1, 0]) and np.allclose(c.gradient(1), [2, 0])
    assert c.dini([1.0, 0.3], [1.0, 0.0]) == 2.0
    # one-sided limit from the face, taken numerically, agrees
    h = 1e-7
    x = np.array([1.0, 0.3])
    assert (c.evaluate(x + h * np.array([1, 0])) - c.evaluate(x)) / h == pytest.approx(2.0, rel=1e-6)
    assert c.dini([0.5, 0.2], [0.0, 1.0]) == 0.0
    assert c.dini([0.5, 0.2], [0.0, 0.0]) == 0.0


def test_face_continuity():
    T = M.kuhn_triangulate([[-1, 1], [-1, 1]], 4)
    vals = np.random.default_rng(0).normal(size=T.num_vertices)
    c = cpa.CpaFunction(T, vals)
    for face, owners in T.adjacency.items():
        if len(owners) != 2:
            continue
        x = T.vertices[list(face)].mean(axis=0)
        a, b = (T.barycentric_many([i], x[None])[0] @ vals[T.simplices[i]] for i in owners)
        assert abs(a - b) <= 1e-9


def test_largest_interior_sublevel_examples():
    T = M.kuhn_triangulate([[-1, 1], [-1, 1]], 4)
    A1 = M.region_from_box(T, [[-0.5, 0.5], [-0.5, 0.5]])
    bnd = T.boundary_vertex_ids
    W = np.full(T.num_vertices, 0.1)
    W[A1.vertex_ids[1::2]] = 0.2
    rest = np.setdiff1d(np.arange(T.num_vertices), A1.vertex_ids)
    W[rest] = 4.0
    W[bnd] = 4.0
    W[bnd[0]], W[bnd[1]] = 3.0, 5.0
    c = cpa.CpaFunction(T, W)
    assert cpa.largest_interior_sublevel(c, A1) == 3.0 * (1 - 1e-6)
    W2 = W.copy()
    W2[A1.vertex_ids[0]] = 10.0
    with pytest.raises(cpa.ContainmentError) as info:
        cpa.largest_interior_sublevel(cpa.CpaFunction(T, W2), A1)
    assert info.value.vertex == A1.vertex_ids[0]
    with pytest.raises(cpa.ContainmentError):
        cpa.largest_interior_sublevel(cpa.CpaFunction(T, np.ones(T.num_vertices)), A1)


def test_sublevel_membership_examples():
    T = M.kuhn_triangulate([[-1, 1], [-1, 1]], 4)
    c = cpa.CpaFunction(T, np.sum(T.vertices ** 2, axis=1))
    level = cpa.largest_interior_sublevel(c, M.Region(T, frozenset()))
    assert cpa.sublevel_membership(c, level, [0.0, 0.0])
    assert not cpa.sublevel_membership(c, level, T.vertices[T.boundary_vertex_ids[0]])
    assert cpa.sublevel_membership(c, 0.5, [0.5, 0.5])  # value exactly at the level
    x = np.random.default_rng(1).uniform(-1, 1, size=(10_000, 2))
    member = np.array([cpa.sublevel_membership(c, 0.3, p) for p in x[:500]])
    assert np.array_equal(member, c.evaluate_many(x[:500]) <= 0.3)


@given(st.integers(0, 2 ** 31 - 1))
def test_affine_reproduction(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    T = M.kuhn_triangulate([[-1, 1]] * n, 2 * int(rng.integers(1, 3)), float(rng.uniform(1, 1.4)))
    a, b = rng.normal(size=n), rng.normal()
    c = cpa.CpaFunction(T, T.vertices @ a + b)
    assert np.abs(c.gradients - a).max() <= 1e-9
    x = rng.uniform(-1, 1, size=(200, n))
    assert np.abs(c.evaluate_many(x) - (x @ a + b)).max() <= 1e-9


def test_wrong_value_count_rejected():
    with pytest.raises(ValueError):
        cpa.CpaFunction(unit_triangle(), [0.0, 1.0])
