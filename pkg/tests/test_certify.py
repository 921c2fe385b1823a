import numpy as np
import pytest

from cpagain import bounds as B
from cpagain import certify as C
from cpagain import mesh as M
from cpagain import system as S


def tri(P):
    return M.Triangulation(np.asarray(P, dtype=float), np.array([[0, 1, 2]]), [[0, 1], [0, 1]], tiles_box=False)


def fixed_bounds(c, beta_f=1.0, beta_hh=2.0, beta_gbar=2.0, ghat=0.0):
    one = lambda v: np.array([float(v)])
    return B.SimplexBounds(np.array([c], dtype=float), one(beta_f), one(beta_hh), one(beta_gbar), one(ghat))


def test_assemble_H_hand_example():
    pend = S.load_system("pendulum")
    T = tri([[0, 0], [1, 0], [0, 1]])
    H = C.assemble_H(pend, T, fixed_bounds([0, 2, 2]), [0.0, 1.0, 2.0], np.array([[1.0, 1.0]]), 1.0)
    assert np.isnan(H[0, 0])  # origin pair is exempt
    assert H[0, 1] == pytest.approx(-np.sin(1.0) * 2 + 6 + 8, abs=1e-12)
    assert H[0, 1] == pytest.approx(12.31706, abs=1e-5)


def test_assemble_H_zero_dynamics():
    zero = S.load_system("zero")
    T = M.kuhn_triangulate([[-1, 1], [-1, 1]], 2)
    H = C.assemble_H(zero, T, B.compute_bounds(zero, T), np.zeros(9), np.zeros((8, 2)), 1.0)
    assert np.all(np.nan_to_num(H) == 0.0)


def test_assemble_Dplus_hand_example():
    pend = S.load_system("pendulum")
    T = tri([[0, 0], [0.5, 0], [0, 0.5]])
    W = T.vertices.sum(axis=1) + 1.0  # gradient (1, 1)
    bnd = fixed_bounds([0, 2, 2], ghat=0.5)
    D = C.assemble_Dplus(pend, T, bnd, W, np.array([[1.0, 1.0]]), 0.1)
    assert D[0, 1] == pytest.approx(-np.sin(0.5) + 2 * (2 + 0.05), abs=1e-12)
    assert D[0, 1] == pytest.approx(3.62057, abs=1e-5)
    # the origin pair is not exempt here
    assert np.isfinite(D[0, 0])
    # linear in the input cap
    D2 = C.assemble_Dplus(pend, T, bnd, W, np.array([[1.0, 1.0]]), 0.2)
    assert np.allclose(D2 - D, 2 * 0.5 * 0.1)
    zero = S.load_system("zero")
    assert np.all(C.assemble_Dplus(zero, T, bnd, W, np.zeros((1, 2)), 0.1) == 0)


def test_reference_certificates_pass(reference_cert):
    s = C.check_storage(reference_cert.storage)
    b = C.check_barrier(reference_cert.barrier)
    assert s.passed and b.passed
    assert reference_cert.storage.b1 > 0 and reference_cert.barrier.b2 > 0


def test_storage_tampering_is_reported(reference_cert):
    st = reference_cert.storage
    V = st.V.copy()
    far = int(np.argmax(np.abs(st.mesh.vertices).sum(axis=1) < 0.5) + 3)
    V[far] += 10.0
    rep = C.check_storage(st.replace(V=V))
    assert not rep.passed
    assert {"gradient-bound", "dissipation"} & rep.kinds()
    touched = {v.simplex for v in rep.violations if v.simplex is not None}
    assert touched and all(far in st.mesh.simplices[i] for i in touched)
    assert "gain-bound-positive" in C.check_storage(st.replace(gamma=0.0)).kinds()
    neg = st.V.copy()
    neg[far] = -1.0
    assert "nonnegativity" in C.check_storage(st.replace(V=neg)).kinds()


def test_barrier_tampering_is_reported(reference_cert):
    br = reference_cert.barrier
    rep = C.check_barrier(br.replace(uhat=100 * br.uhat))
    assert "decrease" in rep.kinds()
    assert all(br.bounds.ghat[v.simplex] > 0 for v in rep.violations if v.kind == "decrease")
    W = br.W.copy()
    W[5] = 0.0
    assert "positivity" in C.check_barrier(br.replace(W=W)).kinds()
    assert "containment" in C.check_barrier(br.replace(level=2 * br.level)).kinds()


def test_checks_are_margin_aware(reference_cert):
    st = reference_cert.storage
    rep = C.check_storage(st.replace(b1=-1e-3))
    assert rep.ok and not rep.passed


def _grid_values(T, bad=()):
    vals = -np.ones(T.simplices.shape)
    for i in bad:
        vals[i, 1] = 1.0
    return vals


def test_max_feasible_subtriangulation():
    T = M.kuhn_triangulate([[-1, 1], [-1, 1]], 4)
    o = T.origin_id
    seed = frozenset(int(i) for i in np.flatnonzero((T.simplices == o).any(axis=1)))
    assert C.max_feasible_subtriangulation(_grid_values(T), T, seed) == frozenset(range(T.num_simplices))
    corner = int(T.locate([0.95, 0.9]))
    got = C.max_feasible_subtriangulation(_grid_values(T, [corner]), T, seed)
    assert got == frozenset(range(T.num_simplices)) - {corner}
    # a ring of bad simplexes around the seed stops the flood fill
    ring = [i for i in range(T.num_simplices) if i not in seed and set(T.neighbors[i]) & seed]
    got = C.max_feasible_subtriangulation(_grid_values(T, ring), T, seed)
    assert got == seed
    assert C.max_feasible_subtriangulation(_grid_values(T, [min(seed)]), T, seed) == frozenset()
    # NaN marks exempt pairs and never blocks growth
    vals = _grid_values(T)
    vals[:, 0] = np.nan
    assert len(C.max_feasible_subtriangulation(vals, T, seed)) == T.num_simplices


def test_combine_requires_containment():
    pend = S.load_system("pendulum")
    big = M.kuhn_triangulate([[-1, 1], [-1, 1]], 4)
    small = M.kuhn_triangulate([[-0.5, 0.5], [-0.5, 0.5]], 2)
    bs, bb = B.compute_bounds(pend, small), B.compute_bounds(pend, big)
    st = C.StorageCertificate(pend, small, np.zeros(small.num_vertices), np.zeros((small.num_simplices, 2)),
                              1.0, 0.1, bs)
    W = 1.0 + np.sum(big.vertices ** 2, axis=1)
    inner = M.region_from_box(big, [[-0.5, 0.5], [-0.5, 0.5]])
    wide = C.BarrierCertificate(pend, big, W, np.zeros((big.num_simplices, 2)), 0.1, 0.1, 2.9, inner.ids, bb)
    with pytest.raises(C.ContainmentError, match="storage domain"):
        C.combine(st, wide)
    tiny = wide.replace(level=1.1)
    out = C.combine(st, tiny)
    assert out.metadata["gain_bound"] == 1.0
