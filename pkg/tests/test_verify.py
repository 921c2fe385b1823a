import numpy as np
import pytest

from cpagain import verify as V
from cpagain.certify import CombinedCertificate
from cpagain import system as sysmod


@pytest.fixture(scope="module")
def pend():
    return sysmod.load_system("pendulum")


def test_equilibrium_stays_put(pend):
    r = V.simulate(pend, [0.0, 0.0], horizon=5.0)
    assert np.all(r.x == 0) and np.all(r.y_norm == 0)


def test_free_pendulum_decays_and_converges(pend):
    a = V.simulate(pend, [0.5, 0.0], horizon=10.0, dt=0.01)
    b = V.simulate(pend, [0.5, 0.0], horizon=10.0, dt=0.005)
    assert np.linalg.norm(a.x[-1]) < 0.5
    assert np.abs(a.x[-1] - b.x[-1]).max() <= 1e-6
    assert a.y_norm[-1] == pytest.approx(b.y_norm[-1], abs=1e-4)


def test_simulate_flags_region_exit(pend):
    r = V.simulate(pend, [0.5, 0.0], horizon=5.0, region=lambda X: X[:, 0] > 0.0, box=[[-0.05, 0.6], [-1, 1]])
    assert r.exit_index is not None and r.x[r.exit_index, 0] <= 0 and r.left_box


def test_input_signal_respects_cap():
    rng = np.random.default_rng(0)
    u = V.InputSignal.random(rng, 2, 0.3, 10.0)
    assert len(u.breakpoints) == 20 and np.abs(u.values).max() <= 0.3
    assert np.array_equal(u(0.74), u.values[1])
    with pytest.raises(ValueError):
        V.InputSignal([0.0], [[0.5]], 0.1)


def test_hj_value_vanishes_at_origin(pend):
    g = np.array([[3.0, -2.0]])
    assert V.hj_value(pend, g, 0.7, np.zeros((1, 2)))[0] == 0.0


def test_sampled_dissipation_on_reference(reference_cert):
    s = V.sample_hj(reference_cert.storage, 20_000, seed=3)
    assert s.max_value <= 1e-9 and s.count == 20_001


def test_sampled_dissipation_finds_corruption(reference_cert):
    st = reference_cert.storage
    vals = st.V.copy()
    k = int(st.mesh.locate([0.6, 0.6]))
    target = int(st.mesh.simplices[k, 1])
    vals[target] += 0.05 * (vals.max() - vals.min())
    s = V.sample_hj(st.replace(V=vals), 20_000, seed=3)
    assert s.max_value > 0
    assert target in st.mesh.simplices[s.simplex]


def test_invariance_holds_and_breaks(reference_cert):
    ok = V.check_invariance(reference_cert, trials=10, horizon=20.0, seed=1)
    assert ok["passed"] and ok["max_W"] <= reference_cert.barrier.level + 1e-5
    bad = V.check_invariance(reference_cert, trials=10, horizon=20.0, seed=1, uhat=10 * reference_cert.uhat)
    assert not bad["passed"] and bad["violations"]


def test_gain_holds_and_breaks(reference_cert):
    ok = V.check_gain_inequality(reference_cert, trials=10, horizon=20.0, seed=1)
    assert ok["passed"] and ok["empirical_ratio"] <= reference_cert.gain
    # Shrinking both the gain bound and the storage (hence the offset term) by 100 claims
    # far less output energy than the pendulum actually releases.
    st = reference_cert.storage
    shrunk = CombinedCertificate(st.replace(V=st.V / 100, gamma=st.gamma / 100), reference_cert.barrier)
    bad = V.check_gain_inequality(shrunk, trials=20, horizon=20.0, seed=1)
    assert not bad["passed"] and bad["violations"]


def test_corrupted_gain_fails_full_verification(reference_cert):
    st = reference_cert.storage
    cut = CombinedCertificate(st.replace(gamma=st.gamma / 100), reference_cert.barrier)
    rep = V.verify_certificate(cut, samples=5_000, trials=4, horizon=5.0)
    assert not rep["passed"]
    assert not rep["storage_check"]["passed"] and not rep["hj_sampling"]["passed"]


def test_zero_input_bound(reference_cert, pend):
    rng = np.random.default_rng(2)
    for x0 in V.sample_invariant_set(reference_cert, 5, rng):
        r = V.simulate(pend, x0, horizon=20.0)
        assert r.y_norm.max() <= reference_cert.bias(x0) + 1e-6
    r = V.simulate(pend, [0.0, 0.0], horizon=5.0)
    assert reference_cert.barrier.function.evaluate([0.0, 0.0]) <= reference_cert.barrier.level


def test_invariant_set_samples_are_members(reference_cert):
    pts = V.sample_invariant_set(reference_cert, 500, np.random.default_rng(4))
    assert np.all(reference_cert.barrier.function.evaluate_many(pts) < reference_cert.barrier.level)


def test_resonant_frequency(pend):
    # B = 0 for the pendulum: the oscillatory mode of [[0, 1], [-1, -1]] has |Im| = sqrt(3)/2
    assert V.resonant_frequency(pend) == pytest.approx(np.sqrt(3) / 2)


def test_reports_are_seed_deterministic(reference_cert):
    a = V.check_gain_inequality(reference_cert, trials=4, horizon=5.0, seed=9)
    b = V.check_gain_inequality(reference_cert, trials=4, horizon=5.0, seed=9)
    assert a == b


def test_bounds_consistency(reference_cert):
    assert V.bounds_consistency(reference_cert)["passed"]
    weak = reference_cert.storage.bounds
    from cpagain.bounds import SimplexBounds
    cut = SimplexBounds(weak.c, weak.beta_f * 0.5, weak.beta_hh, weak.beta_gbar, weak.ghat, weak.norm_kind)
    tampered = CombinedCertificate(reference_cert.storage.replace(bounds=cut), reference_cert.barrier)
    rep = V.bounds_consistency(tampered)
    assert not rep["passed"] and rep["mismatches"][0]["field"] == "beta_f"
