import numpy as np
import pytest

from cpagain import certify as C
from cpagain import config, io, pipeline
from cpagain import mesh as M
from cpagain import solve as S
from cpagain import system as sysmod


def small_config(grid=6, box=0.6, inner=0.2, budget=2, max_iter=10, n=2, **extra):
    data = {"omega": {"box": [[-box, box]] * n, "grid": [grid] * n},
            "inner": {"box": [[-inner, inner]] * n},
            "iterations": {"max_iter": max_iter, "refine_budget": budget}}
    data.update(extra)
    return config.parse_config(data)


@pytest.fixture(scope="module")
def pendulum():
    return sysmod.load_system("pendulum")


@pytest.fixture(scope="module")
def small_cert(pendulum):
    return pipeline.analyze(pendulum, small_config())


def test_small_run_is_checked(small_cert):
    assert C.check_storage(small_cert.storage).passed
    assert C.check_barrier(small_cert.barrier).passed
    assert small_cert.storage.b1 > 0 and small_cert.barrier.b2 > 0
    assert small_cert.metadata["system_hash"] == small_cert.system.hash
    phases = [r["phase"] for r in small_cert.history]
    assert phases == sorted(phases, key=lambda p: p != "storage")


def test_history_monotone_within_each_objective(small_cert):
    for phase in ("storage", "barrier"):
        recs = [r for r in small_cert.history if r["phase"] == phase and r["objective_tag"] not in ("init", "warm-start")]
        for tag in {r["objective_tag"] for r in recs}:
            J = [r["J"] for r in recs if r["objective_tag"] == tag]
            assert all(b <= a for a, b in zip(J, J[1:]))


def test_deterministic_bytes(pendulum, small_cert):
    again = pipeline.analyze(pendulum, small_config())
    assert io.dumps_certificate(again) == io.dumps_certificate(small_cert)


def test_margin_crosses_zero_only_after_refinement(pendulum):
    with pytest.raises(pipeline.InfeasibleError, match="storage phase infeasible"):
        pipeline.analyze(pendulum, small_config(grid=10, box=1.0, budget=0))
    cert = pipeline.analyze(pendulum, small_config(grid=10, box=1.0, budget=1))
    assert cert.storage.mesh.num_simplices == 800 and cert.storage.b1 > 0
    assert any(r["objective_tag"] == "warm-start" for r in cert.history)


def test_zero_system_is_infeasible():
    zero = sysmod.load_system("zero")
    with pytest.raises(pipeline.InfeasibleError, match="storage phase infeasible"):
        pipeline.analyze(zero, small_config(grid=4, box=1.0, inner=0.5, budget=0, max_iter=3))


def test_unstable_system_fails_in_storage_phase():
    unstable = sysmod.parse_system({"n": 1, "m": 1, "q": 1, "f1": "x1", "G": ["0"], "h1": "x1"})
    with pytest.raises(pipeline.InfeasibleError, match="storage phase infeasible"):
        pipeline.analyze(unstable, small_config(grid=10, box=1.0, budget=1, n=1))


def test_dimension_mismatch(pendulum):
    with pytest.raises(ValueError, match="dimension"):
        pipeline.analyze(pendulum, small_config(n=1, grid=10, box=1.0))


def test_warm_start_without_new_vertices_is_identity(pendulum):
    T = M.kuhn_triangulate([[-1, 1], [-1, 1]], 6)
    prob = S.StorageProblem(pendulum, T)
    st = S.init_storage_kyp(prob)
    same = pipeline.refine_and_warmstart(prob, st, prob)
    assert np.array_equal(same.values, st.values) and np.array_equal(same.L, st.L) and same.b == st.b
    assert same.history[-1].objective_tag == "warm-start"


def test_warm_start_margin_rarely_drops(pendulum):
    better = 0
    trials = [(g, r) for g in (4, 6, 8, 10, 12) for r in (1.0, 1.25)]
    for grid, ratio in trials:
        T = M.kuhn_triangulate([[-1.5, 1.5], [-1.5, 1.5]], grid, ratio)
        prob = S.StorageProblem(pendulum, T)
        st = S.run_phase(prob, S.init_storage_kyp(prob), "-b1", max_iter=2)
        fine = S.StorageProblem(pendulum, M.refine(T))
        warm = pipeline.refine_and_warmstart(prob, st, fine)
        assert np.array_equal(warm.values[:T.num_vertices], st.values)
        assert np.all(np.isfinite(warm.values))
        better += warm.b >= st.b - 1e-9
    assert better >= 0.9 * len(trials)


def test_warm_start_outside_coarse_mesh_rejected(pendulum):
    T = M.kuhn_triangulate([[-1, 1], [-1, 1]], 4)
    big = M.kuhn_triangulate([[-2, 2], [-2, 2]], 4)
    prob = S.StorageProblem(pendulum, T)
    with pytest.raises(ValueError):
        pipeline.refine_and_warmstart(prob, S.init_storage_kyp(prob), S.StorageProblem(pendulum, big))


def test_config_validation():
    with pytest.raises(config.ConfigError):
        small_config(inner=0.6)
    with pytest.raises(config.ConfigError):
        config.parse_config({"omega": {"box": [[-1, 1]], "grid": [2]}})
    with pytest.raises(config.ConfigError, match="step"):
        small_config(step={"bogus": 1})
    ref = config.load_config("pendulum-reference")
    assert ref.omega.grid == [20, 20] and ref.inner_box == [[-0.3, 0.3], [-0.3, 0.3]]
