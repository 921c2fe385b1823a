import json

import pytest

from cpagain import __version__
from cpagain.cli import main
from cpagain.mesh import Triangulation

SMALL = """
[omega]
box = [[-0.6, 0.6], [-0.6, 0.6]]
grid = [6, 6]

[inner]
box = [[-0.2, 0.2], [-0.2, 0.2]]

[iterations]
max_iter = 10
refine_budget = 2
"""

LINE = """
[omega]
box = [[-1.0, 1.0]]
grid = [10]

[inner]
box = [[-0.2, 0.2]]

[iterations]
max_iter = 10
refine_budget = 1
"""


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "small.toml"
    cfg.write_text(SMALL)
    out = root / "run"
    code = main(["analyze", "--system", "pendulum", "--config", str(cfg), "--out", str(out), "--seed", "7"])
    return code, out


def _verify(cert, *extra):
    return main(["verify", str(cert), "--samples", "2000", "--trials", "3", "--horizon", "5", *extra])


def test_analyze_writes_outputs(small_run, capsys):
    code, out = small_run
    assert code == 0
    assert {"cert.json", "history.csv", "manifest.json"} <= {p.name for p in out.iterdir()}
    header = (out / "history.csv").read_text().splitlines()[0]
    assert header == "iter,objective_tag,J,b1_or_b2,gamma_or_uhat,solver_status,wall_ms"
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 7 and manifest["command"] == "analyze"


def test_analyze_missing_file(tmp_path, capsys):
    code = main(["analyze", "--system", str(tmp_path / "nope.toml"), "--config", "pendulum-reference",
                 "--out", str(tmp_path / "o")])
    assert code == 1
    assert "cannot read inputs" in capsys.readouterr().err


def test_analyze_unstable_toy(tmp_path, capsys):
    sys_file = tmp_path / "unstable.toml"
    sys_file.write_text('n = 1\nm = 1\nq = 1\nf1 = "x1"\nG = ["0"]\nh1 = "x1"\n')
    cfg = tmp_path / "line.toml"
    cfg.write_text(LINE)
    code = main(["analyze", "--system", str(sys_file), "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "storage phase infeasible" in capsys.readouterr().err


def test_verify_good_certificate(small_run, tmp_path):
    _, out = small_run
    report = tmp_path / "report.json"
    assert _verify(out / "cert.json", "--report", str(report)) == 0
    assert json.loads(report.read_text())["passed"] is True


def test_verify_malformed_json(tmp_path):
    bad = tmp_path / "cert.json"
    bad.write_text("{not json")
    assert _verify(bad) == 1


def test_verify_detects_tampered_gamma(small_run, tmp_path):
    _, out = small_run
    data = json.loads((out / "cert.json").read_text())
    data["gamma"] /= 2
    path = tmp_path / "cert.json"
    path.write_text(json.dumps(data))
    assert _verify(path) == 3
    assert (tmp_path / "verify_report.json").exists()


def test_verify_rejects_other_system(small_run):
    _, out = small_run
    assert _verify(out / "cert.json", "--system", "zero") == 3


def test_export_everything(small_run, tmp_path):
    _, out = small_run
    dest = tmp_path / "figs"
    assert main(["export", str(out / "cert.json"), "--out", str(dest)]) == 0
    names = {p.name for p in dest.iterdir()}
    for expected in ("mesh_storage_edges.csv", "mesh_barrier_edges.csv", "levelset.csv", "history_storage.csv",
                     "history_barrier.csv", "fields.csv", "mesh_storage.png", "levelset.png", "history.png",
                     "fields.png"):
        assert expected in names
    assert len((dest / "fields.csv").read_text().splitlines()) == 100 * 100 + 1
    assert (dest / "history_storage.csv").read_text().startswith("iter,J,b1,sqrt_gamma\n")
    assert (dest / "fields.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_export_levelset_needs_two_dimensions(tmp_path, capsys):
    sys_file = tmp_path / "line.toml"
    sys_file.write_text('n = 1\nm = 1\nq = 1\nf1 = "-x1"\nG = ["x1"]\nh1 = "x1"\n')
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(LINE)
    run = tmp_path / "run"
    assert main(["analyze", "--system", str(sys_file), "--config", str(cfg), "--out", str(run)]) == 0
    capsys.readouterr()
    assert main(["export", str(run / "cert.json"), "--what", "levelset", "--out", str(tmp_path / "x")]) == 1
    assert "2-D" in capsys.readouterr().err


def test_mesh_counts_and_refine(tmp_path, capsys):
    path = tmp_path / "mesh.json"
    assert main(["mesh", "--box", "-1.5:1.5,-1.5:1.5", "--grid", "20,20", "--out", str(path)]) == 0
    text = capsys.readouterr().out
    assert "simplexes 800" in text and "vertices  441" in text and "valid     yes" in text
    assert Triangulation.from_json(path.read_text()).num_simplices == 800

    assert main(["mesh", "--validate", str(path)]) == 0
    assert "valid     yes" in capsys.readouterr().out

    assert main(["mesh", "--box", "-1.5:1.5,-1.5:1.5", "--grid", "20", "--refine", "1"]) == 0
    assert "simplexes 3200" in capsys.readouterr().out


def test_mesh_without_arguments(capsys):
    assert main(["mesh"]) == 1


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert __version__ in capsys.readouterr().out
