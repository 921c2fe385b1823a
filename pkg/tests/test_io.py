import json
import os

import numpy as np
import pytest

from cpagain import certify as C
from cpagain import io
from cpagain import system as sysmod


def test_round_trip_is_byte_identical(reference_cert, tmp_path):
    text = io.dumps_certificate(reference_cert)
    back = io.loads_certificate(text)
    assert io.dumps_certificate(back) == text
    assert C.check_storage(back.storage, 1e-7).passed and C.check_barrier(back.barrier, 1e-7).passed
    path = tmp_path / "c.json"
    io.save_certificate(back, path)
    assert path.read_text() == text
    assert oct(os.stat(path).st_mode & 0o777) == "0o644"


def test_checks_identical_after_reload(reference_cert):
    back = io.loads_certificate(io.dumps_certificate(reference_cert))
    assert C.check_storage(back.storage).to_dict() == C.check_storage(reference_cert.storage).to_dict()
    assert C.check_barrier(back.barrier).to_dict() == C.check_barrier(reference_cert.barrier).to_dict()


def test_canonical_key_order(reference_cert):
    keys = list(json.loads(io.dumps_certificate(reference_cert)))
    assert keys[:16] == ["system_hash", "norm_kind", "mesh", "V", "L", "gamma", "b1", "W", "Lhat", "uhat", "b2",
                         "level_c", "A1_simplexes", "bounds", "history", "format"]


def test_system_mismatch(reference_cert):
    text = io.dumps_certificate(reference_cert)
    other = sysmod.parse_system({"n": 2, "m": 1, "q": 1, "f1": "x2", "f2": "-x1 - x2", "G": ["0", "x2"], "h1": "x2"})
    with pytest.raises(io.SystemMismatchError):
        io.loads_certificate(text, other)
    assert io.loads_certificate(text, sysmod.load_system("pendulum")).gamma == reference_cert.gamma


@pytest.mark.parametrize("mutate", [
    lambda d: d.pop("format"),
    lambda d: d.update(V=d["V"][:-1]),
    lambda d: d.update(gamma="big"),
    lambda d: d["mesh"].pop("storage"),
    lambda d: d.update(system="n = ]"),
])
def test_malformed_certificates(reference_cert, mutate):
    data = json.loads(io.dumps_certificate(reference_cert))
    mutate(data)
    with pytest.raises(ValueError):
        io.certificate_from_dict(data)


def test_malformed_json():
    with pytest.raises(io.CertificateError):
        io.loads_certificate("{not json")


def test_history_csv(tmp_path):
    hist = [{"iter": 0, "objective_tag": "-b1", "J": 0.1, "b": -0.1, "s": 2.0, "status": "optimal", "wall_ms": 3.5},
            {"iter": 1, "objective_tag": "-b1", "J": float("nan"), "b": None, "s": 2.0, "status": "rejected"}]
    path = tmp_path / "h.csv"
    io.write_history_csv(path, hist)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(io.HISTORY_COLUMNS)
    assert lines[1] == "0,-b1,0.1,-0.1,2.0,optimal,3.5"
    assert lines[2].startswith("1,-b1,nan,,2.0,rejected")


def test_jsonable_and_manifest(tmp_path):
    assert io.jsonable({"a": np.float64(np.inf), "b": np.arange(2), "c": np.bool_(True)}) == \
        {"a": None, "b": [0, 1], "c": True}
    from datetime import datetime, timezone
    m = io.write_manifest(tmp_path / "m.json", config="c.toml", system="pendulum", out_dir="o", seed=4,
                          started=datetime.now(timezone.utc), command="analyze", extra={"threads": 2})
    on_disk = json.loads((tmp_path / "m.json").read_text())
    assert on_disk == m and on_disk["seed"] == 4 and on_disk["threads"] == 2
