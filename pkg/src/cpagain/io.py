"""Certificate JSON, history CSV and run manifests."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import SimplexBounds
from .certify import BarrierCertificate, CombinedCertificate, StorageCertificate
from .mesh import Triangulation
from .system import SystemSpec, loads_system

FORMAT = "cpagain-certificate/1"
HISTORY_COLUMNS = ["iter", "objective_tag", "J", "b1_or_b2", "gamma_or_uhat", "solver_status", "wall_ms"]


class CertificateError(ValueError):
    pass


class SystemMismatchError(CertificateError):
    """The system given for verification is not the one the certificate was made for."""


def jsonable(obj):
    """JSON-safe copy: numpy to builtins, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def certificate_to_dict(cert: CombinedCertificate) -> dict:
    s, b = cert.storage, cert.barrier
    meta = dict(cert.metadata)
    history = [{k: v for k, v in rec.items() if k != "wall_ms"} for rec in cert.history]
    out = {
        "system_hash": s.system.hash,
        "norm_kind": s.norm_kind,
        "mesh": {"storage": s.mesh.to_dict(), "barrier": b.mesh.to_dict()},
        "V": s.V,
        "L": s.L,
        "gamma": s.gamma,
        "b1": s.b1,
        "W": b.W,
        "Lhat": b.Lhat,
        "uhat": b.uhat,
        "b2": b.b2,
        "level_c": b.level,
        "A1_simplexes": sorted(int(i) for i in b.A1),
        "bounds": {"storage": s.bounds.to_dict(), "barrier": b.bounds.to_dict()},
        "history": history,
        "format": FORMAT,
        "system": s.system.source,
        "tool_version": meta.pop("tool_version", __version__),
        "config": meta.pop("config", None),
        "metadata": {k: v for k, v in meta.items() if k != "system_hash"},
    }
    return jsonable(out)


def dumps_certificate(cert: CombinedCertificate) -> str:
    """Deterministic text: fixed key order, shortest round-trip floats."""
    return json.dumps(certificate_to_dict(cert), indent=1, allow_nan=False) + "\n"


def _arr(data, key, shape=None) -> np.ndarray:
    try:
        a = np.asarray(data[key], dtype=float)
    except (KeyError, TypeError, ValueError) as err:
        raise CertificateError(f"certificate field {key!r} is missing or malformed") from err
    if shape is not None and a.shape != shape:
        raise CertificateError(f"certificate field {key!r} has shape {a.shape}, expected {shape}")
    return a


def _scalar(data, key) -> float:
    v = data.get(key)
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        raise CertificateError(f"certificate field {key!r} must be a number")
    return float(v)


def certificate_from_dict(data: dict, system: SystemSpec | None = None) -> CombinedCertificate:
    """Rebuild a certificate. ``system`` overrides the embedded one; its hash must match."""
    if not isinstance(data, dict) or data.get("format") != FORMAT:
        raise CertificateError("not a certificate file (unknown format tag)")
    if system is None:
        try:
            system = loads_system(data["system"])
        except KeyError as err:
            raise CertificateError("certificate has no embedded system; pass one explicitly") from err
    if system.hash != data.get("system_hash"):
        raise SystemMismatchError("system does not match the certificate's system hash")
    try:
        Ts = Triangulation.from_dict(data["mesh"]["storage"])
        Tb = Triangulation.from_dict(data["mesh"]["barrier"])
        bs = SimplexBounds.from_dict(data["bounds"]["storage"])
        bb = SimplexBounds.from_dict(data["bounds"]["barrier"])
    except (KeyError, TypeError, ValueError) as err:
        raise CertificateError(f"malformed mesh or bounds section: {err}") from err
    n = system.n
    storage = StorageCertificate(system, Ts, _arr(data, "V", (Ts.num_vertices,)),
                                 _arr(data, "L", (Ts.num_simplices, n)), _scalar(data, "gamma"),
                                 _scalar(data, "b1"), bs)
    barrier = BarrierCertificate(system, Tb, _arr(data, "W", (Tb.num_vertices,)),
                                 _arr(data, "Lhat", (Tb.num_simplices, n)), _scalar(data, "uhat"),
                                 _scalar(data, "b2"), _scalar(data, "level_c"),
                                 frozenset(int(i) for i in data.get("A1_simplexes", [])), bb)
    meta = dict(data.get("metadata") or {})
    meta["system_hash"] = data["system_hash"]
    meta["tool_version"] = data.get("tool_version")
    meta["config"] = data.get("config")
    return CombinedCertificate(storage, barrier, meta, list(data.get("history") or []))


def loads_certificate(text: str, system: SystemSpec | None = None) -> CombinedCertificate:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise CertificateError(f"malformed certificate JSON: {err}") from err
    return certificate_from_dict(data, system)


def load_certificate(path: str | Path, system: SystemSpec | None = None) -> CombinedCertificate:
    return loads_certificate(Path(path).read_text(), system)


def atomic_write(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_certificate(cert: CombinedCertificate, path: str | Path) -> None:
    atomic_write(path, dumps_certificate(cert))


def history_rows(history: list) -> list[list]:
    rows = []
    for rec in history:
        rows.append([rec.get("iter"), rec.get("objective_tag"), rec.get("J"), rec.get("b"), rec.get("s"),
                     rec.get("status"), rec.get("wall_ms", "")])
    return rows


def write_csv(path: str | Path, header: list, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for v in row])
    atomic_write(path, buf.getvalue())


def write_history_csv(path: str | Path, history: list) -> None:
    write_csv(path, HISTORY_COLUMNS, history_rows(history))


def write_manifest(path: str | Path, *, config: str | None, system: str | None, out_dir: str | None,
                   seed: int | None, started: datetime, command: str, extra: dict | None = None) -> dict:
    manifest = {
        "command": command,
        "config": config,
        "system": system,
        "out_dir": out_dir,
        "seed": seed,
        "tool_version": __version__,
        "started": started.isoformat(),
        "finished": datetime.now(timezone.utc).isoformat(),
    }
    manifest.update(extra or {})
    atomic_write(path, json.dumps(jsonable(manifest), indent=1) + "\n")
    return manifest
