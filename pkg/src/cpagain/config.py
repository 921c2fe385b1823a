"""Analysis configuration, read from TOML."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import tomli

from .mesh import Triangulation, kuhn_triangulate
from .solve import StepSettings


class ConfigError(ValueError):
    pass


@dataclass
class DomainConfig:
    box: list  # [[lo, hi], ...]
    grid: list  # cells per axis
    ratio: float = 1.0  # cell growth away from the origin
    anchors: list = field(default_factory=list)  # coordinates forced onto grid lines

    def build(self) -> Triangulation:
        return kuhn_triangulate(self.box, self.grid, self.ratio, self.anchors)


@dataclass
class AnalysisConfig:
    omega: DomainConfig
    omega_hat: DomainConfig
    inner_box: list
    storage_init: str = "kyp"
    barrier_init: str = "lqr"
    gamma0: float = 1.0
    uhat0: float = 1e-5
    max_iter: int = 50
    rel_tol: float = 1e-3
    patience: int = 3
    refine_budget: int = 2
    norm_kind: str = "2"
    check_tol: float = 1e-9
    b_floor: float = 1e-4
    step: StepSettings = field(default_factory=StepSettings)

    def __post_init__(self):
        if self.storage_init not in ("kyp", "direct"):
            raise ConfigError(f"unknown storage initialization {self.storage_init!r}")
        if self.barrier_init not in ("lqr", "direct"):
            raise ConfigError(f"unknown barrier initialization {self.barrier_init!r}")
        inner = np.asarray(self.inner_box, dtype=float)
        outer = np.asarray(self.omega_hat.box, dtype=float)
        if inner.shape != outer.shape:
            raise ConfigError("inner box and barrier domain differ in dimension")
        if not (np.all(inner[:, 0] > outer[:, 0]) and np.all(inner[:, 1] < outer[:, 1])):
            raise ConfigError("inner box must lie strictly inside the barrier domain")
        if not (np.all(inner[:, 0] < 0) and np.all(inner[:, 1] > 0)):
            raise ConfigError("inner box must contain the origin in its interior")
        if not self.b_floor > 0:
            raise ConfigError("b_floor must be positive")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["step"] = {k: v for k, v in out["step"].items() if k != "backend"}
        return out


def _domain(data: dict, name: str) -> DomainConfig:
    try:
        return DomainConfig(
            box=[[float(a), float(b)] for a, b in data["box"]],
            grid=[int(g) for g in data["grid"]] if isinstance(data["grid"], list) else [int(data["grid"])] * len(data["box"]),
            ratio=float(data.get("ratio", 1.0)),
            anchors=[float(a) for a in data.get("anchors", [])],
        )
    except (KeyError, TypeError, ValueError) as err:
        raise ConfigError(f"[{name}] needs box = [[lo, hi], ...] and grid: {err}") from err


def parse_config(data: dict) -> AnalysisConfig:
    if "omega" not in data or "inner" not in data:
        raise ConfigError("config needs [omega] and [inner] tables")
    omega = _domain(data["omega"], "omega")
    omega_hat = _domain(data["omega_hat"], "omega_hat") if "omega_hat" in data else omega
    init = data.get("init", {})
    it = data.get("iterations", {})
    step_data = dict(data.get("step", {}))
    b_floor = float(step_data.pop("b_floor", 1e-4))
    known = set(StepSettings.__dataclass_fields__)
    unknown = set(step_data) - known
    if unknown:
        raise ConfigError(f"unknown [step] keys {sorted(unknown)}")
    try:
        inner = [[float(a), float(b)] for a, b in data["inner"]["box"]]
    except (KeyError, TypeError, ValueError) as err:
        raise ConfigError(f"[inner] needs box = [[lo, hi], ...]: {err}") from err
    return AnalysisConfig(
        omega=omega, omega_hat=omega_hat, inner_box=inner,
        storage_init=str(init.get("storage", "kyp")), barrier_init=str(init.get("barrier", "lqr")),
        gamma0=float(init.get("gamma0", 1.0)), uhat0=float(init.get("uhat0", 1e-5)),
        max_iter=int(it.get("max_iter", 50)), rel_tol=float(it.get("rel_tol", 1e-3)),
        patience=int(it.get("patience", 3)), refine_budget=int(it.get("refine_budget", 2)),
        norm_kind=str(data.get("norm", "2")), check_tol=float(data.get("check_tol", 1e-9)),
        b_floor=b_floor, step=StepSettings(**step_data),
    )


BUILTIN_CONFIGS = {"pendulum-reference": "pendulum_reference.toml"}


def load_config(source: str | Path) -> AnalysisConfig:
    """Read a config file, or one of the bundled configs by name."""
    key = str(source)
    if key in BUILTIN_CONFIGS:
        text = resources.files("cpagain.data").joinpath(BUILTIN_CONFIGS[key]).read_text()
    else:
        text = Path(source).read_text()
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as err:
        raise ConfigError(f"malformed config: {err}") from err
    return parse_config(data)
