"""Input-affine systems  x' = f(x) + G(x) u,  y = h(x)  given as expressions."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import tomli

from . import expr as ex

_ORIGIN_TOL = 1e-12


class SystemSpecError(ValueError):
    pass


@dataclass(frozen=True)
class SystemSpec:
    n: int
    m: int
    q: int
    f: tuple[ex.Expr, ...]
    G: tuple[tuple[ex.Expr, ...], ...]  # n rows, m columns
    h: tuple[ex.Expr, ...]
    A: np.ndarray | None = field(default=None, compare=False)
    B: np.ndarray | None = field(default=None, compare=False)
    C: np.ndarray | None = field(default=None, compare=False)
    name: str = "system"

    # -- vectorized evaluation; X has shape (N, n) --

    def f_eval(self, X) -> np.ndarray:
        Xt = np.atleast_2d(np.asarray(X, dtype=float)).T
        return np.stack([ex.evaluate(e, Xt) for e in self.f], axis=-1)

    def G_eval(self, X) -> np.ndarray:
        Xt = np.atleast_2d(np.asarray(X, dtype=float)).T
        rows = [np.stack([ex.evaluate(e, Xt) for e in row], axis=-1) for row in self.G]
        return np.stack(rows, axis=-2)

    def h_eval(self, X) -> np.ndarray:
        Xt = np.atleast_2d(np.asarray(X, dtype=float)).T
        return np.stack([ex.evaluate(e, Xt) for e in self.h], axis=-1)

    def gbar_eval(self, X) -> np.ndarray:
        """Infinity norm (max absolute row sum) of G G^T at each point."""
        G = self.G_eval(X)
        GGt = np.einsum("...ik,...jk->...ij", G, G)
        return np.abs(GGt).sum(axis=-1).max(axis=-1)

    def ginf_eval(self, X) -> np.ndarray:
        """Infinity norm of G itself."""
        return np.abs(self.G_eval(X)).sum(axis=-1).max(axis=-1)

    # -- symbolic second derivatives used by the curvature bounds --

    @cached_property
    def f_hessians(self) -> tuple:
        """Entries d2 f_k / dx_r dx_s for r <= s, as (k, r, s, expr) with non-zero expr."""
        return _hessian_entries(self.f, self.n)

    @cached_property
    def hh_expr(self) -> ex.Expr:
        out: ex.Expr = ex.ZERO
        for e in self.h:
            out = out + e * e
        return out

    @cached_property
    def hh_hessian(self) -> tuple:
        return _hessian_entries((self.hh_expr,), self.n)

    @cached_property
    def ggt_exprs(self) -> tuple[tuple[ex.Expr, ...], ...]:
        out = []
        for i in range(self.n):
            row = []
            for j in range(self.n):
                s: ex.Expr = ex.ZERO
                for k in range(self.m):
                    s = s + self.G[i][k] * self.G[j][k]
                row.append(s)
            out.append(tuple(row))
        return tuple(out)

    @cached_property
    def ggt_hessians(self) -> tuple:
        flat = tuple(e for row in self.ggt_exprs for e in row)
        return _hessian_entries(flat, self.n)

    def linearization(self):
        """(A, B, C) at the origin: given explicitly, or from symbolic Jacobians."""
        if self.A is not None:
            A = np.asarray(self.A, dtype=float).reshape(self.n, self.n)
        else:
            A = _jacobian_at_zero(self.f, self.n)
        if self.B is not None:
            B = np.asarray(self.B, dtype=float).reshape(self.n, self.m)
        else:
            B = np.array([[ex.evaluate(e, np.zeros(self.n)) for e in row] for row in self.G]).reshape(self.n, self.m)
        if self.C is not None:
            C = np.asarray(self.C, dtype=float).reshape(self.q, self.n)
        else:
            C = _jacobian_at_zero(self.h, self.n)
        return A, B, C

    @cached_property
    def source(self) -> str:
        """Canonical TOML text; loading it yields an equal system."""
        lines = [f'name = "{self.name}"', f"n = {self.n}", f"m = {self.m}", f"q = {self.q}"]
        lines += [f'f{k + 1} = "{ex.to_string(e)}"' for k, e in enumerate(self.f)]
        lines.append("G = [" + ", ".join(f'"{ex.to_string(e)}"' for row in self.G for e in row) + "]")
        lines += [f'h{k + 1} = "{ex.to_string(e)}"' for k, e in enumerate(self.h)]
        for key in ("A", "B", "C"):
            mat = getattr(self, key)
            if mat is not None:
                vals = ", ".join(repr(float(v)) for v in np.asarray(mat, dtype=float).ravel())
                lines.append(f"{key} = [{vals}]")
        return "\n".join(lines) + "\n"

    @cached_property
    def hash(self) -> str:
        return hashlib.sha256(self.source.encode()).hexdigest()


def _hessian_entries(exprs, n) -> tuple:
    out = []
    for k, e in enumerate(exprs):
        first = [ex.differentiate(e, r + 1) for r in range(n)]
        for r in range(n):
            for s in range(r, n):
                d2 = ex.differentiate(first[r], s + 1)
                if not (isinstance(d2, ex.Const) and d2.value == 0.0):
                    out.append((k, r, s, d2))
    return tuple(out)


def _jacobian_at_zero(exprs, n) -> np.ndarray:
    zero = np.zeros(n)
    return np.array([[ex.evaluate(ex.differentiate(e, j + 1), zero) for j in range(n)] for e in exprs],
                    dtype=float).reshape(len(exprs), n)


def parse_system(data: dict, name: str | None = None) -> SystemSpec:
    try:
        n, m, q = int(data["n"]), int(data["m"]), int(data["q"])
    except KeyError as err:
        raise SystemSpecError(f"missing dimension {err.args[0]!r}") from None
    if min(n, m, q) < 1:
        raise SystemSpecError("dimensions n, m, q must be positive")

    def grab(key):
        if key not in data:
            raise SystemSpecError(f"missing entry {key!r}")
        try:
            return ex.parse(str(data[key]), nvars=n)
        except ex.ExprSyntaxError as err:
            raise SystemSpecError(f"{key}: {err}") from err

    f = tuple(grab(f"f{k + 1}") for k in range(n))
    h = tuple(grab(f"h{k + 1}") for k in range(q))
    g_src = data.get("G")
    if g_src is None or len(g_src) != n * m:
        raise SystemSpecError(f"G must list n*m = {n * m} expressions row-major")
    try:
        g_flat = [ex.parse(str(s), nvars=n) for s in g_src]
    except ex.ExprSyntaxError as err:
        raise SystemSpecError(f"G: {err}") from err
    G = tuple(tuple(g_flat[r * m:(r + 1) * m]) for r in range(n))

    mats = {}
    for key, shape in (("A", (n, n)), ("B", (n, m)), ("C", (q, n))):
        if key in data:
            arr = np.asarray(data[key], dtype=float)
            if arr.size != shape[0] * shape[1]:
                raise SystemSpecError(f"{key} must have {shape[0] * shape[1]} entries")
            mats[key] = arr.reshape(shape)

    spec = SystemSpec(n, m, q, f, G, h, name=str(data.get("name", name or "system")), **mats)
    check_origin(spec)
    return spec


def check_origin(spec: SystemSpec) -> None:
    """Reject systems whose origin is not an equilibrium with zero output."""
    zero = np.zeros((1, spec.n))
    try:
        f0 = spec.f_eval(zero)[0]
        h0 = spec.h_eval(zero)[0]
        g0 = spec.gbar_eval(zero)[0]
    except ex.ExprDomainError as err:
        raise SystemSpecError(f"cannot evaluate at the origin: {err}") from err
    if np.max(np.abs(f0)) > _ORIGIN_TOL:
        raise SystemSpecError(f"f(0) = {f0.tolist()} is not zero")
    if np.max(np.abs(h0)) > _ORIGIN_TOL:
        raise SystemSpecError(f"h(0) = {h0.tolist()} is not zero")
    if abs(g0) > _ORIGIN_TOL:
        raise SystemSpecError(f"||G(0)G(0)^T|| = {g0} is not zero")


BUILTIN_SYSTEMS = {
    "pendulum": """\
name = "pendulum"
n = 2
m = 1
q = 1
f1 = "x2"
f2 = "-sin(x1) - x2"
G = ["0", "x2"]
h1 = "x2"
""",
    "zero": """\
name = "zero"
n = 2
m = 1
q = 1
f1 = "0"
f2 = "0"
G = ["0", "0"]
h1 = "0"
""",
}


def loads_system(text: str, name: str | None = None) -> SystemSpec:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as err:
        raise SystemSpecError(f"malformed system file: {err}") from err
    return parse_system(data, name)


def load_system(source: str | Path) -> SystemSpec:
    """Load a built-in system by name, or a TOML system file by path."""
    key = str(source)
    if key in BUILTIN_SYSTEMS:
        return loads_system(BUILTIN_SYSTEMS[key], key)
    path = Path(source)
    return loads_system(path.read_text(), path.stem)
