"""Static figures for the export command (Agg backend, PNG files)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.collections import LineCollection, PolyCollection  # noqa: E402

from .mesh import Triangulation  # noqa: E402


def _save(fig, path: str | Path) -> None:
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


def plot_mesh(T: Triangulation, path: str | Path, highlight=(), shade=(), title: str = "") -> None:
    """2-D triangulation; ``shade`` simplexes filled light, ``highlight`` ones darker."""
    fig, ax = plt.subplots(figsize=(6, 6))
    tris = T.vertices[T.simplices]
    ax.add_collection(PolyCollection(tris, facecolors="none", edgecolors="0.6", linewidths=0.4))
    if len(shade):
        ax.add_collection(PolyCollection(tris[sorted(shade)], facecolors="tab:blue", alpha=0.15, edgecolors="none"))
    if len(highlight):
        ax.add_collection(PolyCollection(tris[sorted(highlight)], facecolors="0.35", alpha=0.5, edgecolors="none"))
    ax.set_xlim(*T.box[0])
    ax.set_ylim(*T.box[1])
    ax.set_aspect("equal")
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_title(title)
    _save(fig, path)


def plot_levelset(T: Triangulation, polylines: list, inner, path: str | Path, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(6, 6))
    tris = T.vertices[T.simplices]
    ax.add_collection(PolyCollection(tris, facecolors="none", edgecolors="0.8", linewidths=0.3))
    if len(inner):
        ax.add_collection(PolyCollection(tris[sorted(inner)], facecolors="0.4", alpha=0.4, edgecolors="none"))
    ax.add_collection(LineCollection(polylines, colors="tab:blue", linewidths=1.5))
    ax.plot([0], [0], "k+")
    ax.set_xlim(*T.box[0])
    ax.set_ylim(*T.box[1])
    ax.set_aspect("equal")
    ax.set_title(title)
    _save(fig, path)


def plot_history(tables: dict, path: str | Path) -> None:
    """Margins and scalars per iteration, storage on top, barrier below."""
    fig, axes = plt.subplots(2, 1, figsize=(7, 6), constrained_layout=True)
    for ax, key, cols in ((axes[0], "storage", ("b1", "sqrt_gamma")), (axes[1], "barrier", ("b2", "uhat"))):
        header, rows = tables[key]
        if not rows:
            ax.set_visible(False)
            continue
        data = np.array([[np.nan if v is None else v for v in r] for r in rows], dtype=float)
        it = np.arange(len(data))
        ax.plot(it, data[:, header.index(cols[0])], "o-", color="tab:red", label=cols[0])
        ax.set_ylabel(cols[0])
        twin = ax.twinx()
        twin.plot(it, data[:, header.index(cols[1])], "s--", color="tab:blue", label=cols[1])
        twin.set_ylabel(cols[1])
        ax.set_xlabel("step")
        ax.set_title(f"{key} phase")
    _save(fig, path)


def plot_fields(axes, V: np.ndarray, W: np.ndarray, level: float, path: str | Path) -> None:
    shape = (len(axes[0]), len(axes[1]))
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(11, 5), constrained_layout=True)
    for ax, Z, name in ((a1, V, "storage V"), (a2, W, "barrier W")):
        Zg = np.ma.masked_invalid(Z.reshape(shape)).T
        cs = ax.contourf(axes[0], axes[1], Zg, levels=30)
        fig.colorbar(cs, ax=ax)
        ax.set_title(name)
        ax.set_aspect("equal")
    a2.contour(axes[0], axes[1], np.ma.masked_invalid(W.reshape(shape)).T, levels=[level], colors="w")
    _save(fig, path)
