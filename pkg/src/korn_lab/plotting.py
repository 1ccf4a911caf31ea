"""Matplotlib figures for the CLI reports (PNG, Agg backend)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from matplotlib.collections import PatchCollection
from matplotlib.patches import Rectangle

params = {
    "font.family": "serif",
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.figsize": (4.2, 3.0),
    "figure.dpi": 120,
    "lines.markersize": 4,
    "lines.linewidth": 1.2,
    "svg.hashsalt": "korn-lab",
}


def _save(fig, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_cover(cover, path: Path, max_cubes: int = 20000):
    """Cubes of a planar cover coloured by level; level histogram in 3D."""
    with plt.rc_context(params):
        fig, ax = plt.subplots()
        if cover.n == 2 and len(cover) <= max_cubes:
            lv = cover.levels
            cmap = plt.get_cmap("viridis")
            norm = matplotlib.colors.Normalize(lv.min(), max(lv.max(), lv.min() + 1))
            rects = [Rectangle(lo, s, s) for lo, s in zip(cover.lo, cover.side)]
            pc = PatchCollection(rects, facecolor=cmap(norm(lv)), edgecolor="k", linewidth=0.15)
            ax.add_collection(pc)
            ax.set_xlim(cover.lo[:, 0].min(), cover.hi[:, 0].max())
            ax.set_ylim(cover.lo[:, 1].min(), cover.hi[:, 1].max())
            ax.set_aspect("equal")
            ax.set_title(f"{len(cover)} Whitney cubes")
        else:
            lv, cnt = np.unique(cover.levels, return_counts=True)
            ax.bar(lv, cnt, color="#2b8cbe")
            ax.set_yscale("log")
            ax.set_xlabel("level")
            ax.set_ylabel("cubes")
        return _save(fig, path)


def plot_shadow(side, depth, ratios, path: Path):
    with plt.rc_context(params):
        fig, ax = plt.subplots()
        ax.scatter(depth, ratios, s=4, c=np.log2(side), cmap="viridis")
        ax.set_xlabel("tree depth")
        ax.set_ylabel(r"$K_t$")
        ax.set_title(f"shadow constant K = {np.max(ratios):.4g}")
        return _save(fig, path)


def plot_components(depth, norms, path: Path):
    with plt.rc_context(params):
        fig, ax = plt.subplots()
        ax.semilogy(depth, np.maximum(norms, 1e-300), ".", ms=3, color="#08589e")
        ax.set_xlabel("tree depth of t")
        ax.set_ylabel(r"$\|g_t\|_{L^2}$")
        return _save(fig, path)


def plot_hardy(betas, norms, path: Path):
    with plt.rc_context(params):
        fig, ax = plt.subplots()
        ax.semilogy(betas, norms, "o-", color="#2b8cbe")
        ax.set_xlabel(r"$\beta$")
        ax.set_ylabel("norm lower bound")
        return _save(fig, path)


def plot_korn(h, C, path: Path):
    with plt.rc_context(params):
        fig, ax = plt.subplots()
        ax.plot(h, C, "o-", color="#08589e")
        ax.set_xscale("log", base=2)
        ax.invert_xaxis()
        ax.set_xlabel("h")
        ax.set_ylabel("C(h)")
        return _save(fig, path)


def plot_cusp(eps, lhs, rhs, path: Path):
    with plt.rc_context(params):
        fig, ax = plt.subplots()
        ax.loglog(eps, lhs, "o-", label=r"$\|Dv\|^2 + \|v\|^2_Q$")
        ax.loglog(eps, rhs, "s-", label=r"$\|l(v)\|^2 + \|v\|^2_Q$")
        ax.invert_xaxis()
        ax.set_xlabel(r"$\varepsilon$")
        ax.legend()
        return _save(fig, path)
