"""Optional PNG renderings of CLI outputs. Uses the non-interactive Agg backend."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_eigenfunctions(grid, before, after, path, titles=("initial", "pruned")):
    """Side-by-side heat maps of the real parts of two grid evaluations."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 4.2), constrained_layout=True)
    extent = grid.bounds
    for ax, values, title in zip(axes, (before, after), titles):
        im = ax.imshow(np.real(values), origin="lower", extent=extent, aspect="auto", cmap="RdBu_r")
        ax.plot([-1, 1], [0, 0], "k.", ms=6)
        ax.set_xlabel("$x_1$")
        ax.set_ylabel("$x_2$")
        ax.set_title(title)
        fig.colorbar(im, ax=ax)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_bench(ratios, path, reference=None):
    """Wall-clock times against dictionary size, log scale."""
    fig, ax = plt.subplots(figsize=(5.5, 4), constrained_layout=True)
    s = [r["s"] for r in ratios]
    ax.plot(s, [r["naive_s"] for r in ratios], "o-", label="naive")
    ax.plot(s, [r["rank1_s"] for r in ratios], "s-", label="rank-one")
    if reference:
        ks = sorted(reference)
        ax.plot(ks, [reference[k][0] for k in ks], "o--", color="C0", alpha=0.4, label="naive (reference)")
        ax.plot(ks, [reference[k][1] for k in ks], "s--", color="C1", alpha=0.4, label="rank-one (reference)")
    ax.set_xlabel("initial dictionary size")
    ax.set_ylabel("seconds")
    ax.set_yscale("log")
    ax.legend()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
