"""Figure rendering for the report path.

Every figure is drawn from a posterior summary and written straight to file
next to the delimited outputs; nothing here opens a display.
"""

from __future__ import annotations

from itertools import combinations
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from surfclust.summaries import PosteriorSummary


def _grid(n_panels: int, ncols: int = 5):
    ncols = min(ncols, max(n_panels, 1))
    nrows = (n_panels + ncols - 1) // ncols
    fig, axes = plt.subplots(
        nrows, ncols, figsize=(3.0 * ncols, 2.4 * nrows), squeeze=False
    )
    return fig, axes.ravel()


def plot_cluster_counts(summary: PosteriorSummary, path) -> Path:
    """One panel per basis: posterior mean number of clusters over periods."""
    p, T = summary.cluster_counts.shape
    fig, axes = _grid(p)
    x = np.asarray(summary.periods)
    for j in range(p):
        ax = axes[j]
        ax.plot(x, summary.cluster_counts[j], lw=1.2)
        ax.set_title(f"basis {j + 1}", fontsize=9)
        ax.set_ylim(bottom=0.9)
    for ax in axes[p:]:
        ax.set_visible(False)
    fig.supxlabel("period")
    fig.supylabel("mean clusters")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def plot_coclustering(summary: PosteriorSummary, outdir) -> list[Path]:
    """Per basis: pair-by-period heatmap of co-clustering probabilities."""
    out = Path(outdir)
    p, T, n, _ = summary.cocluster.shape
    pairs = list(combinations(range(n), 2))
    labels = [
        f"{summary.populations[a]}-{summary.populations[b]}" for a, b in pairs
    ]
    paths = []
    for j in range(p):
        mat = np.array(
            [summary.cocluster[j, :, a, b] for a, b in pairs]
        )  # (pairs, T)
        fig, ax = plt.subplots(
            figsize=(0.45 * max(T, 6) / 2 + 2, 0.22 * len(pairs) + 1.2)
        )
        im = ax.imshow(mat, aspect="auto", vmin=0, vmax=1, cmap="coolwarm")
        ax.set_yticks(range(len(pairs)), labels, fontsize=6)
        ticks = np.linspace(0, T - 1, min(T, 8)).astype(int)
        ax.set_xticks(ticks, np.asarray(summary.periods)[ticks], fontsize=7)
        ax.set_title(f"co-clustering probability, basis {j + 1}", fontsize=9)
        fig.colorbar(im, ax=ax, shrink=0.8)
        fig.tight_layout()
        path = out / f"coclustering_basis{j + 1:02d}.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        paths.append(path)
    return paths


def plot_beta_trajectories(summary: PosteriorSummary, path) -> Path:
    """One panel per population: mean coefficient paths, one line per basis."""
    p, T, n = summary.beta_mean.shape
    fig, axes = _grid(n)
    x = np.asarray(summary.periods)
    cmap = plt.get_cmap("viridis", p)
    for i in range(n):
        ax = axes[i]
        for j in range(p):
            ax.plot(x, summary.beta_mean[j, :, i], color=cmap(j), lw=1.0)
        ax.set_title(summary.populations[i], fontsize=9)
    for ax in axes[n:]:
        ax.set_visible(False)
    fig.supxlabel("period")
    fig.supylabel("coefficient")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def _tile(ax, mat: np.ndarray, periods, title: str):
    im = ax.imshow(mat, aspect="auto", vmin=0, vmax=1, cmap="viridis")
    T = mat.shape[1]
    ticks = np.linspace(0, T - 1, min(T, 8)).astype(int)
    ax.set_xticks(ticks, np.asarray(periods)[ticks], fontsize=7)
    ax.set_ylabel("basis", fontsize=8)
    ax.set_title(title, fontsize=9)
    return im


def plot_accuracy(summary: PosteriorSummary, path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3))
    im = _tile(ax, summary.accuracy, summary.periods, "co-clustering accuracy")
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def plot_eta2(summary: PosteriorSummary, outdir) -> list[Path]:
    out = Path(outdir)
    paths = []
    for q, name in enumerate(summary.indicator_names):
        fig, ax = plt.subplots(figsize=(6, 3))
        mat = np.ma.masked_invalid(summary.eta2[q])
        im = _tile(ax, mat, summary.periods, f"eta^2: {name}")
        fig.colorbar(im, ax=ax, shrink=0.8)
        fig.tight_layout()
        path = out / f"eta2_{_safe(name)}.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        paths.append(path)
    return paths


def plot_basis(basis, path) -> Path:
    """All basis functions over the age grid."""
    fig, ax = plt.subplots(figsize=(7, 3))
    for j in range(basis.p):
        ax.plot(basis.age_grid, basis.design[:, j], lw=1.0)
    ax.set_xlabel("age")
    ax.set_ylabel("basis value")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def _safe(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in name)


def render_all(summary: PosteriorSummary, outdir) -> list[Path]:
    """Write the standard figure set alongside the CSV outputs."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [plot_cluster_counts(summary, out / "cluster_counts.png")]
    paths += plot_coclustering(summary, out)
    paths.append(plot_beta_trajectories(summary, out / "beta_trajectories.png"))
    if summary.accuracy is not None:
        paths.append(plot_accuracy(summary, out / "accuracy.png"))
    if summary.eta2 is not None:
        paths += plot_eta2(summary, out)
    return paths
