"""Report figures: micrograph, score grid, segmentation and picks side by side."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Rectangle  # noqa: E402

__all__ = ["contrast_limits", "save_overlay", "plot_overlay", "save_benchmark_figure", "write_pgm"]


def contrast_limits(image: np.ndarray, lo: float = 1.0, hi: float = 99.0) -> tuple[float, float]:
    vmin, vmax = np.percentile(image, [lo, hi])
    if vmax <= vmin:
        vmax = vmin + 1.0
    return float(vmin), float(vmax)


def plot_overlay(outcome, truth=None):
    """Four panels: micrograph, query scores, segmentation, picks (binned coordinates)."""
    m = outcome.micrograph
    img = m.data
    vmin, vmax = contrast_limits(img)
    fig, axes = plt.subplots(1, 4, figsize=(20, 5.4), constrained_layout=True)

    axes[0].imshow(img, cmap="gray", vmin=vmin, vmax=vmax)
    axes[0].set_title("micrograph")

    q = outcome.queries
    grid = outcome.scores.k.reshape(q.grid_shape)
    half = q.n / 2.0
    rows = q.positions[:: q.grid_shape[1], 0] + half
    cols = q.positions[: q.grid_shape[1], 1] + half
    im = axes[1].imshow(grid, cmap="viridis", aspect="auto",
                        extent=(cols[0], cols[-1], rows[-1], rows[0]))
    axes[1].set_xlim(0, img.shape[1])
    axes[1].set_ylim(img.shape[0], 0)
    fig.colorbar(im, ax=axes[1], shrink=0.8, label="score k")
    axes[1].set_title(f"query scores (t = {outcome.scores.t:.3g})")

    axes[2].imshow(outcome.mask, cmap="gray", vmin=0, vmax=1)
    axes[2].set_title("classifier output")

    axes[3].imshow(img, cmap="gray", vmin=vmin, vmax=vmax)
    box = outcome.picks[0].box_size / m.bin_factor if outcome.picks else 0
    for p in outcome.picks:
        r, c = m.from_original(p.center_y, p.center_x)
        axes[3].add_patch(Rectangle((c - box / 2, r - box / 2), box, box,
                                    fill=False, edgecolor="tab:red", linewidth=1.0))
    if truth is not None:
        tr, tc = m.from_original(truth.centers[:, 0], truth.centers[:, 1])
        axes[3].plot(tc, tr, "+", color="tab:cyan", markersize=6, label="planted")
        axes[3].legend(loc="upper right", fontsize=8)
    axes[3].set_title(f"{len(outcome.picks)} picks")

    for ax in axes:
        ax.set_xticks([])
        ax.set_yticks([])
    return fig


def save_overlay(outcome, path, truth=None, dpi: int = 100) -> Path:
    fig = plot_overlay(outcome, truth)
    fig.savefig(path, dpi=dpi)
    plt.close(fig)
    return Path(path)


def save_benchmark_figure(rows, path, dpi: int = 100) -> Path:
    """Bar chart of per-seed precision and recall from benchmark result rows."""
    seeds = [r["seed"] for r in rows]
    x = np.arange(len(seeds))
    fig, ax = plt.subplots(figsize=(max(4.0, 0.6 * len(seeds) + 2), 3.5), constrained_layout=True)
    ax.bar(x - 0.2, [r["precision"] for r in rows], width=0.4, label="precision")
    ax.bar(x + 0.2, [r["recall"] for r in rows], width=0.4, label="recall")
    ax.set_xticks(x, [str(s) for s in seeds])
    ax.set_xlabel("seed")
    ax.set_ylim(0, 1.05)
    ax.legend(loc="lower right")
    fig.savefig(path, dpi=dpi)
    plt.close(fig)
    return Path(path)


def write_pgm(image: np.ndarray, path) -> None:
    """8-bit binary PGM; binary masks map to 0/255, other images are min-max scaled."""
    a = np.asarray(image, dtype=np.float64)
    if a.size and a.min() >= 0 and a.max() <= 1:
        scaled = a * 255.0
    else:
        lo, hi = (float(a.min()), float(a.max())) if a.size else (0.0, 1.0)
        scaled = (a - lo) / (hi - lo if hi > lo else 1.0) * 255.0
    data = np.clip(np.rint(scaled), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{data.shape[1]} {data.shape[0]}\n255\n".encode("ascii"))
        fh.write(data.tobytes())
