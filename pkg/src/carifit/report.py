"""Figure and delimited-text reporting for fits and method comparisons.

All writers are byte-deterministic: PNG metadata is stripped, float
formatting is fixed, and nothing timestamps the output, so re-running a
report over identical inputs reproduces identical files.
"""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from PIL import Image

from .camera import project
from .mesh import LandmarkSpec

TARGET_COLOR = "#1f77b4"
REPROJECTED_COLOR = "#d62728"
SEGMENT_COLOR = "#2ca02c"

_PNG_META = {"Software": None}  # drop the library tag for byte-identical output


def load_image(path):
    """Image as an RGB array; raises ValueError for undecodable files."""
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"))
    except Exception as exc:
        raise ValueError(f"cannot decode image {path}: {exc}") from exc


def render_overlay(result, lms: LandmarkSpec, image_path, out_path) -> None:
    """Write the input image with target and reprojected landmarks over-plotted.

    Targets draw in blue, reprojected model landmarks in red, and a green
    segment joins each pair so per-point residuals read directly.
    """
    img = load_image(image_path)
    reproj = project(result.proj, result.mesh.vertices[lms.indices])
    targets = lms.points2d

    h, w = img.shape[:2]
    fig = plt.figure(figsize=(w / 100.0, h / 100.0), dpi=100)
    ax = fig.add_axes([0, 0, 1, 1])
    ax.imshow(img, interpolation="nearest")
    for (tx, ty), (rx, ry) in zip(targets, reproj):
        ax.plot([tx, rx], [ty, ry], color=SEGMENT_COLOR, linewidth=0.9, zorder=1)
    ax.scatter(targets[:, 0], targets[:, 1], s=12, color=TARGET_COLOR,
               marker="o", zorder=2, label="target")
    ax.scatter(reproj[:, 0], reproj[:, 1], s=12, color=REPROJECTED_COLOR,
               marker="x", zorder=3, label="model")
    ax.set_xlim(-0.5, w - 0.5)
    ax.set_ylim(h - 0.5, -0.5)
    ax.axis("off")
    fig.savefig(out_path, metadata=_PNG_META)
    plt.close(fig)


def write_trace_csv(result, out_path) -> None:
    """Per-iteration energies as CSV."""
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh).writerows(result.trace_rows())


def render_trace_figure(result, out_path) -> None:
    """Energy trace per outer iteration as a two-panel figure."""
    iters = [t.iteration for t in result.trace]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3))
    ax1.plot(iters, [t.e_def for t in result.trace], "o-", color=TARGET_COLOR,
             label="deformation")
    post = [(t.iteration, t.e_def_post_w) for t in result.trace if t.e_def_post_w is not None]
    if post:
        ax1.plot([p[0] for p in post], [p[1] for p in post], "s--",
                 color=SEGMENT_COLOR, label="after weight step")
    ax1.set_xlabel("iteration")
    ax1.set_ylabel("E_def")
    ax1.legend(fontsize=8)
    ax2.plot(iters, [t.e_error for t in result.trace], "o-", color=REPROJECTED_COLOR)
    ax2.set_xlabel("iteration")
    ax2.set_ylabel("E_error (px)")
    fig.tight_layout()
    fig.savefig(out_path, metadata=_PNG_META)
    plt.close(fig)


def write_comparison_csv(table, out_path) -> None:
    """Method-comparison table as CSV: one row per task plus a mean row.

    ``table`` maps method name -> list of per-task errors; all lists share
    the task order of ``table['task']`` (the task name column).
    """
    methods = [k for k in table if k != "task"]
    tasks = table["task"]
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["task"] + methods)
        for i, task in enumerate(tasks):
            writer.writerow([task] + [f"{table[m][i]:.6g}" for m in methods])
        writer.writerow(["mean"] + [f"{float(np.mean(table[m])):.6g}" for m in methods])


def render_comparison_figure(table, out_path) -> None:
    """Bar chart of mean fitting error per method."""
    methods = [k for k in table if k != "task"]
    means = [float(np.mean(table[m])) for m in methods]
    fig, ax = plt.subplots(figsize=(1.4 * len(methods) + 2, 3))
    ax.bar(methods, means, color=TARGET_COLOR)
    ax.set_ylabel("mean E_error (px)")
    ax.set_yscale("log")
    for i, v in enumerate(means):
        ax.text(i, v, f"{v:.3g}", ha="center", va="bottom", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, metadata=_PNG_META)
    plt.close(fig)
