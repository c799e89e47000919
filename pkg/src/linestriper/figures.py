"""Report figures rendered to image files next to the CSV/JSON outputs."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")  # file output only, no display server

import matplotlib.pyplot as plt
import numpy as np

from .gcode_vm import MIX_LETTERS, DepositionProfile
from .image_analysis import WidthSeries
from .stats import GroupStats, group_stats
from .width_model import WidthModel


def save_deposition_figure(profile: DepositionProfile, path: str | Path, title: str = "") -> None:
    """Per-channel deposited volume per bin along the travel axis."""
    fig, ax = plt.subplots(figsize=(8, 3.2))
    edges = profile.bin_edges()
    centers = [(a + b) / 2 for a, b in zip(edges, edges[1:])]
    widths = [b - a for a, b in zip(edges, edges[1:])]
    channels = len(profile.outside)
    bottom = np.zeros(len(centers))
    for c in range(channels):
        vols = [row[c] for row in profile.bins]
        ax.bar(centers, vols, width=widths, bottom=bottom, align="center",
               label=f"channel {MIX_LETTERS[c]}", alpha=0.8)
        bottom += np.asarray(vols)
    ax.set_xlabel("travel position (mm)")
    ax.set_ylabel("volume per bin (uL)")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_width_series_figure(
    series: Sequence[WidthSeries],
    labels: Sequence[str],
    path: str | Path,
    title: str = "",
) -> None:
    """Binned mean widths along the travel axis, one curve per series.

    Series with at least two measured bins also get a shaded 95% CI band
    around their overall mean.
    """
    fig, ax = plt.subplots(figsize=(8, 3.2))
    for ws, label in zip(series, labels):
        xs = [ws.bin_start(i) + ws.bin_length / 2 for i in range(len(ws.bins))]
        ys = [b.mean_width if b.sample_count else np.nan for b in ws.bins]
        (line,) = ax.plot(xs, ys, marker="o", markersize=3, label=label)
        samples = ws.samples()
        if len(samples) >= 2:
            gs = group_stats(samples)
            ax.axhspan(gs.ci95[0], gs.ci95[1], color=line.get_color(), alpha=0.12)
    ax.set_xlabel("travel position (mm)")
    ax.set_ylabel("line width (mm)")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_group_stats_figure(
    stats: Sequence[GroupStats],
    labels: Sequence[str],
    path: str | Path,
    title: str = "",
) -> None:
    """Group means with their confidence intervals as error bars."""
    fig, ax = plt.subplots(figsize=(1.6 + 1.2 * len(stats), 3.2))
    xs = np.arange(len(stats))
    means = [g.mean for g in stats]
    errs = [[g.mean - g.ci95[0] for g in stats], [g.ci95[1] - g.mean for g in stats]]
    ax.errorbar(xs, means, yerr=errs, fmt="o", capsize=4)
    ax.set_xticks(xs, labels, rotation=20, ha="right")
    ax.set_ylabel("mean width (mm)")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_width_model_figure(model: WidthModel, path: str | Path, mark_dr: float | None = None) -> None:
    """The DR-to-width curve with its reference points and saturation level."""
    from .width_model import predict_width

    fig, ax = plt.subplots(figsize=(5, 3.2))
    top = model.data[-1].dr * 1.25
    xs = np.linspace(0.0, top, 256)
    ys = [predict_width(model, float(x)).width for x in xs]
    ax.plot(xs, ys, label="model")
    ax.plot([d.dr for d in model.data], [d.width for d in model.data], "ko", label="reference data")
    ax.axhline(model.w_max, linestyle="--", color="gray", label=f"saturation {model.w_max:g} mm")
    if mark_dr is not None:
        p = predict_width(model, mark_dr)
        ax.plot([mark_dr], [p.width], "r*", markersize=12, label=f"{mark_dr:g} nL/mm")
    ax.set_xlabel("dispensing rate (nL/mm)")
    ax.set_ylabel("line width (mm)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
