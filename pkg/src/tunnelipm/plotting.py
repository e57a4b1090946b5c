"""Figures written next to the report CSVs."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

CASE_COLORS = {"case1": "#4c72b0", "case2": "#dd8452", "original": "#55a868"}
AP_REFERENCE = 0.85


def report_style():
    return {
        "font.size": 10,
        "axes.spines.top": False,
        "axes.spines.right": False,
        "axes.grid": True,
        "grid.alpha": 0.3,
        "savefig.dpi": 150,
        "savefig.bbox": "tight",
    }


def _grouped_bars(ax, labels, series, ylabel):
    n = max(len(series), 1)
    width = 0.8 / n
    x = np.arange(len(labels))
    for i, (name, values) in enumerate(series.items()):
        ax.bar(x + (i - (n - 1) / 2) * width, values, width, label=name, color=CASE_COLORS.get(name))
    ax.set_xticks(x)
    ax.set_xticklabels(labels)
    ax.set_ylabel(ylabel)
    if series:
        ax.legend(frameon=False)


def plot_ap_by_section(aps, path, reference=AP_REFERENCE):
    """Grouped bars of per-section AP, one color per case.

    Args:
        aps: mapping of case label to per-section AP list.
    """
    sections = max((len(v) for v in aps.values()), default=0)
    labels = [f"section {k + 1}" for k in range(sections)]
    with plt.rc_context(report_style()):
        fig, ax = plt.subplots(figsize=(6, 3.5))
        _grouped_bars(ax, labels, aps, "AP @ IoU 0.5")
        ax.axhline(reference, color="0.4", lw=1, ls="--")
        ax.set_ylim(0, 1.05)
        ax.set_xlabel("distance section (50 m each, nearest first)")
        fig.savefig(path)
        plt.close(fig)


def plot_dataset_counts(reports, path):
    """Per-section object counts for each dataset report."""
    sections = max((len(r.rows) for r in reports), default=0)
    labels = [f"section {k + 1}" for k in range(sections)]
    series = {r.case: [row.objects for row in r.rows] for r in reports}
    with plt.rc_context(report_style()):
        fig, ax = plt.subplots(figsize=(6, 3.5))
        _grouped_bars(ax, labels, series, "objects")
        fig.savefig(path)
        plt.close(fig)
