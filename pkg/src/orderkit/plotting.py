"""Figure rendering for statistics reports. Imported lazily by the CLI."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from orderkit.stats import StatsReport  # noqa: E402

# fixed metadata so repeated renders are byte-identical
_PNG_META = {"Software": None}

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
}


def _bar(ax, labels, values, title, ylabel):
    ax.bar(range(len(values)), values, color="0.35", width=0.7)
    ax.set_xticks(range(len(values)))
    ax.set_xticklabels([str(l) for l in labels], rotation=30 if len(labels) > 4 else 0, ha="right" if len(labels) > 4 else "center")
    ax.set_title(title)
    ax.set_ylabel(ylabel)


def _heatmap(ax, table, title):
    im = ax.imshow(table.matrix, vmin=0.0, vmax=1.0, cmap="Greys")
    ax.set_xticks(range(len(table.columns)))
    ax.set_xticklabels(table.columns, rotation=45, ha="right")
    ax.set_yticks(range(len(table.rows)))
    ax.set_yticklabels(table.rows)
    for r, row in enumerate(table.matrix):
        for c, v in enumerate(row):
            ax.text(c, r, f"{v:.2f}", ha="center", va="center", color="white" if v > 0.5 else "black", fontsize=7)
    ax.set_title(title)
    return im


def render_stats_figures(report: StatsReport, outdir: str) -> list[str]:
    """Write histogram and conditional-table PNGs into ``outdir``; returns the paths written."""
    os.makedirs(outdir, exist_ok=True)
    written = []
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(2, 2, figsize=(9, 6.5))
        ipi = report.instances_per_image
        _bar(axes[0, 0], list(ipi), list(ipi.values()), "Instances per image", "images")
        occ_c = report.count_hist["occlusion"]
        dep_c = report.count_hist["depth"]
        keys = sorted(set(occ_c) | set(dep_c))
        x = range(len(keys))
        axes[0, 1].bar([i - 0.2 for i in x], [occ_c.get(k, 0) for k in keys], width=0.4, label="occlusion", color="0.25")
        axes[0, 1].bar([i + 0.2 for i in x], [dep_c.get(k, 0) for k in keys], width=0.4, label="depth", color="0.65")
        axes[0, 1].set_xticks(list(x))
        axes[0, 1].set_xticklabels([str(k) for k in keys])
        axes[0, 1].set_title("Workers per order (count)")
        axes[0, 1].legend(frameon=False)
        _bar(axes[1, 0], list(report.occ_types), list(report.occ_types.values()), "Occlusion types", "fraction")
        _bar(axes[1, 1], list(report.depth_types), list(report.depth_types.values()), "Depth types", "fraction")
        fig.tight_layout()
        path = os.path.join(outdir, "statistics.png")
        fig.savefig(path, metadata=_PNG_META)
        plt.close(fig)
        written.append(path)

        fig, axes = plt.subplots(1, 2, figsize=(11, 4.5))
        _heatmap(axes[0], report.p_occ_given_depth, "P(occlusion | depth)")
        _heatmap(axes[1], report.p_depth_given_occ, "P(depth | occlusion)")
        fig.tight_layout()
        path = os.path.join(outdir, "conditional.png")
        fig.savefig(path, metadata=_PNG_META)
        plt.close(fig)
        written.append(path)
    return written
