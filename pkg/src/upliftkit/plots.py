"""Static figure rendering for harness reports.

Figures are written as SVG next to the CSV tables. Output is byte-stable
across runs: the Agg backend, a fixed hash salt for element IDs, and no
creation-date metadata.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "upliftkit"

import matplotlib.pyplot as plt  # noqa: E402

from .metrics import CurveReport  # noqa: E402

_SAVE_KWARGS = {"format": "svg", "metadata": {"Date": None}}


def save_line_chart(path, x, series: dict[str, list], xlabel: str, ylabel: str, title: str) -> None:
    """One line per labelled series over a shared x grid."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label in sorted(series):
        ax.plot(x, series[label], marker="o", markersize=3, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def save_curve_chart(path, reports: dict[str, CurveReport], title: str) -> None:
    """Overlay curve reports with the random-ranking diagonal for reference."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label in sorted(reports):
        report = reports[label]
        xs = [p[0] for p in report.points]
        ys = [p[1] for p in report.points]
        ax.plot(xs, ys, label=f"{label} (area={report.area:.3f})")
    ax.plot([0, 1], [0, 1], linestyle="--", color="gray", alpha=0.7, label="random")
    kind = next(iter(reports.values())).kind if reports else "uplift"
    if kind == "cost":
        ax.set_xlabel("cumulative incremental engagement loss (normalized)")
        ax.set_ylabel("cumulative incremental revenue (normalized)")
    else:
        ax.set_xlabel("targeted population fraction")
        ax.set_ylabel("cumulative incremental gain (normalized)")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def save_bar_chart(path, labels: list[str], values: list[float], ylabel: str, title: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(range(len(labels)), values, color="steelblue", edgecolor="black", alpha=0.85)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)
