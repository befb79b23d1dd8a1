"""SVG plots of the ROC overlay and the cost sweep.

Rendering uses the Agg backend with a fixed SVG hash salt and no date metadata so identical inputs give
identical files.
"""

from pathlib import Path
from typing import Tuple

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

SVG_SALT = "riskmine"
FIGSIZE = (6.0, 4.5)


def _figure(figsize: Tuple[float, float] = FIGSIZE):
    return plt.subplots(figsize=figsize, constrained_layout=True)


def _save(fig, path: Path) -> None:
    with matplotlib.rc_context({"svg.hashsalt": SVG_SALT, "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_roc(roc: pd.DataFrame, overlay: pd.DataFrame, path: str | Path) -> None:
    """ROC curve per sample with the baseline operating points on top."""
    fig, ax = _figure()
    for sample, points in roc.groupby("sample", sort=True):
        ax.plot(points["fpr"], points["tpr"], label=str(sample).replace("_", "-"), linewidth=1.5)
    ax.plot([0, 1], [0, 1], linestyle=":", color="grey", linewidth=1)
    for row in overlay.itertuples():
        ax.scatter(row.fpr, row.tpr, marker="o", s=24, zorder=3)
        ax.annotate(row.method, (row.fpr, row.tpr), textcoords="offset points", xytext=(4, -8), fontsize=7)
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_xlabel("1 - specificity")
    ax.set_ylabel("Sensitivity")
    ax.legend(loc="lower right", fontsize=8)
    _save(fig, Path(path))


def plot_cost_sweep(sweep: pd.DataFrame, path: str | Path) -> None:
    """Mean cross-validated AUC against cost, one line per subgroup, optima marked."""
    fig, ax = _figure()
    for subgroup, points in sweep.groupby("subgroup", sort=False):
        ax.errorbar(points["cost"], points["mean_auc"], yerr=points["sd_auc"], label=str(subgroup), capsize=2,
                    linewidth=1)
        best = points[points["optimal"].astype(bool)]
        ax.scatter(best["cost"], best["mean_auc"], marker="*", s=60, zorder=3, color="black")
    ax.set_xscale("log")
    ax.set_xlabel("Positive-class cost")
    ax.set_ylabel("Mean AUC")
    ax.legend(fontsize=7, ncol=2)
    _save(fig, Path(path))
