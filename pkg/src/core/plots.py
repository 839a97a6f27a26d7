import io

import matplotlib as mpl

mpl.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..utils.fs import atomic_write_bytes  # noqa: E402

FIGURE_STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.figsize": (6.4, 3.6),
    "figure.dpi": 100,
}


def _save(fig, path):
    buf = io.BytesIO()
    fig.savefig(buf, format="png", bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    atomic_write_bytes(path, buf.getvalue())


def plot_nc_curves(reports, path, task="classify"):
    """Test metric against n_c per (model, composition), mean line with ±std band."""
    metric = "auroc" if task == "classify" else "r2"
    groups = {}
    for r in reports:
        if r.task != task or r.model in ("NAIVE", "ENTROPY_GB"):
            continue
        groups.setdefault((r.model, r.composition), []).append(r)

    with mpl.rc_context(FIGURE_STYLE):
        fig, ax = plt.subplots()
        for (model, composition), group in sorted(groups.items()):
            group = sorted(group, key=lambda r: r.n_c)
            x = np.array([r.n_c + 1 for r in group])
            mean = np.array([r.mean[metric] for r in group])
            std = np.array([r.std[metric] for r in group])
            (line,) = ax.plot(x, mean, marker="o", ms=3, label=f"{model} {composition}")
            ax.fill_between(x, mean - std, mean + std, color=line.get_color(), alpha=0.2, lw=0)
        ax.set_xlabel("number of frames")
        ax.set_ylabel(metric.upper() if metric == "auroc" else "$R^2$")
        if groups:
            ax.legend(loc="best")
        _save(fig, path)


def plot_pred_vs_true(true_iou, pred_iou, sizes, path, r2=None):
    """Predicted against true IoU_adj, dot area growing with segment size."""
    sizes = np.asarray(sizes, dtype=np.float64)
    area = 4.0 + 60.0 * np.sqrt(sizes / max(sizes.max(), 1.0)) if sizes.size else sizes
    with mpl.rc_context(FIGURE_STYLE):
        fig, ax = plt.subplots(figsize=(4.0, 4.0))
        ax.scatter(true_iou, pred_iou, s=area, alpha=0.4, edgecolors="none")
        ax.plot([0, 1], [0, 1], color="k", lw=0.8)
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1)
        ax.set_xlabel("IoU_adj")
        ax.set_ylabel("predicted IoU_adj")
        if r2 is not None:
            ax.set_title(f"$R^2$ = {r2:.4f}")
        _save(fig, path)


def plot_lifetime_vs_size(lifetimes, mean_interior, path):
    with mpl.rc_context(FIGURE_STYLE):
        fig, ax = plt.subplots()
        ax.scatter(np.maximum(mean_interior, 1), lifetimes, s=6, alpha=0.5, edgecolors="none")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("mean interior size")
        ax.set_ylabel("track lifetime (frames)")
        _save(fig, path)
