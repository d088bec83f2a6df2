"""Report figures: metric bars per method and training-loss curves."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import METRICS  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
    "savefig.bbox": "tight",
}
# PNG metadata left out so reruns write identical files
SAVE_KW = {"metadata": {"Software": None}}


def metric_bars(results, path) -> Path:
    """Grouped bars of mean accuracy/sensitivity/specificity with std whiskers."""
    path = Path(path)
    labels = [r.label for r in results]
    x = np.arange(len(results))
    width = 0.26
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(4.0, 1.3 * len(results) + 1.5), 3.2))
        for i, metric in enumerate(METRICS):
            stats = [r.summary()[metric] for r in results]
            means = [m for m, _ in stats]
            stds = [s for _, s in stats]
            ax.bar(x + (i - 1) * width, means, width, yerr=stds, capsize=2, label=metric)
        ax.set_xticks(x)
        ax.set_xticklabels(labels, rotation=20, ha="right")
        ax.set_ylim(0, 1.05)
        ax.set_ylabel("held-out score")
        ax.axhline(0.5, color="0.6", lw=0.8, ls=":")
        ax.legend(frameon=False, ncol=3, loc="lower center", bbox_to_anchor=(0.5, 1.0))
        fig.savefig(path, **SAVE_KW)
        plt.close(fig)
    return path


def loss_curves(results, path) -> Path | None:
    """Mean training loss per epoch (averaged over folds) for each learned method and seed."""
    learned = [r for r in results if r.logs]
    if not learned:
        return None
    path = Path(path)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        for k, res in enumerate(learned):
            color = f"C{k}"
            for j, seed in enumerate(res.seeds):
                curves = [log.epoch_losses for log in res.logs if log.seed == seed and log.epoch_losses]
                if not curves:
                    continue
                mean = np.mean(np.array(curves), axis=0)
                ax.plot(np.arange(1, mean.size + 1), mean, color=color, lw=1, alpha=0.8, label=res.label if j == 0 else None)
        ax.set_xlabel("epoch")
        ax.set_ylabel("training BCE")
        ax.set_yscale("log")
        ax.legend(frameon=False)
        fig.savefig(path, **SAVE_KW)
        plt.close(fig)
    return path


def write_figures(results, out_dir, stem: str = "cv") -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"metrics": metric_bars(results, out_dir / f"{stem}_metrics.png")}
    curves = loss_curves(results, out_dir / f"{stem}_loss.png")
    if curves is not None:
        paths["loss"] = curves
    return paths
