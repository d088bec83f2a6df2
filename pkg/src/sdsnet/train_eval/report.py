"""CSV and aligned-text renderings of cross-validation results."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path

from .metrics import METRICS

CSV_COLUMNS = ("method", "fold", "seed", "TP", "FN", "FP", "TN", "accuracy", "sensitivity", "specificity")


def _num(v: float) -> str:
    return "nan" if math.isnan(v) else f"{v:.6f}"


def csv_rows(results) -> list:
    """Per-fold rows, then per-seed pooled rows (fold ``all``), then mean/std rows."""
    rows = []
    for res in results:
        for r in res.folds:
            c = r.confusion
            rows.append([res.method, r.fold, r.seed, c.tp, c.fn, c.fp, c.tn, *map(_num, c.metrics().values())])
        for seed in res.seeds:
            c = res.pooled(seed)
            rows.append([res.method, "all", seed, c.tp, c.fn, c.fp, c.tn, *map(_num, c.metrics().values())])
        summary = res.summary()
        for i, stat in enumerate(("mean", "std")):
            rows.append([res.method, "all", stat, "", "", "", "", *(_num(summary[m][i]) for m in METRICS)])
    return rows


def to_csv(results) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    writer.writerows(csv_rows(results))
    return buf.getvalue()


def _pm(mean: float, std: float) -> str:
    if math.isnan(mean):
        return "n/a"
    return f"{mean:.3f}±{std:.3f}"


def to_table(results) -> str:
    """Modality / method / metric columns with mean±std cells."""
    if not results:
        return ""
    seeds = results[0].seeds
    n_folds = results[0].plan.n_folds
    header = (
        f"# held-out metrics from {n_folds}-fold cross-validation; per seed, predictions of all folds are "
        f"pooled into one confusion matrix; cells are mean±std (ddof=0) over seeds {', '.join(map(str, seeds))}"
    )
    body = [("Modality", "Method", "Accuracy", "Sensitivity", "Specificity")]
    for res in results:
        modality, _, name = res.label[1:].partition("]")
        s = res.summary()
        body.append((modality, name, *(_pm(*s[m]) for m in METRICS)))
    widths = [max(len(row[i]) for row in body) for i in range(len(body[0]))]
    lines = [header]
    for row in body:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"


def write_report(results, out_dir, stem: str = "cv") -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out_dir / f"{stem}.csv", "table": out_dir / f"{stem}.txt"}
    paths["csv"].write_text(to_csv(results), encoding="utf-8", newline="")
    paths["table"].write_text(to_table(results), encoding="utf-8", newline="")
    return paths
