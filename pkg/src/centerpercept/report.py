"""Evaluation report files: delimited tables plus matplotlib figures."""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .core import DET_CLASSES  # noqa: E402

plt.rcParams.update({
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "savefig.dpi": 120,
})


def write_summary_csv(report, path) -> None:
    rows = [
        ("map50", report.map50),
        ("occl_accuracy", report.occl_accuracy),
        ("occl_matches", report.occl_matches),
        ("lane_iou", report.lane_iou),
        ("lane_line_width", report.lane_line_width),
        ("f1_weather", report.f1_weather),
        ("f1_scene", report.f1_scene),
        ("f1_tod", report.f1_tod),
        ("n_frames", report.n_frames),
    ]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["metric", "value"])
        for key, value in rows:
            w.writerow([key, "" if value is None else value])


def write_per_class_csv(report, acc, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["class_id", "class", "n_gt", "n_pred", "ap50"])
        for k, name in enumerate(DET_CLASSES):
            ap = report.per_class_ap[k]
            w.writerow([k, name, acc.n_gt[k], len(acc.scores[k]), "" if ap is None else ap])


def plot_pr_curves(acc, path) -> None:
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    for k, name in enumerate(DET_CLASSES):
        if acc.n_gt[k] == 0:
            continue
        recall, precision = acc.pr_curve(k)
        ax.step(recall, precision, where="post", label=name, lw=1.2)
    ax.set_xlim(0, 1.02)
    ax.set_ylim(0, 1.05)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_title("PR curves @ IoU 0.5")
    if ax.lines:
        ax.legend(loc="lower left", ncol=2, frameon=False)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_per_class_ap(report, path) -> None:
    fig, ax = plt.subplots(figsize=(5.0, 3.0))
    values = [v if v is not None else 0.0 for v in report.per_class_ap]
    colors = ["tab:blue" if v is not None else "lightgray" for v in report.per_class_ap]
    ax.bar(range(len(DET_CLASSES)), values, color=colors)
    ax.set_xticks(range(len(DET_CLASSES)))
    ax.set_xticklabels(DET_CLASSES, rotation=45, ha="right")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("AP50")
    ax.set_title(f"mAP50 = {report.map50:.3f}" if report.map50 is not None else "mAP50")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def write_report_dir(report, acc, out_dir) -> list[str]:
    """Write summary.csv, per_class_ap.csv, pr_curves.png and per_class_ap.png."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "summary": os.path.join(out_dir, "summary.csv"),
        "per_class": os.path.join(out_dir, "per_class_ap.csv"),
        "pr": os.path.join(out_dir, "pr_curves.png"),
        "ap": os.path.join(out_dir, "per_class_ap.png"),
    }
    write_summary_csv(report, paths["summary"])
    write_per_class_csv(report, acc, paths["per_class"])
    plot_pr_curves(acc, paths["pr"])
    plot_per_class_ap(report, paths["ap"])
    return list(paths.values())
