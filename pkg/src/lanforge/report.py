"""Evaluation reports: a CSV of per-example scores plus a rendered figure."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def write_eval_report(results: list[dict], directory: str | Path) -> tuple[Path, Path]:
    """Write ``eval_results.csv`` and ``eval_scores.png`` under ``directory``.

    ``results`` rows carry: id, passed (bool), expected, actual.
    Returns the two file paths.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    csv_path = directory / "eval_results.csv"
    png_path = directory / "eval_scores.png"

    with open(csv_path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["id", "passed", "expected", "actual"])
        for row in results:
            writer.writerow(
                [row["id"], int(bool(row["passed"])), row["expected"], row["actual"]]
            )

    scores = [1 if row["passed"] else 0 for row in results]
    mean = sum(scores) / len(scores) if scores else 0.0

    fig, ax = plt.subplots(figsize=(max(4.0, 0.6 * len(results) + 2), 3.2))
    colors = ["#2a9d8f" if s else "#e76f51" for s in scores]
    ax.bar(range(len(scores)), scores, color=colors)
    ax.axhline(mean, color="#264653", linestyle="--", linewidth=1, label=f"mean = {mean:.3f}")
    ax.set_xticks(range(len(results)))
    ax.set_xticklabels([row["id"] for row in results], rotation=45, ha="right", fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("score")
    ax.set_title("evaluation scores")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return csv_path, png_path
