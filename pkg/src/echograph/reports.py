"""Report rendering: aligned text tables, CSV, and matplotlib figures.

The evaluation report path writes four artifacts next to each other: the
JSON report, an aligned-column text table, a CSV of the same numbers, and a
figures directory holding a per-group accuracy bar chart plus top-down
renders of a few scored scenes.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import FancyArrow, Polygon

from .metrics import GROUP_LABELS, ConstraintReport
from .scene_graph import SceneGraph

__all__ = [
    "render_scene_topdown",
    "save_scene_figure",
    "constraint_table_text",
    "write_constraint_report",
    "loss_curve_figure",
]


def _box_corners(box) -> np.ndarray:
    x, y, _, l, _, w, theta = box
    dx, dy = l / 2.0, w / 2.0
    corners = np.array([[-dx, -dy], [dx, -dy], [dx, dy], [-dx, dy]])
    c, s = math.cos(theta), math.sin(theta)
    rot = np.array([[c, -s], [s, c]])
    return corners @ rot.T + np.array([x, y])


def render_scene_topdown(
    ax,
    boxes: np.ndarray,
    categories,
    edges=None,
    edge_flags=None,
    extent: float = 6.0,
    title: str | None = None,
):
    """Draw oriented box footprints with labels and optional edge badges."""
    cmap = plt.get_cmap("tab20")
    half = extent / 2.0
    ax.add_patch(
        Polygon(
            [(-half, -half), (half, -half), (half, half), (-half, half)],
            closed=True,
            fill=False,
            edgecolor="0.6",
            linewidth=1.0,
        )
    )
    for i, (box, cat) in enumerate(zip(boxes, categories)):
        color = cmap(i % 20)
        ax.add_patch(
            Polygon(
                _box_corners(box), closed=True, facecolor=color, alpha=0.45,
                edgecolor="0.2",
            )
        )
        x, y, theta = box[0], box[1], box[6]
        arrow_len = max(0.15, 0.3 * min(box[3], box[5]))
        ax.add_patch(
            FancyArrow(
                x,
                y,
                arrow_len * math.cos(theta),
                arrow_len * math.sin(theta),
                width=0.02,
                color="0.1",
                length_includes_head=True,
            )
        )
        ax.text(x, y, f"{cat}", fontsize=7, ha="center", va="bottom")
    if edges:
        centers = {i: (b[0], b[1]) for i, b in enumerate(boxes)}
        for k, (a, rel, b) in enumerate(edges):
            ok = None if edge_flags is None else edge_flags[k]
            color = "0.5" if ok is None else ("tab:green" if ok else "tab:red")
            xa, ya = centers[a]
            xb, yb = centers[b]
            ax.plot([xa, xb], [ya, yb], color=color, linewidth=0.8, alpha=0.6)
    ax.set_xlim(-half - 0.3, half + 0.3)
    ax.set_ylim(-half - 0.3, half + 0.3)
    ax.set_aspect("equal")
    ax.set_xticks([])
    ax.set_yticks([])
    if title:
        ax.set_title(title, fontsize=9)


def save_scene_figure(
    path: str | Path,
    boxes: np.ndarray,
    categories,
    edges=None,
    edge_flags=None,
    title: str | None = None,
):
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    # edge list in row coordinates for the renderer
    render_scene_topdown(ax, boxes, categories, edges, edge_flags, title=title)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return Path(path)


def scene_edges_in_rows(graph: SceneGraph) -> list[tuple[int, str, int]]:
    row = {nid: i for i, (nid, _) in enumerate(graph.nodes)}
    return [(row[a], rel, row[b]) for a, rel, b in graph.edges]


def constraint_table_text(report: ConstraintReport) -> str:
    """Aligned columns, one row per relation group plus the mean."""
    width = max(len(g) for g in GROUP_LABELS) + 2
    lines = [f"{'group':<{width}}{'accuracy':>10}{'edges':>8}"]
    for g in GROUP_LABELS:
        acc = report.accuracies.get(g)
        shown = "-" if acc is None or math.isnan(acc) else f"{acc:.3f}"
        lines.append(f"{g:<{width}}{shown:>10}{report.counts.get(g, 0):>8}")
    msg = report.msg
    shown = "-" if math.isnan(msg) else f"{msg:.3f}"
    lines.append(f"{'mSG':<{width}}{shown:>10}{sum(report.counts.values()):>8}")
    return "\n".join(lines) + "\n"


def _accuracy_figure(report: ConstraintReport, path: Path):
    fig, ax = plt.subplots(figsize=(6, 3.2))
    values = [report.accuracies.get(g, float("nan")) for g in GROUP_LABELS]
    bars = ax.bar(range(len(GROUP_LABELS)), values, color="tab:blue", alpha=0.8)
    for bar, v in zip(bars, values):
        if not math.isnan(v):
            ax.text(
                bar.get_x() + bar.get_width() / 2,
                v + 0.01,
                f"{v:.2f}",
                ha="center",
                fontsize=8,
            )
    ax.set_xticks(range(len(GROUP_LABELS)))
    ax.set_xticklabels(GROUP_LABELS, rotation=20, fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("accuracy")
    ax.set_title(f"graph constraints ({report.mode} mode)", fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def write_constraint_report(
    report: ConstraintReport,
    path: str | Path,
    scenes_for_figures=None,
    extra: dict | None = None,
) -> dict[str, Path]:
    """Write JSON + text + CSV + figures for a constraint evaluation.

    ``scenes_for_figures`` is an optional list of (graph, boxes(N,7) in row
    order, per-edge flags) used for up to four top-down renders.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = report.to_dict()
    if extra:
        doc.update(extra)
    path.write_text(json.dumps(doc, indent=2), encoding="utf-8")

    txt = path.with_suffix(".txt")
    txt.write_text(constraint_table_text(report), encoding="utf-8")

    csv_path = path.with_suffix(".csv")
    with open(csv_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["group", "accuracy", "edges"])
        for g in GROUP_LABELS:
            writer.writerow([g, report.accuracies.get(g), report.counts.get(g, 0)])
        writer.writerow(["mSG", report.msg, sum(report.counts.values())])

    fig_dir = path.parent / (path.stem + "_figures")
    fig_dir.mkdir(exist_ok=True)
    _accuracy_figure(report, fig_dir / "accuracy.png")
    outputs = {
        "json": path,
        "txt": txt,
        "csv": csv_path,
        "accuracy_figure": fig_dir / "accuracy.png",
    }
    for i, (graph, boxes, flags) in enumerate((scenes_for_figures or [])[:4]):
        p = fig_dir / f"scene_{i}.png"
        save_scene_figure(
            p,
            boxes,
            [cat for _, cat in graph.nodes],
            edges=scene_edges_in_rows(graph),
            edge_flags=flags,
            title=f"sampled scene {i}",
        )
        outputs[f"scene_{i}"] = p
    return outputs


def loss_curve_figure(metrics_jsonl: str | Path, path: str | Path) -> Path:
    steps, losses, layouts, shapes = [], [], [], []
    with open(metrics_jsonl, encoding="utf-8") as f:
        for line in f:
            rec = json.loads(line)
            if "step" in rec:
                steps.append(rec["step"])
                losses.append(rec["loss"])
                layouts.append(rec["l_layout"])
                shapes.append(rec["l_shape"])
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.plot(steps, losses, label="total", linewidth=1.0)
    ax.plot(steps, layouts, label="layout", linewidth=0.8, alpha=0.8)
    ax.plot(steps, shapes, label="shape", linewidth=0.8, alpha=0.8)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return Path(path)
