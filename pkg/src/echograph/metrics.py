"""Layout constraint checking, shape consistency, and distribution metrics.

Directional predicates are world-frame and axis-aligned: a raw box is treated
as the axis-aligned extents (l, w, h) around its center, yaw ignored. All
thresholds live in :class:`PredicateThresholds` so they can be tuned without
touching predicate logic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .scene_graph import EVALUATED_GROUPS, SceneGraph

__all__ = [
    "PredicateThresholds",
    "THRESHOLDS",
    "GROUP_LABELS",
    "check_relation",
    "ConstraintReport",
    "constraint_accuracy",
    "chamfer",
    "ConsistencyReport",
    "consistency_eval",
    "shape_distribution_metrics",
]


@dataclass(frozen=True)
class PredicateThresholds:
    margin: float = 0.05  # m, center offset for left/right/front/behind
    volume_ratio: float = 1.15  # strict ratio for bigger/smaller
    height_margin: float = 0.05  # m, for taller/shorter
    close_gap: float = 0.5  # m, surface gap for close by
    symmetry_tol: float = 0.3  # m, mirrored-center distance
    symmetry_size_frac: float = 0.10  # per-axis size tolerance


THRESHOLDS = PredicateThresholds()

GROUP_LABELS = (
    "left/right",
    "front/behind",
    "bigger/smaller",
    "taller/shorter",
    "close by",
    "symmetrical",
)

_GROUP_OF = {
    rel: GROUP_LABELS[g] for g, rels in enumerate(EVALUATED_GROUPS) for rel in rels
}


def _extents(box) -> np.ndarray:
    # (l, h, w) sizes map to (x, y, z) axis extents (l along x, w along y)
    b = np.asarray(box, dtype=float)
    return np.array([b[3], b[5], b[4]])


def _volume(box) -> float:
    b = np.asarray(box, dtype=float)
    return float(b[3] * b[4] * b[5])


def _box_gap(a, b) -> float:
    """Euclidean distance between two axis-aligned boxes (0 if touching)."""
    ca, cb = np.asarray(a[:3], float), np.asarray(b[:3], float)
    ha, hb = _extents(a) / 2.0, _extents(b) / 2.0
    per_axis = np.maximum(np.abs(ca - cb) - (ha + hb), 0.0)
    return float(np.linalg.norm(per_axis))


def check_relation(
    rel: str,
    box_a: Sequence[float],
    box_b: Sequence[float],
    room: tuple[float, float] | None = None,
    *,
    cat_a: str | None = None,
    cat_b: str | None = None,
    thresholds: PredicateThresholds = THRESHOLDS,
) -> bool:
    """Does `a rel b` hold on the raw 7-value boxes (x, y, z, l, h, w, theta)?"""
    a = np.asarray(box_a, dtype=float)
    b = np.asarray(box_b, dtype=float)
    if np.any(a[3:6] <= 0) or np.any(b[3:6] <= 0):
        raise ValueError("check_relation: sizes must be positive")
    th = thresholds
    if rel == "left of":
        return b[0] - a[0] > th.margin
    if rel == "right of":
        return a[0] - b[0] > th.margin
    if rel == "front of":
        return b[1] - a[1] > th.margin
    if rel == "behind":
        return a[1] - b[1] > th.margin
    if rel == "bigger than":
        return _volume(a) > th.volume_ratio * _volume(b)
    if rel == "smaller than":
        return _volume(b) > th.volume_ratio * _volume(a)
    if rel == "taller than":
        return a[4] - b[4] > th.height_margin
    if rel == "shorter than":
        return b[4] - a[4] > th.height_margin
    if rel == "close by":
        return _box_gap(a, b) < th.close_gap
    if rel == "symmetrical to":
        if cat_a is not None and cat_b is not None and cat_a != cat_b:
            return False
        rx, ry = room if room is not None else (0.0, 0.0)
        sa, sb = _extents(a), _extents(b)
        if np.any(np.abs(sa - sb) > th.symmetry_size_frac * np.maximum(sa, sb)):
            return False
        ca, cb = a[:3].copy(), b[:3]
        mirror_x = ca.copy()
        mirror_x[0] = 2.0 * rx - ca[0]
        mirror_y = ca.copy()
        mirror_y[1] = 2.0 * ry - ca[1]
        return bool(
            np.linalg.norm(mirror_x - cb) < th.symmetry_tol
            or np.linalg.norm(mirror_y - cb) < th.symmetry_tol
        )
    raise ValueError(f"unknown relation {rel!r}")


@dataclass
class ConstraintReport:
    """Per-group accuracy over the six evaluated relation groups."""

    accuracies: dict[str, float]
    counts: dict[str, int]
    mode: str = "none"

    @property
    def msg(self) -> float:
        present = [self.accuracies[g] for g in GROUP_LABELS if self.counts.get(g, 0) > 0]
        return float(np.mean(present)) if present else float("nan")

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "groups": {
                g: {"accuracy": self.accuracies.get(g), "count": self.counts.get(g, 0)}
                for g in GROUP_LABELS
            },
            "msg": self.msg,
        }


def edge_satisfied(
    graph: SceneGraph,
    edge: tuple[int, str, int],
    boxes: Mapping[int, Sequence[float]],
    room: tuple[float, float] | None = None,
) -> bool:
    a, rel, b = edge
    return check_relation(
        rel,
        boxes[a],
        boxes[b],
        room,
        cat_a=graph.category_of(a),
        cat_b=graph.category_of(b),
    )


def constraint_accuracy(
    scenes: Iterable[tuple[SceneGraph, Mapping[int, Sequence[float]], Sequence[int] | None]],
    changed_edges_only: bool = False,
    mode: str = "none",
) -> ConstraintReport:
    """Score generated layouts against their conditioning graphs.

    Each item is (graph, boxes by node id, edited edge indices). With
    ``changed_edges_only`` only those indices are scored (the manipulation
    modes); otherwise every evaluated-group edge counts.
    """
    hits = {g: 0 for g in GROUP_LABELS}
    totals = {g: 0 for g in GROUP_LABELS}
    for graph, boxes, edited in scenes:
        if changed_edges_only:
            if not edited:
                continue
            indices = list(edited)
        else:
            indices = range(len(graph.edges))
        for i in indices:
            edge = graph.edges[i]
            group = _GROUP_OF.get(edge[1])
            if group is None:
                continue
            totals[group] += 1
            if edge_satisfied(graph, edge, boxes):
                hits[group] += 1
    acc = {
        g: (hits[g] / totals[g]) if totals[g] else float("nan") for g in GROUP_LABELS
    }
    return ConstraintReport(accuracies=acc, counts=totals, mode=mode)


def chamfer(pc_a: np.ndarray, pc_b: np.ndarray) -> float:
    """Symmetric mean of squared nearest-neighbor distances (both directions)."""
    a = np.asarray(pc_a, dtype=float)
    b = np.asarray(pc_b, dtype=float)
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("chamfer: clouds must be non-empty (n, 3) arrays")
    d2 = (
        (a * a).sum(axis=1)[:, None]
        + (b * b).sum(axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    np.maximum(d2, 0.0, out=d2)  # guard tiny negatives from cancellation
    return 0.5 * (float(d2.min(axis=1).mean()) + float(d2.min(axis=0).mean()))


@dataclass
class ConsistencyReport:
    """Mean pairwise in-suite chamfer distance per category."""

    per_category: dict[str, float]
    suite_counts: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "per_category": dict(self.per_category),
            "suite_counts": dict(self.suite_counts),
        }


def consistency_eval(
    scenes: Iterable[Sequence[tuple[str, object, np.ndarray]]],
) -> ConsistencyReport:
    """Aggregate in-suite pairwise CD; singleton suites are skipped.

    Each scene is a sequence of (category, suite_key, point_cloud) triples.
    """
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    suites_seen: dict[str, int] = {}
    for scene in scenes:
        groups: dict[object, list[tuple[str, np.ndarray]]] = {}
        for cat, suite, cloud in scene:
            groups.setdefault(suite, []).append((cat, cloud))
        for members in groups.values():
            if len(members) < 2:
                continue
            cat = members[0][0]
            suites_seen[cat] = suites_seen.get(cat, 0) + 1
            for i in range(len(members)):
                for j in range(i + 1, len(members)):
                    cd = chamfer(members[i][1], members[j][1])
                    sums[cat] = sums.get(cat, 0.0) + cd
                    counts[cat] = counts.get(cat, 0) + 1
    per_cat = {c: sums[c] / counts[c] for c in sums}
    return ConsistencyReport(per_category=per_cat, suite_counts=suites_seen)


def shape_distribution_metrics(
    generated: Sequence[np.ndarray], reference: Sequence[np.ndarray]
) -> dict[str, float]:
    """MMD / COV / 1-NNA between two sets of point clouds under chamfer.

    MMD: mean over reference of the minimum CD to any generated sample.
    COV: fraction of reference samples that are the nearest reference of at
    least one generated sample. 1-NNA: leave-one-out nearest-neighbor
    classification accuracy over the merged sets (0.5 = indistinguishable).
    """
    if len(generated) < 10 or len(reference) < 10:
        raise ValueError("shape_distribution_metrics: need >= 10 samples per side")
    n_g, n_r = len(generated), len(reference)
    cross = np.zeros((n_g, n_r))
    for i, g in enumerate(generated):
        for j, r in enumerate(reference):
            cross[i, j] = chamfer(g, r)
    mmd = float(cross.min(axis=0).mean())
    cov = float(len(set(np.argmin(cross, axis=1).tolist())) / n_r)

    gg = np.zeros((n_g, n_g))
    for i in range(n_g):
        for j in range(i + 1, n_g):
            gg[i, j] = gg[j, i] = chamfer(generated[i], generated[j])
    rr = np.zeros((n_r, n_r))
    for i in range(n_r):
        for j in range(i + 1, n_r):
            rr[i, j] = rr[j, i] = chamfer(reference[i], reference[j])

    big = np.block([[gg, cross], [cross.T, rr]])
    np.fill_diagonal(big, np.inf)
    labels = np.array([0] * n_g + [1] * n_r)
    nearest = np.argmin(big, axis=1)
    one_nna = float((labels[nearest] == labels).mean())
    return {"mmd": mmd, "cov": cov, "one_nna": one_nna}
