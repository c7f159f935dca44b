"""Evaluation protocols over a trained model.

Three modes mirror the constraint tables: plain generation scores every
evaluated-group edge of each conditioning graph; relation-change edits one
edge (and its registered inverse partner, keeping the pair consistent) and
scores only the edited edges; node-addition attaches a new node with one or
two edges and scores only those. Change and addition route through the
latent manipulator, exactly like the interactive path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .forge import ROOM_SPECS, SceneRecord
from .layout import NormStats
from .metrics import ConstraintReport, constraint_accuracy, edge_satisfied
from .model import GeneratedScene, SceneModel
from .nn import autodiff as ad
from .scene_graph import (
    EVALUATED_GROUPS,
    AddNode,
    IncidentEdge,
    SceneGraph,
    apply_edit,
)

__all__ = ["EvaluationRun", "evaluate_mode"]

_EVALUATED = tuple(rel for group in EVALUATED_GROUPS for rel in group)
_CHUNK = 32  # scenes per merged sampling pass


@dataclass
class EvaluationRun:
    report: ConstraintReport
    scenes: list[tuple[SceneGraph, np.ndarray, list[bool]]]  # graph, boxes, flags
    generated: list[GeneratedScene]
    records: list[SceneRecord]
    seed: int


def _sample_batched(
    model: SceneModel,
    graphs: list[SceneGraph],
    latents,
    stats: NormStats,
    seed: int,
    include_shapes: bool,
) -> list[GeneratedScene]:
    out: list[GeneratedScene] = []
    for start in range(0, len(graphs), _CHUNK):
        chunk_g = graphs[start : start + _CHUNK]
        chunk_l = latents[start : start + _CHUNK]
        out.extend(
            model.generate_batch(
                chunk_g, chunk_l, stats, seed, include_shapes=include_shapes
            )
        )
    return out


def _score(
    generated: list[GeneratedScene],
    scored_edges: list[list[int] | None],
    mode: str,
) -> tuple[ConstraintReport, list[tuple[SceneGraph, np.ndarray, list[bool]]]]:
    items = []
    figures = []
    for gen_scene, edited in zip(generated, scored_edges):
        boxes = gen_scene.boxes_by_id()
        items.append((gen_scene.graph, boxes, edited))
        flags = [
            edge_satisfied(gen_scene.graph, e, boxes) for e in gen_scene.graph.edges
        ]
        figures.append((gen_scene.graph, gen_scene.boxes, flags))
    report = constraint_accuracy(
        items, changed_edges_only=(mode != "none"), mode=mode
    )
    return report, figures


def _change_edit(
    record: SceneRecord, gen: np.random.Generator, vocab
) -> tuple[SceneGraph, list[int]] | None:
    """Edit one evaluated edge to a different evaluated relation.

    The partner edge (b, inverse(old), a), when present, is rewritten to the
    new relation's inverse so the pair stays consistent. Returns the edited
    graph and the indices to score.
    """
    graph = record.graph
    candidates = [
        k for k, (_, rel, _) in enumerate(graph.edges) if rel in _EVALUATED
    ]
    if not candidates:
        return None
    k = int(candidates[gen.integers(len(candidates))])
    a, old, b = graph.edges[k]
    existing = {(s, r, o) for s, r, o in graph.edges}
    options = [
        r
        for r in _EVALUATED
        if r != old
        and (a, r, b) not in existing
        and not (r == "symmetrical to" and graph.category_of(a) != graph.category_of(b))
    ]
    if not options:
        return None
    new = options[int(gen.integers(len(options)))]
    edges = list(graph.edges)
    edges[k] = (a, new, b)
    scored = [k]
    inv_old, inv_new = vocab.inverse(old), vocab.inverse(new)
    if inv_old is not None and inv_new is not None:
        for j, (s, r, o) in enumerate(edges):
            if j != k and (s, r, o) == (b, inv_old, a) and (b, inv_new, a) not in existing:
                edges[j] = (b, inv_new, a)
                scored.append(j)
                break
    # rewriting may still collide with an existing duplicate; bail out then
    seen = set()
    for e in edges:
        if e in seen:
            return None
        seen.add(e)
    return SceneGraph(nodes=graph.nodes, edges=tuple(edges)), scored


def _addition_edit(
    record: SceneRecord, gen: np.random.Generator
) -> tuple[AddNode, int]:
    graph = record.graph
    spec = ROOM_SPECS.get(record.room_type)
    palette = spec.palette if spec else tuple(dict.fromkeys(record.categories))
    category = palette[int(gen.integers(len(palette)))]
    node_ids = list(graph.node_ids)
    n_edges = 1 + int(gen.integers(2))
    targets = gen.choice(len(node_ids), size=min(n_edges, len(node_ids)), replace=False)
    incident = []
    for t in targets:
        other = node_ids[int(t)]
        rels = [
            r
            for r in _EVALUATED
            if r != "symmetrical to" or graph.category_of(other) == category
        ]
        incident.append(
            IncidentEdge(
                rel=rels[int(gen.integers(len(rels)))],
                other=other,
                outgoing=bool(gen.integers(2)),
            )
        )
    return AddNode(category=category, incident=tuple(incident)), len(graph.edges)


def evaluate_mode(
    model: SceneModel,
    stats: NormStats,
    records: list[SceneRecord],
    mode: str,
    seed: int,
    limit: int | None = None,
    include_shapes: bool = False,
) -> EvaluationRun:
    """Run one evaluation mode over conditioning records at a sampling seed."""
    if mode not in ("none", "change", "addition"):
        raise ValueError(f"unknown evaluation mode {mode!r}")
    records = records[:limit] if limit else records
    gen = rng.stream("protocol", mode, seed)

    graphs: list[SceneGraph] = []
    latents = []
    scored_edges: list[list[int] | None] = []
    kept_records: list[SceneRecord] = []
    with ad.no_grad():
        for rec in records:
            if mode == "none":
                graphs.append(rec.graph)
                latents.append(model.encode(rec.graph))
                scored_edges.append(None)
                kept_records.append(rec)
            elif mode == "change":
                edited = _change_edit(rec, gen, model.vocab)
                if edited is None:
                    continue
                graph_after, scored = edited
                latents.append(model.manipulate_to(rec.graph, graph_after))
                graphs.append(graph_after)
                scored_edges.append(scored)
                kept_records.append(rec)
            else:
                edit, first_new = _addition_edit(rec, gen)
                graph_after = apply_edit(rec.graph, edit, model.vocab)
                latents.append(
                    model.manipulate_to(
                        rec.graph, graph_after, new_ids={graph_after.node_ids[-1]}
                    )
                )
                graphs.append(graph_after)
                scored_edges.append(list(range(first_new, len(graph_after.edges))))
                kept_records.append(rec)
        generated = _sample_batched(model, graphs, latents, stats, seed, include_shapes)
    report, figures = _score(generated, scored_edges, mode)
    return EvaluationRun(
        report=report,
        scenes=figures,
        generated=generated,
        records=kept_records,
        seed=seed,
    )
