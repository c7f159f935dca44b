"""Symbolic scene graphs, contextual features, JSON I/O, and graph edits.

A scene graph is a set of (id, category) nodes and directed typed edges.
The contextual form attaches a frozen 16-float semantic anchor to every node
and edge, drawn from a seeded table keyed purely by text (category for nodes,
"subject|relation|object" for edges), so identical text always yields the
identical anchor. The learnable 48-float tokens that complete the 64-entry
features live in the generative model's token store and are joined at encode
time.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import rng

__all__ = [
    "ANCHOR_DIM",
    "TOKEN_DIM",
    "FEATURE_DIM",
    "CATEGORIES",
    "RelationVocab",
    "DEFAULT_VOCAB",
    "SceneGraph",
    "ContextualGraph",
    "GraphEdit",
    "AddNode",
    "ChangeRelation",
    "IncidentEdge",
    "GraphParseError",
    "EditError",
    "parse_scene_graph",
    "parse_scene_record",
    "build_contextual_graph",
    "apply_edit",
    "serialize_scene",
    "edit_from_json",
]

ANCHOR_DIM = 16
TOKEN_DIM = 48
FEATURE_DIM = ANCHOR_DIM + TOKEN_DIM  # 64

CATEGORIES = (
    "bed",
    "nightstand",
    "wardrobe",
    "desk",
    "chair",
    "lamp",
    "cabinet",
    "sofa",
    "table",
    "tv stand",
    "shelf",
)

# The six scored relation groups, in report order.
EVALUATED_GROUPS = (
    ("left of", "right of"),
    ("front of", "behind"),
    ("bigger than", "smaller than"),
    ("taller than", "shorter than"),
    ("close by",),
    ("symmetrical to",),
)


class GraphParseError(ValueError):
    """Structured parse failure with a JSON-path location."""

    def __init__(self, message: str, path: str):
        super().__init__(f"{message} @ {path}")
        self.path = path


class EditError(ValueError):
    pass


@dataclass(frozen=True)
class RelationVocab:
    """Ordered relation names with an inverse registry.

    ``inverses[name]`` is the relation the annotator emits for the swapped
    pair, or None when no in-vocabulary inverse exists ("standing on" is the
    only such auxiliary and is never emitted by the annotator).
    """

    names: tuple[str, ...]
    inverses: Mapping[str, str | None]

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise ValueError("relation names must be unique")
        if len(self.names) > 15:
            raise ValueError("relation vocabulary capped at 15")
        for name, inv in self.inverses.items():
            if name not in self.names:
                raise ValueError(f"inverse registered for unknown relation {name!r}")
            if inv is not None and inv not in self.names:
                raise ValueError(f"inverse {inv!r} of {name!r} not in vocabulary")

    def index(self, name: str) -> int:
        return self.names.index(name)

    def inverse(self, name: str) -> str | None:
        return self.inverses.get(name)

    def __contains__(self, name: str) -> bool:
        return name in self.names

    def __len__(self) -> int:
        return len(self.names)


DEFAULT_VOCAB = RelationVocab(
    names=(
        "left of",
        "right of",
        "front of",
        "behind",
        "bigger than",
        "smaller than",
        "taller than",
        "shorter than",
        "close by",
        "symmetrical to",
        "standing on",
        "attached to",
        "same category as",
        "same super-category as",
        "same style as",
    ),
    inverses={
        "left of": "right of",
        "right of": "left of",
        "front of": "behind",
        "behind": "front of",
        "bigger than": "smaller than",
        "smaller than": "bigger than",
        "taller than": "shorter than",
        "shorter than": "taller than",
        "close by": "close by",
        "symmetrical to": "symmetrical to",
        "standing on": None,
        "attached to": "attached to",
        "same category as": "same category as",
        "same super-category as": "same super-category as",
        "same style as": "same style as",
    },
)


@dataclass(frozen=True)
class SceneGraph:
    """Immutable symbolic graph: (id, category) nodes, (from, rel, to) edges."""

    nodes: tuple[tuple[int, str], ...]
    edges: tuple[tuple[int, str, int], ...]

    def __post_init__(self):
        ids = [nid for nid, _ in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate node ids")
        id_set = set(ids)
        seen = set()
        for a, rel, b in self.edges:
            if a == b:
                raise ValueError(f"self-edge on node {a}")
            if a not in id_set or b not in id_set:
                raise ValueError(f"edge ({a}, {rel!r}, {b}) references a missing node")
            key = (a, rel, b)
            if key in seen:
                raise ValueError(f"duplicate edge ({a}, {rel!r}, {b})")
            seen.add(key)

    @property
    def node_ids(self) -> tuple[int, ...]:
        return tuple(nid for nid, _ in self.nodes)

    def category_of(self, node_id: int) -> str:
        for nid, cat in self.nodes:
            if nid == node_id:
                return cat
        raise KeyError(node_id)

    def __len__(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True)
class IncidentEdge:
    """One edge attached to a node being added; outgoing means new -> other."""

    rel: str
    other: int
    outgoing: bool = True


@dataclass(frozen=True)
class AddNode:
    category: str
    incident: tuple[IncidentEdge, ...] = ()


@dataclass(frozen=True)
class ChangeRelation:
    edge_index: int
    relation: str


GraphEdit = AddNode | ChangeRelation


@dataclass(frozen=True)
class ContextualGraph:
    """Scene graph plus frozen anchors and vocabulary indices.

    ``edge_index`` holds (subject_row, relation_index, object_row) triplets in
    node-row coordinates. Learnable tokens are joined by the model from its
    token store via ``node_cat_idx`` / ``edge_rel_idx``.
    """

    graph: SceneGraph
    anchor_seed: int
    categories: tuple[str, ...]
    node_cat_idx: np.ndarray  # (N,) intp into CATEGORIES
    node_anchors: np.ndarray  # (N, ANCHOR_DIM)
    edge_subject: np.ndarray  # (E,) intp node rows
    edge_object: np.ndarray  # (E,) intp node rows
    edge_rel_idx: np.ndarray  # (E,) intp into vocab
    edge_anchors: np.ndarray  # (E, ANCHOR_DIM)
    vocab: RelationVocab = field(default=DEFAULT_VOCAB)

    @property
    def n_nodes(self) -> int:
        return len(self.graph)

    @property
    def n_edges(self) -> int:
        return int(self.edge_rel_idx.shape[0])


@functools.lru_cache(maxsize=16384)
def _anchor_for_text(seed: int, kind: str, text: str) -> np.ndarray:
    gen = rng.stream("anchor-table", seed, kind, text)
    v = gen.normal(size=ANCHOR_DIM)
    v /= math.sqrt(float(v @ v))
    v.flags.writeable = False
    return v


def build_contextual_graph(
    graph: SceneGraph, anchor_table_seed: int, vocab: RelationVocab = DEFAULT_VOCAB
) -> ContextualGraph:
    """Attach deterministic anchors and vocabulary indices to a graph."""
    cats = tuple(cat for _, cat in graph.nodes)
    for cat in cats:
        if cat not in CATEGORIES:
            raise ValueError(f"unknown category {cat!r}")
    row_of = {nid: i for i, (nid, _) in enumerate(graph.nodes)}
    node_anchors = np.array(
        [_anchor_for_text(anchor_table_seed, "node", cat) for cat in cats]
    ).reshape(len(cats), ANCHOR_DIM)

    subj, obj, rel_idx, edge_anchors = [], [], [], []
    for a, rel, b in graph.edges:
        if rel not in vocab:
            raise ValueError(f"unknown relation {rel!r}")
        subj.append(row_of[a])
        obj.append(row_of[b])
        rel_idx.append(vocab.index(rel))
        triple = f"{graph.category_of(a)}|{rel}|{graph.category_of(b)}"
        edge_anchors.append(_anchor_for_text(anchor_table_seed, "edge", triple))
    return ContextualGraph(
        graph=graph,
        anchor_seed=anchor_table_seed,
        categories=cats,
        node_cat_idx=np.array(
            [CATEGORIES.index(c) for c in cats], dtype=np.intp
        ),
        node_anchors=node_anchors,
        edge_subject=np.array(subj, dtype=np.intp),
        edge_object=np.array(obj, dtype=np.intp),
        edge_rel_idx=np.array(rel_idx, dtype=np.intp),
        edge_anchors=np.array(edge_anchors).reshape(len(subj), ANCHOR_DIM),
        vocab=vocab,
    )


def parse_scene_graph(
    json_text: str, vocab: RelationVocab = DEFAULT_VOCAB, normalize: bool = False
) -> SceneGraph:
    """Parse and validate the graph portion of a scene JSON document.

    With ``normalize`` the symmetric closure is added: for every directional
    edge whose inverse edge is absent, the inverse is appended.
    """
    try:
        doc = json.loads(json_text)
    except json.JSONDecodeError as e:
        raise GraphParseError(f"invalid JSON: {e.msg}", "$") from e
    return _graph_from_doc(doc, vocab, normalize)


def _graph_from_doc(doc, vocab: RelationVocab, normalize: bool) -> SceneGraph:
    if not isinstance(doc, dict):
        raise GraphParseError("document must be an object", "$")
    raw_nodes = doc.get("nodes", [])
    raw_edges = doc.get("edges", [])
    if not isinstance(raw_nodes, list):
        raise GraphParseError("nodes must be a list", "nodes")
    if not isinstance(raw_edges, list):
        raise GraphParseError("edges must be a list", "edges")

    nodes: list[tuple[int, str]] = []
    seen_ids: set[int] = set()
    for i, n in enumerate(raw_nodes):
        path = f"nodes[{i}]"
        if not isinstance(n, dict) or "id" not in n or "category" not in n:
            raise GraphParseError("node needs id and category", path)
        nid, cat = n["id"], n["category"]
        if not isinstance(nid, int) or isinstance(nid, bool):
            raise GraphParseError("id must be an integer", f"{path}.id")
        if nid in seen_ids:
            raise GraphParseError(f"duplicate id {nid}", f"{path}.id")
        if cat not in CATEGORIES:
            raise GraphParseError(f"unknown category {cat!r}", f"{path}.category")
        seen_ids.add(nid)
        nodes.append((nid, cat))

    edges: list[tuple[int, str, int]] = []
    edge_set: set[tuple[int, str, int]] = set()
    for i, e in enumerate(raw_edges):
        path = f"edges[{i}]"
        if not isinstance(e, dict) or any(k not in e for k in ("from", "rel", "to")):
            raise GraphParseError("edge needs from, rel, to", path)
        a, rel, b = e["from"], e["rel"], e["to"]
        if a not in seen_ids:
            raise GraphParseError(f"dangling edge (node {a})", f"{path}.from")
        if b not in seen_ids:
            raise GraphParseError(f"dangling edge (node {b})", f"{path}.to")
        if rel not in vocab:
            raise GraphParseError(f"unknown relation {rel!r}", f"{path}.rel")
        if a == b:
            raise GraphParseError("self-edge", path)
        if (a, rel, b) in edge_set:
            raise GraphParseError("duplicate edge", path)
        edge_set.add((a, rel, b))
        edges.append((a, rel, b))

    if normalize:
        for a, rel, b in list(edges):
            inv = vocab.inverse(rel)
            if inv is not None and (b, inv, a) not in edge_set:
                edge_set.add((b, inv, a))
                edges.append((b, inv, a))

    return SceneGraph(nodes=tuple(nodes), edges=tuple(edges))


def parse_scene_record(
    json_text: str, vocab: RelationVocab = DEFAULT_VOCAB
) -> tuple[SceneGraph, dict[int, dict] | None, dict[int, list[float]] | None]:
    """Parse a full scene document: graph plus optional boxes and shape codes."""
    graph = parse_scene_graph(json_text, vocab=vocab)
    doc = json.loads(json_text)
    boxes = None
    if "boxes" in doc:
        boxes = {}
        for key, val in doc["boxes"].items():
            path = f"boxes[{key}]"
            try:
                nid = int(key)
            except ValueError:
                raise GraphParseError("box key must be a node id", path) from None
            if nid not in graph.node_ids:
                raise GraphParseError(f"box for unknown node {nid}", path)
            for fieldname, width in (("center", 3), ("size", 3)):
                if fieldname not in val or len(val[fieldname]) != width:
                    raise GraphParseError(f"box needs {fieldname}[{width}]", path)
            if "angle" not in val:
                raise GraphParseError("box needs angle", path)
            boxes[nid] = {
                "center": [float(v) for v in val["center"]],
                "size": [float(v) for v in val["size"]],
                "angle": float(val["angle"]),
            }
    shapes = None
    if "shapes" in doc:
        shapes = {}
        for key, val in doc["shapes"].items():
            path = f"shapes[{key}]"
            try:
                nid = int(key)
            except ValueError:
                raise GraphParseError("shape key must be a node id", path) from None
            if nid not in graph.node_ids:
                raise GraphParseError(f"shape for unknown node {nid}", path)
            if len(val) != 32:
                raise GraphParseError("shape code must have 32 entries", path)
            shapes[nid] = [float(v) for v in val]
    return graph, boxes, shapes


def apply_edit(
    graph: SceneGraph, edit: GraphEdit, vocab: RelationVocab = DEFAULT_VOCAB
) -> SceneGraph:
    """Apply an edit, returning a new graph; the input is never mutated."""
    if isinstance(edit, ChangeRelation):
        if not (0 <= edit.edge_index < len(graph.edges)):
            raise EditError(f"edge index {edit.edge_index} out of range")
        if edit.relation not in vocab:
            raise EditError(f"unknown relation {edit.relation!r}")
        a, _, b = graph.edges[edit.edge_index]
        new_edges = list(graph.edges)
        new_edges[edit.edge_index] = (a, edit.relation, b)
        return SceneGraph(nodes=graph.nodes, edges=tuple(new_edges))
    if isinstance(edit, AddNode):
        if edit.category not in CATEGORIES:
            raise EditError(f"unknown category {edit.category!r}")
        new_id = max(graph.node_ids, default=-1) + 1
        ids = set(graph.node_ids)
        extra = []
        for inc in edit.incident:
            if inc.rel not in vocab:
                raise EditError(f"unknown relation {inc.rel!r}")
            if inc.other not in ids:
                raise EditError(f"incident edge references missing node {inc.other}")
            extra.append(
                (new_id, inc.rel, inc.other)
                if inc.outgoing
                else (inc.other, inc.rel, new_id)
            )
        return SceneGraph(
            nodes=graph.nodes + ((new_id, edit.category),),
            edges=graph.edges + tuple(extra),
        )
    raise EditError(f"unknown edit {edit!r}")


def edit_from_json(doc: dict, vocab: RelationVocab = DEFAULT_VOCAB) -> GraphEdit:
    """Decode the wire form of a graph edit."""
    kind = doc.get("kind")
    if kind == "change_relation":
        return ChangeRelation(
            edge_index=int(doc["edge_index"]), relation=str(doc["relation"])
        )
    if kind == "add_node":
        incident = tuple(
            IncidentEdge(
                rel=str(e["rel"]),
                other=int(e["other"]),
                outgoing=bool(e.get("outgoing", True)),
            )
            for e in doc.get("edges", [])
        )
        return AddNode(category=str(doc["category"]), incident=incident)
    raise EditError(f"unknown edit kind {kind!r}")


def _fmt(value: float) -> str:
    """17 significant digits; enough to round-trip any float64."""
    return f"{float(value):.17g}"


def _json_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return _fmt(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_json_value(v) for v in value) + "]"
    if isinstance(value, dict):
        items = ", ".join(
            f"{json.dumps(str(k))}: {_json_value(v)}" for k, v in value.items()
        )
        return "{" + items + "}"
    raise TypeError(f"cannot serialize {type(value)}")


def serialize_scene(
    graph: SceneGraph,
    boxes: Mapping[int, Sequence[float]] | None = None,
    shape_codes: Mapping[int, Sequence[float]] | None = None,
    extra: Mapping[str, object] | None = None,
) -> str:
    """Serialize a scene to JSON; numeric fields carry 17 significant digits.

    ``boxes`` maps node id to the raw 7 values (x, y, z, l, h, w, theta);
    omitted keys are simply absent from the output.
    """
    doc: dict[str, object] = {
        "nodes": [{"id": nid, "category": cat} for nid, cat in graph.nodes],
        "edges": [{"from": a, "rel": rel, "to": b} for a, rel, b in graph.edges],
    }
    ids = set(graph.node_ids)
    if boxes is not None:
        for nid in boxes:
            if nid not in ids:
                raise ValueError(f"box for unknown node {nid}")
        doc["boxes"] = {
            str(nid): {
                "center": list(vals[0:3]),
                "size": list(vals[3:6]),
                "angle": float(vals[6]),
            }
            for nid, vals in boxes.items()
        }
    if shape_codes is not None:
        for nid in shape_codes:
            if nid not in ids:
                raise ValueError(f"shape code for unknown node {nid}")
        doc["shapes"] = {str(nid): list(code) for nid, code in shape_codes.items()}
    if extra:
        doc.update(extra)
    return _json_value(doc)
