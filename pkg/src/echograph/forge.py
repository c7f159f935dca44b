"""Procedural synthetic rooms: layouts, suite-consistent shapes, annotations.

Rooms are 6 x 6 m, 3-8 objects, three room types. Placement rejection-samples
non-overlapping footprints (axis-aligned 2-D IoU below a small threshold);
relations are annotated with the same predicates the evaluator scores, so
every emitted edge holds on the ground-truth layout by construction. Objects
of one category within a scene form a suite and share one primitive style.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng
from .layout import NormStats
from .metrics import THRESHOLDS, check_relation
from .scene_graph import (
    DEFAULT_VOCAB,
    GraphParseError,
    RelationVocab,
    SceneGraph,
    parse_scene_record,
    serialize_scene,
)
from .shapes import PrimitiveParams, decode_shape, encode_shape

__all__ = [
    "RoomSpec",
    "ROOM_SPECS",
    "SceneRecord",
    "generate_scene",
    "annotate_relations",
    "make_dataset",
    "DatasetSplit",
    "LoadReport",
    "load_sgfront_style",
]

ROOM_EXTENT = 6.0  # square floor, centered at the origin
MAX_EDGES_PER_NODE = 4

# typical metric size (l, h, w) per category; l spans x, w spans y, h is height
_CATEGORY_SIZES = {
    "bed": (2.0, 0.6, 1.7),
    "nightstand": (0.5, 0.55, 0.45),
    "wardrobe": (1.2, 2.1, 0.65),
    "desk": (1.3, 0.75, 0.65),
    "chair": (0.5, 0.9, 0.52),
    "lamp": (0.35, 1.5, 0.35),
    "cabinet": (0.9, 1.0, 0.45),
    "sofa": (2.1, 0.85, 0.95),
    "table": (1.6, 0.75, 0.95),
    "tv stand": (1.6, 0.5, 0.42),
    "shelf": (0.9, 1.8, 0.35),
}

_CATEGORY_FAMILY = {
    "bed": "box",
    "nightstand": "box",
    "wardrobe": "box",
    "desk": "box",
    "chair": "cylinder",
    "lamp": "cylinder",
    "cabinet": "box",
    "sofa": "ellipsoid",
    "table": "box",
    "tv stand": "box",
    "shelf": "box",
}


@dataclass(frozen=True)
class RoomSpec:
    room_type: str
    palette: tuple[str, ...]
    anchor: str  # always present in the scene
    pair_category: str  # placed as a mirrored pair when possible
    extent: float = ROOM_EXTENT
    count_range: tuple[int, int] = (3, 8)

    def __post_init__(self):
        if not self.palette:
            raise ValueError("palette must be non-empty")
        if self.count_range[0] < 1:
            raise ValueError("object count must be >= 1")


ROOM_SPECS = {
    "bedroom": RoomSpec(
        "bedroom",
        palette=("bed", "nightstand", "wardrobe", "desk", "chair", "lamp", "cabinet"),
        anchor="bed",
        pair_category="nightstand",
    ),
    "living": RoomSpec(
        "living",
        palette=("sofa", "table", "chair", "tv stand", "shelf", "lamp", "cabinet"),
        anchor="sofa",
        pair_category="chair",
    ),
    "dining": RoomSpec(
        "dining",
        palette=("table", "chair", "cabinet", "lamp", "shelf"),
        anchor="table",
        pair_category="chair",
    ),
}


@dataclass
class SceneRecord:
    graph: SceneGraph
    boxes: np.ndarray  # (N, 7), row i belongs to graph.nodes[i]
    shape_params: list[PrimitiveParams] | None
    seed: int
    room_type: str

    @property
    def categories(self) -> tuple[str, ...]:
        return tuple(cat for _, cat in self.graph.nodes)

    def boxes_by_id(self) -> dict[int, np.ndarray]:
        return {nid: self.boxes[i] for i, (nid, _) in enumerate(self.graph.nodes)}

    def shape_codes(self) -> np.ndarray | None:
        if self.shape_params is None:
            return None
        return np.stack([encode_shape(p) for p in self.shape_params])


def _footprint_iou(box_a: np.ndarray, box_b: np.ndarray) -> float:
    ax, ay, al, aw = box_a[0], box_a[1], box_a[3], box_a[5]
    bx, by, bl, bw = box_b[0], box_b[1], box_b[3], box_b[5]
    ix = max(0.0, min(ax + al / 2, bx + bl / 2) - max(ax - al / 2, bx - bl / 2))
    iy = max(0.0, min(ay + aw / 2, by + bw / 2) - max(ay - aw / 2, by - bw / 2))
    inter = ix * iy
    union = al * aw + bl * bw - inter
    return inter / union if union > 0 else 0.0


def _sample_size(gen: np.random.Generator, category: str) -> np.ndarray:
    base = np.array(_CATEGORY_SIZES[category])
    return base * gen.uniform(0.88, 1.12, size=3)


def _fits(box: np.ndarray, placed: list[np.ndarray], extent: float) -> bool:
    half = extent / 2.0
    if abs(box[0]) + box[3] / 2 > half or abs(box[1]) + box[5] / 2 > half:
        return False
    return all(_footprint_iou(box, other) < 0.05 for other in placed)


def _make_box(gen: np.random.Generator, size: np.ndarray, extent: float) -> np.ndarray:
    half = extent / 2.0
    x = gen.uniform(-half + size[0] / 2, half - size[0] / 2)
    y = gen.uniform(-half + size[2] / 2, half - size[2] / 2)
    theta = gen.choice([0.0, np.pi / 2, np.pi, -np.pi / 2]) + gen.uniform(-0.15, 0.15)
    return np.array([x, y, size[1] / 2, size[0], size[1], size[2], theta])


# categories that read oddly when duplicated in one room
_SINGLETON = {"bed", "sofa", "table", "wardrobe", "tv stand", "desk"}


def _compose_categories(
    gen: np.random.Generator, spec: RoomSpec, n: int
) -> list[str]:
    cats = [spec.anchor]
    if n >= 3 and gen.random() < 0.75:
        cats += [spec.pair_category, spec.pair_category]
    while len(cats) < n:
        pick = spec.palette[int(gen.integers(len(spec.palette)))]
        if pick in _SINGLETON and pick in cats:
            continue
        cats.append(pick)
    return cats[:n]


def generate_scene(seed: int, spec: RoomSpec) -> SceneRecord:
    """Deterministically generate one annotated room for the given seed."""
    gen = rng.stream("scene", spec.room_type, seed)
    lo, hi = spec.count_range
    n_target = int(gen.integers(lo, hi + 1))

    for n in range(n_target, lo - 1, -1):
        cats = _compose_categories(gen, spec, n)
        boxes = _try_place(gen, spec, cats)
        if boxes is not None:
            break
    else:
        raise RuntimeError(f"could not place a {spec.room_type} scene for seed {seed}")

    styles: dict[str, PrimitiveParams] = {}
    shape_params = []
    for cat in cats:
        if cat not in styles:
            styles[cat] = PrimitiveParams(
                family=_CATEGORY_FAMILY[cat], style=tuple(gen.uniform(0, 1, 4))
            )
        shape_params.append(styles[cat])

    edges = annotate_relations(boxes, cats, room=(0.0, 0.0), gen=gen)
    graph = SceneGraph(
        nodes=tuple((i, cat) for i, cat in enumerate(cats)), edges=tuple(edges)
    )
    return SceneRecord(
        graph=graph,
        boxes=np.stack(boxes),
        shape_params=shape_params,
        seed=seed,
        room_type=spec.room_type,
    )


def _try_place(
    gen: np.random.Generator, spec: RoomSpec, cats: list[str]
) -> list[np.ndarray] | None:
    """Place all categories with a shared rejection budget, or give up."""
    budget = 1000
    placed: list[np.ndarray] = []
    i = 0
    while i < len(cats):
        cat = cats[i]
        mirrored_pair = (
            cat == spec.pair_category
            and i + 1 < len(cats)
            and cats[i + 1] == spec.pair_category
        )
        size = _sample_size(gen, cat)
        ok = False
        while budget > 0:
            budget -= 1
            box = _make_box(gen, size, spec.extent)
            if not _fits(box, placed, spec.extent):
                continue
            if mirrored_pair:
                mirror = box.copy()
                mirror[0] = -box[0]
                mirror[6] = -box[6]
                if abs(box[0]) < THRESHOLDS.margin or not _fits(
                    mirror, placed + [box], spec.extent
                ):
                    continue
                placed.extend([box, mirror])
                i += 2
            else:
                placed.append(box)
                i += 1
            ok = True
            break
        if not ok:
            return None
    return placed


# one representative relation per group; the mirrored form is probed too
_GROUP_PROBES = (
    ("symmetrical to", None),
    ("close by", None),
    ("left of", "right of"),
    ("front of", "behind"),
    ("bigger than", "smaller than"),
    ("taller than", "shorter than"),
)

_GROUP_OF_REL = {}
for _probe, _alt in _GROUP_PROBES:
    _GROUP_OF_REL[_probe] = _probe
    if _alt:
        _GROUP_OF_REL[_alt] = _probe

MAX_RELS_PER_PAIR = 3


def annotate_relations(
    boxes: list[np.ndarray],
    categories: list[str],
    room: tuple[float, float] = (0.0, 0.0),
    vocab: RelationVocab = DEFAULT_VOCAB,
    gen: np.random.Generator | None = None,
) -> list[tuple[int, str, int]]:
    """Emit predicate-true edges, capped per node, with symmetric closure.

    Every predicate that holds on an ordered pair is a candidate. Admission is
    round-robin over pairs, always taking the candidate whose relation group is
    least represented so far, under a per-node edge budget; the inverse edges
    are then closed over the registry, which may exceed the budget.
    """
    n = len(boxes)
    if n < 2:
        return []
    if gen is None:
        gen = rng.stream("annotate", 0)

    pair_cands: list[list[tuple[int, str, int]]] = []
    for i in range(n):
        for j in range(i + 1, n):
            cands = []
            for probe, alt in _GROUP_PROBES:
                kwargs = dict(cat_a=categories[i], cat_b=categories[j])
                if check_relation(probe, boxes[i], boxes[j], room, **kwargs):
                    cands.append((i, probe, j))
                elif alt is not None and check_relation(
                    alt, boxes[i], boxes[j], room, **kwargs
                ):
                    cands.append((i, alt, j))
            if cands:
                pair_cands.append(cands)
    order = gen.permutation(len(pair_cands))

    group_counts = {probe: 0 for probe, _ in _GROUP_PROBES}
    degree = [0] * n
    taken_per_pair = [0] * len(pair_cands)
    edges: list[tuple[int, str, int]] = []
    edge_set: set[tuple[int, str, int]] = set()

    for _round in range(MAX_RELS_PER_PAIR):
        progress = False
        for k in order:
            cands = pair_cands[k]
            if not cands or taken_per_pair[k] >= MAX_RELS_PER_PAIR:
                continue
            cands.sort(key=lambda c: group_counts[_GROUP_OF_REL[c[1]]])
            i, rel, j = cands[0]
            if degree[i] >= MAX_EDGES_PER_NODE or degree[j] >= MAX_EDGES_PER_NODE:
                continue
            cands.pop(0)
            edges.append((i, rel, j))
            edge_set.add((i, rel, j))
            group_counts[_GROUP_OF_REL[rel]] += 1
            degree[i] += 1
            degree[j] += 1
            taken_per_pair[k] += 1
            progress = True
        if not progress:
            break

    for a, rel, b in list(edges):
        inv = vocab.inverse(rel)
        if inv is not None and (b, inv, a) not in edge_set:
            edges.append((b, inv, a))
            edge_set.add((b, inv, a))
    return edges


@dataclass
class DatasetSplit:
    root: Path
    train: list[str]
    test: list[str]
    stats: NormStats


def make_dataset(
    n_scenes: int,
    spec_mix: dict[str, int],
    seed: int,
    out_dir: str | Path,
) -> DatasetSplit:
    """Write scene JSON files, a train/test split, and normalization stats.

    The split is 90/10 by a hash of (seed, scene index); re-running with the
    same arguments reproduces every byte.
    """
    if n_scenes < 2:
        raise ValueError("need at least two scenes to split")
    out = Path(out_dir)
    scene_dir = out / "scenes"
    scene_dir.mkdir(parents=True, exist_ok=True)

    mix: list[str] = []
    total = sum(spec_mix.values())
    if total <= 0:
        raise ValueError("spec_mix must have positive weights")
    for room_type, weight in spec_mix.items():
        if room_type not in ROOM_SPECS:
            raise ValueError(f"unknown room type {room_type!r}")
        mix.extend([room_type] * weight)

    # exact 90/10 split: scenes ranked by a seed hash, lowest tenth held out
    test_count = max(1, n_scenes // 10)
    by_hash = sorted(range(n_scenes), key=lambda i: rng.derive_key("split", seed, i))
    test_idx = set(by_hash[:test_count])

    train, test = [], []
    train_boxes = []
    for idx in range(n_scenes):
        room_type = mix[idx % len(mix)]
        record = generate_scene(
            rng.derive_key("scene-seed", seed, idx) % 2**31, ROOM_SPECS[room_type]
        )
        name = f"scene_{idx:05d}.json"
        codes = record.shape_codes()
        text = serialize_scene(
            record.graph,
            boxes={nid: record.boxes[i] for i, (nid, _) in enumerate(record.graph.nodes)},
            shape_codes={nid: codes[i] for i, (nid, _) in enumerate(record.graph.nodes)},
            extra={"room_type": record.room_type, "seed": record.seed},
        )
        (scene_dir / name).write_text(text, encoding="utf-8")
        if idx in test_idx:
            test.append(name)
        else:
            train.append(name)
            train_boxes.append(record.boxes)

    stats = NormStats.from_boxes(np.concatenate(train_boxes, axis=0))
    (out / "split.json").write_text(
        '{"train": ' + _json_list(train) + ', "test": ' + _json_list(test) + "}",
        encoding="utf-8",
    )
    (out / "norm_stats.json").write_text(stats.to_json(), encoding="utf-8")
    return DatasetSplit(root=out, train=train, test=test, stats=stats)


def _json_list(names: list[str]) -> str:
    return "[" + ", ".join(f'"{n}"' for n in names) + "]"


@dataclass
class LoadReport:
    loaded: int = 0
    skipped: list[tuple[str, str]] = field(default_factory=list)


def load_sgfront_style(
    directory: str | Path, vocab: RelationVocab = DEFAULT_VOCAB
) -> tuple[list[SceneRecord], LoadReport]:
    """Load every scene JSON under a dataset directory; bad files are skipped.

    Shape codes are optional (layout-only corpora load fine); boxes are
    required for a record to be usable in training.
    """
    directory = Path(directory)
    scene_dir = directory / "scenes" if (directory / "scenes").is_dir() else directory
    report = LoadReport()
    records: list[SceneRecord] = []
    paths = sorted(scene_dir.glob("*.json"))
    if not paths:
        warnings.warn(f"no scene files under {scene_dir}", stacklevel=2)
        return records, report
    for path in paths:
        try:
            text = path.read_text(encoding="utf-8")
            graph, boxes, shapes = parse_scene_record(text, vocab=vocab)
            if boxes is None:
                raise GraphParseError("scene has no boxes", "boxes")
            doc = json.loads(text)
            box_rows = []
            shape_params = [] if shapes is not None else None
            for nid, _cat in graph.nodes:
                b = boxes[nid]
                box_rows.append(
                    np.array([*b["center"], *b["size"], b["angle"]], dtype=float)
                )
                if shapes is not None:
                    shape_params.append(decode_shape(np.array(shapes[nid])))
            records.append(
                SceneRecord(
                    graph=graph,
                    boxes=np.stack(box_rows),
                    shape_params=shape_params,
                    seed=int(doc.get("seed", -1)),
                    room_type=str(doc.get("room_type", "unknown")),
                )
            )
            report.loaded += 1
        except (GraphParseError, ValueError, KeyError, OSError) as e:
            report.skipped.append((path.name, str(e)))
    return records, report
