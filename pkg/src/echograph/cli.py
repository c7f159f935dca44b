"""Command-line interface.

Subcommands: gen-data, train, sample, manipulate, evaluate, serve.
Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import TrainConfig, load_config
from .forge import ROOM_SPECS, make_dataset
from .reports import save_scene_figure, scene_edges_in_rows, write_constraint_report
from .scene_graph import (
    GraphParseError,
    edit_from_json,
    parse_scene_graph,
    serialize_scene,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _parse_mix(text: str) -> dict[str, int]:
    """'bedroom:living:dining' (equal weights) or 'bedroom=2,living=1'."""
    mix: dict[str, int] = {}
    if "=" in text:
        for part in text.split(","):
            name, _, weight = part.partition("=")
            mix[name.strip()] = int(weight)
    else:
        for name in text.split(":"):
            mix[name.strip()] = 1
    for name in mix:
        if name not in ROOM_SPECS:
            raise ValueError(f"unknown room type {name!r}")
    return mix


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="echograph", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--rooms", type=int, required=True)
    p.add_argument("--mix", default="bedroom:living:dining")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--metrics-log", help="JSONL loss log path")
    p.add_argument(
        "--pretrain-layout",
        action="store_true",
        help="layout-only phase first, then a short joint extension",
    )

    p = sub.add_parser("sample", help="generate a scene from a graph file")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--render", help="optional top-down PNG path")

    p = sub.add_parser("manipulate", help="edit a scene graph and regenerate")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--scene", required=True, help="scene JSON with the graph")
    p.add_argument("--edit", required=True, help="edit JSON file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--render", help="optional top-down PNG path")

    p = sub.add_parser("evaluate", help="score generated layouts on a test split")
    p.add_argument(
        "--ckpt", help="checkpoint to sample from; omit to score ground-truth boxes"
    )
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=("none", "change", "addition"), default="none")
    p.add_argument("--report", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--limit", type=int, help="cap the number of test scenes")

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--port", type=int, default=8148)
    p.add_argument("--ui-dir", help="directory with a built frontend")

    return parser


def _cmd_gen_data(args) -> int:
    mix = _parse_mix(args.mix)
    split = make_dataset(args.rooms, mix, seed=args.seed, out_dir=args.out)
    print(
        f"wrote {len(split.train)} train / {len(split.test)} test scenes to {args.out}"
    )
    return 0


def _cmd_train(args) -> int:
    from .training import load_dataset, train

    config = load_config(args.config) if args.config else TrainConfig()
    if args.pretrain_layout:
        config.pretrain_layout = True
    dataset = load_dataset(args.data)
    result = train(
        config, dataset, out_checkpoint=args.out, metrics_log=args.metrics_log
    )
    print(f"trained {result.steps} steps -> {result.checkpoint_path}")
    return 0


def _load_graph_file(path: str):
    return parse_scene_graph(Path(path).read_text(encoding="utf-8"))


def _write_generated(scene, out_path: str, render: str | None) -> None:
    boxes = {
        nid: scene.boxes[i] for i, (nid, _) in enumerate(scene.graph.nodes)
    }
    codes = {
        nid: scene.shape_codes[i] for i, (nid, _) in enumerate(scene.graph.nodes)
    }
    text = serialize_scene(
        scene.graph, boxes=boxes, shape_codes=codes, extra={"seed": scene.seed}
    )
    Path(out_path).write_text(text, encoding="utf-8")
    if render:
        from .metrics import edge_satisfied

        by_id = scene.boxes_by_id()
        flags = [edge_satisfied(scene.graph, e, by_id) for e in scene.graph.edges]
        save_scene_figure(
            render,
            scene.boxes,
            [cat for _, cat in scene.graph.nodes],
            edges=scene_edges_in_rows(scene.graph),
            edge_flags=flags,
        )


def _cmd_sample(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    graph = _load_graph_file(args.graph)
    scene = ckpt.model.generate(graph, ckpt.stats, args.seed)
    _write_generated(scene, args.out, args.render)
    print(f"sampled {len(graph)} objects (seed {args.seed}) -> {args.out}")
    return 0


def _cmd_manipulate(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    graph = _load_graph_file(args.scene)
    edit_doc = json.loads(Path(args.edit).read_text(encoding="utf-8"))
    edit = edit_from_json(edit_doc, ckpt.model.vocab)
    scene = ckpt.model.manipulate(graph, edit, ckpt.stats, args.seed)
    _write_generated(scene, args.out, args.render)
    print(f"manipulated scene ({edit_doc.get('kind')}) -> {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    from .metrics import constraint_accuracy, edge_satisfied
    from .training import load_dataset

    dataset = load_dataset(args.data)
    records = dataset.test_records()
    if args.limit:
        records = records[: args.limit]

    if args.ckpt is None:
        # score the dataset's own boxes (annotation/evaluation agreement)
        if args.mode != "none":
            print("error: ground-truth scoring supports --mode none only", file=sys.stderr)
            return 1
        report = constraint_accuracy(
            [(r.graph, r.boxes_by_id(), None) for r in records], mode="none"
        )
        figures = []
        for r in records[:4]:
            by_id = r.boxes_by_id()
            flags = [edge_satisfied(r.graph, e, by_id) for e in r.graph.edges]
            figures.append((r.graph, r.boxes, flags))
        n_scenes = len(records)
    else:
        from .protocol import evaluate_mode

        ckpt = load_checkpoint(args.ckpt)
        run = evaluate_mode(
            ckpt.model, ckpt.stats, records, args.mode, seed=args.seed
        )
        report, figures, n_scenes = run.report, run.scenes, len(run.generated)

    outputs = write_constraint_report(
        report,
        args.report,
        scenes_for_figures=figures,
        extra={"seed": args.seed, "scenes": n_scenes},
    )
    print(open(outputs["txt"], encoding="utf-8").read().rstrip())
    print(f"report -> {outputs['json']}")
    return 0


def _cmd_serve(args) -> int:
    from .service import serve

    return serve(args.ckpt, args.port, args.ui_dir)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    handlers = {
        "gen-data": _cmd_gen_data,
        "train": _cmd_train,
        "sample": _cmd_sample,
        "manipulate": _cmd_manipulate,
        "evaluate": _cmd_evaluate,
        "serve": _cmd_serve,
    }
    try:
        return handlers[args.command](args)
    except GraphParseError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
