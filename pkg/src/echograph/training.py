"""Joint dual-branch training with the pseudo-graph manipulation curriculum.

Each step draws a scene batch. A scene either encodes its true contextual
graph directly, or passes through the manipulation curriculum: with one
relation corrupted to an arbitrary wrong label, the corrupted graph is
encoded and the manipulator must map the latent back onto the true graph
(relation-change simulation), or one node's relation embedding is replaced
with the blank token and the manipulator must reconstruct it (node-addition
simulation). Supervision is always Gaussian-noise prediction on the real
boxes and shape codes; the corrupted relation never appears on the target
side.

For throughput, the whole batch is encoded in one merged convolution pass
and manipulated scenes share a second merged pass.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import rng
from .checkpoint import Checkpoint, save_checkpoint
from .config import TrainConfig
from .forge import SceneRecord, load_sgfront_style
from .graph_conv import EDGE_LATENT_DIM, LATENT_DIM, Z_DIM, LatentGraph
from .layout import LayoutBatch, NormStats, layout_training_loss, normalize_boxes
from .model import SceneModel
from .nn import OptimizerState, optimizer_step
from .nn import autodiff as ad
from .scene_graph import ChangeRelation, ContextualGraph, apply_edit, build_contextual_graph
from .shapes import shape_training_loss

__all__ = ["Dataset", "load_dataset", "train", "TrainingDiverged"]


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, checkpoint_path: Path | None):
        super().__init__(message)
        self.checkpoint_path = checkpoint_path


@dataclass
class Dataset:
    records: list[SceneRecord]
    train_idx: list[int]
    test_idx: list[int]
    stats: NormStats

    def train_records(self) -> list[SceneRecord]:
        return [self.records[i] for i in self.train_idx]

    def test_records(self) -> list[SceneRecord]:
        return [self.records[i] for i in self.test_idx]


def load_dataset(directory: str | Path) -> Dataset:
    directory = Path(directory)
    records, report = load_sgfront_style(directory)
    if not records:
        raise FileNotFoundError(f"no loadable scenes under {directory}")
    split = json.loads((directory / "split.json").read_text(encoding="utf-8"))
    stats = NormStats.from_json((directory / "norm_stats.json").read_text(encoding="utf-8"))
    names = sorted(
        p.name for p in (directory / "scenes").glob("*.json")
    )
    # records load in sorted-name order; map names to row indices, skipping
    # any files the loader rejected
    loaded_names = [n for n in names if n not in {s[0] for s in report.skipped}]
    index_of = {name: i for i, name in enumerate(loaded_names)}
    train_idx = [index_of[n] for n in split["train"] if n in index_of]
    test_idx = [index_of[n] for n in split["test"] if n in index_of]
    return Dataset(records=records, train_idx=train_idx, test_idx=test_idx, stats=stats)


@dataclass
class _PreparedScene:
    record: SceneRecord
    ctx: ContextualGraph
    boxes8: np.ndarray  # (N, 8) normalized
    codes: np.ndarray | None  # (N, 32)


def _prepare(model: SceneModel, records: list[SceneRecord], stats: NormStats):
    prepared = []
    for rec in records:
        prepared.append(
            _PreparedScene(
                record=rec,
                ctx=model.contextual(rec.graph),
                boxes8=normalize_boxes(rec.boxes, stats),
                codes=rec.shape_codes(),
            )
        )
    return prepared


def _corrupt_relation(
    model: SceneModel, scene: _PreparedScene, gen: np.random.Generator
) -> ContextualGraph | None:
    """Contextual graph of the pseudo input with one wrong relation."""
    edges = scene.record.graph.edges
    if not edges:
        return None
    k = int(gen.integers(len(edges)))
    a, current, b = edges[k]
    present = {rel for (s, rel, o) in edges if (s, o) == (a, b)}
    others = [r for r in model.vocab.names if r not in present]
    if not others:
        return None
    wrong = others[int(gen.integers(len(others)))]
    pseudo = apply_edit(scene.record.graph, ChangeRelation(k, wrong), model.vocab)
    return build_contextual_graph(pseudo, model.config.anchor_seed, model.vocab)


def _batch_latents(
    model: SceneModel,
    scenes: list[_PreparedScene],
    gen: np.random.Generator,
    p_manip: float,
    trace: Callable[[dict], None] | None = None,
) -> list[LatentGraph]:
    """Encode a batch in one pass; route curriculum scenes through the manipulator."""
    enc = model.encoder
    modes: list[str] = []
    input_ctxs: list[ContextualGraph] = []
    blank_row_of: dict[int, int] = {}
    for i, scene in enumerate(scenes):
        r = gen.random()
        if r < p_manip / 2.0:
            pseudo_ctx = _corrupt_relation(model, scene, gen)
            if pseudo_ctx is None:
                modes.append("plain")
                input_ctxs.append(scene.ctx)
            else:
                modes.append("change")
                input_ctxs.append(pseudo_ctx)
                if trace:
                    trace(
                        {
                            "scene": i,
                            "mode": "change",
                            "pseudo_edges": pseudo_ctx.graph.edges,
                            "target_edges": scene.ctx.graph.edges,
                        }
                    )
        elif r < p_manip:
            modes.append("add")
            input_ctxs.append(scene.ctx)
            blank_row_of[i] = int(gen.integers(scene.ctx.n_nodes))
            if trace:
                trace({"scene": i, "mode": "add", "blank_row": blank_row_of[i]})
        else:
            modes.append("plain")
            input_ctxs.append(scene.ctx)

    # merged encoder pass over the input graphs
    cat_idx = np.concatenate([c.node_cat_idx for c in input_ctxs])
    anchors = np.concatenate([c.node_anchors for c in input_ctxs], axis=0)
    rel_idx = np.concatenate([c.edge_rel_idx for c in input_ctxs])
    edge_anchors = (
        np.concatenate([c.edge_anchors for c in input_ctxs], axis=0)
        if rel_idx.size
        else np.zeros((0, input_ctxs[0].edge_anchors.shape[1] if input_ctxs else 16))
    )
    subj_parts, obj_parts = [], []
    node_off = [0]
    edge_off = [0]
    for c in input_ctxs:
        subj_parts.append(c.edge_subject + node_off[-1])
        obj_parts.append(c.edge_object + node_off[-1])
        node_off.append(node_off[-1] + c.n_nodes)
        edge_off.append(edge_off[-1] + c.n_edges)
    v_all, z_all, enc_edges = enc.encode_parts(
        cat_idx,
        anchors,
        rel_idx,
        edge_anchors,
        np.concatenate(subj_parts),
        np.concatenate(obj_parts),
    )

    # merged manipulator pass over the curriculum scenes (targets = true graphs)
    manip_ids = [i for i, m in enumerate(modes) if m != "plain"]
    manip_z_of: dict[int, tuple[int, int]] = {}
    manip_edge_of: dict[int, tuple[int, int]] = {}
    if manip_ids:
        v_parts, z_parts, e_parts, ms, mo = [], [], [], [], []
        m_node_off = 0
        m_edge_off = 0
        for i in manip_ids:
            scene = scenes[i]
            n = scene.ctx.n_nodes
            v_parts.append(ad.slice_rows(v_all, node_off[i], node_off[i + 1]))
            if modes[i] == "add":
                row = blank_row_of[i]
                pieces = []
                if row > 0:
                    pieces.append(
                        ad.slice_rows(z_all, node_off[i], node_off[i] + row)
                    )
                pieces.append(model.manipulator.blank_z)
                if row + 1 < n:
                    pieces.append(
                        ad.slice_rows(z_all, node_off[i] + row + 1, node_off[i + 1])
                    )
                z_parts.append(ad.concat_rows(pieces))
            else:
                z_parts.append(ad.slice_rows(z_all, node_off[i], node_off[i + 1]))
            e_parts.append(
                enc.tokens.edge_features_from(
                    scene.ctx.edge_rel_idx, scene.ctx.edge_anchors
                )
            )
            ms.append(scene.ctx.edge_subject + m_node_off)
            mo.append(scene.ctx.edge_object + m_node_off)
            manip_z_of[i] = (m_node_off, m_node_off + n)
            manip_edge_of[i] = (m_edge_off, m_edge_off + scene.ctx.n_edges)
            m_node_off += n
            m_edge_off += scene.ctx.n_edges
        z_new_all, manip_edges = model.manipulator.manipulate_parts(
            ad.concat_rows(v_parts),
            ad.concat_rows(z_parts),
            ad.concat_rows(e_parts)
            if any(p.value.shape[0] for p in e_parts)
            else ad.const(np.zeros((0, EDGE_LATENT_DIM))),
            np.concatenate(ms) if ms else np.zeros(0, dtype=np.intp),
            np.concatenate(mo) if mo else np.zeros(0, dtype=np.intp),
        )

    # assemble final per-scene latents over the TRUE graphs
    latents: list[LatentGraph] = []
    for i, scene in enumerate(scenes):
        if modes[i] == "plain":
            v = ad.slice_rows(v_all, node_off[i], node_off[i + 1])
            z = ad.slice_rows(z_all, node_off[i], node_off[i + 1])
            ef = (
                ad.slice_rows(enc_edges, edge_off[i], edge_off[i + 1])
                if scene.ctx.n_edges
                else ad.const(np.zeros((0, EDGE_LATENT_DIM)))
            )
        else:
            v = ad.slice_rows(v_all, node_off[i], node_off[i + 1])
            zs, ze = manip_z_of[i]
            z = ad.slice_rows(z_new_all, zs, ze)
            es, ee = manip_edge_of[i]
            ef = (
                ad.slice_rows(manip_edges, es, ee)
                if ee > es
                else ad.const(np.zeros((0, EDGE_LATENT_DIM)))
            )
        latents.append(
            LatentGraph(
                node_ids=scene.record.graph.node_ids,
                categories=scene.record.categories,
                vz=ad.concat_cols([v, z]),
                edge_subject=scene.ctx.edge_subject,
                edge_object=scene.ctx.edge_object,
                edge_feats=ef,
            )
        )
    return latents


def _shape_subbatch(
    scenes: list[_PreparedScene], latents: list[LatentGraph], budget: int
) -> tuple[list[np.ndarray], list[LatentGraph], int]:
    """Whole scenes until the node budget is full; over-budget scenes skip."""
    codes, lats = [], []
    total = 0
    skipped = 0
    for scene, lat in zip(scenes, latents):
        if scene.codes is None:
            continue
        n = scene.codes.shape[0]
        if total + n > budget:
            skipped += 1
            continue
        codes.append(scene.codes)
        lats.append(lat)
        total += n
    return codes, lats, skipped


@dataclass
class TrainResult:
    model: SceneModel
    stats: NormStats
    steps: int
    metrics_path: Path | None
    checkpoint_path: Path | None


def train(
    config: TrainConfig,
    dataset: Dataset,
    out_checkpoint: str | Path | None = None,
    metrics_log: str | Path | None = None,
    trace: Callable[[dict], None] | None = None,
    quiet: bool = False,
) -> TrainResult:
    """Run joint training; returns the trained model and writes artifacts.

    With ``pretrain_layout`` the loop first runs all epochs with the shape
    loss weight at zero, then a short joint extension (``joint_epochs``,
    default epochs // 40), mirroring a layout-first schedule.
    """
    model = SceneModel(config)
    train_scenes = _prepare(model, dataset.train_records(), dataset.stats)
    if not train_scenes:
        raise ValueError("training split is empty")
    held_out = _prepare(model, dataset.test_records()[:8], dataset.stats)

    opt = OptimizerState(
        learning_rate=config.lr_at(0), weight_decay=config.weight_decay
    )
    params = model.parameters()

    phases: list[tuple[int, float]]
    if config.pretrain_layout and config.lambda_shape > 0:
        joint = config.joint_epochs or max(1, config.epochs // 40)
        phases = [(config.epochs, 0.0), (joint, config.lambda_shape)]
    else:
        phases = [(config.epochs, config.lambda_shape)]

    log_f = open(metrics_log, "w", encoding="utf-8") if metrics_log else None
    n = len(train_scenes)
    batch = config.scene_batch
    steps_per_epoch = math.ceil(n / batch)
    step = 0
    last_good: dict[str, np.ndarray] | None = None
    t_start = time.time()
    epoch_counter = 0

    try:
        for phase_epochs, lambda_shape in phases:
            for _ in range(phase_epochs):
                order = rng.stream("epoch-order", config.seed, epoch_counter).permutation(n)
                for b in range(steps_per_epoch):
                    idxs = order[b * batch : (b + 1) * batch]
                    scenes = [train_scenes[i] for i in idxs]
                    gen = rng.stream("train-step", config.seed, step)
                    try:
                        loss, l_layout, l_shape = _training_step(
                            model, scenes, gen, lambda_shape, trace, config
                        )
                        diverged = not math.isfinite(loss)
                    except FloatingPointError:
                        diverged = True
                    if diverged:
                        path = None
                        if last_good is not None and out_checkpoint:
                            model.load_parameter_values(last_good)
                            path = save_checkpoint(
                                out_checkpoint, model, dataset.stats, step
                            )
                        raise TrainingDiverged(
                            f"non-finite loss at step {step}", path
                        )
                    grads = {}
                    for name, p in params.items():
                        grads[name] = (
                            p.grad if p.grad is not None else np.zeros_like(p.value)
                        )
                    opt.learning_rate = config.lr_at(step)
                    new_values = optimizer_step(
                        {k: p.value for k, p in params.items()}, grads, opt
                    )
                    for name, p in params.items():
                        p.value = new_values[name]
                        p.grad = None
                    if log_f:
                        log_f.write(
                            json.dumps(
                                {
                                    "step": step,
                                    "loss": loss,
                                    "l_layout": l_layout,
                                    "l_shape": l_shape,
                                    "lr": opt.learning_rate,
                                }
                            )
                            + "\n"
                        )
                    step += 1
                epoch_counter += 1
                last_good = model.parameter_values()
                if (
                    config.eval_every
                    and held_out
                    and epoch_counter % config.eval_every == 0
                ):
                    ev = _held_out_losses(model, held_out, lambda_shape, config)
                    if log_f:
                        log_f.write(json.dumps({"epoch": epoch_counter, **ev}) + "\n")
                    if not quiet:
                        print(
                            f"epoch {epoch_counter}: held-out layout "
                            f"{ev['eval_layout']:.4f} shape {ev['eval_shape']:.4f} "
                            f"({time.time() - t_start:.0f}s)"
                        )
    finally:
        if log_f:
            log_f.close()

    ckpt_path = None
    if out_checkpoint:
        ckpt_path = save_checkpoint(out_checkpoint, model, dataset.stats, step)
    return TrainResult(
        model=model,
        stats=dataset.stats,
        steps=step,
        metrics_path=Path(metrics_log) if metrics_log else None,
        checkpoint_path=ckpt_path,
    )


def _training_step(
    model: SceneModel,
    scenes: list[_PreparedScene],
    gen: np.random.Generator,
    lambda_shape: float,
    trace,
    config: TrainConfig,
) -> tuple[float, float, float]:
    latents = _batch_latents(model, scenes, gen, config.p_manip, trace)
    kwargs = dict(
        time_embedding=model.time_embedding,
        conditioning=config.conditioning,
        pi_enabled=config.time_embedding,
    )
    l_layout = layout_training_loss(
        LayoutBatch(scenes=[s.boxes8 for s in scenes]),
        latents,
        model.denoiser_layout,
        model.unit_layout,
        model.schedule,
        gen,
        echo_enabled=config.echo_layout,
        **kwargs,
    )
    total = ad.scale(l_layout, config.lambda_layout)
    l_shape_val = 0.0
    if lambda_shape > 0:
        codes, lats, _skipped = _shape_subbatch(
            scenes, latents, config.shape_max_nodes
        )
        if codes:
            l_shape = shape_training_loss(
                codes,
                lats,
                model.denoiser_shape,
                model.unit_shape,
                model.projector,
                model.schedule,
                gen,
                echo_enabled=config.echo_shape,
                **kwargs,
            )
            total = ad.add(total, ad.scale(l_shape, lambda_shape))
            l_shape_val = l_shape.item()
    total.backward()
    return total.item(), l_layout.item(), l_shape_val


def _held_out_losses(model, held_out, lambda_shape, config) -> dict:
    gen = rng.stream("held-out-eval", config.seed)
    with ad.no_grad():
        latents = _batch_latents(model, held_out, gen, p_manip=0.0)
        kwargs = dict(
            time_embedding=model.time_embedding,
            conditioning=config.conditioning,
            pi_enabled=config.time_embedding,
        )
        l_layout = layout_training_loss(
            LayoutBatch(scenes=[s.boxes8 for s in held_out]),
            latents,
            model.denoiser_layout,
            model.unit_layout,
            model.schedule,
            gen,
            echo_enabled=config.echo_layout,
            **kwargs,
        ).item()
        l_shape = 0.0
        if lambda_shape > 0:
            codes, lats, _ = _shape_subbatch(held_out, latents, config.shape_max_nodes)
            if codes:
                l_shape = shape_training_loss(
                    codes,
                    lats,
                    model.denoiser_shape,
                    model.unit_shape,
                    model.projector,
                    model.schedule,
                    gen,
                    echo_enabled=config.echo_shape,
                    **kwargs,
                ).item()
    return {"eval_layout": l_layout, "eval_shape": l_shape}
