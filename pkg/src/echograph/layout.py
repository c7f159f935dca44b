"""Box parametrization, normalization, layout loss, and layout sampling.

A raw box has 7 values (x, y, z, l, h, w, theta). For diffusion, location and
size are mapped affinely to [-1, 1] using per-axis min/max statistics from the
training split, and the yaw angle becomes its sine/cosine pair, giving the
8-value representation the layout denoiser works on. Decoding inverts the
affine maps, clamps sizes to a physical minimum, and recovers the angle via
atan2.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .diffusion import NoiseSchedule, TimeEmbedding, diffuse, predict_noise, sample
from .graph_conv import ExchangeUnit, LatentGraph, merge_latent_graphs
from .nn import Network
from .nn import autodiff as ad
from .nn.autodiff import Var

__all__ = [
    "BOX_DIM",
    "MIN_SIZE",
    "NormStats",
    "normalize_box",
    "normalize_boxes",
    "denormalize_box",
    "denormalize_boxes",
    "LayoutBatch",
    "layout_training_loss",
    "sample_layout",
]

BOX_DIM = 8
MIN_SIZE = 0.05  # meters; decoded sizes never fall below this


@dataclass(frozen=True)
class NormStats:
    """Per-axis min/max of location and size over the training split."""

    loc_min: np.ndarray
    loc_max: np.ndarray
    size_min: np.ndarray
    size_max: np.ndarray

    def __post_init__(self):
        for lo, hi, what in (
            (self.loc_min, self.loc_max, "location"),
            (self.size_min, self.size_max, "size"),
        ):
            if lo.shape != (3,) or hi.shape != (3,):
                raise ValueError(f"{what} stats must be 3-vectors")
            if np.any(hi <= lo):
                raise ValueError(f"{what} stats need max > min on every axis")

    @staticmethod
    def from_boxes(raw_boxes: np.ndarray) -> "NormStats":
        raw_boxes = np.asarray(raw_boxes, dtype=float).reshape(-1, 7)
        return NormStats(
            loc_min=raw_boxes[:, 0:3].min(axis=0),
            loc_max=raw_boxes[:, 0:3].max(axis=0),
            size_min=raw_boxes[:, 3:6].min(axis=0),
            size_max=raw_boxes[:, 3:6].max(axis=0),
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "loc_min": self.loc_min.tolist(),
                "loc_max": self.loc_max.tolist(),
                "size_min": self.size_min.tolist(),
                "size_max": self.size_max.tolist(),
            }
        )

    @staticmethod
    def from_json(text: str) -> "NormStats":
        doc = json.loads(text)
        return NormStats(
            loc_min=np.array(doc["loc_min"], dtype=float),
            loc_max=np.array(doc["loc_max"], dtype=float),
            size_min=np.array(doc["size_min"], dtype=float),
            size_max=np.array(doc["size_max"], dtype=float),
        )


def _affine_to_unit(v: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    return 2.0 * (v - lo) / (hi - lo) - 1.0


def _affine_from_unit(u: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    return (u + 1.0) / 2.0 * (hi - lo) + lo


def normalize_boxes(raw: np.ndarray, stats: NormStats) -> np.ndarray:
    """(N, 7) raw boxes -> (N, 8) normalized {loc3, size3, sin, cos}."""
    raw = np.asarray(raw, dtype=float).reshape(-1, 7)
    loc = _affine_to_unit(raw[:, 0:3], stats.loc_min, stats.loc_max)
    size = _affine_to_unit(raw[:, 3:6], stats.size_min, stats.size_max)
    if np.any(np.abs(loc) > 1.0) or np.any(np.abs(size) > 1.0):
        warnings.warn("box outside normalization range", stacklevel=2)
    theta = raw[:, 6]
    return np.column_stack([loc, size, np.sin(theta), np.cos(theta)])


def normalize_box(raw: Sequence[float], stats: NormStats) -> np.ndarray:
    return normalize_boxes(np.asarray(raw, dtype=float)[None, :], stats)[0]


def denormalize_boxes(
    boxes: np.ndarray, stats: NormStats, min_size: float = MIN_SIZE
) -> np.ndarray:
    """(N, 8) normalized -> (N, 7) raw; sizes clamped, angle via atan2."""
    boxes = np.asarray(boxes, dtype=float).reshape(-1, BOX_DIM)
    loc = _affine_from_unit(boxes[:, 0:3], stats.loc_min, stats.loc_max)
    size = _affine_from_unit(boxes[:, 3:6], stats.size_min, stats.size_max)
    size = np.maximum(size, min_size)
    theta = np.arctan2(boxes[:, 6], boxes[:, 7])
    return np.column_stack([loc, size, theta])


def denormalize_box(
    box: Sequence[float], stats: NormStats, min_size: float = MIN_SIZE
) -> np.ndarray:
    return denormalize_boxes(np.asarray(box, dtype=float)[None, :], stats, min_size)[0]


@dataclass
class LayoutBatch:
    """Normalized boxes for a batch of scenes, one (N_i, 8) array per scene."""

    scenes: list[np.ndarray]

    def __post_init__(self):
        for i, b in enumerate(self.scenes):
            if b.ndim != 2 or b.shape[1] != BOX_DIM:
                raise ValueError(f"scene {i}: boxes must be (n, {BOX_DIM})")

    @property
    def n_nodes(self) -> int:
        return sum(b.shape[0] for b in self.scenes)


def layout_training_loss(
    batch: LayoutBatch,
    latent_graphs: list[LatentGraph],
    denoiser: Network,
    unit: ExchangeUnit,
    schedule: NoiseSchedule,
    gen: np.random.Generator,
    *,
    time_embedding: TimeEmbedding,
    conditioning: str = "cross_attention",
    echo_enabled: bool = True,
    pi_enabled: bool = True,
    instrument=None,
) -> Var:
    """Noise-prediction loss, mean over nodes of the squared error norm.

    One timestep is drawn per scene (the echo couples a scene's nodes at a
    common t); the echo vector for each node carries its diffused box.
    """
    if len(batch.scenes) != len(latent_graphs):
        raise ValueError("batch and latent graphs differ in scene count")
    if not batch.scenes:
        raise ValueError("empty batch")

    merged, segments = merge_latent_graphs(latent_graphs)
    d_rows, gamma_rows, pi_rows = [], [], []
    for boxes in batch.scenes:
        t = int(gen.integers(1, schedule.T + 1))
        gamma = gen.standard_normal(boxes.shape)
        d_rows.append(diffuse(boxes, t, gamma, schedule))
        gamma_rows.append(gamma)
        pi_rows.append(
            time_embedding.embed_rows(t, boxes.shape[0])
            if pi_enabled
            else np.zeros((boxes.shape[0], time_embedding.dim))
        )
    d_t = np.concatenate(d_rows, axis=0)
    gamma = np.concatenate(gamma_rows, axis=0)
    pi = np.concatenate(pi_rows, axis=0)

    echo_data = ad.const(d_t if echo_enabled else np.zeros_like(d_t))
    echo_nodes = ad.concat_cols([echo_data, merged.vz, ad.const(pi)])
    conditions = unit.exchange(
        echo_nodes, merged.edge_feats, merged.edge_subject, merged.edge_object
    )
    if instrument is not None:
        instrument(
            {"echo_nodes": echo_nodes.value.copy(), "condition": conditions.value.copy()}
        )
    eps_hat = predict_noise(denoiser, d_t, pi, conditions, conditioning, segments)
    err = ad.sub(eps_hat, ad.const(gamma))
    loss = ad.scale(ad.sum_all(ad.square(err)), 1.0 / d_t.shape[0])
    if not math.isfinite(loss.item()):
        raise FloatingPointError("layout loss is non-finite")
    return loss


def sample_layout(
    latent: LatentGraph,
    denoiser: Network,
    unit: ExchangeUnit,
    schedule: NoiseSchedule,
    stats: NormStats,
    seed: int,
    *,
    time_embedding: TimeEmbedding,
    conditioning: str = "cross_attention",
    echo_enabled: bool = True,
    pi_enabled: bool = True,
    segments: np.ndarray | None = None,
    node_seeds=None,
) -> np.ndarray:
    """Sample one box per node and decode to raw (N, 7) boxes."""
    normalized = sample(
        denoiser,
        unit,
        latent,
        schedule,
        seed,
        time_embedding=time_embedding,
        branch="layout",
        conditioning=conditioning,
        echo_enabled=echo_enabled,
        pi_enabled=pi_enabled,
        segments=segments,
        node_seeds=node_seeds,
    )
    if normalized.shape[0] == 0:
        return np.zeros((0, 7))
    return denormalize_boxes(normalized, stats)
