"""Latent shape space over parametric primitives, plus the shape branch.

Shapes are superquadric primitives (box / ellipsoid / cylinder) with a 4-float
style vector: two aspect ratios, taper, and edge rounding, each in [0, 1].
The 32-float latent code is a fixed affine embedding of those parameters:

    slots 0-2   family one-hot scaled to +-1
    slots 3-6   style mapped to [-1, 1]
    slots 7-31  a fixed orthogonal mixing of (family, style), nuisance at
                decode time

Encoding is injective and exactly invertible; decoding is total (any finite
code decodes, with argmax ties broken toward the lowest family index). The
shape branch diffuses these codes; echo vectors carry a learned 64-wide
projection of the diffused code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .diffusion import NoiseSchedule, TimeEmbedding, diffuse, predict_noise, sample
from .graph_conv import ExchangeUnit, LatentGraph, merge_latent_graphs
from .nn import Network
from .nn import autodiff as ad
from .nn.autodiff import Var

__all__ = [
    "SHAPE_CODE_DIM",
    "SHAPE_ECHO_DIM",
    "FAMILIES",
    "PrimitiveParams",
    "encode_shape",
    "decode_shape",
    "sample_point_cloud",
    "project_codes",
    "shape_training_loss",
    "sample_shapes",
]

SHAPE_CODE_DIM = 32
SHAPE_ECHO_DIM = 64  # projected width, aligned with the node feature width
FAMILIES = ("box", "ellipsoid", "cylinder")
_STYLE_DIM = 4
_NUISANCE_SEED = 20240517  # fixed table; not a user-facing seed


def _mixing_matrix() -> np.ndarray:
    gen = rng.stream("shape-code-mixing", _NUISANCE_SEED)
    q, _ = np.linalg.qr(gen.normal(size=(25 + 7, 7)))
    # rows of a column-orthonormal matrix have norm <= 1, so entries of
    # (Q u / sqrt(7)) stay in [-1, 1] for u in the +-1 cube
    return q[:25, :] / math.sqrt(7.0)


_MIXING = _mixing_matrix()


_STYLE_STEPS = 1024  # power of two so the +-1 affine embedding is bit-exact


@dataclass(frozen=True)
class PrimitiveParams:
    """A primitive family plus style (aspect-x, aspect-y, taper, rounding).

    Styles are clamped to [0, 1] and snapped to 2^-10 resolution; on that
    lattice the code embedding and its inverse are exact in float64.
    """

    family: str
    style: tuple[float, float, float, float]

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        snapped = tuple(
            round(min(1.0, max(0.0, float(s))) * _STYLE_STEPS) / _STYLE_STEPS
            for s in self.style
        )
        object.__setattr__(self, "style", snapped)


def encode_shape(p: PrimitiveParams) -> np.ndarray:
    fam = -np.ones(3)
    fam[FAMILIES.index(p.family)] = 1.0
    style = 2.0 * np.asarray(p.style) - 1.0
    u = np.concatenate([fam, style])
    return np.concatenate([fam, style, _MIXING @ u])


def decode_shape(code: np.ndarray) -> PrimitiveParams:
    code = np.asarray(code, dtype=float).reshape(SHAPE_CODE_DIM)
    family = FAMILIES[int(np.argmax(code[:3]))]
    style = tuple(np.clip((code[3:7] + 1.0) / 2.0, 0.0, 1.0))
    return PrimitiveParams(family=family, style=style)


def _superquadric_exponents(p: PrimitiveParams) -> tuple[float, float]:
    rounding = p.style[3]
    if p.family == "box":
        e = 0.1 + 0.3 * rounding
        return e, e
    if p.family == "cylinder":
        return 0.1 + 0.3 * rounding, 1.0
    return 1.0, 1.0  # ellipsoid


def _signed_pow(w: np.ndarray, e: float) -> np.ndarray:
    return np.sign(w) * np.abs(w) ** e


def sample_point_cloud(p: PrimitiveParams, n: int = 1024, seed: int = 0) -> np.ndarray:
    """Deterministic stratified surface sampling, centered and max-norm 1."""
    side = int(round(math.sqrt(n)))
    if side * side != n:
        raise ValueError("point count must be a perfect square")
    gen = rng.stream("point-cloud", seed, p.family, *p.style)
    jitter = gen.uniform(0.0, 1.0, size=(n, 2))
    i, j = np.divmod(np.arange(n), side)
    eta = -math.pi / 2 + (i + jitter[:, 0]) / side * math.pi
    omega = -math.pi + (j + jitter[:, 1]) / side * 2.0 * math.pi

    e1, e2 = _superquadric_exponents(p)
    a = 0.4 + 0.6 * p.style[0]
    b = 0.4 + 0.6 * p.style[1]
    ce, se = np.cos(eta), np.sin(eta)
    co, so = np.cos(omega), np.sin(omega)
    x = a * _signed_pow(ce, e1) * _signed_pow(co, e2)
    y = b * _signed_pow(ce, e1) * _signed_pow(so, e2)
    z = _signed_pow(se, e1)
    taper = 1.0 - 0.5 * p.style[2] * (z + 1.0) / 2.0
    pts = np.column_stack([x * taper, y * taper, z])

    pts -= pts.mean(axis=0)
    norm = np.linalg.norm(pts, axis=1).max()
    return pts / norm


def project_codes(codes: Var | np.ndarray, projector: Network) -> Var:
    """Project diffused codes to the echo width (a pure linear map)."""
    codes = codes if isinstance(codes, Var) else ad.const(codes)
    if codes.value.ndim != 2 or codes.value.shape[1] != SHAPE_CODE_DIM:
        raise ValueError(f"project_codes: expected (*, {SHAPE_CODE_DIM}) codes")
    out = projector.forward(codes)
    if out.value.shape[1] != SHAPE_ECHO_DIM:
        raise ValueError(
            f"project_codes: projector emits {out.value.shape[1]}, "
            f"expected {SHAPE_ECHO_DIM}"
        )
    return out


def shape_training_loss(
    code_batch: list[np.ndarray],
    latent_graphs: list[LatentGraph],
    denoiser: Network,
    unit: ExchangeUnit,
    projector: Network,
    schedule: NoiseSchedule,
    gen: np.random.Generator,
    *,
    time_embedding: TimeEmbedding,
    conditioning: str = "cross_attention",
    echo_enabled: bool = True,
    pi_enabled: bool = True,
    instrument=None,
) -> Var:
    """Noise-prediction loss over whole scenes, shared t per scene."""
    if len(code_batch) != len(latent_graphs):
        raise ValueError("code batch and latent graphs differ in scene count")
    if not code_batch:
        raise ValueError("empty batch")

    merged, segments = merge_latent_graphs(latent_graphs)
    d_rows, eps_rows, pi_rows = [], [], []
    for codes in code_batch:
        codes = np.asarray(codes, dtype=float).reshape(-1, SHAPE_CODE_DIM)
        t = int(gen.integers(1, schedule.T + 1))
        eps = gen.standard_normal(codes.shape)
        d_rows.append(diffuse(codes, t, eps, schedule))
        eps_rows.append(eps)
        pi_rows.append(
            time_embedding.embed_rows(t, codes.shape[0])
            if pi_enabled
            else np.zeros((codes.shape[0], time_embedding.dim))
        )
    x_t = np.concatenate(d_rows, axis=0)
    eps = np.concatenate(eps_rows, axis=0)
    pi = np.concatenate(pi_rows, axis=0)

    s_t = project_codes(x_t, projector)
    if not echo_enabled:
        s_t = ad.const(np.zeros_like(s_t.value))
    echo_nodes = ad.concat_cols([s_t, merged.vz, ad.const(pi)])
    conditions = unit.exchange(
        echo_nodes, merged.edge_feats, merged.edge_subject, merged.edge_object
    )
    if instrument is not None:
        instrument(
            {"echo_nodes": echo_nodes.value.copy(), "condition": conditions.value.copy()}
        )
    eps_hat = predict_noise(denoiser, x_t, pi, conditions, conditioning, segments)
    err = ad.sub(eps_hat, ad.const(eps))
    loss = ad.scale(ad.sum_all(ad.square(err)), 1.0 / x_t.shape[0])
    if not math.isfinite(loss.item()):
        raise FloatingPointError("shape loss is non-finite")
    return loss


def sample_shapes(
    latent: LatentGraph,
    denoiser: Network,
    unit: ExchangeUnit,
    projector: Network,
    schedule: NoiseSchedule,
    seed: int,
    *,
    time_embedding: TimeEmbedding,
    conditioning: str = "cross_attention",
    echo_enabled: bool = True,
    pi_enabled: bool = True,
    segments: np.ndarray | None = None,
    node_seeds=None,
) -> np.ndarray:
    """Sample one raw 32-float code per node; decoding is the caller's choice."""
    return sample(
        denoiser,
        unit,
        latent,
        schedule,
        seed,
        time_embedding=time_embedding,
        branch="shape",
        conditioning=conditioning,
        echo_transform=lambda d: project_codes(d, projector),
        echo_enabled=echo_enabled,
        pi_enabled=pi_enabled,
        segments=segments,
        node_seeds=node_seeds,
    )
