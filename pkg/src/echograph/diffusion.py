"""Noise schedules, forward diffusion, and the echo-conditioned reverse step.

Both branches share this machinery. One reverse step: assemble every node's
echo vector concat(state, vz, time embedding), run the exchange unit once to
get the per-node conditions (a single snapshot shared by all nodes in the
step), predict the noise per node, and apply

    d_{t-1} = (d_t - (1-a_t)/sqrt(1-abar_t) * eps_hat) / sqrt(a_t) + sigma_t z

with z ~ N(0,1) for t > 1 and z = 0 at the final step. sigma_t = sqrt(beta_t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import rng
from .graph_conv import CONDITION_DIM, ExchangeUnit, LatentGraph
from .nn import Network, segment_attention_mask
from .nn import autodiff as ad
from .nn.autodiff import Var

__all__ = [
    "TIME_EMBED_DIM",
    "NoiseSchedule",
    "make_schedule",
    "diffuse",
    "TimeEmbedding",
    "EchoState",
    "echo_denoise_step",
    "sample",
]

TIME_EMBED_DIM = 32


@dataclass(frozen=True)
class NoiseSchedule:
    """Linear beta schedule with cached derived arrays (1-based accessors)."""

    betas: np.ndarray  # (T,)
    alphas: np.ndarray
    alpha_bars: np.ndarray
    sigmas: np.ndarray

    @property
    def T(self) -> int:
        return int(self.betas.shape[0])

    def beta(self, t: int) -> float:
        return float(self.betas[t - 1])

    def alpha(self, t: int) -> float:
        return float(self.alphas[t - 1])

    def alpha_bar(self, t: int) -> float:
        return float(self.alpha_bars[t - 1])

    def sigma(self, t: int) -> float:
        return float(self.sigmas[t - 1])


def make_schedule(T: int, beta_min: float = 1e-4, beta_max: float = 0.02) -> NoiseSchedule:
    if T < 1:
        raise ValueError("schedule needs at least one step")
    if not (0.0 < beta_min <= beta_max < 1.0):
        raise ValueError(f"invalid beta range [{beta_min}, {beta_max}]")
    betas = np.linspace(beta_min, beta_max, T)
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    sigmas = np.sqrt(betas)
    return NoiseSchedule(betas=betas, alphas=alphas, alpha_bars=alpha_bars, sigmas=sigmas)


def diffuse(d0: np.ndarray, t: int, eps: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """Closed-form forward marginal: sqrt(abar_t) d0 + sqrt(1-abar_t) eps."""
    d0 = np.asarray(d0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if d0.shape != eps.shape:
        raise ValueError(f"diffuse: noise shape {eps.shape} != data shape {d0.shape}")
    if not (1 <= t <= schedule.T):
        raise ValueError(f"diffuse: t={t} outside [1, {schedule.T}]")
    ab = schedule.alpha_bar(t)
    return math.sqrt(ab) * d0 + math.sqrt(1.0 - ab) * eps


class TimeEmbedding:
    """Sinusoidal step embedding over log-spaced frequencies."""

    def __init__(self, dim: int = TIME_EMBED_DIM, max_period: float = 10_000.0):
        if dim % 2:
            raise ValueError("embedding dimension must be even")
        self.dim = dim
        half = dim // 2
        self.freqs = np.exp(-np.log(max_period) * np.arange(half) / max(half - 1, 1))

    def embed(self, t: int) -> np.ndarray:
        phase = float(t) * self.freqs
        return np.concatenate([np.sin(phase), np.cos(phase)])

    def embed_rows(self, t: int, n: int) -> np.ndarray:
        return np.tile(self.embed(t), (n, 1))


class PerNodeStreams:
    """One named noise stream per node; rows of a draw come from distinct streams.

    Keeps per-node sampling noise isolated: replaying with one node's seed
    changed leaves every other node's draws untouched.
    """

    def __init__(self, branch: str, seed: int, node_seeds):
        self._gens = [
            rng.stream("sample", branch, seed, "node", ns) for ns in node_seeds
        ]

    def standard_normal(self, shape) -> np.ndarray:
        n, d = shape
        if n != len(self._gens):
            raise ValueError(f"expected {len(self._gens)} rows, got {n}")
        return np.stack([g.standard_normal(d) for g in self._gens]) if n else np.zeros(
            (0, d)
        )


@dataclass
class EchoState:
    """Per-node denoising data at step t, tied to a latent graph."""

    d: np.ndarray  # (N, dim)
    t: int
    latent: LatentGraph
    segments: np.ndarray | None = None  # scene id per node (batched sampling)

    def __post_init__(self):
        if self.d.ndim != 2 or self.d.shape[0] != self.latent.n_nodes:
            raise ValueError(
                f"denoising data {self.d.shape} does not match "
                f"{self.latent.n_nodes} nodes"
            )


def _assemble_echo_nodes(
    state: EchoState,
    pi_rows: np.ndarray,
    echo_transform: Callable[[Var], Var] | None,
    echo_enabled: bool,
) -> Var:
    d_var = ad.const(state.d)
    s = echo_transform(d_var) if echo_transform is not None else d_var
    if not echo_enabled:
        s = ad.const(np.zeros_like(s.value))
    return ad.concat_cols([s, state.latent.vz, ad.const(pi_rows)])


def predict_noise(
    denoiser: Network,
    d: np.ndarray,
    pi_rows: np.ndarray,
    conditions: Var,
    conditioning: str,
    segments: np.ndarray | None,
) -> Var:
    """Run the denoiser under the configured conditioning mode."""
    x = ad.concat_cols([ad.const(d), ad.const(pi_rows)])
    if conditioning == "concat":
        return denoiser.forward(ad.concat_cols([x, conditions]))
    if conditioning == "cross_attention":
        n = d.shape[0]
        seg = segments if segments is not None else np.zeros(n, dtype=np.intp)
        mask = segment_attention_mask(seg, seg)
        return denoiser.forward({"x": x, "context": conditions, "attn_mask": mask})
    raise ValueError(f"unknown conditioning mode {conditioning!r}")


def echo_denoise_step(
    state: EchoState,
    denoiser: Network,
    unit: ExchangeUnit,
    schedule: NoiseSchedule,
    gen: np.random.Generator,
    *,
    time_embedding: TimeEmbedding,
    conditioning: str = "cross_attention",
    echo_transform: Callable[[Var], Var] | None = None,
    echo_enabled: bool = True,
    pi_enabled: bool = True,
    instrument: Callable[[dict], None] | None = None,
) -> EchoState:
    """One reverse step t -> t-1 for every node, sharing one condition snapshot."""
    t = state.t
    if t < 1:
        raise ValueError("echo_denoise_step: t must be >= 1")
    n = state.d.shape[0]
    pi_rows = (
        time_embedding.embed_rows(t, n)
        if pi_enabled
        else np.zeros((n, time_embedding.dim))
    )

    echo_nodes = _assemble_echo_nodes(state, pi_rows, echo_transform, echo_enabled)
    conditions = unit.exchange(
        echo_nodes, state.latent.edge_feats, state.latent.edge_subject, state.latent.edge_object
    )
    if instrument is not None:
        instrument(
            {
                "t": t,
                "echo_nodes": echo_nodes.value.copy(),
                "condition": conditions.value.copy(),
            }
        )

    eps_hat = predict_noise(
        denoiser, state.d, pi_rows, conditions, conditioning, state.segments
    ).value
    bad = ~np.isfinite(eps_hat)
    if bad.any():
        node = int(np.argwhere(bad.any(axis=1))[0][0])
        raise FloatingPointError(
            f"non-finite noise prediction for node {node} at t={t}"
        )

    a_t = schedule.alpha(t)
    ab_t = schedule.alpha_bar(t)
    mean = (state.d - (1.0 - a_t) / math.sqrt(1.0 - ab_t) * eps_hat) / math.sqrt(a_t)
    if t > 1:
        z = gen.standard_normal(state.d.shape)
        d_prev = mean + schedule.sigma(t) * z
    else:
        d_prev = mean
    return replace(state, d=d_prev, t=t - 1)


def sample(
    denoiser: Network,
    unit: ExchangeUnit,
    latent: LatentGraph,
    schedule: NoiseSchedule,
    seed: int,
    *,
    time_embedding: TimeEmbedding,
    branch: str = "layout",
    conditioning: str = "cross_attention",
    echo_transform: Callable[[Var], Var] | None = None,
    echo_enabled: bool = True,
    pi_enabled: bool = True,
    segments: np.ndarray | None = None,
    node_seeds=None,
) -> np.ndarray:
    """Reverse diffusion from unit Gaussian noise down to d_0 for every node.

    Noise is drawn from one splittable stream per node (keyed by ``seed`` and
    the node's position, or by ``node_seeds`` when given), so one node's
    trajectory noise can be re-rolled without disturbing the others.
    """
    dim = denoiser.out_dim()
    n = latent.n_nodes
    if n == 0:
        return np.zeros((0, dim))
    if node_seeds is None:
        node_seeds = list(range(n))
    if len(node_seeds) != n:
        raise ValueError("node_seeds must match the node count")
    gen = PerNodeStreams(branch, seed, node_seeds)
    with ad.no_grad():
        state = EchoState(
            d=gen.standard_normal((n, dim)), t=schedule.T, latent=latent, segments=segments
        )
        while state.t >= 1:
            state = echo_denoise_step(
                state,
                denoiser,
                unit,
                schedule,
                gen,
                time_embedding=time_embedding,
                conditioning=conditioning,
                echo_transform=echo_transform,
                echo_enabled=echo_enabled,
                pi_enabled=pi_enabled,
            )
    return state.d
