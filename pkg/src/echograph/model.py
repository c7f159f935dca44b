"""The assembled generative model: encoder, manipulator, both branches.

One SceneModel owns every learned component and exposes graph-in, scene-out
entry points for generation and manipulation. All parameters live in one flat
named registry so the trainer and the checkpoint format see a single
collection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import TrainConfig
from .diffusion import TIME_EMBED_DIM, TimeEmbedding, make_schedule
from .graph_conv import (
    CONDITION_DIM,
    LATENT_DIM,
    ExchangeUnit,
    LatentGraph,
    LatentManipulator,
    RelationEncoder,
    merge_latent_graphs,
)
from .layout import BOX_DIM, NormStats, sample_layout
from .nn import Activation, CrossAttention, Dense, LayerNorm, Network
from .nn.autodiff import Var
from .scene_graph import (
    DEFAULT_VOCAB,
    ContextualGraph,
    GraphEdit,
    SceneGraph,
    apply_edit,
    build_contextual_graph,
)
from .shapes import SHAPE_CODE_DIM, SHAPE_ECHO_DIM, sample_shapes

__all__ = ["SceneModel", "GeneratedScene"]

LAYOUT_ECHO_DIM = BOX_DIM + LATENT_DIM + TIME_EMBED_DIM
SHAPE_ECHO_NODE_DIM = SHAPE_ECHO_DIM + LATENT_DIM + TIME_EMBED_DIM


def _denoiser(name: str, data_dim: int, cfg: TrainConfig, seed: int) -> Network:
    h = cfg.denoiser_hidden
    if cfg.conditioning == "concat":
        layers = [
            Dense(data_dim + TIME_EMBED_DIM + CONDITION_DIM, h),
            Activation("silu"),
            LayerNorm(h),
            Dense(h, h),
            Activation("silu"),
            Dense(h, data_dim),
        ]
    else:
        layers = [
            Dense(data_dim + TIME_EMBED_DIM, h),
            Activation("silu"),
            LayerNorm(h),
            CrossAttention(h, CONDITION_DIM, h),
            Dense(h, h),
            Activation("silu"),
            Dense(h, data_dim),
        ]
    return Network(name, layers, rng_seed=seed)


@dataclass
class GeneratedScene:
    graph: SceneGraph
    boxes: np.ndarray  # (N, 7) raw boxes, row order = graph.nodes
    shape_codes: np.ndarray  # (N, 32)
    seed: int

    def boxes_by_id(self) -> dict[int, np.ndarray]:
        return {nid: self.boxes[i] for i, (nid, _) in enumerate(self.graph.nodes)}


class SceneModel:
    def __init__(self, config: TrainConfig, vocab=DEFAULT_VOCAB):
        self.config = config
        self.vocab = vocab
        seed = config.seed
        self.encoder = RelationEncoder(
            hidden=config.hidden,
            n_layers=config.gcn_layers,
            n_relations=len(vocab),
            seed=seed,
        )
        self.manipulator = LatentManipulator(
            hidden=config.hidden, n_layers=config.gcn_layers, seed=seed + 1
        )
        self.unit_layout = ExchangeUnit(
            "unit_layout",
            echo_dim=LAYOUT_ECHO_DIM,
            hidden=config.hidden,
            n_layers=config.gcn_layers,
            seed=seed + 2,
        )
        self.unit_shape = ExchangeUnit(
            "unit_shape",
            echo_dim=SHAPE_ECHO_NODE_DIM,
            hidden=config.hidden,
            n_layers=config.gcn_layers,
            seed=seed + 3,
        )
        self.denoiser_layout = _denoiser("denoiser_layout", BOX_DIM, config, seed + 4)
        self.denoiser_shape = _denoiser(
            "denoiser_shape", SHAPE_CODE_DIM, config, seed + 5
        )
        self.projector = Network(
            "projector",
            [Dense(SHAPE_CODE_DIM, SHAPE_ECHO_DIM, bias=False)],
            rng_seed=seed + 6,
        )
        self.schedule = make_schedule(config.t_steps, config.beta_min, config.beta_max)
        self.time_embedding = TimeEmbedding()

    # ---- parameter registry -------------------------------------------------

    def parameters(self) -> dict[str, Var]:
        out: dict[str, Var] = {}
        out.update(self.encoder.parameters())
        out.update(self.manipulator.parameters())
        out.update(self.unit_layout.parameters())
        out.update(self.unit_shape.parameters())
        for net in (self.denoiser_layout, self.denoiser_shape, self.projector):
            for pname, p in net.params.items():
                out[f"{net.name}.{pname}"] = p
        return out

    def parameter_values(self) -> dict[str, np.ndarray]:
        return {k: v.value.copy() for k, v in self.parameters().items()}

    def load_parameter_values(self, values: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        missing = set(params) - set(values)
        extra = set(values) - set(params)
        if missing or extra:
            raise ValueError(
                f"parameter set mismatch: missing {sorted(missing)[:3]}, "
                f"unexpected {sorted(extra)[:3]}"
            )
        for k, p in params.items():
            arr = np.ascontiguousarray(values[k], dtype=np.float64)
            if arr.shape != p.value.shape:
                raise ValueError(f"{k}: shape {arr.shape} != {p.value.shape}")
            p.value = arr

    # ---- graph plumbing ------------------------------------------------------

    def contextual(self, graph: SceneGraph) -> ContextualGraph:
        return build_contextual_graph(graph, self.config.anchor_seed, self.vocab)

    def encode(self, graph: SceneGraph) -> LatentGraph:
        return self.encoder.encode(self.contextual(graph))

    def manipulate_to(
        self, graph_before: SceneGraph, graph_after: SceneGraph, new_ids=None
    ) -> LatentGraph:
        """Latent rewrite from one symbolic graph onto another.

        Nodes of ``graph_after`` missing from ``graph_before`` start from the
        manipulator's blank embedding automatically.
        """
        prior = self.encode(graph_before)
        ctx_after = self.contextual(graph_after)
        return self.manipulator.manipulate(prior, ctx_after, self.encoder.tokens)

    def manipulated_latent(
        self, graph_before: SceneGraph, edit: GraphEdit
    ) -> tuple[SceneGraph, LatentGraph]:
        """Symbolic edit plus latent rewrite through the manipulator."""
        graph_after = apply_edit(graph_before, edit, self.vocab)
        return graph_after, self.manipulate_to(graph_before, graph_after)

    # ---- sampling ------------------------------------------------------------

    def _branch_kwargs(self) -> dict:
        return dict(
            time_embedding=self.time_embedding,
            conditioning=self.config.conditioning,
            pi_enabled=self.config.time_embedding,
        )

    def sample_scene(
        self,
        graph: SceneGraph,
        latent: LatentGraph,
        stats: NormStats,
        seed: int,
        segments: np.ndarray | None = None,
        node_seeds=None,
        include_shapes: bool = True,
    ) -> GeneratedScene:
        boxes = sample_layout(
            latent,
            self.denoiser_layout,
            self.unit_layout,
            self.schedule,
            stats,
            seed,
            echo_enabled=self.config.echo_layout,
            segments=segments,
            node_seeds=node_seeds,
            **self._branch_kwargs(),
        )
        if include_shapes:
            codes = sample_shapes(
                latent,
                self.denoiser_shape,
                self.unit_shape,
                self.projector,
                self.schedule,
                seed,
                echo_enabled=self.config.echo_shape,
                segments=segments,
                node_seeds=node_seeds,
                **self._branch_kwargs(),
            )
        else:
            codes = np.zeros((latent.n_nodes, SHAPE_CODE_DIM))
        return GeneratedScene(graph=graph, boxes=boxes, shape_codes=codes, seed=seed)

    def generate(self, graph: SceneGraph, stats: NormStats, seed: int) -> GeneratedScene:
        return self.sample_scene(graph, self.encode(graph), stats, seed)

    def manipulate(
        self, graph: SceneGraph, edit: GraphEdit, stats: NormStats, seed: int
    ) -> GeneratedScene:
        graph_after, latent = self.manipulated_latent(graph, edit)
        return self.sample_scene(graph_after, latent, stats, seed)

    def generate_batch(
        self,
        graphs: list[SceneGraph],
        latents: list[LatentGraph],
        stats: NormStats,
        seed: int,
        include_shapes: bool = True,
    ) -> list[GeneratedScene]:
        """Sample many scenes in one merged pass (echoes stay scene-local)."""
        if not graphs:
            return []
        merged, segments = merge_latent_graphs(latents)
        node_seeds = []
        for s, lat in enumerate(latents):
            node_seeds.extend((s, i) for i in range(lat.n_nodes))
        big = self.sample_scene(
            SceneGraph(nodes=(), edges=()),  # placeholder, rows matter
            merged,
            stats,
            seed,
            segments=segments,
            node_seeds=node_seeds,
            include_shapes=include_shapes,
        )
        out = []
        offset = 0
        for graph, lat in zip(graphs, latents):
            n = lat.n_nodes
            out.append(
                GeneratedScene(
                    graph=graph,
                    boxes=big.boxes[offset : offset + n],
                    shape_codes=big.shape_codes[offset : offset + n],
                    seed=seed,
                )
            )
            offset += n
        return out
