"""Triplet graph convolution: encoder, latent manipulator, exchange units.

One convolution layer runs an MLP ``h1`` over every (subject, edge, object)
triplet, splitting its output into a message for the subject, the next edge
feature, and a message for the object. Each node then averages the messages
addressed to it (its "own" messages) and, separately, the messages produced
at the far end of its incident triplets (its "neighbor" messages); the update
is residual:

    node' = avg(own messages) + h2(avg(neighbor messages))

Nodes without incident edges get a synthetic self-triplet carrying a learned
null edge feature so the same update applies. All operations are built from
autodiff primitives, so gradients flow through stacked convolutions and into
the token store.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import Activation, Dense, LayerNorm, Network
from .nn import autodiff as ad
from .nn.autodiff import Var
from .scene_graph import (
    ANCHOR_DIM,
    CATEGORIES,
    FEATURE_DIM,
    TOKEN_DIM,
    ContextualGraph,
)
from . import rng

__all__ = [
    "Z_DIM",
    "LATENT_DIM",
    "EDGE_LATENT_DIM",
    "TokenStore",
    "LatentGraph",
    "merge_latent_graphs",
    "gcn_layer_forward",
    "TripletGcnStack",
    "RelationEncoder",
    "LatentManipulator",
    "ExchangeUnit",
]

Z_DIM = 32
LATENT_DIM = FEATURE_DIM + Z_DIM  # 96: explicit feature + relation embedding
EDGE_LATENT_DIM = FEATURE_DIM  # 64: final-layer edge features


class TokenStore:
    """Learnable 48-float tokens per category and per relation."""

    def __init__(self, n_relations: int, seed: int):
        gen_c = rng.stream("tokens", seed, "categories")
        gen_r = rng.stream("tokens", seed, "relations")
        bound = 1.0 / np.sqrt(TOKEN_DIM)
        self.category_tokens = ad.param(
            gen_c.uniform(-bound, bound, size=(len(CATEGORIES), TOKEN_DIM))
        )
        self.relation_tokens = ad.param(
            gen_r.uniform(-bound, bound, size=(n_relations, TOKEN_DIM))
        )

    def parameters(self) -> dict[str, Var]:
        return {
            "tokens.categories": self.category_tokens,
            "tokens.relations": self.relation_tokens,
        }

    def node_features_from(self, cat_idx: np.ndarray, anchors: np.ndarray) -> Var:
        """v_i = concat(anchor, category token) per node."""
        tok = ad.gather_rows(self.category_tokens, cat_idx)
        return ad.concat_cols([ad.const(anchors), tok])

    def edge_features_from(self, rel_idx: np.ndarray, anchors: np.ndarray) -> Var:
        if rel_idx.shape[0] == 0:
            width = ANCHOR_DIM + TOKEN_DIM
            return ad.const(np.zeros((0, width)))
        tok = ad.gather_rows(self.relation_tokens, rel_idx)
        return ad.concat_cols([ad.const(anchors), tok])

    def node_features(self, ctx: ContextualGraph) -> Var:
        return self.node_features_from(ctx.node_cat_idx, ctx.node_anchors)

    def edge_features(self, ctx: ContextualGraph) -> Var:
        return self.edge_features_from(ctx.edge_rel_idx, ctx.edge_anchors)


@dataclass
class LatentGraph:
    """Per-node latent features after encoding (and optional manipulation).

    ``vz`` rows are concat(explicit feature v [64], relation embedding z [32]).
    Edge features are the final-layer outputs of the encoding stack, carried
    unchanged into the exchange units.
    """

    node_ids: tuple[int, ...]
    categories: tuple[str, ...]
    vz: Var  # (N, LATENT_DIM)
    edge_subject: np.ndarray  # (E,)
    edge_object: np.ndarray  # (E,)
    edge_feats: Var  # (E, EDGE_LATENT_DIM)

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    def z_values(self) -> np.ndarray:
        return self.vz.value[:, FEATURE_DIM:]


def merge_latent_graphs(latents: list[LatentGraph]) -> tuple[LatentGraph, np.ndarray]:
    """Stack disjoint scene graphs into one batch graph.

    Returns the merged graph plus a per-node scene-id array; edges never cross
    scene boundaries, so convolution over the merged graph equals per-scene
    convolution.
    """
    if not latents:
        raise ValueError("merge_latent_graphs: empty list")
    if len(latents) == 1:
        only = latents[0]
        return only, np.zeros(only.n_nodes, dtype=np.intp)
    vz_parts, ef_parts, subj, obj, segs = [], [], [], [], []
    ids: list[int] = []
    cats: list[str] = []
    offset = 0
    for s, lat in enumerate(latents):
        vz_parts.append(lat.vz)
        if lat.edge_feats.value.shape[0]:
            ef_parts.append(lat.edge_feats)
        subj.append(lat.edge_subject + offset)
        obj.append(lat.edge_object + offset)
        segs.append(np.full(lat.n_nodes, s, dtype=np.intp))
        ids.extend(lat.node_ids)
        cats.extend(lat.categories)
        offset += lat.n_nodes
    edge_feats = (
        ad.concat_rows(ef_parts)
        if ef_parts
        else ad.const(np.zeros((0, EDGE_LATENT_DIM)))
    )
    merged = LatentGraph(
        node_ids=tuple(ids),
        categories=tuple(cats),
        vz=ad.concat_rows(vz_parts),
        edge_subject=np.concatenate(subj),
        edge_object=np.concatenate(obj),
        edge_feats=edge_feats,
    )
    return merged, np.concatenate(segs)


def gcn_layer_forward(
    node_feats: Var,
    edge_feats: Var,
    subject: np.ndarray,
    object_: np.ndarray,
    h1: Network,
    h2: Network,
) -> tuple[Var, Var]:
    """One triplet-convolution layer; returns updated node and edge features.

    Output widths are read off the networks: h2 emits the node width, and the
    edge width is what remains of h1's output after both message slots.
    """
    n_nodes = node_feats.value.shape[0]
    n_out = h2.out_dim()
    e_out = h1.out_dim() - 2 * n_out
    if e_out <= 0:
        raise ValueError("h1 output too narrow for two messages plus an edge")
    if subject.shape != object_.shape:
        raise ValueError("subject/object index arrays differ in length")

    triple = ad.concat_cols(
        [
            ad.gather_rows(node_feats, subject),
            edge_feats,
            ad.gather_rows(node_feats, object_),
        ]
    )
    out = h1.forward(triple)
    a_subj = ad.slice_cols(out, 0, n_out)
    e_next = ad.slice_cols(out, n_out, n_out + e_out)
    a_obj = ad.slice_cols(out, n_out + e_out, n_out + e_out + n_out)

    idx = np.concatenate([subject, object_])
    own = ad.segment_mean(ad.concat_rows([a_subj, a_obj]), idx, n_nodes)
    nbr = ad.segment_mean(ad.concat_rows([a_obj, a_subj]), idx, n_nodes)
    node_next = ad.add(own, h2.forward(nbr))
    return node_next, e_next


def _mlp(name: str, in_dim: int, hidden: int, out_dim: int, seed: int) -> Network:
    # input normalization keeps signal scale stationary through deep stacks;
    # without it five convolutions attenuate features by orders of magnitude
    return Network(
        name,
        [
            LayerNorm(in_dim),
            Dense(in_dim, hidden),
            Activation("silu"),
            Dense(hidden, out_dim),
        ],
        rng_seed=seed,
    )


class TripletGcnStack:
    """K convolution layers with a learned null edge token for isolated nodes."""

    def __init__(
        self,
        name: str,
        node_in: int,
        edge_in: int,
        hidden: int,
        node_out: int,
        edge_out: int,
        n_layers: int,
        seed: int,
    ):
        self.name = name
        self.n_layers = n_layers
        self.node_in = node_in
        self.edge_in = edge_in
        self.h1s: list[Network] = []
        self.h2s: list[Network] = []
        for k in range(n_layers):
            n_i = node_in if k == 0 else hidden
            e_i = edge_in if k == 0 else hidden
            n_o = node_out if k == n_layers - 1 else hidden
            e_o = edge_out if k == n_layers - 1 else hidden
            self.h1s.append(
                _mlp(f"{name}.gcn{k}.h1", 2 * n_i + e_i, hidden, 2 * n_o + e_o, seed)
            )
            self.h2s.append(_mlp(f"{name}.gcn{k}.h2", n_o, hidden, n_o, seed))
        gen = rng.stream("net-init", seed, name, "null_edge")
        bound = 1.0 / np.sqrt(edge_in)
        self.null_edge = ad.param(gen.uniform(-bound, bound, size=(1, edge_in)))

    def parameters(self) -> dict[str, Var]:
        out: dict[str, Var] = {f"{self.name}.null_edge": self.null_edge}
        for net in self.h1s + self.h2s:
            for pname, p in net.params.items():
                out[f"{net.name}.{pname}"] = p
        return out

    def forward(
        self,
        node_feats: Var,
        edge_feats: Var,
        subject: np.ndarray,
        object_: np.ndarray,
    ) -> tuple[Var, Var]:
        n_nodes = node_feats.value.shape[0]
        if node_feats.value.shape[1] != self.node_in:
            raise ValueError(
                f"{self.name}: node width {node_feats.value.shape[1]} != {self.node_in}"
            )
        subject = np.asarray(subject, dtype=np.intp)
        object_ = np.asarray(object_, dtype=np.intp)

        isolated = np.setdiff1d(np.arange(n_nodes), np.concatenate([subject, object_]))
        if isolated.size:
            subject = np.concatenate([subject, isolated])
            object_ = np.concatenate([object_, isolated])
            null_rows = ad.gather_rows(
                self.null_edge, np.zeros(isolated.size, dtype=np.intp)
            )
            edge_feats = (
                ad.concat_rows([edge_feats, null_rows])
                if edge_feats.value.shape[0]
                else null_rows
            )

        node, edge = node_feats, edge_feats
        for h1, h2 in zip(self.h1s, self.h2s):
            node, edge = gcn_layer_forward(node, edge, subject, object_, h1, h2)
        # Rows added for isolated nodes are internal; return original edges only.
        n_real = len(subject) - isolated.size
        if isolated.size and n_real:
            edge = ad.slice_rows(edge, 0, n_real)
        elif isolated.size:
            edge = ad.const(np.zeros((0, edge.value.shape[1])))
        return node, edge


class RelationEncoder:
    """Encodes a contextual graph into per-node relation embeddings."""

    def __init__(self, hidden: int, n_layers: int, n_relations: int, seed: int):
        self.tokens = TokenStore(n_relations, seed)
        self.stack = TripletGcnStack(
            "encoder",
            node_in=FEATURE_DIM,
            edge_in=FEATURE_DIM,
            hidden=hidden,
            node_out=hidden,
            edge_out=EDGE_LATENT_DIM,
            n_layers=n_layers,
            seed=seed,
        )
        self.z_proj = Network("encoder.z_proj", [Dense(hidden, Z_DIM)], rng_seed=seed)

    def parameters(self) -> dict[str, Var]:
        out = self.tokens.parameters()
        out.update(self.stack.parameters())
        for pname, p in self.z_proj.params.items():
            out[f"encoder.z_proj.{pname}"] = p
        return out

    def encode_parts(
        self,
        cat_idx: np.ndarray,
        node_anchors: np.ndarray,
        rel_idx: np.ndarray,
        edge_anchors: np.ndarray,
        subject: np.ndarray,
        object_: np.ndarray,
    ) -> tuple[Var, Var, Var]:
        """Array-level encode (used to batch many scenes in one pass).

        Returns (explicit features v, relation embeddings z, edge latents).
        """
        v = self.tokens.node_features_from(cat_idx, node_anchors)
        e = self.tokens.edge_features_from(rel_idx, edge_anchors)
        node_out, edge_out = self.stack.forward(v, e, subject, object_)
        z = self.z_proj.forward(node_out)
        return v, z, edge_out

    def encode(self, ctx: ContextualGraph) -> LatentGraph:
        v, z, edge_out = self.encode_parts(
            ctx.node_cat_idx,
            ctx.node_anchors,
            ctx.edge_rel_idx,
            ctx.edge_anchors,
            ctx.edge_subject,
            ctx.edge_object,
        )
        return LatentGraph(
            node_ids=ctx.graph.node_ids,
            categories=ctx.categories,
            vz=ad.concat_cols([v, z]),
            edge_subject=ctx.edge_subject.copy(),
            edge_object=ctx.edge_object.copy(),
            edge_feats=edge_out,
        )


class LatentManipulator:
    """Rewrites relation embeddings after a symbolic graph edit.

    Runs a convolution stack over the post-edit graph. Layer-0 node input is
    concat(post-edit explicit feature, prior z), where nodes absent from the
    prior latent graph (freshly added) start from a learned blank embedding.
    """

    def __init__(self, hidden: int, n_layers: int, seed: int):
        self.stack = TripletGcnStack(
            "manipulator",
            node_in=LATENT_DIM,
            edge_in=FEATURE_DIM,
            hidden=hidden,
            node_out=hidden,
            edge_out=EDGE_LATENT_DIM,
            n_layers=n_layers,
            seed=seed,
        )
        self.z_proj = Network(
            "manipulator.z_proj", [Dense(hidden, Z_DIM)], rng_seed=seed
        )
        gen = rng.stream("net-init", seed, "manipulator", "blank_z")
        self.blank_z = ad.param(gen.uniform(-0.1, 0.1, size=(1, Z_DIM)))

    def parameters(self) -> dict[str, Var]:
        out = {"manipulator.blank_z": self.blank_z}
        out.update(self.stack.parameters())
        for pname, p in self.z_proj.params.items():
            out[f"manipulator.z_proj.{pname}"] = p
        return out

    def manipulate_parts(
        self,
        v_after: Var,
        z_prior: Var,
        edge_feats_in: Var,
        subject: np.ndarray,
        object_: np.ndarray,
    ) -> tuple[Var, Var]:
        """Array-level rewrite; returns (new z, edge latents)."""
        node_in = ad.concat_cols([v_after, z_prior])
        node_out, edge_out = self.stack.forward(node_in, edge_feats_in, subject, object_)
        return self.z_proj.forward(node_out), edge_out

    def manipulate(
        self,
        prior: LatentGraph | None,
        ctx_after: ContextualGraph,
        tokens: TokenStore,
        blank_rows: set[int] | None = None,
    ) -> LatentGraph:
        """Produce the post-edit latent graph.

        ``prior`` carries z for nodes that already existed (matched by node
        id); ``blank_rows`` forces specific rows onto the blank embedding even
        if present in the prior (the added-node simulation used in training).
        """
        v_after = tokens.node_features(ctx_after)
        e_after = tokens.edge_features(ctx_after)
        blank_rows = blank_rows or set()

        prior_z_by_id: dict[int, int] = {}
        if prior is not None:
            prior_z_by_id = {nid: i for i, nid in enumerate(prior.node_ids)}

        z_parts: list[Var] = []
        for row, nid in enumerate(ctx_after.graph.node_ids):
            if row not in blank_rows and nid in prior_z_by_id:
                src = prior_z_by_id[nid]
                z_parts.append(
                    ad.slice_cols(
                        ad.gather_rows(prior.vz, np.array([src], dtype=np.intp)),
                        FEATURE_DIM,
                        LATENT_DIM,
                    )
                )
            else:
                z_parts.append(self.blank_z)
        z_prior = (
            ad.concat_rows(z_parts) if z_parts else ad.const(np.zeros((0, Z_DIM)))
        )

        z_new, edge_out = self.manipulate_parts(
            v_after, z_prior, e_after, ctx_after.edge_subject, ctx_after.edge_object
        )
        return LatentGraph(
            node_ids=ctx_after.graph.node_ids,
            categories=ctx_after.categories,
            vz=ad.concat_cols([v_after, z_new]),
            edge_subject=ctx_after.edge_subject.copy(),
            edge_object=ctx_after.edge_object.copy(),
            edge_feats=edge_out,
        )


CONDITION_DIM = 64


class ExchangeUnit:
    """Aggregates per-node echo vectors into per-node condition vectors.

    The echo vector for a node is concat(current denoising data, vz, time
    embedding); one convolution pass over the latent graph's edges yields a
    64-entry condition per node. All nodes observe the same snapshot.
    """

    def __init__(self, name: str, echo_dim: int, hidden: int, n_layers: int, seed: int):
        self.echo_dim = echo_dim
        self.stack = TripletGcnStack(
            name,
            node_in=echo_dim,
            edge_in=EDGE_LATENT_DIM,
            hidden=hidden,
            node_out=CONDITION_DIM,
            edge_out=hidden,
            n_layers=n_layers,
            seed=seed,
        )

    def parameters(self) -> dict[str, Var]:
        return self.stack.parameters()

    def exchange(
        self,
        echo_nodes: Var,
        edge_feats: Var,
        subject: np.ndarray,
        object_: np.ndarray,
    ) -> Var:
        if echo_nodes.value.ndim != 2 or echo_nodes.value.shape[1] != self.echo_dim:
            raise ValueError(
                f"{self.stack.name}: echo width {echo_nodes.value.shape} "
                f"!= {self.echo_dim}"
            )
        conditions, _ = self.stack.forward(echo_nodes, edge_feats, subject, object_)
        return conditions
