import numpy as np
import pytest

from echograph.graph_conv import (
    CONDITION_DIM,
    EDGE_LATENT_DIM,
    LATENT_DIM,
    ExchangeUnit,
    LatentManipulator,
    RelationEncoder,
    TripletGcnStack,
    gcn_layer_forward,
)
from echograph.nn import Activation, Dense, Network
from echograph.nn import autodiff as ad
from echograph.scene_graph import (
    DEFAULT_VOCAB,
    AddNode,
    SceneGraph,
    apply_edit,
    build_contextual_graph,
)


def make_identity_split_h1(n, e):
    """h1 whose messages are the raw subject/object features."""
    net = Network("h1", [Dense(2 * n + e, 2 * n + e)], rng_seed=0)
    net.params["layer0.W"].value = np.eye(2 * n + e)
    return net


def make_zero_h2(n):
    net = Network("h2", [Dense(n, n)], rng_seed=0)
    net.params["layer0.W"].value = np.zeros((n, n))
    return net


def _silu(x):
    return x / (1.0 + np.exp(-x))


def ref_net(net, x):
    p = {k: v.value for k, v in net.params.items()}
    h = np.asarray(x, dtype=float)
    for i, layer in enumerate(net.layers):
        kind = type(layer).__name__
        if kind == "Dense":
            h = h @ p[f"layer{i}.W"] + p[f"layer{i}.b"]
        elif kind == "Activation":
            h = {"silu": _silu, "tanh": np.tanh}[layer.kind](h)
        elif kind == "LayerNorm":
            mu = h.mean(axis=-1, keepdims=True)
            var = ((h - mu) ** 2).mean(axis=-1, keepdims=True)
            h = (h - mu) / np.sqrt(var + 1e-5) * p[f"layer{i}.gain"] + p[f"layer{i}.bias"]
        else:
            raise AssertionError(kind)
    return h


def ref_gcn_layer(nodes, edges, subj, obj, h1, h2, n_out, e_out):
    """Independent, loop-based evaluation of one triplet-convolution layer."""
    own = {i: [] for i in range(len(nodes))}
    nbr = {i: [] for i in range(len(nodes))}
    new_edges = []
    for t in range(len(subj)):
        s, o = subj[t], obj[t]
        full = ref_net(h1, np.concatenate([nodes[s], edges[t], nodes[o]]))
        a_s, e_next, a_o = full[:n_out], full[n_out : n_out + e_out], full[n_out + e_out :]
        own[s].append(a_s)
        own[o].append(a_o)
        nbr[s].append(a_o)
        nbr[o].append(a_s)
        new_edges.append(e_next)
    out = np.zeros((len(nodes), n_out))
    for i in range(len(nodes)):
        own_avg = np.mean(own[i], axis=0) if own[i] else np.zeros(n_out)
        nbr_avg = np.mean(nbr[i], axis=0) if nbr[i] else np.zeros(n_out)
        out[i] = own_avg + ref_net(h2, nbr_avg)
    return out, np.array(new_edges)


class TestGcnLayer:
    def test_zero_h2_leaves_own_messages(self):
        n, e = 4, 3
        h1 = make_identity_split_h1(n, e)
        h2 = make_zero_h2(n)
        nodes = ad.const(np.array([[1.0, 2, 3, 4], [5, 6, 7, 8]]))
        edges = ad.const(np.array([[0.1, 0.2, 0.3]]))
        out, _ = gcn_layer_forward(
            nodes, edges, np.array([0]), np.array([1]), h1, h2
        )
        np.testing.assert_allclose(out.value, nodes.value)

    def test_self_triplet_identity_fixed_point(self):
        n, e = 3, 3
        h1 = make_identity_split_h1(n, e)
        h2 = make_zero_h2(n)
        nodes = ad.const(np.array([[0.5, -0.5, 2.0]]))
        edges = ad.const(np.zeros((1, 3)))
        out, _ = gcn_layer_forward(
            nodes, edges, np.array([0]), np.array([0]), h1, h2
        )
        np.testing.assert_allclose(out.value, nodes.value)

    def test_path_graph_matches_reference(self):
        # 3-node path, seeded MLPs, against the loop-based reference above
        n_in, e_in, n_out, e_out = 5, 4, 6, 3
        h1 = Network(
            "h1",
            [Dense(2 * n_in + e_in, 16), Activation("silu"), Dense(16, 2 * n_out + e_out)],
            rng_seed=42,
        )
        h2 = Network(
            "h2",
            [Dense(n_out, 16), Activation("silu"), Dense(16, n_out)],
            rng_seed=43,
        )
        rng = np.random.default_rng(7)
        nodes = rng.normal(size=(3, n_in))
        edges = rng.normal(size=(2, e_in))
        subj = np.array([0, 1])
        obj = np.array([1, 2])
        got_nodes, got_edges = gcn_layer_forward(
            ad.const(nodes), ad.const(edges), subj, obj, h1, h2
        )
        want_nodes, want_edges = ref_gcn_layer(
            nodes, edges, subj, obj, h1, h2, n_out, e_out
        )
        np.testing.assert_allclose(got_nodes.value, want_nodes, atol=1e-12)
        np.testing.assert_allclose(got_edges.value, want_edges, atol=1e-12)

    def test_inconsistent_width_raises(self):
        h1 = make_identity_split_h1(4, 3)
        h2 = make_zero_h2(4)
        with pytest.raises(Exception):
            gcn_layer_forward(
                ad.const(np.zeros((2, 7))),
                ad.const(np.zeros((1, 3))),
                np.array([0]),
                np.array([1]),
                h1,
                h2,
            )


def bed_nightstand_graph():
    return SceneGraph(
        nodes=((1, "bed"), (2, "nightstand")), edges=((1, "left of", 2),)
    )


class TestEncoder:
    def test_isomorphic_graphs_same_vz_multiset(self):
        enc = RelationEncoder(hidden=32, n_layers=2, n_relations=len(DEFAULT_VOCAB), seed=0)
        g1 = bed_nightstand_graph()
        g2 = SceneGraph(
            nodes=((9, "nightstand"), (4, "bed")), edges=((4, "left of", 9),)
        )
        l1 = enc.encode(build_contextual_graph(g1, 3))
        l2 = enc.encode(build_contextual_graph(g2, 3))
        a = np.array(sorted(l1.vz.value.tolist()))
        b = np.array(sorted(l2.vz.value.tolist()))
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_single_node_graph_finite(self):
        enc = RelationEncoder(hidden=32, n_layers=2, n_relations=len(DEFAULT_VOCAB), seed=0)
        g = SceneGraph(nodes=((0, "lamp"),), edges=())
        latent = enc.encode(build_contextual_graph(g, 3))
        assert latent.vz.value.shape == (1, LATENT_DIM)
        assert np.all(np.isfinite(latent.vz.value))

    def test_added_edge_changes_both_endpoint_z(self):
        enc = RelationEncoder(hidden=32, n_layers=2, n_relations=len(DEFAULT_VOCAB), seed=0)
        g = SceneGraph(
            nodes=((0, "bed"), (1, "nightstand"), (2, "lamp")),
            edges=((0, "left of", 1),),
        )
        g2 = SceneGraph(nodes=g.nodes, edges=g.edges + ((0, "close by", 2),))
        z1 = enc.encode(build_contextual_graph(g, 3)).z_values()
        z2 = enc.encode(build_contextual_graph(g2, 3)).z_values()
        assert not np.allclose(z1[0], z2[0])
        assert not np.allclose(z1[2], z2[2])

    def test_deterministic(self):
        enc = RelationEncoder(hidden=32, n_layers=2, n_relations=len(DEFAULT_VOCAB), seed=0)
        ctx = build_contextual_graph(bed_nightstand_graph(), 3)
        a = enc.encode(ctx).vz.value
        b = enc.encode(ctx).vz.value
        np.testing.assert_array_equal(a, b)


class TestManipulator:
    def test_add_node_on_empty_graph(self):
        enc = RelationEncoder(hidden=32, n_layers=2, n_relations=len(DEFAULT_VOCAB), seed=0)
        man = LatentManipulator(hidden=32, n_layers=2, seed=1)
        empty = SceneGraph(nodes=(), edges=())
        after = apply_edit(empty, AddNode("lamp"))
        ctx_after = build_contextual_graph(after, 3)
        latent = man.manipulate(None, ctx_after, enc.tokens)
        assert latent.vz.value.shape == (1, LATENT_DIM)
        assert np.all(np.isfinite(latent.vz.value))

    def test_relation_flip_deterministic_finite(self):
        enc = RelationEncoder(hidden=32, n_layers=2, n_relations=len(DEFAULT_VOCAB), seed=0)
        man = LatentManipulator(hidden=32, n_layers=2, seed=1)
        g = bed_nightstand_graph()
        prior = enc.encode(build_contextual_graph(g, 3))
        flipped = SceneGraph(nodes=g.nodes, edges=((1, "right of", 2),))
        ctx_after = build_contextual_graph(flipped, 3)
        a = man.manipulate(prior, ctx_after, enc.tokens).vz.value
        b = man.manipulate(prior, ctx_after, enc.tokens).vz.value
        np.testing.assert_array_equal(a, b)
        assert np.all(np.isfinite(a))

    def test_blank_rows_override_prior(self):
        enc = RelationEncoder(hidden=32, n_layers=2, n_relations=len(DEFAULT_VOCAB), seed=0)
        man = LatentManipulator(hidden=32, n_layers=2, seed=1)
        g = bed_nightstand_graph()
        ctx = build_contextual_graph(g, 3)
        prior = enc.encode(ctx)
        with_prior = man.manipulate(prior, ctx, enc.tokens).vz.value
        blanked = man.manipulate(prior, ctx, enc.tokens, blank_rows={0}).vz.value
        assert not np.allclose(with_prior[0], blanked[0])
        np.testing.assert_allclose(with_prior[1][:64], blanked[1][:64])


def random_graph_arrays(rng, n_nodes, n_edges, echo_dim):
    echo = rng.normal(size=(n_nodes, echo_dim))
    edge_feats = rng.normal(size=(n_edges, EDGE_LATENT_DIM))
    subj = rng.integers(0, n_nodes, size=n_edges)
    obj = (subj + 1 + rng.integers(0, n_nodes - 1, size=n_edges)) % n_nodes
    return echo, edge_feats, subj.astype(np.intp), obj.astype(np.intp)


class TestExchangeUnit:
    def test_permutation_equivariance(self):
        unit = ExchangeUnit("xu", echo_dim=12, hidden=24, n_layers=3, seed=5)
        rng = np.random.default_rng(0)
        for trial in range(100):
            n = int(rng.integers(2, 7))
            m = int(rng.integers(1, 9))
            echo, ef, subj, obj = random_graph_arrays(rng, n, m, 12)
            base = unit.exchange(ad.const(echo), ad.const(ef), subj, obj).value
            perm = rng.permutation(n)
            inv = np.argsort(perm)
            got = unit.exchange(
                ad.const(echo[perm]), ad.const(ef), inv[subj], inv[obj]
            ).value
            np.testing.assert_allclose(got, base[perm], atol=1e-9)

    def test_k_hop_locality_on_path(self):
        k = 2
        unit = ExchangeUnit("xu", echo_dim=6, hidden=16, n_layers=k, seed=5)
        rng = np.random.default_rng(1)
        n = k + 4
        echo = rng.normal(size=(n, 6))
        ef = rng.normal(size=(n - 1, EDGE_LATENT_DIM))
        subj = np.arange(n - 1, dtype=np.intp)
        obj = subj + 1
        base = unit.exchange(ad.const(echo), ad.const(ef), subj, obj).value
        bumped = echo.copy()
        bumped[0] += 10.0
        moved = unit.exchange(ad.const(bumped), ad.const(ef), subj, obj).value
        # influence travels at most one hop per layer
        assert not np.allclose(moved[k], base[k])
        np.testing.assert_array_equal(moved[k + 2], base[k + 2])

    def test_against_reference_stack_evaluation(self):
        # 4-node scene, 2-layer unit, independent loop-based evaluation
        unit = ExchangeUnit("xu", echo_dim=6, hidden=16, n_layers=2, seed=9)
        rng = np.random.default_rng(2)
        echo = rng.normal(size=(4, 6))
        ef = rng.normal(size=(3, EDGE_LATENT_DIM))
        subj = np.array([0, 1, 2], dtype=np.intp)
        obj = np.array([1, 2, 3], dtype=np.intp)
        got = unit.exchange(ad.const(echo), ad.const(ef), subj, obj).value

        nodes, edges = echo, ef
        stack = unit.stack
        widths = [(16, 16), (CONDITION_DIM, 16)]
        for layer, (n_out, e_out) in enumerate(widths):
            nodes, edges = ref_gcn_layer(
                nodes, edges, subj, obj, stack.h1s[layer], stack.h2s[layer], n_out, e_out
            )
        np.testing.assert_allclose(got, nodes, atol=1e-10)

    def test_echo_width_mismatch(self):
        unit = ExchangeUnit("xu", echo_dim=6, hidden=16, n_layers=2, seed=9)
        with pytest.raises(ValueError, match="echo width"):
            unit.exchange(
                ad.const(np.zeros((2, 7))),
                ad.const(np.zeros((1, EDGE_LATENT_DIM))),
                np.array([0]),
                np.array([1]),
            )

    def test_isolated_node_gets_condition(self):
        unit = ExchangeUnit("xu", echo_dim=6, hidden=16, n_layers=2, seed=9)
        echo = np.ones((3, 6))
        ef = np.ones((1, EDGE_LATENT_DIM))
        out = unit.exchange(
            ad.const(echo), ad.const(ef), np.array([0]), np.array([1])
        ).value
        assert out.shape == (3, CONDITION_DIM)
        assert np.all(np.isfinite(out[2]))
