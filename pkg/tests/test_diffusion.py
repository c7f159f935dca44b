import math

import numpy as np
import pytest

from echograph.diffusion import (
    EchoState,
    TimeEmbedding,
    diffuse,
    echo_denoise_step,
    make_schedule,
    sample,
)
from echograph.graph_conv import (
    EDGE_LATENT_DIM,
    LATENT_DIM,
    ExchangeUnit,
    LatentGraph,
)
from echograph.nn import autodiff as ad


class OracleDenoiser:
    """Duck-typed denoiser returning a preset noise prediction."""

    def __init__(self, eps):
        self.eps = np.asarray(eps, dtype=float)

    def forward(self, _inputs):
        return ad.const(self.eps)

    def out_dim(self):
        return self.eps.shape[1]


def tiny_latent(n_nodes, seed=0):
    rng = np.random.default_rng(seed)
    if n_nodes >= 2:
        subj = np.arange(n_nodes - 1, dtype=np.intp)
        obj = subj + 1
        ef = rng.normal(size=(n_nodes - 1, EDGE_LATENT_DIM))
    else:
        subj = np.zeros(0, dtype=np.intp)
        obj = np.zeros(0, dtype=np.intp)
        ef = np.zeros((0, EDGE_LATENT_DIM))
    return LatentGraph(
        node_ids=tuple(range(n_nodes)),
        categories=tuple("chair" for _ in range(n_nodes)),
        vz=ad.const(rng.normal(size=(n_nodes, LATENT_DIM))),
        edge_subject=subj,
        edge_object=obj,
        edge_feats=ad.const(ef),
    )


class TestSchedule:
    def test_single_step_arithmetic(self):
        s = make_schedule(1, 0.5, 0.5)
        assert s.alpha_bar(1) == 0.5
        assert s.sigma(1) == math.sqrt(0.5)

    def test_identities_all_t(self):
        s = make_schedule(1000)
        for t in range(1, 1001):
            assert s.alpha(t) + s.beta(t) == 1.0
            assert s.sigma(t) == math.sqrt(s.beta(t))
        np.testing.assert_allclose(
            s.alpha_bars[1:], s.alpha_bars[:-1] * s.alphas[1:], rtol=1e-15
        )
        assert np.all(np.diff(s.betas) >= 0)
        assert np.all(np.diff(s.alpha_bars) < 0)

    def test_final_alpha_bar_pinned(self):
        # direct-product oracle, frozen once
        s = make_schedule(1000)
        assert s.alpha_bar(1000) == pytest.approx(4.0358297653756761e-05, rel=1e-12)
        p = 1.0
        for b in np.linspace(1e-4, 0.02, 1000):
            p *= 1.0 - b
        assert s.alpha_bar(1000) == pytest.approx(p, rel=1e-12)

    def test_invalid_range(self):
        with pytest.raises(ValueError):
            make_schedule(10, 0.5, 0.1)
        with pytest.raises(ValueError):
            make_schedule(10, 0.0, 0.1)
        with pytest.raises(ValueError):
            make_schedule(0)


class TestDiffuse:
    def test_noise_free_limit(self):
        s = make_schedule(100)
        d0 = np.array([[1.0, -2.0]])
        out = diffuse(d0, 40, np.zeros_like(d0), s)
        np.testing.assert_allclose(out, math.sqrt(s.alpha_bar(40)) * d0)

    def test_zero_signal_limit(self):
        s = make_schedule(100)
        eps = np.array([[0.5, 0.5]])
        out = diffuse(np.zeros_like(eps), 40, eps, s)
        np.testing.assert_allclose(out, math.sqrt(1 - s.alpha_bar(40)) * eps)

    def test_shape_mismatch(self):
        s = make_schedule(10)
        with pytest.raises(ValueError):
            diffuse(np.zeros((2, 3)), 5, np.zeros((2, 2)), s)

    def test_empirical_std_within_one_percent(self):
        s = make_schedule(200)
        gen = np.random.default_rng(0)
        for t in (1, 50, 200):
            eps = gen.standard_normal((100_000, 1))
            d_t = diffuse(np.zeros((100_000, 1)), t, eps, s)
            want = math.sqrt(1.0 - s.alpha_bar(t))
            assert abs(d_t.std() - want) / want < 0.01


class TestTimeEmbedding:
    def test_distinct_steps_distinct_vectors(self):
        emb = TimeEmbedding()
        seen = {tuple(np.round(emb.embed(t), 12)) for t in range(1, 1001)}
        assert len(seen) == 1000

    def test_deterministic_and_sized(self):
        emb = TimeEmbedding()
        np.testing.assert_array_equal(emb.embed(7), emb.embed(7))
        assert emb.embed(7).shape == (32,)
        assert emb.embed_rows(7, 3).shape == (3, 32)


class TestEchoDenoiseStep:
    def setup_method(self):
        self.unit = ExchangeUnit("xu", echo_dim=2 + LATENT_DIM + 32, hidden=16, n_layers=2, seed=0)
        self.emb = TimeEmbedding()
        self.schedule = make_schedule(50)

    def test_exact_inversion_at_t1(self):
        latent = tiny_latent(3)
        gen = np.random.default_rng(1)
        d0 = gen.normal(size=(3, 2))
        eps = gen.normal(size=(3, 2))
        d1 = diffuse(d0, 1, eps, self.schedule)
        state = EchoState(d=d1, t=1, latent=latent)
        out = echo_denoise_step(
            state,
            OracleDenoiser(eps),
            self.unit,
            self.schedule,
            np.random.default_rng(0),
            time_embedding=self.emb,
            conditioning="concat",
        )
        np.testing.assert_allclose(out.d, d0, atol=1e-12)
        assert out.t == 0

    def test_no_noise_injected_at_t1(self):
        latent = tiny_latent(2)
        d1 = np.ones((2, 2))
        eps = np.zeros((2, 2))
        outs = []
        for rng_seed in (0, 99):
            state = EchoState(d=d1.copy(), t=1, latent=latent)
            out = echo_denoise_step(
                state,
                OracleDenoiser(eps),
                self.unit,
                self.schedule,
                np.random.default_rng(rng_seed),
                time_embedding=self.emb,
                conditioning="concat",
            )
            outs.append(out.d)
        np.testing.assert_array_equal(outs[0], outs[1])

    def test_noise_injected_above_t1(self):
        latent = tiny_latent(2)
        outs = []
        for rng_seed in (0, 99):
            state = EchoState(d=np.ones((2, 2)), t=5, latent=latent)
            out = echo_denoise_step(
                state,
                OracleDenoiser(np.zeros((2, 2))),
                self.unit,
                self.schedule,
                np.random.default_rng(rng_seed),
                time_embedding=self.emb,
                conditioning="concat",
            )
            outs.append(out.d)
        assert not np.allclose(outs[0], outs[1])

    def test_condition_snapshot_shared_and_echo_layout(self):
        latent = tiny_latent(4)
        d = np.random.default_rng(3).normal(size=(4, 2))
        captured = []
        state = EchoState(d=d, t=9, latent=latent)
        echo_denoise_step(
            state,
            OracleDenoiser(np.zeros((4, 2))),
            self.unit,
            self.schedule,
            np.random.default_rng(0),
            time_embedding=self.emb,
            conditioning="concat",
            instrument=captured.append,
        )
        assert len(captured) == 1  # one exchange, one shared snapshot
        rec = captured[0]
        np.testing.assert_array_equal(rec["echo_nodes"][:, :2], d)
        np.testing.assert_array_equal(rec["echo_nodes"][:, 2 : 2 + LATENT_DIM], latent.vz.value)
        np.testing.assert_array_equal(
            rec["echo_nodes"][:, 2 + LATENT_DIM :], self.emb.embed_rows(9, 4)
        )
        assert rec["condition"].shape == (4, 64)

    def test_non_finite_prediction_names_node_and_t(self):
        latent = tiny_latent(2)
        bad = np.array([[0.0, 0.0], [np.nan, 0.0]])
        state = EchoState(d=np.ones((2, 2)), t=3, latent=latent)
        with pytest.raises(FloatingPointError, match="node 1 at t=3"):
            echo_denoise_step(
                state,
                OracleDenoiser(bad),
                self.unit,
                self.schedule,
                np.random.default_rng(0),
                time_embedding=self.emb,
                conditioning="concat",
            )


class TestSample:
    def test_empty_graph(self):
        unit = ExchangeUnit("xu", echo_dim=2 + LATENT_DIM + 32, hidden=16, n_layers=2, seed=0)
        out = sample(
            OracleDenoiser(np.zeros((0, 2))),
            unit,
            tiny_latent(0),
            make_schedule(10),
            seed=0,
            time_embedding=TimeEmbedding(),
            conditioning="concat",
        )
        assert out.shape == (0, 2)

    def test_fixed_seed_reproducible(self):
        unit = ExchangeUnit("xu", echo_dim=2 + LATENT_DIM + 32, hidden=16, n_layers=2, seed=0)
        latent = tiny_latent(3)
        kwargs = dict(time_embedding=TimeEmbedding(), conditioning="concat")
        a = sample(OracleDenoiser(np.zeros((3, 2))), unit, latent, make_schedule(20), 7, **kwargs)
        b = sample(OracleDenoiser(np.zeros((3, 2))), unit, latent, make_schedule(20), 7, **kwargs)
        np.testing.assert_array_equal(a, b)
        c = sample(OracleDenoiser(np.zeros((3, 2))), unit, latent, make_schedule(20), 8, **kwargs)
        assert not np.allclose(a, c)
