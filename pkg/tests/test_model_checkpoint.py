import numpy as np
import pytest

from echograph.checkpoint import (
    CheckpointError,
    checkpoint_hash,
    load_checkpoint,
    save_checkpoint,
)
from echograph.config import TrainConfig
from echograph.layout import NormStats
from echograph.model import SceneModel
from echograph.scene_graph import ChangeRelation, SceneGraph

TINY = TrainConfig(t_steps=8, hidden=24, gcn_layers=2, denoiser_hidden=32, seed=3)

STATS = NormStats(
    loc_min=np.array([-3.0, -3.0, 0.0]),
    loc_max=np.array([3.0, 3.0, 2.0]),
    size_min=np.array([0.1, 0.1, 0.1]),
    size_max=np.array([2.5, 2.5, 2.5]),
)

GRAPH = SceneGraph(
    nodes=((1, "bed"), (2, "nightstand")), edges=((1, "left of", 2),)
)


class TestSceneModel:
    def test_parameter_names_unique_and_prefixed(self):
        model = SceneModel(TINY)
        params = model.parameters()
        assert len(params) > 20
        prefixes = {name.split(".")[0] for name in params}
        assert {
            "tokens",
            "encoder",
            "manipulator",
            "unit_layout",
            "unit_shape",
            "denoiser_layout",
            "denoiser_shape",
            "projector",
        } <= prefixes

    def test_generate_shapes_and_determinism(self):
        model = SceneModel(TINY)
        a = model.generate(GRAPH, STATS, seed=5)
        b = model.generate(GRAPH, STATS, seed=5)
        assert a.boxes.shape == (2, 7)
        assert a.shape_codes.shape == (2, 32)
        np.testing.assert_array_equal(a.boxes, b.boxes)
        np.testing.assert_array_equal(a.shape_codes, b.shape_codes)
        c = model.generate(GRAPH, STATS, seed=6)
        assert not np.allclose(a.boxes, c.boxes)

    def test_manipulate_returns_post_edit_graph(self):
        model = SceneModel(TINY)
        out = model.manipulate(GRAPH, ChangeRelation(0, "right of"), STATS, seed=1)
        assert out.graph.edges == ((1, "right of", 2),)
        assert out.boxes.shape == (2, 7)

    def test_generate_batch_scene_slices(self):
        model = SceneModel(TINY)
        graphs = [GRAPH, SceneGraph(nodes=((0, "lamp"),), edges=())]
        latents = [model.encode(g) for g in graphs]
        scenes = model.generate_batch(graphs, latents, STATS, seed=2)
        assert [s.boxes.shape[0] for s in scenes] == [2, 1]
        assert all(np.all(np.isfinite(s.boxes)) for s in scenes)


class TestCheckpoint:
    def _roundtrip(self, tmp_path):
        model = SceneModel(TINY)
        path = save_checkpoint(tmp_path / "m.ckpt", model, STATS, step=42)
        return model, load_checkpoint(path), path

    def test_bit_exact_parameters(self, tmp_path):
        model, loaded, _ = self._roundtrip(tmp_path)
        a = model.parameter_values()
        b = loaded.model.parameter_values()
        assert set(a) == set(b)
        for k in a:
            assert np.array_equal(a[k], b[k]), k
        assert loaded.step == 42

    def test_save_load_save_identical_bytes(self, tmp_path):
        model, loaded, path = self._roundtrip(tmp_path)
        path2 = save_checkpoint(tmp_path / "m2.ckpt", loaded.model, loaded.stats, 42)
        assert path.read_bytes() == path2.read_bytes()
        assert checkpoint_hash(path) == checkpoint_hash(path2)

    def test_sampling_survives_reload(self, tmp_path):
        model, loaded, _ = self._roundtrip(tmp_path)
        before = model.generate(GRAPH, STATS, seed=9)
        after = loaded.model.generate(GRAPH, loaded.stats, seed=9)
        np.testing.assert_array_equal(before.boxes, after.boxes)
        np.testing.assert_array_equal(before.shape_codes, after.shape_codes)

    def test_truncated_file_rejected(self, tmp_path):
        model = SceneModel(TINY)
        path = save_checkpoint(tmp_path / "m.ckpt", model, STATS, step=0)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) - 100])
        with pytest.raises(CheckpointError, match="corrupt"):
            load_checkpoint(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(path)

    def test_config_snapshot_restored(self, tmp_path):
        cfg = TrainConfig(
            t_steps=8,
            hidden=24,
            gcn_layers=2,
            denoiser_hidden=32,
            conditioning="concat",
            echo_shape=False,
            seed=11,
        )
        model = SceneModel(cfg)
        path = save_checkpoint(tmp_path / "m.ckpt", model, STATS, step=7)
        loaded = load_checkpoint(path)
        assert loaded.config.conditioning == "concat"
        assert loaded.config.echo_shape is False
        assert loaded.config.seed == 11
