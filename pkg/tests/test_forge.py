import json

import numpy as np
import pytest

from echograph.forge import (
    ROOM_SPECS,
    annotate_relations,
    generate_scene,
    load_sgfront_style,
    make_dataset,
)
from echograph.metrics import chamfer, check_relation, constraint_accuracy
from echograph.shapes import sample_point_cloud


def mc_footprint_iou(box_a, box_b, n=20000, seed=0):
    """Monte-Carlo IoU oracle over the union's bounding rectangle."""
    gen = np.random.default_rng(seed)

    def inside(box, pts):
        return (np.abs(pts[:, 0] - box[0]) <= box[3] / 2) & (
            np.abs(pts[:, 1] - box[1]) <= box[5] / 2
        )

    lo = np.minimum(
        [box_a[0] - box_a[3] / 2, box_a[1] - box_a[5] / 2],
        [box_b[0] - box_b[3] / 2, box_b[1] - box_b[5] / 2],
    )
    hi = np.maximum(
        [box_a[0] + box_a[3] / 2, box_a[1] + box_a[5] / 2],
        [box_b[0] + box_b[3] / 2, box_b[1] + box_b[5] / 2],
    )
    pts = gen.uniform(lo, hi, size=(n, 2))
    in_a, in_b = inside(box_a, pts), inside(box_b, pts)
    union = (in_a | in_b).mean()
    inter = (in_a & in_b).mean()
    return inter / union if union > 0 else 0.0


class TestGenerateScene:
    def test_deterministic(self):
        a = generate_scene(0, ROOM_SPECS["bedroom"])
        b = generate_scene(0, ROOM_SPECS["bedroom"])
        assert a.graph == b.graph
        np.testing.assert_array_equal(a.boxes, b.boxes)
        assert a.shape_params == b.shape_params

    def test_every_edge_holds_on_ground_truth(self):
        for seed in range(150):
            for room_type in ROOM_SPECS:
                rec = generate_scene(seed, ROOM_SPECS[room_type])
                boxes = rec.boxes_by_id()
                for a, rel, b in rec.graph.edges:
                    assert check_relation(
                        rel,
                        boxes[a],
                        boxes[b],
                        (0.0, 0.0),
                        cat_a=rec.graph.category_of(a),
                        cat_b=rec.graph.category_of(b),
                    ), (seed, room_type, (a, rel, b))

    def test_footprints_do_not_overlap(self):
        for seed in range(40):
            rec = generate_scene(seed, ROOM_SPECS["living"])
            n = len(rec.graph)
            for i in range(n):
                for j in range(i + 1, n):
                    assert mc_footprint_iou(rec.boxes[i], rec.boxes[j]) < 0.07

    def test_suite_consistency(self):
        # all same-category objects in a scene share one primitive
        for seed in range(30):
            rec = generate_scene(seed, ROOM_SPECS["dining"])
            by_cat = {}
            for cat, params in zip(rec.categories, rec.shape_params):
                by_cat.setdefault(cat, []).append(params)
            for members in by_cat.values():
                assert all(m == members[0] for m in members)

    def test_suite_decodes_to_identical_clouds(self):
        for seed in range(60):
            rec = generate_scene(seed, ROOM_SPECS["dining"])
            chairs = [
                p for c, p in zip(rec.categories, rec.shape_params) if c == "chair"
            ]
            if len(chairs) >= 2:
                a = sample_point_cloud(chairs[0], 1024, 0)
                b = sample_point_cloud(chairs[1], 1024, 0)
                assert chamfer(a, b) < 1e-6
                return
        pytest.fail("no dining scene with a chair suite in 60 seeds")

    def test_object_count_in_range(self):
        for seed in range(50):
            rec = generate_scene(seed, ROOM_SPECS["bedroom"])
            assert 3 <= len(rec.graph) <= 8


class TestAnnotate:
    def test_directional_pair_with_closure(self):
        a = np.array([-1.0, 0.0, 0.5, 1.0, 1.0, 1.0, 0.0])
        b = np.array([1.0, 0.0, 0.5, 1.0, 1.0, 1.0, 0.0])
        edges = annotate_relations([a, b], ["chair", "chair"])
        assert (0, "left of", 1) in edges
        assert (1, "right of", 0) in edges

    def test_volume_ratio_emits_bigger(self):
        a = np.array([-2.0, 0.0, 0.5, 2.0, 1.0, 1.0, 0.0])
        b = np.array([2.0, 0.0, 0.5, 1.0, 1.0, 1.0, 0.0])
        edges = annotate_relations([a, b], ["table", "chair"])
        assert (0, "bigger than", 1) in edges
        assert (1, "smaller than", 0) in edges

    def test_single_box_empty(self):
        assert annotate_relations([np.ones(7)], ["bed"]) == []

    def test_every_emitted_edge_is_true(self):
        gen = np.random.default_rng(5)
        for _ in range(50):
            n = int(gen.integers(2, 7))
            boxes = [
                np.array(
                    [
                        *gen.uniform(-2.5, 2.5, 2),
                        0.5,
                        *gen.uniform(0.2, 2.0, 3),
                        0.0,
                    ]
                )
                for _ in range(n)
            ]
            cats = ["chair"] * n
            for a, rel, b in annotate_relations(boxes, cats):
                assert check_relation(
                    rel, boxes[a], boxes[b], (0.0, 0.0), cat_a="chair", cat_b="chair"
                )


class TestDataset:
    def test_split_arithmetic(self, tmp_path):
        split = make_dataset(10, {"bedroom": 1}, seed=0, out_dir=tmp_path)
        assert len(split.train) == 9
        assert len(split.test) == 1

    def test_byte_identical_rerun(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        make_dataset(12, {"bedroom": 1, "dining": 1}, seed=3, out_dir=a)
        make_dataset(12, {"bedroom": 1, "dining": 1}, seed=3, out_dir=b)
        for name in sorted(p.name for p in (a / "scenes").iterdir()):
            assert (a / "scenes" / name).read_bytes() == (b / "scenes" / name).read_bytes()
        assert (a / "split.json").read_bytes() == (b / "split.json").read_bytes()
        assert (a / "norm_stats.json").read_bytes() == (b / "norm_stats.json").read_bytes()

    def test_load_round_trip_and_calibration(self, tmp_path):
        make_dataset(20, {"living": 1}, seed=7, out_dir=tmp_path)
        records, report = load_sgfront_style(tmp_path)
        assert report.loaded == 20 and not report.skipped
        rep = constraint_accuracy([(r.graph, r.boxes_by_id(), None) for r in records])
        present = {g for g, c in rep.counts.items() if c > 0}
        assert all(rep.accuracies[g] == 1.0 for g in present)

    def test_unknown_relation_skipped_with_report(self, tmp_path):
        make_dataset(5, {"bedroom": 1}, seed=1, out_dir=tmp_path)
        bad = tmp_path / "scenes" / "scene_00000.json"
        doc = json.loads(bad.read_text())
        doc["edges"] = [{"from": 0, "rel": "hovers over", "to": 1}]
        bad.write_text(json.dumps(doc))
        records, report = load_sgfront_style(tmp_path)
        assert report.loaded == 4
        assert len(report.skipped) == 1
        assert "scene_00000.json" in report.skipped[0][0]

    def test_empty_dir_warns(self, tmp_path):
        with pytest.warns(UserWarning, match="no scene files"):
            records, report = load_sgfront_style(tmp_path)
        assert records == []

    def test_layout_only_corpus_accepted(self, tmp_path):
        make_dataset(5, {"bedroom": 1}, seed=1, out_dir=tmp_path)
        p = tmp_path / "scenes" / "scene_00001.json"
        doc = json.loads(p.read_text())
        doc.pop("shapes")
        p.write_text(json.dumps(doc))
        records, report = load_sgfront_style(tmp_path)
        assert report.loaded == 5
        no_shapes = [r for r in records if r.shape_params is None]
        assert len(no_shapes) == 1
