import json

import numpy as np

from echograph.metrics import constraint_accuracy
from echograph.reports import (
    constraint_table_text,
    loss_curve_figure,
    save_scene_figure,
    write_constraint_report,
)
from echograph.scene_graph import SceneGraph


def make_report():
    g = SceneGraph(
        nodes=((0, "bed"), (1, "nightstand")),
        edges=((0, "left of", 1), (0, "close by", 1)),
    )
    boxes = {
        0: np.array([-1.0, 0, 0.3, 2.0, 0.6, 1.6, 0.0]),
        1: np.array([1.0, 0, 0.25, 0.5, 0.5, 0.4, 0.0]),
    }
    return g, boxes, constraint_accuracy([(g, boxes, None)])


def test_table_text_alignment():
    _, _, report = make_report()
    text = constraint_table_text(report)
    lines = text.strip().splitlines()
    assert len(lines) == 8  # header + six groups + mSG
    assert "mSG" in lines[-1]


def test_write_report_artifacts(tmp_path):
    g, boxes, report = make_report()
    rows = np.stack([boxes[0], boxes[1]])
    outputs = write_constraint_report(
        report,
        tmp_path / "rep.json",
        scenes_for_figures=[(g, rows, [True, True])],
    )
    doc = json.loads(outputs["json"].read_text())
    assert doc["groups"]["left/right"]["accuracy"] == 1.0
    assert outputs["txt"].exists()
    assert outputs["csv"].exists()
    assert outputs["accuracy_figure"].exists()
    assert outputs["scene_0"].exists()


def test_scene_figure(tmp_path):
    g, boxes, _ = make_report()
    rows = np.stack([boxes[0], boxes[1]])
    p = save_scene_figure(
        tmp_path / "scene.png",
        rows,
        ["bed", "nightstand"],
        edges=[(0, "left of", 1)],
        edge_flags=[True],
    )
    assert p.stat().st_size > 1000


def test_loss_curve(tmp_path):
    log = tmp_path / "log.jsonl"
    with open(log, "w") as f:
        for step in range(20):
            f.write(
                json.dumps(
                    {"step": step, "loss": 40.0 / (step + 1), "l_layout": 8.0, "l_shape": 32.0, "lr": 1e-4}
                )
                + "\n"
            )
        f.write(json.dumps({"epoch": 1, "eval_layout": 5.0, "eval_shape": 20.0}) + "\n")
    p = loss_curve_figure(log, tmp_path / "loss.png")
    assert p.exists()
