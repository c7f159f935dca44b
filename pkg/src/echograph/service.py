"""JSON-over-HTTP service for interactive generation and manipulation.

Endpoints (all responses carry the seed that was used):

    GET  /health          -> {"version", "checkpoint_hash"}
    GET  /vocab           -> {"relations", "categories"}
    POST /generate        {graph, seed?} -> scene payload
    POST /manipulate      {graph, edit, seed?, prev_noise_seed?}
                          -> scene payload + per-edge before/after flags

A scene payload holds boxes, raw shape codes, decoded primitive parameters,
the constraint report, and per-edge satisfaction flags. The server never
mutates the model; requests run against an immutable checkpoint snapshot, so
concurrent identical requests return identical bodies. When a built frontend
exists (frontend/dist), it is served under /ui.
"""

from __future__ import annotations

import json
import secrets
import threading
import traceback
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import Checkpoint, checkpoint_hash, load_checkpoint
from .metrics import constraint_accuracy, edge_satisfied
from .model import GeneratedScene
from .scene_graph import (
    CATEGORIES,
    ChangeRelation,
    EditError,
    GraphParseError,
    SceneGraph,
    apply_edit,
    edit_from_json,
    parse_scene_graph,
)
from .shapes import decode_shape

__all__ = ["ModelService", "serve", "make_server"]


class RequestError(ValueError):
    pass


def _scene_payload(scene: GeneratedScene) -> dict:
    boxes = scene.boxes_by_id()
    flags = [edge_satisfied(scene.graph, e, boxes) for e in scene.graph.edges]
    report = constraint_accuracy([(scene.graph, boxes, None)])
    decoded = {}
    for i, (nid, _) in enumerate(scene.graph.nodes):
        p = decode_shape(scene.shape_codes[i])
        decoded[str(nid)] = {"family": p.family, "style": list(p.style)}
    return {
        "seed": scene.seed,
        "nodes": [{"id": nid, "category": cat} for nid, cat in scene.graph.nodes],
        "edges": [
            {"from": a, "rel": rel, "to": b, "satisfied": bool(ok)}
            for (a, rel, b), ok in zip(scene.graph.edges, flags)
        ],
        "boxes": {
            str(nid): {
                "center": [float(v) for v in box[:3]],
                "size": [float(v) for v in box[3:6]],
                "angle": float(box[6]),
            }
            for nid, box in boxes.items()
        },
        "shape_codes": {
            str(nid): [float(v) for v in scene.shape_codes[i]]
            for i, (nid, _) in enumerate(scene.graph.nodes)
        },
        "decoded_shapes": decoded,
        "constraint_report": report.to_dict(),
    }


class ModelService:
    """Request handlers against one immutable checkpoint snapshot."""

    def __init__(self, checkpoint: Checkpoint):
        self.checkpoint = checkpoint
        self.model = checkpoint.model
        self.stats = checkpoint.stats
        self.hash = checkpoint_hash(checkpoint.path)

    def health(self) -> dict:
        return {"version": __version__, "checkpoint_hash": self.hash}

    def vocab(self) -> dict:
        return {
            "relations": list(self.model.vocab.names),
            "categories": list(CATEGORIES),
        }

    def _parse_graph(self, doc: dict) -> SceneGraph:
        if "graph" not in doc:
            raise RequestError("missing 'graph'")
        try:
            return parse_scene_graph(json.dumps(doc["graph"]), vocab=self.model.vocab)
        except GraphParseError as e:
            raise RequestError(f"invalid graph: {e}") from e

    @staticmethod
    def _seed(doc: dict, key: str = "seed") -> int:
        value = doc.get(key)
        if value is None:
            return secrets.randbelow(2**31)
        if not isinstance(value, int):
            raise RequestError(f"'{key}' must be an integer")
        return value

    def generate(self, doc: dict) -> dict:
        graph = self._parse_graph(doc)
        seed = self._seed(doc)
        scene = self.model.generate(graph, self.stats, seed)
        return _scene_payload(scene)

    def manipulate(self, doc: dict) -> dict:
        graph = self._parse_graph(doc)
        if "edit" not in doc:
            raise RequestError("missing 'edit'")
        try:
            edit = edit_from_json(doc["edit"], self.model.vocab)
            graph_after = apply_edit(graph, edit, self.model.vocab)
        except (EditError, KeyError, TypeError, ValueError) as e:
            raise RequestError(f"invalid edit: {e}") from e
        seed = self._seed(doc)
        prev_seed = self._seed(doc, "prev_noise_seed") if "prev_noise_seed" in doc else seed

        before = self.model.generate(graph, self.stats, prev_seed)
        before_boxes = before.boxes_by_id()
        edges_before = [
            {
                "from": a,
                "rel": rel,
                "to": b,
                "satisfied": bool(edge_satisfied(graph, (a, rel, b), before_boxes)),
            }
            for a, rel, b in graph.edges
        ]

        latent = self.model.manipulate_to(graph, graph_after)
        scene = self.model.sample_scene(graph_after, latent, self.stats, seed)
        payload = _scene_payload(scene)
        payload["edges_before"] = edges_before
        payload["prev_noise_seed"] = prev_seed
        if isinstance(edit, ChangeRelation):
            payload["edited_edges"] = [edit.edge_index]
        else:
            payload["edited_edges"] = list(
                range(len(graph.edges), len(graph_after.edges))
            )
        return payload


def make_server(service: ModelService, port: int, ui_dir: Path | None = None):
    class Handler(BaseHTTPRequestHandler):
        # quiet request logging; the CLI prints the bind address once
        def log_message(self, fmt, *args):
            pass

        def _send(self, code: int, body: dict | bytes, content_type="application/json"):
            data = (
                json.dumps(body).encode("utf-8") if isinstance(body, dict) else body
            )
            self.send_response(code)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(data)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.end_headers()
            self.wfile.write(data)

        def do_OPTIONS(self):
            self._send(204, b"", "text/plain")

        def do_GET(self):
            if self.path == "/health":
                self._send(200, service.health())
            elif self.path == "/vocab":
                self._send(200, service.vocab())
            elif ui_dir and (self.path == "/ui" or self.path.startswith("/ui/")):
                self._serve_static()
            else:
                self._send(404, {"error": f"no route {self.path}"})

        def _serve_static(self):
            rel = self.path[len("/ui") :].lstrip("/") or "index.html"
            target = (ui_dir / rel).resolve()
            if not str(target).startswith(str(ui_dir.resolve())) or not target.is_file():
                self._send(404, {"error": "not found"})
                return
            kind = {
                ".html": "text/html",
                ".js": "text/javascript",
                ".css": "text/css",
                ".map": "application/json",
            }.get(target.suffix, "application/octet-stream")
            self._send(200, target.read_bytes(), kind)

        def do_POST(self):
            length = int(self.headers.get("Content-Length", 0))
            try:
                doc = json.loads(self.rfile.read(length).decode("utf-8")) if length else {}
            except (json.JSONDecodeError, UnicodeDecodeError) as e:
                self._send(400, {"error": f"invalid JSON body: {e}"})
                return
            route = {
                "/generate": service.generate,
                "/manipulate": service.manipulate,
            }.get(self.path)
            if route is None:
                self._send(404, {"error": f"no route {self.path}"})
                return
            try:
                self._send(200, route(doc))
            except RequestError as e:
                self._send(400, {"error": str(e)})
            except Exception:
                trace_id = secrets.token_hex(8)
                print(f"[trace {trace_id}]\n{traceback.format_exc()}")
                self._send(500, {"error": "generation failed", "trace_id": trace_id})

    return ThreadingHTTPServer(("127.0.0.1", port), Handler)


def serve(checkpoint_path: str | Path, port: int, ui_dir: str | Path | None = None):
    """Load a checkpoint and block serving requests."""
    ckpt = load_checkpoint(checkpoint_path)
    service = ModelService(ckpt)
    ui = Path(ui_dir) if ui_dir else None
    if ui is None:
        default_ui = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        ui = default_ui if default_ui.is_dir() else None
    server = make_server(service, port, ui)
    host, bound_port = server.server_address
    print(f"serving on http://{host}:{bound_port} (checkpoint {service.hash[:12]})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0
