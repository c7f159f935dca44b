/**
 * End-to-end loop against the real model service: build a graph in the
 * studio state, generate, flip a relation, and check that the regenerated
 * payload's badge for the edited edge carries the server's own per-edge
 * flag. Also proves graph JSON built by the UI parses in the core verbatim.
 *
 * Spawns the Python service with a small untrained checkpoint; skipped when
 * python3 or the package is unavailable.
 */

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { Client } from "./api.js";
import { changeRelation, graphToJson } from "./graph.js";
import { StudioState } from "./state.js";
import { payloadToDrawModel } from "./view.js";
import type { GraphDoc } from "./types.js";

const MAKE_CKPT = `
import sys
import numpy as np
from echograph.checkpoint import save_checkpoint
from echograph.config import TrainConfig
from echograph.layout import NormStats
from echograph.model import SceneModel

cfg = TrainConfig(t_steps=8, hidden=24, gcn_layers=2, denoiser_hidden=32, seed=1)
stats = NormStats(
    loc_min=np.array([-3.0, -3.0, 0.0]),
    loc_max=np.array([3.0, 3.0, 2.0]),
    size_min=np.array([0.1, 0.1, 0.1]),
    size_max=np.array([2.5, 2.5, 2.5]),
)
save_checkpoint(sys.argv[1], SceneModel(cfg), stats, step=0)
print("ok")
`;

function pythonAvailable(): boolean {
  const probe = spawnSync("python3", ["-c", "import echograph"], { timeout: 30_000 });
  return probe.status === 0;
}

const GRAPH: GraphDoc = {
  nodes: [
    { id: 1, category: "bed" },
    { id: 2, category: "nightstand" },
  ],
  edges: [{ from: 1, rel: "left of", to: 2 }],
};

describe.skipIf(!pythonAvailable())("studio loop against the live service", () => {
  let child: ChildProcess | null = null;
  let base = "";
  let workDir = "";

  beforeAll(async () => {
    workDir = mkdtempSync(join(tmpdir(), "studio-"));
    const ckpt = join(workDir, "tiny.ckpt");
    const made = spawnSync("python3", ["-c", MAKE_CKPT, ckpt], { timeout: 120_000 });
    if (made.status !== 0) {
      throw new Error(`checkpoint build failed: ${made.stderr}`);
    }
    child = spawn("python3", ["-m", "echograph.cli", "serve", "--ckpt", ckpt, "--port", "0"]);
    base = await new Promise<string>((resolve, reject) => {
      const timer = setTimeout(() => reject(new Error("service did not start")), 60_000);
      child!.stdout!.on("data", (chunk: Buffer) => {
        const match = /serving on (http:\/\/[\d.]+:\d+)/.exec(chunk.toString());
        if (match) {
          clearTimeout(timer);
          resolve(match[1]);
        }
      });
      child!.on("exit", (code) => reject(new Error(`service exited early (${code})`)));
    });
  }, 180_000);

  afterAll(() => {
    child?.kill();
    if (workDir) rmSync(workDir, { recursive: true, force: true });
  });

  it("edit -> regenerate -> badge reflects the server's per-edge flag", async () => {
    const client = new Client(base);
    const state = new StudioState();
    state.setGraph(GRAPH);

    state.beginRequest();
    const first = await client.generate(state.graph, 7);
    state.completeRequest(first);
    expect(first.seed).toBe(7);
    expect(Object.keys(first.boxes)).toHaveLength(2);

    // the user flips the relation; the UI sends the pre-edit graph + edit
    const edited = changeRelation(state.graph, 0, "right of");
    state.beginRequest();
    const second = await client.manipulate(
      state.graph,
      { kind: "change_relation", edge_index: 0, relation: "right of" },
      11,
      first.seed,
    );
    state.completeRequest(second);

    expect(second.edited_edges).toEqual([0]);
    expect(second.edges[0].rel).toBe("right of");
    expect(state.graph.edges[0].rel).toBe(edited.edges[0].rel);

    // the badge shown is exactly the server's satisfaction flag
    const model = payloadToDrawModel(state.payload);
    expect(model.badges[0].ok).toBe(second.edges[0].satisfied);
    expect(model.badges[0].edited).toBe(true);

    // before/after flags both present for the edited pair
    expect(second.edges_before?.[0].rel).toBe("left of");
    expect(typeof second.edges_before?.[0].satisfied).toBe("boolean");

    // undo returns to the pre-edit graph and its payload
    state.undo();
    expect(state.graph.edges[0].rel).toBe("left of");
    expect(state.payload?.seed).toBe(7);
  }, 120_000);

  it("graph JSON from the UI parses in the core without normalization", () => {
    const json = graphToJson(GRAPH);
    const check = spawnSync(
      "python3",
      [
        "-c",
        "import sys; from echograph.scene_graph import parse_scene_graph; " +
          "g = parse_scene_graph(sys.argv[1]); " +
          "assert g.edges == ((1, 'left of', 2),); print('parsed', len(g))",
        json,
      ],
      { timeout: 60_000 },
    );
    expect(check.status).toBe(0);
    expect(check.stdout.toString()).toContain("parsed 2");
  });

  it("identical seeds give identical payloads", async () => {
    const client = new Client(base);
    const a = await client.generate(GRAPH, 3);
    const b = await client.generate(GRAPH, 3);
    expect(a).toEqual(b);
  }, 120_000);
});
