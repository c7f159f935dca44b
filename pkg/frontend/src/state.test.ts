import { describe, expect, it } from "vitest";

import { StudioState } from "./state.js";
import type { ScenePayload } from "./types.js";

function payload(seed: number, rel = "left of", satisfied = true): ScenePayload {
  return {
    seed,
    nodes: [
      { id: 1, category: "bed" },
      { id: 2, category: "nightstand" },
    ],
    edges: [{ from: 1, rel, to: 2, satisfied }],
    boxes: {
      "1": { center: [-1, 0, 0.3], size: [2, 0.6, 1.6], angle: 0 },
      "2": { center: [1, 0, 0.25], size: [0.5, 0.5, 0.4], angle: 0 },
    },
    shape_codes: { "1": [], "2": [] },
    decoded_shapes: {},
    constraint_report: { mode: "none", groups: {}, msg: 1.0 },
  };
}

describe("StudioState", () => {
  it("undo restores both graph and payload", () => {
    const state = new StudioState();
    state.beginRequest();
    state.completeRequest(payload(1, "left of"));
    expect(state.graph.edges[0].rel).toBe("left of");

    state.beginRequest();
    state.completeRequest(payload(2, "right of"));
    expect(state.graph.edges[0].rel).toBe("right of");
    expect(state.payload?.seed).toBe(2);

    expect(state.undo()).toBe(true);
    expect(state.graph.edges[0].rel).toBe("left of");
    expect(state.payload?.seed).toBe(1);
  });

  it("undo walks all the way back to the empty studio", () => {
    const state = new StudioState();
    state.setGraph({ nodes: [{ id: 0, category: "lamp" }], edges: [] });
    state.setGraph({
      nodes: [
        { id: 0, category: "lamp" },
        { id: 1, category: "bed" },
      ],
      edges: [],
    });
    expect(state.depth).toBe(2);
    state.undo();
    expect(state.graph.nodes).toHaveLength(1);
    state.undo();
    expect(state.graph.nodes).toHaveLength(0);
    expect(state.undo()).toBe(false);
  });

  it("rejects overlapping requests", () => {
    const state = new StudioState();
    state.beginRequest();
    expect(() => state.beginRequest()).toThrow();
    state.failRequest();
    expect(state.pending).toBe(false);
  });

  it("snapshots do not alias the live graph", () => {
    const state = new StudioState();
    state.setGraph({ nodes: [{ id: 0, category: "lamp" }], edges: [] });
    state.graph.nodes[0].category = "bed";
    state.undo();
    // initial empty state restored, untouched by the mutation
    expect(state.graph.nodes).toHaveLength(0);
  });
});
