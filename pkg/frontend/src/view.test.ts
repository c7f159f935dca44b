import { describe, expect, it } from "vitest";

import { payloadToDrawModel } from "./view.js";
import type { ScenePayload } from "./types.js";

const PAYLOAD: ScenePayload = {
  seed: 7,
  nodes: [
    { id: 1, category: "bed" },
    { id: 2, category: "nightstand" },
  ],
  edges: [{ from: 1, rel: "left of", to: 2, satisfied: false }],
  boxes: {
    "1": { center: [-1, 0.5, 0.3], size: [2, 0.6, 1.6], angle: 0 },
    "2": { center: [1, 0.5, 0.25], size: [0.5, 0.5, 0.4], angle: Math.PI / 2 },
  },
  shape_codes: { "1": [], "2": [] },
  decoded_shapes: {},
  constraint_report: { mode: "none", groups: {}, msg: 0.0 },
  edited_edges: [0],
};

describe("payloadToDrawModel", () => {
  it("turns a 2-box payload into 2 rects and 1 badge", () => {
    const model = payloadToDrawModel(PAYLOAD);
    expect(model.rects).toHaveLength(2);
    expect(model.badges).toHaveLength(1);
    expect(model.seed).toBe(7);
  });

  it("badge carries the satisfied flag and edited mark", () => {
    const model = payloadToDrawModel(PAYLOAD);
    expect(model.badges[0].ok).toBe(false);
    expect(model.badges[0].edited).toBe(true);
    expect(model.badges[0].label).toBe("left of");
  });

  it("angle zero points the arrow along +x", () => {
    const model = payloadToDrawModel(PAYLOAD);
    const arrow = model.rects[0].arrow;
    expect(arrow.x1).toBeGreaterThan(arrow.x0);
    expect(arrow.y1).toBeCloseTo(arrow.y0, 10);
  });

  it("angle pi/2 points the arrow along +y", () => {
    const model = payloadToDrawModel(PAYLOAD);
    const arrow = model.rects[1].arrow;
    expect(arrow.y1).toBeGreaterThan(arrow.y0);
    expect(arrow.x1).toBeCloseTo(arrow.x0, 10);
  });

  it("rotation moves the footprint corners", () => {
    const model = payloadToDrawModel(PAYLOAD);
    // 2 x 1.6 footprint rotated 90 degrees: x-extent becomes the old y-extent
    const flat = model.rects[1].corners;
    const xs = flat.map(([x]) => x);
    const ys = flat.map(([, y]) => y);
    expect(Math.max(...xs) - Math.min(...xs)).toBeCloseTo(0.4, 6);
    expect(Math.max(...ys) - Math.min(...ys)).toBeCloseTo(0.5, 6);
  });

  it("empty payload gives an empty model", () => {
    const model = payloadToDrawModel(null);
    expect(model.rects).toHaveLength(0);
    expect(model.seed).toBeNull();
  });

  it("never invents geometry for nodes without boxes", () => {
    const partial = { ...PAYLOAD, boxes: { "1": PAYLOAD.boxes["1"] } };
    const model = payloadToDrawModel(partial);
    expect(model.rects).toHaveLength(1);
    expect(model.badges).toHaveLength(0); // edge endpoint has no box
  });
});
