import { describe, expect, it } from "vitest";

import {
  addNode,
  changeRelation,
  cloneGraph,
  graphToJson,
  isolatedNodes,
  nextNodeId,
  validateGraph,
} from "./graph.js";
import type { GraphDoc } from "./types.js";

const RELATIONS = ["left of", "right of", "close by"];
const CATEGORIES = ["bed", "nightstand", "lamp", "sofa"];

const GRAPH: GraphDoc = {
  nodes: [
    { id: 1, category: "bed" },
    { id: 2, category: "nightstand" },
  ],
  edges: [{ from: 1, rel: "left of", to: 2 }],
};

describe("graph model", () => {
  it("serializes exactly the wire schema", () => {
    const doc = JSON.parse(graphToJson(GRAPH));
    expect(Object.keys(doc).sort()).toEqual(["edges", "nodes"]);
    expect(doc.nodes[0]).toEqual({ id: 1, category: "bed" });
    expect(doc.edges[0]).toEqual({ from: 1, rel: "left of", to: 2 });
  });

  it("round-trips through JSON unchanged", () => {
    const doc = JSON.parse(graphToJson(GRAPH)) as GraphDoc;
    expect(doc).toEqual({ nodes: GRAPH.nodes, edges: GRAPH.edges });
  });

  it("change relation edits exactly one edge and keeps the input intact", () => {
    const out = changeRelation(GRAPH, 0, "right of");
    expect(out.edges[0].rel).toBe("right of");
    expect(GRAPH.edges[0].rel).toBe("left of");
  });

  it("add node appends one node id above the maximum", () => {
    const out = addNode(GRAPH, "lamp", [{ rel: "close by", other: 2 }]);
    expect(out.nodes).toHaveLength(3);
    expect(out.nodes[2]).toEqual({ id: 3, category: "lamp" });
    expect(out.edges).toContainEqual({ from: 3, rel: "close by", to: 2 });
    expect(nextNodeId(out)).toBe(4);
  });

  it("incoming incident edges honor the outgoing flag", () => {
    const out = addNode(GRAPH, "lamp", [{ rel: "close by", other: 1, outgoing: false }]);
    expect(out.edges).toContainEqual({ from: 1, rel: "close by", to: 3 });
  });

  it("flags isolated nodes without rejecting them", () => {
    const out = addNode(GRAPH, "sofa", []);
    expect(isolatedNodes(out).map((n) => n.id)).toEqual([3]);
    expect(validateGraph(out, RELATIONS, CATEGORIES)).toHaveLength(0);
  });

  it("validation mirrors server rules", () => {
    const bad: GraphDoc = {
      nodes: [
        { id: 1, category: "bed" },
        { id: 1, category: "spaceship" },
      ],
      edges: [
        { from: 1, rel: "floats", to: 9 },
        { from: 1, rel: "left of", to: 1 },
      ],
    };
    const problems = validateGraph(bad, RELATIONS, CATEGORIES);
    const messages = problems.map((p) => p.message).join("; ");
    expect(messages).toContain("duplicate id");
    expect(messages).toContain("unknown category");
    expect(messages).toContain("dangling edge");
    expect(messages).toContain("self-edge");
    expect(messages).toContain("unknown relation");
  });

  it("clone is deep", () => {
    const copy = cloneGraph(GRAPH);
    copy.nodes[0].category = "lamp";
    expect(GRAPH.nodes[0].category).toBe("bed");
  });
});
