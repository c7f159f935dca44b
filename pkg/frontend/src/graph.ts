import type { GraphDoc, GraphEdge, GraphNode } from "./types.js";

/** Deep-copy a graph document (history snapshots must not alias). */
export function cloneGraph(graph: GraphDoc): GraphDoc {
  return {
    nodes: graph.nodes.map((n) => ({ ...n })),
    edges: graph.edges.map((e) => ({ ...e })),
  };
}

export function nextNodeId(graph: GraphDoc): number {
  return graph.nodes.reduce((top, n) => Math.max(top, n.id), -1) + 1;
}

/**
 * Serialize exactly the document the core parser accepts: top-level nodes
 * and edges, nothing else. No client-side normalization.
 */
export function graphToJson(graph: GraphDoc): string {
  return JSON.stringify({
    nodes: graph.nodes.map((n) => ({ id: n.id, category: n.category })),
    edges: graph.edges.map((e) => ({ from: e.from, rel: e.rel, to: e.to })),
  });
}

export interface GraphProblem {
  where: string;
  message: string;
}

/** Client-side sanity checks mirroring the server's validation rules. */
export function validateGraph(
  graph: GraphDoc,
  relations: string[],
  categories: string[],
): GraphProblem[] {
  const problems: GraphProblem[] = [];
  const seen = new Set<number>();
  for (const [i, node] of graph.nodes.entries()) {
    if (seen.has(node.id)) {
      problems.push({ where: `nodes[${i}]`, message: `duplicate id ${node.id}` });
    }
    seen.add(node.id);
    if (categories.length && !categories.includes(node.category)) {
      problems.push({ where: `nodes[${i}]`, message: `unknown category ${node.category}` });
    }
  }
  const edgeKeys = new Set<string>();
  for (const [i, edge] of graph.edges.entries()) {
    if (!seen.has(edge.from) || !seen.has(edge.to)) {
      problems.push({ where: `edges[${i}]`, message: "dangling edge" });
    }
    if (edge.from === edge.to) {
      problems.push({ where: `edges[${i}]`, message: "self-edge" });
    }
    if (relations.length && !relations.includes(edge.rel)) {
      problems.push({ where: `edges[${i}]`, message: `unknown relation ${edge.rel}` });
    }
    const key = `${edge.from}|${edge.rel}|${edge.to}`;
    if (edgeKeys.has(key)) {
      problems.push({ where: `edges[${i}]`, message: "duplicate edge" });
    }
    edgeKeys.add(key);
  }
  return problems;
}

export function isolatedNodes(graph: GraphDoc): GraphNode[] {
  const touched = new Set<number>();
  for (const e of graph.edges) {
    touched.add(e.from);
    touched.add(e.to);
  }
  return graph.nodes.filter((n) => !touched.has(n.id));
}

export function changeRelation(graph: GraphDoc, index: number, rel: string): GraphDoc {
  if (index < 0 || index >= graph.edges.length) {
    throw new Error(`edge index ${index} out of range`);
  }
  const out = cloneGraph(graph);
  out.edges[index] = { ...out.edges[index], rel };
  return out;
}

export function addNode(
  graph: GraphDoc,
  category: string,
  incident: { rel: string; other: number; outgoing?: boolean }[],
): GraphDoc {
  const out = cloneGraph(graph);
  const id = nextNodeId(graph);
  out.nodes.push({ id, category });
  for (const inc of incident) {
    const edge: GraphEdge =
      inc.outgoing === false
        ? { from: inc.other, rel: inc.rel, to: id }
        : { from: id, rel: inc.rel, to: inc.other };
    out.edges.push(edge);
  }
  return out;
}
