import { cloneGraph } from "./graph.js";
import type { GraphDoc, ScenePayload } from "./types.js";

interface Snapshot {
  graph: GraphDoc;
  payload: ScenePayload | null;
}

/**
 * The studio's single source of truth: the editable graph, the last server
 * payload (whose seed the displayed badges belong to), and an undo stack of
 * prior snapshots. One request may be in flight at a time; edits made while
 * pending are refused by the caller via `pending`.
 */
export class StudioState {
  graph: GraphDoc = { nodes: [], edges: [] };
  payload: ScenePayload | null = null;
  pending = false;
  private history: Snapshot[] = [];

  get canUndo(): boolean {
    return this.history.length > 0;
  }

  get depth(): number {
    return this.history.length;
  }

  private snapshot(): Snapshot {
    return { graph: cloneGraph(this.graph), payload: this.payload };
  }

  /** Replace the graph, remembering the prior state for undo. */
  setGraph(graph: GraphDoc): void {
    this.history.push(this.snapshot());
    this.graph = cloneGraph(graph);
  }

  beginRequest(): void {
    if (this.pending) throw new Error("request already in flight");
    this.pending = true;
  }

  /** Successful round trip: the payload's graph becomes the current graph. */
  completeRequest(payload: ScenePayload): void {
    this.pending = false;
    this.history.push(this.snapshot());
    this.payload = payload;
    this.graph = {
      nodes: payload.nodes.map((n) => ({ ...n })),
      edges: payload.edges.map(({ from, rel, to }) => ({ from, rel, to })),
    };
  }

  failRequest(): void {
    this.pending = false;
  }

  /** Restore the previous snapshot (graph and its matching payload). */
  undo(): boolean {
    const prev = this.history.pop();
    if (!prev) return false;
    this.graph = prev.graph;
    this.payload = prev.payload;
    return true;
  }
}
