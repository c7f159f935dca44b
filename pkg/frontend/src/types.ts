export interface GraphNode {
  id: number;
  category: string;
}

export interface GraphEdge {
  from: number;
  rel: string;
  to: number;
}

export interface GraphDoc {
  nodes: GraphNode[];
  edges: GraphEdge[];
}

export interface EdgeWithFlag extends GraphEdge {
  satisfied: boolean;
}

export interface BoxPayload {
  center: [number, number, number];
  size: [number, number, number];
  angle: number;
}

export interface ScenePayload {
  seed: number;
  nodes: GraphNode[];
  edges: EdgeWithFlag[];
  boxes: Record<string, BoxPayload>;
  shape_codes: Record<string, number[]>;
  decoded_shapes: Record<string, { family: string; style: number[] }>;
  constraint_report: {
    mode: string;
    groups: Record<string, { accuracy: number | null; count: number }>;
    msg: number;
  };
  edges_before?: EdgeWithFlag[];
  edited_edges?: number[];
  prev_noise_seed?: number;
}

export type ChangeRelationEdit = {
  kind: "change_relation";
  edge_index: number;
  relation: string;
};

export type AddNodeEdit = {
  kind: "add_node";
  category: string;
  edges: { rel: string; other: number; outgoing?: boolean }[];
};

export type GraphEditDoc = ChangeRelationEdit | AddNodeEdit;
