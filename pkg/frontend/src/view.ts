import type { ScenePayload } from "./types.js";

/**
 * Pure translation of a server payload into drawable primitives. Every box
 * on screen comes from the payload; nothing is synthesized client-side.
 * World frame: x right, y up (flipped to canvas coordinates at draw time);
 * the orientation arrow points along +x for angle 0, counterclockwise
 * positive.
 */

export interface RectShape {
  corners: [number, number][];
  label: string;
  nodeId: number;
  arrow: { x0: number; y0: number; x1: number; y1: number };
}

export interface BadgeShape {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
  ok: boolean;
  label: string;
  edited: boolean;
}

export interface DrawModel {
  rects: RectShape[];
  badges: BadgeShape[];
  seed: number | null;
  msg: number | null;
}

export function payloadToDrawModel(payload: ScenePayload | null): DrawModel {
  if (!payload) return { rects: [], badges: [], seed: null, msg: null };
  const rects: RectShape[] = [];
  const centers = new Map<number, [number, number]>();
  for (const node of payload.nodes) {
    const box = payload.boxes[String(node.id)];
    if (!box) continue;
    const [x, y] = [box.center[0], box.center[1]];
    const [l, , w] = box.size;
    const c = Math.cos(box.angle);
    const s = Math.sin(box.angle);
    const local: [number, number][] = [
      [-l / 2, -w / 2],
      [l / 2, -w / 2],
      [l / 2, w / 2],
      [-l / 2, w / 2],
    ];
    const corners = local.map(
      ([px, py]) => [x + px * c - py * s, y + px * s + py * c] as [number, number],
    );
    const arrowLen = Math.max(0.15, 0.3 * Math.min(l, w));
    rects.push({
      corners,
      label: node.category,
      nodeId: node.id,
      arrow: { x0: x, y0: y, x1: x + arrowLen * c, y1: y + arrowLen * s },
    });
    centers.set(node.id, [x, y]);
  }
  const edited = new Set(payload.edited_edges ?? []);
  const badges: BadgeShape[] = [];
  for (const [i, edge] of payload.edges.entries()) {
    const a = centers.get(edge.from);
    const b = centers.get(edge.to);
    if (!a || !b) continue;
    badges.push({
      x0: a[0],
      y0: a[1],
      x1: b[0],
      y1: b[1],
      ok: edge.satisfied,
      label: edge.rel,
      edited: edited.has(i),
    });
  }
  return {
    rects,
    badges,
    seed: payload.seed,
    msg: payload.constraint_report?.msg ?? null,
  };
}

const EXTENT = 6.0;

export function renderCanvas(
  canvas: HTMLCanvasElement,
  model: DrawModel,
  emptyPrompt = "edit the graph, then Generate",
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const size = Math.min(canvas.width, canvas.height);
  const scale = size / (EXTENT + 1.0);
  const toPx = (x: number, y: number): [number, number] => [
    canvas.width / 2 + x * scale,
    canvas.height / 2 - y * scale, // world y-up, canvas y-down
  ];

  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#999";
  ctx.lineWidth = 1;
  const [rx, ry] = toPx(-EXTENT / 2, EXTENT / 2);
  ctx.strokeRect(rx, ry, EXTENT * scale, EXTENT * scale);

  if (!model.rects.length) {
    ctx.fillStyle = "#777";
    ctx.font = "14px sans-serif";
    ctx.textAlign = "center";
    ctx.fillText(emptyPrompt, canvas.width / 2, canvas.height / 2);
    return;
  }

  for (const badge of model.badges) {
    ctx.strokeStyle = badge.ok ? "#2e8b57" : "#c0392b";
    ctx.lineWidth = badge.edited ? 2.5 : 1;
    ctx.setLineDash(badge.edited ? [] : [4, 3]);
    ctx.beginPath();
    ctx.moveTo(...toPx(badge.x0, badge.y0));
    ctx.lineTo(...toPx(badge.x1, badge.y1));
    ctx.stroke();
    ctx.setLineDash([]);
    const mx = (badge.x0 + badge.x1) / 2;
    const my = (badge.y0 + badge.y1) / 2;
    ctx.fillStyle = badge.ok ? "#2e8b57" : "#c0392b";
    ctx.font = "10px sans-serif";
    ctx.textAlign = "center";
    ctx.fillText(`${badge.label} ${badge.ok ? "✓" : "✗"}`, ...toPx(mx, my));
  }

  const palette = ["#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7"];
  for (const [i, rect] of model.rects.entries()) {
    ctx.fillStyle = palette[i % palette.length] + "88";
    ctx.strokeStyle = "#333";
    ctx.beginPath();
    rect.corners.forEach(([x, y], k) => {
      const [px, py] = toPx(x, y);
      if (k === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    });
    ctx.closePath();
    ctx.fill();
    ctx.stroke();

    ctx.strokeStyle = "#111";
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.moveTo(...toPx(rect.arrow.x0, rect.arrow.y0));
    ctx.lineTo(...toPx(rect.arrow.x1, rect.arrow.y1));
    ctx.stroke();
    ctx.lineWidth = 1;

    ctx.fillStyle = "#111";
    ctx.font = "11px sans-serif";
    ctx.textAlign = "center";
    ctx.fillText(rect.label, ...toPx(rect.arrow.x0, rect.arrow.y0 - 0.18));
  }
}
