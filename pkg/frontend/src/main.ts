import { ApiError, Client } from "./api.js";
import { addNode, changeRelation, isolatedNodes, validateGraph } from "./graph.js";
import { StudioState } from "./state.js";
import { payloadToDrawModel, renderCanvas } from "./view.js";
import type { GraphDoc, GraphEditDoc } from "./types.js";

const state = new StudioState();
const client = new Client(
  new URLSearchParams(location.search).get("server") ?? location.origin,
);
let relations: string[] = [];
let categories: string[] = [];

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el as T;
};

function showError(message: string | null): void {
  const banner = $("error-banner");
  banner.textContent = message ?? "";
  banner.style.display = message ? "block" : "none";
}

function redraw(): void {
  const canvas = $("scene-canvas") as unknown as HTMLCanvasElement;
  renderCanvas(canvas, payloadToDrawModel(state.payload));
  $("seed-label").textContent =
    state.payload === null ? "no scene yet" : `seed ${state.payload.seed}`;
  const msg = state.payload?.constraint_report?.msg;
  $("msg-label").textContent =
    msg === undefined || msg === null || Number.isNaN(msg) ? "" : `mSG ${msg.toFixed(3)}`;
  renderGraphEditor();
  ($("undo-btn") as HTMLButtonElement).disabled = !state.canUndo;
  document.body.classList.toggle("pending", state.pending);
}

function selectEl(options: string[], value: string): HTMLSelectElement {
  const select = document.createElement("select");
  for (const option of options) {
    const el = document.createElement("option");
    el.value = option;
    el.textContent = option;
    if (option === value) el.selected = true;
    select.appendChild(el);
  }
  return select;
}

function renderGraphEditor(): void {
  const nodeList = $("node-list");
  nodeList.replaceChildren();
  for (const node of state.graph.nodes) {
    const li = document.createElement("li");
    li.textContent = `#${node.id} ${node.category}`;
    nodeList.appendChild(li);
  }

  const edgeList = $("edge-list");
  edgeList.replaceChildren();
  state.graph.edges.forEach((edge, index) => {
    const li = document.createElement("li");
    li.append(`#${edge.from} `);
    const select = selectEl(relations, edge.rel);
    select.onchange = () => void submitChangeRelation(index, select.value);
    li.appendChild(select);
    li.append(` #${edge.to}`);
    const flag = state.payload?.edges?.[index];
    if (flag && state.payload && sameEdgeSets()) {
      const badge = document.createElement("span");
      badge.className = flag.satisfied ? "badge ok" : "badge bad";
      badge.textContent = flag.satisfied ? "✓" : "✗";
      li.appendChild(badge);
    }
    edgeList.appendChild(li);
  });

  const target = $("add-node-target") as HTMLSelectElement;
  const current = target.value;
  target.replaceChildren();
  for (const node of state.graph.nodes) {
    const option = document.createElement("option");
    option.value = String(node.id);
    option.textContent = `#${node.id} ${node.category}`;
    if (option.value === current) option.selected = true;
    target.appendChild(option);
  }
}

/** Badges are only trustworthy when the edited graph still matches the payload. */
function sameEdgeSets(): boolean {
  const p = state.payload;
  if (!p || p.edges.length !== state.graph.edges.length) return false;
  return p.edges.every(
    (e, i) =>
      e.from === state.graph.edges[i].from &&
      e.rel === state.graph.edges[i].rel &&
      e.to === state.graph.edges[i].to,
  );
}

function reportProblems(graph: GraphDoc): boolean {
  const problems = validateGraph(graph, relations, categories);
  if (problems.length) {
    showError(problems.map((p) => `${p.where}: ${p.message}`).join("; "));
    return true;
  }
  const isolated = isolatedNodes(graph);
  showError(null);
  if (isolated.length) {
    // allowed, but worth a warning: mirrors the core's isolated-node handling
    $("warning-label").textContent = `isolated node(s): ${isolated
      .map((n) => `#${n.id}`)
      .join(", ")}`;
  } else {
    $("warning-label").textContent = "";
  }
  return false;
}

async function submitGenerate(freshSeed: boolean): Promise<void> {
  if (state.pending || reportProblems(state.graph)) return;
  state.beginRequest();
  redraw();
  try {
    const seed = freshSeed ? Math.floor(Math.random() * 2 ** 31) : state.payload?.seed;
    const payload = await client.generate(state.graph, seed);
    state.completeRequest(payload);
    showError(null);
  } catch (e) {
    state.failRequest();
    showError(e instanceof ApiError ? e.message : String(e));
  }
  redraw();
}

async function submitEdit(edit: GraphEditDoc): Promise<void> {
  if (state.pending) return;
  state.beginRequest();
  redraw();
  try {
    const payload = await client.manipulate(
      state.graph,
      edit,
      Math.floor(Math.random() * 2 ** 31),
      state.payload?.seed,
    );
    state.completeRequest(payload);
    showError(null);
  } catch (e) {
    state.failRequest();
    showError(e instanceof ApiError ? e.message : String(e));
  }
  redraw();
}

async function submitChangeRelation(index: number, relation: string): Promise<void> {
  await submitEdit({ kind: "change_relation", edge_index: index, relation });
}

function wireUi(): void {
  $("generate-btn").onclick = () => void submitGenerate(true);
  $("regen-btn").onclick = () => void submitGenerate(true);
  $("undo-btn").onclick = () => {
    if (state.undo()) redraw();
  };
  $("add-node-btn").onclick = () => {
    const category = ($("add-node-category") as HTMLSelectElement).value;
    const rel = ($("add-node-rel") as HTMLSelectElement).value;
    const otherRaw = ($("add-node-target") as HTMLSelectElement).value;
    if (state.graph.nodes.length === 0 || otherRaw === "") {
      // first node: no edges possible yet
      const next = addNode(state.graph, category, []);
      if (!reportProblems(next)) {
        state.setGraph(next);
        redraw();
      }
      return;
    }
    void submitEdit({
      kind: "add_node",
      category,
      edges: [{ rel, other: Number(otherRaw) }],
    });
  };
  $("add-local-btn").onclick = () => {
    const category = ($("add-node-category") as HTMLSelectElement).value;
    const next = addNode(state.graph, category, []);
    if (!reportProblems(next)) {
      state.setGraph(next);
      redraw();
    }
  };
}

async function boot(): Promise<void> {
  try {
    const vocab = await client.vocab();
    relations = vocab.relations;
    categories = vocab.categories;
    const categorySelect = $("add-node-category") as HTMLSelectElement;
    for (const cat of categories) {
      const option = document.createElement("option");
      option.value = cat;
      option.textContent = cat;
      categorySelect.appendChild(option);
    }
    const relSelect = $("add-node-rel") as HTMLSelectElement;
    for (const rel of relations) {
      const option = document.createElement("option");
      option.value = rel;
      option.textContent = rel;
      relSelect.appendChild(option);
    }
    const health = await client.health();
    $("health-label").textContent = `model ${health.checkpoint_hash.slice(0, 10)}`;
  } catch (e) {
    showError(`cannot reach server: ${e instanceof Error ? e.message : String(e)}`);
  }
  wireUi();
  redraw();
}

void boot();
