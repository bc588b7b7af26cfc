// Layered layout for the process graph. Control edges define the layers
// (longest path from a root); data edges are drawn over the result and
// may point backwards when they carry feedback.

import type { ActivityState, DefinitionDoc } from "./types.js";

export interface NodePos {
  name: string;
  layer: number;
  row: number;
  x: number;
  y: number;
}

export interface EdgePath {
  from: string;
  to: string;
  kind: "control" | "data" | "feedback";
  x1: number;
  y1: number;
  x2: number;
  y2: number;
}

export interface Layout {
  width: number;
  height: number;
  nodes: NodePos[];
  edges: EdgePath[];
}

export const NODE_W = 148;
export const NODE_H = 52;
const GAP_X = 56;
const GAP_Y = 34;
const MARGIN = 16;

function layerAssignment(doc: DefinitionDoc): Map<string, number> {
  const layer = new Map<string, number>();
  const indeg = new Map<string, number>();
  const succs = new Map<string, string[]>();
  for (const a of doc.activities) {
    layer.set(a.name, 0);
    indeg.set(a.name, 0);
    succs.set(a.name, []);
  }
  for (const e of doc.control_edges) {
    indeg.set(e.to, (indeg.get(e.to) ?? 0) + 1);
    succs.get(e.from)?.push(e.to);
  }
  // Kahn order; definitions are validated acyclic so this visits everything.
  const queue = doc.activities.map((a) => a.name).filter((n) => indeg.get(n) === 0);
  while (queue.length) {
    const n = queue.shift()!;
    for (const m of succs.get(n) ?? []) {
      layer.set(m, Math.max(layer.get(m)!, layer.get(n)! + 1));
      indeg.set(m, indeg.get(m)! - 1);
      if (indeg.get(m) === 0) queue.push(m);
    }
  }
  return layer;
}

export function layoutDag(doc: DefinitionDoc): Layout {
  const layer = layerAssignment(doc);
  const byLayer = new Map<number, string[]>();
  for (const a of doc.activities) {
    const l = layer.get(a.name)!;
    const list = byLayer.get(l) ?? [];
    list.push(a.name); // authoring order within a layer, deterministic
    byLayer.set(l, list);
  }

  const nodes: NodePos[] = [];
  const pos = new Map<string, NodePos>();
  const layerCount = byLayer.size ? Math.max(...byLayer.keys()) + 1 : 0;
  const maxRows = Math.max(1, ...[...byLayer.values()].map((v) => v.length));
  for (const [l, names] of [...byLayer.entries()].sort((a, b) => a[0] - b[0])) {
    names.forEach((name, row) => {
      const node: NodePos = {
        name,
        layer: l,
        row,
        x: MARGIN + l * (NODE_W + GAP_X),
        y: MARGIN + row * (NODE_H + GAP_Y),
      };
      nodes.push(node);
      pos.set(name, node);
    });
  }

  const edges: EdgePath[] = [];
  const connect = (from: string, to: string, kind: EdgePath["kind"]) => {
    const a = pos.get(from);
    const b = pos.get(to);
    if (!a || !b) return;
    const forward = a.x <= b.x;
    edges.push({
      from, to, kind,
      x1: a.x + (forward ? NODE_W : 0), y1: a.y + NODE_H / 2,
      x2: b.x + (forward ? 0 : NODE_W), y2: b.y + NODE_H / 2,
    });
  };
  for (const e of doc.control_edges) connect(e.from, e.to, "control");
  for (const e of doc.data_edges) connect(e.from, e.to, e.feedback ? "feedback" : "data");

  return {
    width: 2 * MARGIN + layerCount * NODE_W + Math.max(0, layerCount - 1) * GAP_X,
    height: 2 * MARGIN + maxRows * NODE_H + (maxRows - 1) * GAP_Y,
    nodes,
    edges,
  };
}

/** CSS class for a node in a given lifecycle state. */
export function stateClass(state: ActivityState | undefined): string {
  return state ? `node-${state.toLowerCase()}` : "node-unknown";
}
