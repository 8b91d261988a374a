// Layered left-to-right layout: an agent sits one layer right of its
// deepest predecessor, ties within a layer keep agent insertion order.

export interface NodePosition {
  layer: number;
  row: number;
  x: number;
  y: number;
}

export const LAYER_WIDTH = 190;
export const ROW_HEIGHT = 86;
export const MARGIN_X = 30;
export const MARGIN_Y = 30;

export function layeredLayout(
  agents: string[],
  edges: [string, string][],
): Map<string, NodePosition> {
  const layer = new Map<string, number>();
  const remaining = new Set(agents);
  while (remaining.size > 0) {
    let progressed = false;
    for (const name of agents) {
      if (!remaining.has(name)) continue;
      const preds = edges.filter(([, t]) => t === name).map(([s]) => s);
      if (preds.some((p) => remaining.has(p))) continue;
      const depth = preds.length
        ? Math.max(...preds.map((p) => layer.get(p)!)) + 1
        : 0;
      layer.set(name, depth);
      remaining.delete(name);
      progressed = true;
    }
    if (!progressed) {
      // cyclic input; place the leftovers on a final layer so rendering
      // still works (the server refuses to save cycles anyway)
      const depth = Math.max(-1, ...layer.values()) + 1;
      for (const name of remaining) layer.set(name, depth);
      break;
    }
  }

  const rows = new Map<number, number>();
  const positions = new Map<string, NodePosition>();
  for (const name of agents) {
    const l = layer.get(name) ?? 0;
    const row = rows.get(l) ?? 0;
    rows.set(l, row + 1);
    positions.set(name, {
      layer: l,
      row,
      x: MARGIN_X + l * LAYER_WIDTH,
      y: MARGIN_Y + row * ROW_HEIGHT,
    });
  }
  return positions;
}
