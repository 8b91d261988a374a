import { describe, expect, it } from "vitest";

import { layeredLayout } from "../src/layout";

describe("layeredLayout", () => {
  it("places each agent right of its deepest predecessor", () => {
    const agents = ["A", "B", "C", "D"];
    const edges: [string, string][] = [
      ["A", "B"],
      ["A", "C"],
      ["B", "D"],
      ["C", "D"],
    ];
    const positions = layeredLayout(agents, edges);
    for (const [source, target] of edges) {
      expect(positions.get(source)!.layer).toBeLessThan(
        positions.get(target)!.layer,
      );
    }
    expect(positions.get("A")!.layer).toBe(0);
    expect(positions.get("D")!.layer).toBe(2);
  });

  it("keeps insertion order within a layer", () => {
    const positions = layeredLayout(["X", "Y", "Z"], []);
    expect(positions.get("X")!.row).toBe(0);
    expect(positions.get("Y")!.row).toBe(1);
    expect(positions.get("Z")!.row).toBe(2);
    expect(new Set([...positions.values()].map((p) => p.layer))).toEqual(
      new Set([0]),
    );
  });

  it("skips no agents and assigns distinct coordinates per layer row", () => {
    const agents = ["A", "B", "C", "D", "E"];
    const edges: [string, string][] = [
      ["A", "C"],
      ["B", "C"],
      ["C", "D"],
      ["C", "E"],
    ];
    const positions = layeredLayout(agents, edges);
    expect(positions.size).toBe(agents.length);
    const keys = [...positions.values()].map((p) => `${p.layer}:${p.row}`);
    expect(new Set(keys).size).toBe(agents.length);
  });
});
