// Region 1: the network overview and structural editor. Nodes are laid out
// in topological layers, left to right. Dragging one agent onto another
// requests a connection; clicking selects; Delete removes the selection.

import { layeredLayout, LAYER_WIDTH, ROW_HEIGHT } from "./layout";
import type { LanDoc, Violation } from "./types";

export type Selection =
  | { kind: "agent"; name: string }
  | { kind: "edge"; source: string; target: string }
  | null;

export interface GraphCallbacks {
  onSelect(selection: Selection): void;
  onConnect(source: string, target: string): void;
  onNewAgent(): void;
}

const NODE_WIDTH = 150;
const NODE_HEIGHT = 54;

export class GraphView {
  root: HTMLElement;
  callbacks: GraphCallbacks;
  private dragSource: string | null = null;
  private violationBox: HTMLElement;
  private svg: SVGSVGElement;
  private lan: LanDoc | null = null;
  private selection: Selection = null;

  constructor(root: HTMLElement, callbacks: GraphCallbacks) {
    this.root = root;
    this.callbacks = callbacks;
    root.classList.add("graph-region");

    const toolbar = document.createElement("div");
    toolbar.className = "toolbar";
    const newButton = document.createElement("button");
    newButton.textContent = "New agent";
    newButton.dataset.action = "new-agent";
    newButton.addEventListener("click", () => this.callbacks.onNewAgent());
    toolbar.appendChild(newButton);
    root.appendChild(toolbar);

    this.violationBox = document.createElement("div");
    this.violationBox.className = "violations";
    root.appendChild(this.violationBox);

    this.svg = document.createElementNS("http://www.w3.org/2000/svg", "svg");
    this.svg.classList.add("graph-canvas");
    root.appendChild(this.svg);

    // a mouseup anywhere else cancels a pending drag-to-connect
    this.svg.addEventListener("mouseup", () => {
      this.dragSource = null;
    });
  }

  showViolations(violations: Violation[], message = "") {
    if (!violations.length && !message) {
      this.violationBox.textContent = "";
      this.violationBox.classList.remove("active");
      return;
    }
    const parts = violations.map((violation) => {
      if (violation.rule === "cycle") {
        return `cycle: ${(violation.agents as string[] | undefined)?.join(" → ") ?? ""}`;
      }
      if (violation.rule === "empty_field") {
        return `empty ${violation.field} on ${JSON.stringify(violation.agent)}`;
      }
      if (violation.rule === "duplicate_name") {
        return `duplicate name ${JSON.stringify(violation.name)}`;
      }
      return JSON.stringify(violation);
    });
    if (message) parts.unshift(message);
    this.violationBox.textContent = parts.join("; ");
    this.violationBox.classList.add("active");
  }

  render(lan: LanDoc, selection: Selection) {
    this.lan = lan;
    this.selection = selection;
    const names = lan.agents.map((a) => a.name);
    const positions = layeredLayout(names, lan.edges);
    const maxLayer = Math.max(0, ...[...positions.values()].map((p) => p.layer));
    const maxRow = Math.max(0, ...[...positions.values()].map((p) => p.row));
    this.svg.setAttribute(
      "viewBox",
      `0 0 ${(maxLayer + 1) * LAYER_WIDTH + 60} ${(maxRow + 1) * ROW_HEIGHT + 40}`,
    );
    this.svg.innerHTML = "";

    for (const [source, target] of lan.edges) {
      const from = positions.get(source)!;
      const to = positions.get(target)!;
      const line = document.createElementNS("http://www.w3.org/2000/svg", "line");
      line.classList.add("edge");
      line.dataset.source = source;
      line.dataset.target = target;
      line.setAttribute("x1", String(from.x + NODE_WIDTH));
      line.setAttribute("y1", String(from.y + NODE_HEIGHT / 2));
      line.setAttribute("x2", String(to.x));
      line.setAttribute("y2", String(to.y + NODE_HEIGHT / 2));
      if (
        selection?.kind === "edge" &&
        selection.source === source &&
        selection.target === target
      ) {
        line.classList.add("selected");
      }
      line.addEventListener("mousedown", (event) => {
        event.stopPropagation();
        this.callbacks.onSelect({ kind: "edge", source, target });
      });
      this.svg.appendChild(line);
    }

    for (const agent of lan.agents) {
      const position = positions.get(agent.name)!;
      const group = document.createElementNS("http://www.w3.org/2000/svg", "g");
      group.classList.add("agent-node");
      group.dataset.agent = agent.name;
      if (selection?.kind === "agent" && selection.name === agent.name) {
        group.classList.add("selected");
      }
      if (!agent.control.enabled) group.classList.add("always-on");
      group.setAttribute("transform", `translate(${position.x},${position.y})`);

      const rect = document.createElementNS("http://www.w3.org/2000/svg", "rect");
      rect.setAttribute("width", String(NODE_WIDTH));
      rect.setAttribute("height", String(NODE_HEIGHT));
      rect.setAttribute("rx", "8");
      group.appendChild(rect);

      const label = document.createElementNS("http://www.w3.org/2000/svg", "text");
      label.setAttribute("x", String(NODE_WIDTH / 2));
      label.setAttribute("y", String(NODE_HEIGHT / 2 + 4));
      label.setAttribute("text-anchor", "middle");
      label.textContent = agent.name;
      group.appendChild(label);

      group.addEventListener("mousedown", (event) => {
        event.stopPropagation();
        this.dragSource = agent.name;
      });
      group.addEventListener("mouseup", (event) => {
        event.stopPropagation();
        const source = this.dragSource;
        this.dragSource = null;
        if (source && source !== agent.name) {
          this.callbacks.onConnect(source, agent.name);
        } else {
          this.callbacks.onSelect({ kind: "agent", name: agent.name });
        }
      });
      this.svg.appendChild(group);
    }
  }

  agentNames(): string[] {
    return this.lan?.agents.map((a) => a.name) ?? [];
  }

  currentSelection(): Selection {
    return this.selection;
  }
}
