// Region 2: properties of the selected agent, or the draft form for a new
// one. Saving goes through PATCH (existing) or POST (draft); server-side
// violations come back inline and the form stays editable.

import type { AgentDoc, Violation } from "./types";

export interface InspectorCallbacks {
  onSave(draft: boolean, name: string, fields: InspectorFields): void;
}

export interface InspectorFields {
  name: string;
  subtask_description: string;
  output_description: string;
  enabled: boolean;
  cm_knowledge: string[];
  em_knowledge: string[];
}

export class InspectorView {
  root: HTMLElement;
  callbacks: InspectorCallbacks;
  private editingName: string | null = null;
  private draft = false;
  private form: HTMLFormElement;
  private errorBox: HTMLElement;
  private heading: HTMLElement;

  constructor(root: HTMLElement, callbacks: InspectorCallbacks) {
    this.root = root;
    this.callbacks = callbacks;
    root.classList.add("inspector-region");

    this.heading = document.createElement("h2");
    this.heading.textContent = "Agent";
    root.appendChild(this.heading);

    this.errorBox = document.createElement("div");
    this.errorBox.className = "violations";
    root.appendChild(this.errorBox);

    this.form = document.createElement("form");
    this.form.innerHTML = `
      <label>Name <input name="name" required></label>
      <label>Subtask <textarea name="subtask_description" rows="3"></textarea></label>
      <label>Output description <textarea name="output_description" rows="2"></textarea></label>
      <label class="inline"><input type="checkbox" name="enabled"> Control module enabled</label>
      <label>Control-module knowledge (one item per line)
        <textarea name="cm_knowledge" rows="3"></textarea></label>
      <label>Execution-module knowledge (one item per line)
        <textarea name="em_knowledge" rows="3"></textarea></label>
      <button type="submit" data-action="save-agent">Save</button>
    `;
    this.form.addEventListener("submit", (event) => {
      event.preventDefault();
      if (this.editingName === null && !this.draft) return;
      this.callbacks.onSave(this.draft, this.editingName ?? "", this.read());
    });
    this.form.hidden = true;
    root.appendChild(this.form);
  }

  private field<T extends HTMLElement>(name: string): T {
    return this.form.querySelector(`[name="${name}"]`) as T;
  }

  private read(): InspectorFields {
    const lines = (value: string) =>
      value.split("\n").map((l) => l.trim()).filter(Boolean);
    return {
      name: this.field<HTMLInputElement>("name").value.trim(),
      subtask_description: this.field<HTMLTextAreaElement>("subtask_description").value,
      output_description: this.field<HTMLTextAreaElement>("output_description").value,
      enabled: this.field<HTMLInputElement>("enabled").checked,
      cm_knowledge: lines(this.field<HTMLTextAreaElement>("cm_knowledge").value),
      em_knowledge: lines(this.field<HTMLTextAreaElement>("em_knowledge").value),
    };
  }

  showAgent(agent: AgentDoc) {
    this.draft = false;
    this.editingName = agent.name;
    this.heading.textContent = `Agent: ${agent.name}`;
    this.form.hidden = false;
    this.field<HTMLInputElement>("name").value = agent.name;
    this.field<HTMLTextAreaElement>("subtask_description").value =
      agent.execution.subtask_description;
    this.field<HTMLTextAreaElement>("output_description").value =
      agent.execution.output_description;
    this.field<HTMLInputElement>("enabled").checked = agent.control.enabled;
    this.field<HTMLTextAreaElement>("cm_knowledge").value = agent.control.knowledge
      .map((k) => k.text)
      .join("\n");
    this.field<HTMLTextAreaElement>("em_knowledge").value = agent.execution.knowledge
      .map((k) => k.text)
      .join("\n");
    this.showError(null);
  }

  showDraft() {
    this.draft = true;
    this.editingName = null;
    this.heading.textContent = "New agent";
    this.form.hidden = false;
    for (const name of ["name", "subtask_description", "output_description", "cm_knowledge", "em_knowledge"]) {
      (this.field<HTMLInputElement | HTMLTextAreaElement>(name)).value = "";
    }
    this.field<HTMLInputElement>("enabled").checked = true;
    this.showError(null);
  }

  clear() {
    this.draft = false;
    this.editingName = null;
    this.heading.textContent = "Agent";
    this.form.hidden = true;
    this.showError(null);
  }

  showError(message: string | null, violations: Violation[] = []) {
    if (!message) {
      this.errorBox.textContent = "";
      this.errorBox.classList.remove("active");
      return;
    }
    const details = violations.map((v) => JSON.stringify(v)).join("; ");
    this.errorBox.textContent = details ? `${message} (${details})` : message;
    this.errorBox.classList.add("active");
  }
}
