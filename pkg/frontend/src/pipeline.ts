// Region 4: supervision of the update pipeline. The current step's result
// is shown in an editable JSON document editor; fields can be set to the
// "<???>" placeholder for the engine to auto-complete, a hint can steer the
// recomputation, and Confirm/Retry drive the pipeline forward.

import { PLACEHOLDER, STEP_FIELDS } from "./types";
import type { PipelineDoc } from "./types";

export interface PipelineCallbacks {
  onConfirm(): void;
  onRetry(intervention: { edited_document?: Record<string, unknown>; hint_text?: string }): void;
  onAbort(): void;
}

export interface DocumentCheck {
  ok: boolean;
  doc?: Record<string, unknown>;
  errors: string[];
}

export function setFieldPlaceholder(docText: string, field: string): string {
  let doc: Record<string, unknown>;
  try {
    doc = JSON.parse(docText);
  } catch {
    doc = {};
  }
  doc[field] = PLACEHOLDER;
  return JSON.stringify(doc, null, 2);
}

export function insertAtCursor(area: HTMLTextAreaElement, text: string): void {
  const start = area.selectionStart ?? area.value.length;
  const end = area.selectionEnd ?? start;
  area.value = area.value.slice(0, start) + text + area.value.slice(end);
  const cursor = start + text.length;
  area.selectionStart = cursor;
  area.selectionEnd = cursor;
}

/** Client-side gate for edited documents: valid JSON object whose keys all
 * belong to the step's template; the error list is the diff. */
export function checkEditedDocument(text: string, step: string): DocumentCheck {
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch (error) {
    return { ok: false, errors: [`not valid JSON: ${(error as Error).message}`] };
  }
  if (typeof doc !== "object" || doc === null || Array.isArray(doc)) {
    return { ok: false, errors: ["the document must be a JSON object"] };
  }
  const allowed = STEP_FIELDS[step] ?? [];
  const keys = Object.keys(doc as Record<string, unknown>);
  const unexpected = keys.filter((key) => !allowed.includes(key));
  if (unexpected.length) {
    return {
      ok: false,
      errors: [
        `fields not in the ${step} template: ${unexpected.join(", ")} ` +
          `(expected a subset of: ${allowed.join(", ")})`,
      ],
    };
  }
  return { ok: true, doc: doc as Record<string, unknown>, errors: [] };
}

const REASON_QUICK_SETS: [string, string][] = [
  ["Poor performance", "poor_performance"],
  ["Lack of agents", "missing_agent"],
];

export class PipelineView {
  root: HTMLElement;
  callbacks: PipelineCallbacks;
  private statusLine: HTMLElement;
  private errorBox: HTMLElement;
  private fieldChips: HTMLElement;
  private editor: HTMLTextAreaElement;
  private hint: HTMLTextAreaElement;
  private confirmButton: HTMLButtonElement;
  private retryButton: HTMLButtonElement;
  private clientErrors: HTMLElement;
  private renderedStep: string | null = null;
  private dirty = false;

  constructor(root: HTMLElement, callbacks: PipelineCallbacks) {
    this.root = root;
    this.callbacks = callbacks;
    root.classList.add("pipeline-region");
    root.innerHTML = `
      <h2>Update pipeline</h2>
      <div class="pipeline-status">no pipeline yet</div>
      <div class="violations pipeline-error"></div>
      <div class="field-chips"></div>
      <textarea class="step-editor" rows="10" spellcheck="false"></textarea>
      <div class="violations client-errors"></div>
      <div class="editor-tools">
        <button type="button" data-action="insert-placeholder">Insert ${PLACEHOLDER} at cursor</button>
      </div>
      <label class="hint-label">Hint for the engine
        <textarea class="hint" rows="2"></textarea></label>
      <div class="pipeline-actions">
        <button type="button" data-action="confirm">Confirm</button>
        <button type="button" data-action="retry">Retry</button>
        <button type="button" data-action="abort">Abort</button>
      </div>
    `;
    this.statusLine = root.querySelector(".pipeline-status")!;
    this.errorBox = root.querySelector(".pipeline-error")!;
    this.fieldChips = root.querySelector(".field-chips")!;
    this.editor = root.querySelector(".step-editor")!;
    this.hint = root.querySelector(".hint")!;
    this.clientErrors = root.querySelector(".client-errors")!;
    this.confirmButton = root.querySelector('[data-action="confirm"]')!;
    this.retryButton = root.querySelector('[data-action="retry"]')!;

    this.editor.addEventListener("input", () => {
      this.dirty = true;
      this.validate();
    });
    root
      .querySelector('[data-action="insert-placeholder"]')!
      .addEventListener("click", () => {
        insertAtCursor(this.editor, PLACEHOLDER);
        this.dirty = true;
        this.validate();
      });
    this.confirmButton.addEventListener("click", () => this.callbacks.onConfirm());
    this.retryButton.addEventListener("click", () => this.submitRetry());
    root
      .querySelector('[data-action="abort"]')!
      .addEventListener("click", () => this.callbacks.onAbort());
  }

  /** The intervention the Retry button would submit right now. */
  buildIntervention(): {
    edited_document?: Record<string, unknown>;
    hint_text?: string;
  } | null {
    const intervention: {
      edited_document?: Record<string, unknown>;
      hint_text?: string;
    } = {};
    if (this.dirty) {
      const check = checkEditedDocument(this.editor.value, this.renderedStep ?? "");
      if (!check.ok) return null;
      intervention.edited_document = check.doc;
    }
    if (this.hint.value.trim()) {
      intervention.hint_text = this.hint.value.trim();
    }
    if (intervention.edited_document === undefined && !intervention.hint_text) {
      return null;
    }
    return intervention;
  }

  private submitRetry() {
    const intervention = this.buildIntervention();
    if (intervention) {
      this.callbacks.onRetry(intervention);
      this.hint.value = "";
    }
  }

  private validate() {
    if (!this.dirty) {
      this.clientErrors.textContent = "";
      this.clientErrors.classList.remove("active");
      this.retryButton.disabled = false;
      return;
    }
    const check = checkEditedDocument(this.editor.value, this.renderedStep ?? "");
    if (check.ok) {
      this.clientErrors.textContent = "";
      this.clientErrors.classList.remove("active");
      this.retryButton.disabled = false;
    } else {
      this.clientErrors.textContent = check.errors.join("; ");
      this.clientErrors.classList.add("active");
      this.retryButton.disabled = true;
    }
  }

  setFieldToPlaceholder(field: string) {
    this.editor.value = setFieldPlaceholder(this.editor.value, field);
    this.dirty = true;
    this.validate();
  }

  render(pipeline: PipelineDoc | null) {
    if (!pipeline) {
      this.statusLine.textContent = "no pipeline yet";
      return;
    }
    const { current_step: step, status, iteration, strategy } = pipeline;
    this.statusLine.textContent =
      `example ${pipeline.example.id} · iteration ${iteration} · ` +
      `step ${step} · ${status}` +
      (strategy ? ` · strategy ${strategy}` : "");
    this.statusLine.dataset.status = status;
    this.statusLine.dataset.step = step;

    if (pipeline.error) {
      this.errorBox.textContent = pipeline.error;
      this.errorBox.classList.add("active");
    } else {
      this.errorBox.textContent = "";
      this.errorBox.classList.remove("active");
    }

    const awaiting = status === "awaiting_confirmation";
    this.confirmButton.disabled = !awaiting;
    this.retryButton.disabled = !awaiting;

    const result = pipeline.step_results[step];
    const freshStep = this.renderedStep !== step;
    if (freshStep || !this.dirty) {
      this.editor.value = result ? JSON.stringify(result, null, 2) : "";
      this.dirty = false;
      this.renderedStep = step;
      this.validate();
    }

    this.fieldChips.innerHTML = "";
    for (const field of STEP_FIELDS[step] ?? []) {
      const chip = document.createElement("button");
      chip.type = "button";
      chip.className = "field-chip";
      chip.dataset.field = field;
      chip.textContent = `${field} → ${PLACEHOLDER}`;
      chip.addEventListener("click", () => this.setFieldToPlaceholder(field));
      this.fieldChips.appendChild(chip);
    }
    if (step === "cause") {
      for (const [label, value] of REASON_QUICK_SETS) {
        const quick = document.createElement("button");
        quick.type = "button";
        quick.className = "quick-set";
        quick.dataset.reason = value;
        quick.textContent = label;
        quick.addEventListener("click", () => {
          let doc: Record<string, unknown>;
          try {
            doc = JSON.parse(this.editor.value);
          } catch {
            doc = {};
          }
          doc["reason_type"] = value;
          this.editor.value = JSON.stringify(doc, null, 2);
          this.dirty = true;
          this.validate();
        });
        this.fieldChips.appendChild(quick);
      }
    }
  }
}
