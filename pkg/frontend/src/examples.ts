// Region 3: provide training examples, start the pipeline, try one-off runs.

import type { TrainingExampleDoc } from "./types";

export interface ExamplesCallbacks {
  onAddExample(input: string, groundTruth: string): void;
  onStartPipeline(exampleId: string, policy: string): void;
  onRun(input: string): void;
}

export class ExamplesView {
  root: HTMLElement;
  callbacks: ExamplesCallbacks;
  private list: HTMLElement;
  private runOutput: HTMLElement;

  constructor(root: HTMLElement, callbacks: ExamplesCallbacks) {
    this.root = root;
    this.callbacks = callbacks;
    root.classList.add("examples-region");
    root.innerHTML = `
      <h2>Training examples</h2>
      <form class="example-form">
        <label>Input <textarea name="input" rows="2"></textarea></label>
        <label>Expected output <textarea name="ground_truth" rows="2"></textarea></label>
        <button type="submit" data-action="add-example">Add example</button>
      </form>
      <ul class="example-list"></ul>
      <h2>Run once</h2>
      <form class="run-form">
        <label>Input <textarea name="input" rows="2"></textarea></label>
        <button type="submit" data-action="run">Run</button>
      </form>
      <pre class="run-output"></pre>
    `;
    this.list = root.querySelector(".example-list")!;
    this.runOutput = root.querySelector(".run-output")!;

    const exampleForm = root.querySelector<HTMLFormElement>(".example-form")!;
    exampleForm.addEventListener("submit", (event) => {
      event.preventDefault();
      const input = exampleForm.querySelector<HTMLTextAreaElement>("[name=input]")!;
      const truth = exampleForm.querySelector<HTMLTextAreaElement>("[name=ground_truth]")!;
      if (!input.value || !truth.value) return;
      this.callbacks.onAddExample(input.value, truth.value);
      input.value = "";
      truth.value = "";
    });

    const runForm = root.querySelector<HTMLFormElement>(".run-form")!;
    runForm.addEventListener("submit", (event) => {
      event.preventDefault();
      const input = runForm.querySelector<HTMLTextAreaElement>("[name=input]")!;
      if (input.value) this.callbacks.onRun(input.value);
    });
  }

  renderQueue(queue: TrainingExampleDoc[], pipelineActive: boolean) {
    this.list.innerHTML = "";
    for (const example of queue) {
      const item = document.createElement("li");
      item.dataset.example = example.id;
      const text = document.createElement("span");
      text.textContent = `${example.id}: ${example.input} → ${example.ground_truth}`;
      item.appendChild(text);
      const train = document.createElement("button");
      train.textContent = "Train";
      train.dataset.action = "start-pipeline";
      train.dataset.example = example.id;
      train.disabled = pipelineActive;
      train.addEventListener("click", () =>
        this.callbacks.onStartPipeline(example.id, "interactive"),
      );
      item.appendChild(train);
      this.list.appendChild(item);
    }
  }

  showRunOutput(text: string) {
    this.runOutput.textContent = text;
  }
}
