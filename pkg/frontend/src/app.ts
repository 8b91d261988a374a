// The console application: four regions wired to the session service.
// All state of record lives on the server; the app renders what it fetches
// and refreshes on server-sent events, so a reload reconstructs everything.

import { ApiClient, ApiError } from "./api";
import { ExamplesView } from "./examples";
import { GraphView, Selection } from "./graph";
import { InspectorView, InspectorFields } from "./inspector";
import { PipelineView } from "./pipeline";
import type { LanDoc, PipelineDoc, TrainingExampleDoc } from "./types";

export class ConsoleApp {
  api: ApiClient;
  sessionId: string;
  graph: GraphView;
  inspector: InspectorView;
  examples: ExamplesView;
  pipeline: PipelineView;

  lan: LanDoc | null = null;
  queue: TrainingExampleDoc[] = [];
  pipelineDoc: PipelineDoc | null = null;
  selection: Selection = null;
  private unsubscribe: () => void = () => {};

  constructor(root: HTMLElement, api: ApiClient, sessionId: string) {
    this.api = api;
    this.sessionId = sessionId;
    root.classList.add("console");
    root.innerHTML = `
      <div class="region region-graph"></div>
      <div class="region region-inspector"></div>
      <div class="region region-examples"></div>
      <div class="region region-pipeline"></div>
    `;
    this.graph = new GraphView(root.querySelector(".region-graph")!, {
      onSelect: (selection) => this.select(selection),
      onConnect: (source, target) => void this.connect(source, target),
      onNewAgent: () => {
        this.selection = null;
        this.inspector.showDraft();
      },
    });
    this.inspector = new InspectorView(root.querySelector(".region-inspector")!, {
      onSave: (draft, name, fields) => void this.saveAgent(draft, name, fields),
    });
    this.examples = new ExamplesView(root.querySelector(".region-examples")!, {
      onAddExample: (input, truth) => void this.addExample(input, truth),
      onStartPipeline: (exampleId, policy) => void this.startPipeline(exampleId, policy),
      onRun: (input) => void this.run(input),
    });
    this.pipeline = new PipelineView(root.querySelector(".region-pipeline")!, {
      onConfirm: () => void this.confirm(),
      onRetry: (intervention) => void this.retry(intervention),
      onAbort: () => void this.abort(),
    });

    document.addEventListener("keydown", (event) => {
      if (event.key !== "Delete") return;
      const target = event.target as HTMLElement | null;
      if (target && ["INPUT", "TEXTAREA"].includes(target.tagName)) return;
      void this.deleteSelection();
    });
  }

  async attach(): Promise<void> {
    await this.refresh();
    this.unsubscribe = this.api.subscribe(this.sessionId, (event) => {
      if (event.type === "pipeline") {
        this.pipelineDoc = event.data as unknown as PipelineDoc;
        this.pipeline.render(this.pipelineDoc);
      } else if (event.type === "revision") {
        void this.refreshLan();
      }
    });
  }

  detach(): void {
    this.unsubscribe();
  }

  async refresh(): Promise<void> {
    await this.refreshLan();
    const session = await this.api.getSession(this.sessionId);
    this.queue = session.session.queue;
    this.examples.renderQueue(this.queue, session.session.pipeline_active);
    try {
      this.pipelineDoc = (await this.api.getPipeline(this.sessionId)).pipeline;
    } catch (error) {
      if (error instanceof ApiError && error.status === 404) {
        this.pipelineDoc = null;
      } else {
        throw error;
      }
    }
    this.pipeline.render(this.pipelineDoc);
  }

  async refreshLan(): Promise<void> {
    const body = await this.api.getLan(this.sessionId);
    this.lan = body.lan;
    // drop a selection that no longer exists
    if (this.selection?.kind === "agent") {
      const name = this.selection.name;
      if (!this.lan.agents.some((a) => a.name === name)) this.selection = null;
    } else if (this.selection?.kind === "edge") {
      const { source, target } = this.selection;
      if (!this.lan.edges.some(([s, t]) => s === source && t === target)) {
        this.selection = null;
      }
    }
    this.graph.render(this.lan, this.selection);
  }

  select(selection: Selection): void {
    this.selection = selection;
    if (this.lan) this.graph.render(this.lan, selection);
    if (selection?.kind === "agent" && this.lan) {
      const agent = this.lan.agents.find((a) => a.name === selection.name);
      if (agent) this.inspector.showAgent(agent);
    } else {
      this.inspector.clear();
    }
  }

  async connect(source: string, target: string): Promise<void> {
    this.graph.showViolations([]);
    try {
      const body = await this.api.addEdge(this.sessionId, source, target);
      this.lan = body.lan;
      this.graph.render(this.lan, this.selection);
    } catch (error) {
      if (error instanceof ApiError) {
        // rejected edits never reach the rendered graph
        this.graph.showViolations(error.body.violations, error.body.message);
        return;
      }
      throw error;
    }
  }

  async deleteSelection(): Promise<void> {
    if (!this.selection) return;
    try {
      if (this.selection.kind === "agent") {
        await this.api.deleteAgent(this.sessionId, this.selection.name);
      } else {
        await this.api.deleteEdge(
          this.sessionId,
          this.selection.source,
          this.selection.target,
        );
      }
      this.selection = null;
      this.inspector.clear();
      await this.refreshLan();
    } catch (error) {
      if (error instanceof ApiError) {
        this.graph.showViolations(error.body.violations, error.body.message);
        return;
      }
      throw error;
    }
  }

  async saveAgent(draft: boolean, name: string, fields: InspectorFields): Promise<void> {
    try {
      if (draft) {
        await this.api.addAgent(this.sessionId, {
          name: fields.name,
          subtask_description: fields.subtask_description,
          output_description: fields.output_description,
          enabled: fields.enabled,
        });
        if (fields.cm_knowledge.length || fields.em_knowledge.length) {
          await this.api.patchAgent(this.sessionId, fields.name, {
            cm_knowledge: fields.cm_knowledge,
            em_knowledge: fields.em_knowledge,
          });
        }
      } else {
        await this.api.patchAgent(this.sessionId, name, {
          name: fields.name,
          subtask_description: fields.subtask_description,
          output_description: fields.output_description,
          enabled: fields.enabled,
          cm_knowledge: fields.cm_knowledge,
          em_knowledge: fields.em_knowledge,
        });
      }
      this.selection = { kind: "agent", name: fields.name };
      await this.refreshLan();
      const agent = this.lan?.agents.find((a) => a.name === fields.name);
      if (agent) this.inspector.showAgent(agent);
    } catch (error) {
      if (error instanceof ApiError) {
        this.inspector.showError(error.body.message, error.body.violations);
        return;
      }
      throw error;
    }
  }

  async addExample(input: string, truth: string): Promise<void> {
    await this.api.addExample(this.sessionId, input, truth);
    const session = await this.api.getSession(this.sessionId);
    this.queue = session.session.queue;
    this.examples.renderQueue(this.queue, session.session.pipeline_active);
  }

  async startPipeline(exampleId: string, policy: string): Promise<void> {
    const body = await this.api.startPipeline(this.sessionId, exampleId, policy);
    this.pipelineDoc = body.pipeline;
    this.pipeline.render(this.pipelineDoc);
  }

  async run(input: string): Promise<void> {
    try {
      const body = await this.api.run(this.sessionId, input);
      this.examples.showRunOutput(body.trace.final_output);
    } catch (error) {
      if (error instanceof ApiError) {
        this.examples.showRunOutput(`error: ${error.body.message}`);
        return;
      }
      throw error;
    }
  }

  async confirm(): Promise<void> {
    const body = await this.api.confirm(this.sessionId);
    this.pipelineDoc = body.pipeline;
    this.pipeline.render(this.pipelineDoc);
  }

  async retry(intervention: {
    edited_document?: Record<string, unknown>;
    hint_text?: string;
  }): Promise<void> {
    try {
      const body = await this.api.retry(this.sessionId, intervention);
      this.pipelineDoc = body.pipeline;
      this.pipeline.render(this.pipelineDoc);
    } catch (error) {
      if (error instanceof ApiError) {
        this.pipeline.render(this.pipelineDoc);
        return;
      }
      throw error;
    }
  }

  async abort(): Promise<void> {
    const body = await this.api.abort(this.sessionId);
    this.pipelineDoc = body.pipeline;
    this.pipeline.render(this.pipelineDoc);
  }

  /** Poll-free refresh used by tests and after reconnects. */
  async syncPipeline(): Promise<PipelineDoc | null> {
    try {
      this.pipelineDoc = (await this.api.getPipeline(this.sessionId)).pipeline;
    } catch (error) {
      if (error instanceof ApiError && error.status === 404) {
        this.pipelineDoc = null;
      } else {
        throw error;
      }
    }
    this.pipeline.render(this.pipelineDoc);
    return this.pipelineDoc;
  }
}
