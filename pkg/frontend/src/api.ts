// Thin typed client over the session-service HTTP API. Every mutation the
// console performs goes through here; no console-only state exists.

import type {
  ApiErrorBody,
  ConsoleEvent,
  LanDoc,
  PipelineDoc,
  RevisionMeta,
  TrainingExampleDoc,
} from "./types";

export class ApiError extends Error {
  status: number;
  body: ApiErrorBody;

  constructor(status: number, body: ApiErrorBody) {
    super(`${body.code}: ${body.message}`);
    this.status = status;
    this.body = body;
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  base: string;
  fetcher: FetchLike;

  constructor(base: string, fetcher?: FetchLike) {
    this.base = base.replace(/\/$/, "");
    this.fetcher = fetcher ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    const init: RequestInit = { method, headers: {} };
    if (body !== undefined) {
      (init.headers as Record<string, string>)["Content-Type"] = "application/json";
      init.body = JSON.stringify(body);
    }
    const response = await this.fetcher(`${this.base}${path}`, init);
    const text = await response.text();
    const parsed = text ? JSON.parse(text) : {};
    if (!response.ok) {
      throw new ApiError(response.status, parsed as ApiErrorBody);
    }
    return parsed as T;
  }

  // -- sessions

  createSession(task: string, input: string, output: string) {
    return this.request<{ session: { id: string }; lan: LanDoc }>(
      "POST",
      "/sessions",
      {
        task_description: task,
        input_description: input,
        output_description: output,
      },
    );
  }

  listSessions() {
    return this.request<{ sessions: string[] }>("GET", "/sessions");
  }

  getLan(sessionId: string) {
    return this.request<{ revision: number; lan: LanDoc }>(
      "GET",
      `/sessions/${sessionId}/lan`,
    );
  }

  putLan(sessionId: string, lan: LanDoc) {
    return this.request<{ revision: number; lan: LanDoc }>(
      "PUT",
      `/sessions/${sessionId}/lan`,
      { lan },
    );
  }

  getSession(sessionId: string) {
    return this.request<{
      session: {
        id: string;
        queue: TrainingExampleDoc[];
        revisions: number;
        pipeline_active: boolean;
      };
    }>("GET", `/sessions/${sessionId}`);
  }

  // -- structural edits

  addAgent(
    sessionId: string,
    agent: { name: string; subtask_description: string; output_description: string; enabled?: boolean },
  ) {
    return this.request<{ revision: number; lan: LanDoc }>(
      "POST",
      `/sessions/${sessionId}/lan/agents`,
      agent,
    );
  }

  deleteAgent(sessionId: string, name: string) {
    return this.request<{ revision: number; lan: LanDoc }>(
      "DELETE",
      `/sessions/${sessionId}/lan/agents/${encodeURIComponent(name)}`,
    );
  }

  patchAgent(sessionId: string, name: string, patch: Record<string, unknown>) {
    return this.request<{ revision: number; lan: LanDoc }>(
      "PATCH",
      `/sessions/${sessionId}/lan/agents/${encodeURIComponent(name)}`,
      patch,
    );
  }

  addEdge(sessionId: string, source: string, target: string) {
    return this.request<{ revision: number; lan: LanDoc }>(
      "POST",
      `/sessions/${sessionId}/lan/edges`,
      { source, target },
    );
  }

  deleteEdge(sessionId: string, source: string, target: string) {
    const query = new URLSearchParams({ source, target });
    return this.request<{ revision: number; lan: LanDoc }>(
      "DELETE",
      `/sessions/${sessionId}/lan/edges?${query}`,
    );
  }

  // -- execution and training

  run(sessionId: string, input: string) {
    return this.request<{ trace: { final_output: string } }>(
      "POST",
      `/sessions/${sessionId}/run`,
      { input },
    );
  }

  addExample(sessionId: string, input: string, groundTruth: string) {
    return this.request<{ example: TrainingExampleDoc }>(
      "POST",
      `/sessions/${sessionId}/examples`,
      { input, ground_truth: groundTruth },
    );
  }

  startPipeline(sessionId: string, exampleId: string, policy: string) {
    return this.request<{ pipeline: PipelineDoc }>(
      "POST",
      `/sessions/${sessionId}/pipeline/start`,
      { example_id: exampleId, policy },
    );
  }

  getPipeline(sessionId: string) {
    return this.request<{ pipeline: PipelineDoc }>(
      "GET",
      `/sessions/${sessionId}/pipeline`,
    );
  }

  confirm(sessionId: string) {
    return this.request<{ pipeline: PipelineDoc }>(
      "POST",
      `/sessions/${sessionId}/pipeline/confirm`,
    );
  }

  retry(
    sessionId: string,
    intervention: { edited_document?: Record<string, unknown>; hint_text?: string },
  ) {
    return this.request<{ pipeline: PipelineDoc }>(
      "POST",
      `/sessions/${sessionId}/pipeline/retry`,
      intervention,
    );
  }

  abort(sessionId: string) {
    return this.request<{ pipeline: PipelineDoc }>(
      "POST",
      `/sessions/${sessionId}/pipeline/abort`,
    );
  }

  listRevisions(sessionId: string) {
    return this.request<{ revisions: RevisionMeta[] }>(
      "GET",
      `/sessions/${sessionId}/revisions`,
    );
  }

  // -- events

  /** Replay the event backlog (the finite SSE variant). */
  async eventsOnce(sessionId: string): Promise<ConsoleEvent[]> {
    const response = await this.fetcher(
      `${this.base}/sessions/${sessionId}/events?once=true`,
      {},
    );
    const text = await response.text();
    const events: ConsoleEvent[] = [];
    let type = "";
    for (const line of text.split("\n")) {
      if (line.startsWith("event: ")) {
        type = line.slice("event: ".length);
      } else if (line.startsWith("data: ")) {
        events.push({
          type: type as ConsoleEvent["type"],
          data: JSON.parse(line.slice("data: ".length)),
        });
      }
    }
    return events;
  }

  /** Live server-sent events; returns a closer. Falls back to nothing when
   * EventSource is unavailable (tests refresh explicitly). */
  subscribe(
    sessionId: string,
    onEvent: (event: ConsoleEvent) => void,
  ): () => void {
    const EventSourceCtor = (globalThis as { EventSource?: typeof EventSource })
      .EventSource;
    if (!EventSourceCtor) {
      return () => {};
    }
    const source = new EventSourceCtor(
      `${this.base}/sessions/${sessionId}/events`,
    );
    for (const type of ["pipeline", "revision", "run"] as const) {
      source.addEventListener(type, (message) => {
        onEvent({ type, data: JSON.parse((message as MessageEvent).data) });
      });
    }
    return () => source.close();
  }
}
