// End-to-end: the console drives a real session service backed by the
// committed seven-update replay transcript. The rendered graph must grow
// into the golden network, a cycle-creating drag must be rejected inline,
// and the placeholder shortcut must reach the server in the retry payload.

import { spawn, ChildProcess } from "node:child_process";
import { readFileSync } from "node:fs";
import { createInterface } from "node:readline";
import { fileURLToPath } from "node:url";
import { dirname, join } from "node:path";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api";
import { ConsoleApp } from "../src/app";

const HERE = dirname(fileURLToPath(import.meta.url));
const REPO_ROOT = join(HERE, "..", "..");

// mirrors tests/fixtures/fig4_scenario.py
const TASK = "Translate French text to English";
const INPUT_DESC = "A French text";
const OUTPUT_DESC = "The English translation";
const FINAL_AGENTS = [
  "Rhyming Polisher",
  "Structure Refiner",
  "Spoken Text Translator",
  "Literary Text Translator",
];
const FINAL_EDGES = [
  ["Structure Refiner", "Rhyming Polisher"],
  ["Spoken Text Translator", "Rhyming Polisher"],
  ["Spoken Text Translator", "Structure Refiner"],
  ["Literary Text Translator", "Rhyming Polisher"],
  ["Literary Text Translator", "Structure Refiner"],
];

let server: ChildProcess;
let base = "";

async function waitFor<T>(
  probe: () => Promise<T | null> | T | null,
  what: string,
  timeoutMs = 30000,
): Promise<T> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    const value = await probe();
    if (value !== null && value !== undefined && value !== false) {
      return value as T;
    }
    await new Promise((resolve) => setTimeout(resolve, 25));
  }
  throw new Error(`timed out waiting for ${what}`);
}

beforeAll(async () => {
  server = spawn("python3", [join(HERE, "server.py")], {
    cwd: REPO_ROOT,
    stdio: ["ignore", "pipe", "inherit"],
  });
  const port = await new Promise<number>((resolve, reject) => {
    const lines = createInterface({ input: server.stdout! });
    lines.once("line", (line) => resolve(JSON.parse(line).port));
    server.once("exit", (code) => reject(new Error(`server exited: ${code}`)));
    setTimeout(() => reject(new Error("server start timeout")), 30000);
  });
  base = `http://127.0.0.1:${port}`;
  await waitFor(async () => {
    try {
      const response = await fetch(`${base}/sessions`);
      return response.ok;
    } catch {
      return false;
    }
  }, "server readiness");
});

afterAll(() => {
  server?.kill();
});

function mountApp(api: ApiClient, sessionId: string): ConsoleApp {
  document.body.innerHTML = '<div id="app"></div>';
  return new ConsoleApp(document.getElementById("app")!, api, sessionId);
}

async function settledPipeline(app: ConsoleApp) {
  return waitFor(async () => {
    const doc = await app.syncPipeline();
    if (!doc) return null;
    return doc.status === "computing" ? null : doc;
  }, "pipeline to settle");
}

describe("console against the replay-backed service", () => {
  it("confirm-walks the seven-update scenario and renders the final graph", async () => {
    const api = new ApiClient(base);
    const created = await api.createSession(TASK, INPUT_DESC, OUTPUT_DESC);
    const sessionId = created.session.id;
    const app = mountApp(api, sessionId);
    await app.attach();

    // enter the training examples through Region 3's form
    const examples = JSON.parse(
      readFileSync(
        join(REPO_ROOT, "tests", "fixtures", "fig4_examples.json"),
        "utf-8",
      ),
    ) as Array<{ input: string; ground_truth: string }>;
    const form = document.querySelector<HTMLFormElement>(".example-form")!;
    for (const example of examples) {
      form.querySelector<HTMLTextAreaElement>("[name=input]")!.value =
        example.input;
      form.querySelector<HTMLTextAreaElement>("[name=ground_truth]")!.value =
        example.ground_truth;
      form.dispatchEvent(new Event("submit", { bubbles: true, cancelable: true }));
      await waitFor(
        () =>
          document.querySelectorAll(".example-list li").length >=
          examples.indexOf(example) + 1,
        "example to appear in the queue",
      );
    }

    for (let index = 0; index < examples.length; index += 1) {
      const exampleId = `ex-${String(index + 1).padStart(3, "0")}`;
      await app.refresh();
      const trainButton = await waitFor(
        () =>
          document.querySelector<HTMLButtonElement>(
            `button[data-action="start-pipeline"][data-example="${exampleId}"]:not(:disabled)`,
          ),
        `train button for ${exampleId}`,
      ).catch(async (error) => {
        const buttons = [
          ...document.querySelectorAll<HTMLButtonElement>(
            'button[data-action="start-pipeline"]',
          ),
        ].map((b) => `${b.dataset.example}:${b.disabled}`);
        const session = await fetch(`${base}/sessions/${sessionId}`).then((r) =>
          r.json(),
        );
        throw new Error(
          `${error.message}; buttons=${buttons.join(",")}; ` +
            `session=${JSON.stringify(session.session)}`,
        );
      });
      trainButton.click();
      // wait until the service reports a settled pipeline for THIS example
      let pipeline = await waitFor(async () => {
        const doc = await app.syncPipeline();
        if (!doc || doc.example.id !== exampleId) return null;
        return doc.status === "computing" ? null : doc;
      }, `pipeline for ${exampleId} to settle`);
      let guard = 0;
      while (pipeline.status === "awaiting_confirmation") {
        expect(guard++).toBeLessThan(12);
        const before = `${pipeline.iteration}|${pipeline.current_step}|${pipeline.status}`;
        document
          .querySelector<HTMLButtonElement>('[data-action="confirm"]')!
          .click();
        pipeline = await waitFor(async () => {
          const doc = await app.syncPipeline();
          if (!doc || doc.example.id !== exampleId) return null;
          if (doc.status === "computing") return null;
          const signature = `${doc.iteration}|${doc.current_step}|${doc.status}`;
          return signature === before ? null : doc;
        }, `confirm on ${exampleId} to land`);
      }
      expect(pipeline.status).toBe("satisfied");
    }

    // the rendered graph gained the expected agents and edges
    await app.refreshLan();
    const nodes = [...document.querySelectorAll<SVGGElement>(".agent-node")].map(
      (node) => node.dataset.agent,
    );
    expect(new Set(nodes)).toEqual(new Set(FINAL_AGENTS));
    const edges = [...document.querySelectorAll<SVGLineElement>(".edge")].map(
      (edge) => [edge.dataset.source, edge.dataset.target],
    );
    expect(new Set(edges.map((e) => e.join(" -> ")))).toEqual(
      new Set(FINAL_EDGES.map((e) => e.join(" -> "))),
    );
  }, 120000);

  it("rejects a cycle-creating drag inline and keeps the graph unchanged", async () => {
    const api = new ApiClient(base);
    const sessions = await api.listSessions();
    const sessionId = sessions.sessions[0];
    const app = mountApp(api, sessionId);
    await app.attach();

    const edgesBefore = document.querySelectorAll(".edge").length;
    // Structure Refiner -> Rhyming Polisher exists; dragging the polisher
    // onto the refiner would close a cycle
    const polisher = document.querySelector<SVGGElement>(
      '.agent-node[data-agent="Rhyming Polisher"]',
    )!;
    const refiner = document.querySelector<SVGGElement>(
      '.agent-node[data-agent="Structure Refiner"]',
    )!;
    polisher.dispatchEvent(new MouseEvent("mousedown", { bubbles: true }));
    refiner.dispatchEvent(new MouseEvent("mouseup", { bubbles: true }));

    await waitFor(
      () => document.querySelector(".violations.active") !== null,
      "inline violation",
    );
    const violations = document.querySelector(".graph-region .violations")!;
    expect(violations.textContent).toContain("cycle");
    expect(document.querySelectorAll(".edge").length).toBe(edgesBefore);
  }, 60000);

  it("sends the placeholder shortcut through the retry payload", async () => {
    const recorded: Array<{ url: string; body?: unknown }> = [];
    const recordingFetch = async (url: string, init?: RequestInit) => {
      recorded.push({
        url,
        body: init?.body ? JSON.parse(init.body as string) : undefined,
      });
      return fetch(url, init);
    };
    const api = new ApiClient(base, recordingFetch);
    const created = await api.createSession(
      "A task beyond the transcript",
      "an input",
      "an output",
    );
    const sessionId = created.session.id;
    const app = mountApp(api, sessionId);
    await app.attach();
    await api.addExample(sessionId, "placeholder input", "unreachable truth");
    await app.startPipeline("ex-001", "interactive");
    const pipeline = await settledPipeline(app);
    expect(pipeline.status).toBe("awaiting_confirmation");
    expect(pipeline.current_step).toBe("gap");

    // the "click a field to set it as a placeholder" shortcut...
    document
      .querySelector<HTMLButtonElement>('.field-chip[data-field="gap"]')!
      .click();
    const editor = document.querySelector<HTMLTextAreaElement>(".step-editor")!;
    expect(editor.value).toContain("<???>");

    // ...round-trips to the server in the retry payload
    document.querySelector<HTMLButtonElement>('[data-action="retry"]')!.click();
    await waitFor(
      () => recorded.some((r) => r.url.endsWith("/pipeline/retry")),
      "retry request",
    );
    const retry = recorded.find((r) => r.url.endsWith("/pipeline/retry"))!;
    const body = retry.body as { edited_document: Record<string, unknown> };
    expect(body.edited_document.gap).toBe("<???>");

    // the engine auto-completes the placeholder and pauses again
    const after = await settledPipeline(app);
    expect(after.status).toBe("awaiting_confirmation");
    expect(after.step_results.gap.gap).not.toBe("<???>");
  }, 60000);
});
