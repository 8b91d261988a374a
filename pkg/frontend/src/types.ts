// Wire types mirroring the session-service JSON bodies (api_version 1).

export interface KnowledgeDoc {
  text: string;
  origin: string;
  created_at: string;
}

export interface ExampleDoc {
  inputs: [string, string][];
  result: boolean | string;
  provenance: string;
}

export interface ControlDoc {
  enabled: boolean;
  required_predecessors: string[];
  knowledge: KnowledgeDoc[];
  examples: ExampleDoc[];
}

export interface ExecutionDoc {
  subtask_description: string;
  output_description: string;
  knowledge: KnowledgeDoc[];
  examples: ExampleDoc[];
}

export interface AgentDoc {
  name: string;
  control: ControlDoc;
  execution: ExecutionDoc;
}

export interface LanDoc {
  version: number;
  task_description: string;
  input_description: string;
  output_description: string;
  agents: AgentDoc[];
  edges: [string, string][];
}

export interface Violation {
  rule: string;
  [key: string]: unknown;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  violations: Violation[];
}

export interface TrainingExampleDoc {
  id: string;
  input: string;
  ground_truth: string;
}

export type StepName = "gap" | "cause" | "agent_cause" | "params" | "apply" | "done";

export type PipelineStatus =
  | "computing"
  | "awaiting_confirmation"
  | "satisfied"
  | "aborted";

export interface PipelineDoc {
  example: TrainingExampleDoc;
  iteration: number;
  current_step: StepName;
  status: PipelineStatus;
  strategy: string | null;
  error: string | null;
  step_results: Record<string, Record<string, unknown>>;
  last_trace?: unknown;
}

export interface RevisionMeta {
  revision: number;
  cause: string;
  parent: number | null;
}

export interface ConsoleEvent {
  type: "pipeline" | "revision" | "run";
  data: Record<string, unknown>;
}

// editable fields per pipeline step, mirroring the server-side templates
export const STEP_FIELDS: Record<string, string[]> = {
  gap: ["gap", "sub_task"],
  cause: ["reason_type", "agent_name", "reason_content"],
  agent_cause: ["reason_type", "reason_content"],
  params: ["parameters"],
};

export const PLACEHOLDER = "<???>";
