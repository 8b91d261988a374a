"""Execution of a LAN on one input.

One run walks the agents in topological order. Each agent's control module
gates activation (answering via the backend unless short-circuited), the
execution module computes the agent's output, and the output module forwards
the received entries plus, when activated, one new entry under the agent's
own name. Everything is captured in a RunTrace.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .gateway import AbortedError, Backend, CompletionRequest
from .model import (
    EXTERNAL_INPUT_LABEL,
    Agent,
    InvalidLanError,
    Lan,
    NamedValues,
    lan_from_doc,
    lan_to_doc,
    topological_order,
    validate_lan,
)

DEFAULT_REPAIR_BUDGET = 3
EM_TEMPERATURE = 0.7  # execution output benefits from sampling
CONTROL_TEMPERATURE = 0.0  # activation decisions and repairs stay reproducible


class FormatError(Exception):
    """The backend never produced a conforming JSON answer within budget."""

    def __init__(self, attempts: list[str], reason: str):
        self.attempts = attempts
        self.reason = reason
        super().__init__(
            f"no conforming answer after {len(attempts)} attempt(s): {reason}"
        )


class ExecutionAborted(Exception):
    """A run was cancelled; carries the partial trace collected so far."""

    def __init__(self, partial_trace: "RunTrace"):
        self.partial_trace = partial_trace
        super().__init__("execution aborted")


class TemplateMismatch(ValueError):
    pass


@dataclass
class TemplateField:
    name: str
    kind: str  # "string" | "boolean" | "object"
    placeholder: str
    required: bool = True


@dataclass
class JsonTemplate:
    """Expected shape of a JSON answer, both for prompting and parsing."""

    fields: list[TemplateField]
    validator: object = None  # callable(dict) -> error string | None

    def render(self) -> str:
        parts = []
        for f in self.fields:
            if f.kind == "string":
                parts.append(f'"{f.name}": "{f.placeholder}"')
            else:
                parts.append(f'"{f.name}": {f.placeholder}')
        return "{" + ", ".join(parts) + "}"

    def parse(self, raw: str) -> dict:
        try:
            value = json.loads(raw.strip())
        except json.JSONDecodeError as exc:
            raise TemplateMismatch(f"not valid JSON: {exc.msg}")
        if not isinstance(value, dict):
            raise TemplateMismatch("answer must be a JSON object")
        for f in self.fields:
            if f.name not in value:
                if f.required:
                    raise TemplateMismatch(f"missing field {f.name!r}")
                continue
            got = value[f.name]
            if f.kind == "string" and not isinstance(got, str):
                raise TemplateMismatch(f"field {f.name!r} must be a string")
            if f.kind == "boolean" and not isinstance(got, bool):
                raise TemplateMismatch(f"field {f.name!r} must be a boolean")
            if f.kind == "object" and not isinstance(got, dict):
                raise TemplateMismatch(f"field {f.name!r} must be an object")
        if self.validator is not None:
            error = self.validator(value)
            if error:
                raise TemplateMismatch(error)
        return value


CM_ANSWER = JsonTemplate(
    [
        TemplateField("thought", "string", "<your reasoning>"),
        TemplateField("result", "boolean", "<true or false>"),
    ]
)
EM_ANSWER = JsonTemplate(
    [
        TemplateField("thought", "string", "<your reasoning>"),
        TemplateField("result", "string", "<the output of the subtask>"),
    ]
)


def reformat_prompt(raw: str, template: JsonTemplate, reason: str) -> str:
    return (
        "The following answer does not conform to the required JSON format.\n"
        "\n"
        "Answer:\n"
        f"{raw}\n"
        "\n"
        "Required JSON template:\n"
        f"{template.render()}\n"
        "\n"
        f"Problem: {reason}\n"
        "\n"
        "Rewrite the answer as a single JSON object that exactly follows the "
        "template. Output only the JSON object."
    )


def parse_or_reformat(
    raw: str,
    template: JsonTemplate,
    backend: Backend,
    budget: int = DEFAULT_REPAIR_BUDGET,
    *,
    tag: str = "",
) -> tuple[dict, int]:
    """Parse ``raw`` against ``template``, asking the backend to reformat on
    failure, up to ``budget - 1`` extra calls.

    Returns (parsed value, number of repair calls made).
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    attempts = [raw]
    reason = ""
    for round_ in range(budget):
        try:
            return template.parse(attempts[-1]), round_
        except TemplateMismatch as exc:
            reason = str(exc)
        if round_ == budget - 1:
            break
        request = CompletionRequest(
            prompt=reformat_prompt(attempts[-1], template, reason),
            temperature=CONTROL_TEMPERATURE,
            tag=f"repair:{tag}" if tag else "repair",
        )
        attempts.append(backend.complete(request).text)
    raise FormatError(attempts, reason)


# --- prompt assembly --------------------------------------------------------

COT_LINE = "Let's think step by step."


def _render_input_line(lan: Lan | None, label: str, value: str) -> str:
    if label == EXTERNAL_INPUT_LABEL:
        if lan is not None and lan.input_description:
            return f"- External input ({lan.input_description}): {value}"
        return f"- External input: {value}"
    subtask = ""
    if lan is not None:
        try:
            subtask = lan.agent(label).execution.subtask_description
        except KeyError:
            subtask = ""
    if subtask:
        return f'- Output of "{label}" ({subtask}): {value}'
    return f'- Output of "{label}": {value}'


def _render_inputs(lan: Lan | None, inputs: NamedValues) -> str:
    return "\n".join(_render_input_line(lan, k, v) for k, v in inputs.entries)


def _render_knowledge(items) -> str:
    return "\n".join(f"{i}. {item.text}" for i, item in enumerate(items, start=1))


def _render_examples(examples) -> str:
    blocks = []
    for i, example in enumerate(examples, start=1):
        result = example.result
        if isinstance(result, bool):
            result = "true" if result else "false"
        blocks.append(
            f"Example {i}:\n"
            "Inputs:\n"
            f"{_render_inputs(None, example.inputs)}\n"
            f"Result: {result}"
        )
    return "\n\n".join(blocks)


def _prompt_sections(header: str, lan: Lan, agent: Agent, inputs: NamedValues,
                     module, template: JsonTemplate) -> str:
    sections = [header]
    sections.append("Current inputs:\n" + _render_inputs(lan, inputs))
    if module.knowledge:
        sections.append("Knowledge:\n" + _render_knowledge(module.knowledge))
    if module.examples:
        sections.append("Examples:\n\n" + _render_examples(module.examples))
    sections.append(COT_LINE)
    sections.append(
        "Answer with a single JSON object following this template:\n"
        + template.render()
    )
    return "\n\n".join(sections)


def build_cm_prompt(agent: Agent, inputs: NamedValues, lan: Lan) -> str:
    header = (
        f'You are the control module of the agent "{agent.name}" in a network '
        "of LLM agents.\n"
        f"The network performs the following task: {lan.task_description}\n"
        f"This agent is responsible for the subtask: "
        f"{agent.execution.subtask_description}\n"
        "Decide whether the agent should be activated to perform its subtask "
        "for the current inputs."
    )
    return _prompt_sections(header, lan, agent, inputs, agent.control, CM_ANSWER)


def build_em_prompt(agent: Agent, inputs: NamedValues, lan: Lan) -> str:
    header = (
        f'You are the execution module of the agent "{agent.name}" in a '
        "network of LLM agents.\n"
        f"The network performs the following task: {lan.task_description}\n"
        f"Perform this agent's subtask: {agent.execution.subtask_description}\n"
        f"Expected output: {agent.execution.output_description}"
    )
    return _prompt_sections(header, lan, agent, inputs, agent.execution, EM_ANSWER)


# --- agent-level execution --------------------------------------------------


@dataclass
class ActivationDecision:
    activated: bool
    thought: str | None = None
    prompt: str | None = None
    llm_calls: int = 0


@dataclass
class ExecutionResult:
    output: str
    thought: str
    prompt: str
    llm_calls: int


def decide_activation(
    lan: Lan,
    agent: Agent,
    inputs: NamedValues,
    predecessors_activated: dict[str, bool],
    backend: Backend,
    *,
    repair_budget: int = DEFAULT_REPAIR_BUDGET,
) -> ActivationDecision:
    """Evaluate the control module.

    A disabled CM activates unconditionally; an inactive required predecessor
    deactivates unconditionally; both without touching the backend.
    """
    if not agent.control.enabled:
        return ActivationDecision(activated=True)
    for required in agent.control.required_predecessors:
        if not predecessors_activated.get(required, False):
            return ActivationDecision(activated=False)
    prompt = build_cm_prompt(agent, inputs, lan)
    request = CompletionRequest(
        prompt=prompt, temperature=CONTROL_TEMPERATURE, tag=f"cm:{agent.name}"
    )
    response = backend.complete(request)
    parsed, repairs = parse_or_reformat(
        response.text, CM_ANSWER, backend, repair_budget, tag=f"cm:{agent.name}"
    )
    return ActivationDecision(
        activated=parsed["result"],
        thought=parsed["thought"],
        prompt=prompt,
        llm_calls=1 + repairs,
    )


def execute_agent(
    lan: Lan,
    agent: Agent,
    inputs: NamedValues,
    backend: Backend,
    *,
    repair_budget: int = DEFAULT_REPAIR_BUDGET,
    temperature: float = EM_TEMPERATURE,
) -> ExecutionResult:
    prompt = build_em_prompt(agent, inputs, lan)
    request = CompletionRequest(
        prompt=prompt, temperature=temperature, tag=f"em:{agent.name}"
    )
    response = backend.complete(request)
    parsed, repairs = parse_or_reformat(
        response.text, EM_ANSWER, backend, repair_budget, tag=f"em:{agent.name}"
    )
    return ExecutionResult(
        output=parsed["result"],
        thought=parsed["thought"],
        prompt=prompt,
        llm_calls=1 + repairs,
    )


# --- full runs --------------------------------------------------------------


@dataclass
class AgentRunRecord:
    agent: str
    inputs: NamedValues
    activated: bool
    output: NamedValues
    cm_prompt: str | None = None
    cm_thought: str | None = None
    em_prompt: str | None = None
    em_thought: str | None = None
    cm_calls: int = 0
    em_calls: int = 0

    @property
    def own_output(self) -> str | None:
        """The entry this agent contributed, when activated."""
        return self.output.get(self.agent)


@dataclass
class RunTrace:
    lan_snapshot: Lan
    external_input: str
    records: list[AgentRunRecord] = field(default_factory=list)
    final_output: str = ""

    @property
    def llm_calls(self) -> int:
        return sum(r.cm_calls + r.em_calls for r in self.records)

    def record_for(self, agent_name: str) -> AgentRunRecord | None:
        for record in self.records:
            if record.agent == agent_name:
                return record
        return None

    def activated_agents(self) -> list[str]:
        return [r.agent for r in self.records if r.activated]


def _final_output(records: list[AgentRunRecord], external_input: str) -> str:
    # output of the last ACTIVATED agent in topological order; with no
    # activations the network leaves the input untouched
    for record in reversed(records):
        if record.activated:
            return record.own_output or ""
    return external_input


def run_lan(
    lan: Lan,
    external_input: str,
    backend: Backend,
    *,
    repair_budget: int = DEFAULT_REPAIR_BUDGET,
    em_temperature: float = EM_TEMPERATURE,
) -> RunTrace:
    """Execute every agent once, in topological order, collecting a trace."""
    violations = validate_lan(lan)
    if violations:
        raise InvalidLanError(violations)
    records: list[AgentRunRecord] = []
    by_name: dict[str, AgentRunRecord] = {}
    activated: dict[str, bool] = {}
    try:
        for name in topological_order(lan):
            agent = lan.agent(name)
            inputs = NamedValues([(EXTERNAL_INPUT_LABEL, external_input)])
            for pred in lan.predecessors(name):
                inputs = inputs.merged(by_name[pred].output)
            decision = decide_activation(
                lan, agent, inputs, activated, backend, repair_budget=repair_budget
            )
            if decision.activated:
                result = execute_agent(
                    lan,
                    agent,
                    inputs,
                    backend,
                    repair_budget=repair_budget,
                    temperature=em_temperature,
                )
                record = AgentRunRecord(
                    agent=name,
                    inputs=inputs,
                    activated=True,
                    output=inputs.with_entry(name, result.output),
                    cm_prompt=decision.prompt,
                    cm_thought=decision.thought,
                    em_prompt=result.prompt,
                    em_thought=result.thought,
                    cm_calls=decision.llm_calls,
                    em_calls=result.llm_calls,
                )
            else:
                record = AgentRunRecord(
                    agent=name,
                    inputs=inputs,
                    activated=False,
                    output=inputs,
                    cm_prompt=decision.prompt,
                    cm_thought=decision.thought,
                    cm_calls=decision.llm_calls,
                )
            records.append(record)
            by_name[name] = record
            activated[name] = record.activated
    except AbortedError as exc:
        partial = RunTrace(
            lan_snapshot=lan,
            external_input=external_input,
            records=records,
            final_output=_final_output(records, external_input),
        )
        raise ExecutionAborted(partial) from exc
    return RunTrace(
        lan_snapshot=lan,
        external_input=external_input,
        records=records,
        final_output=_final_output(records, external_input),
    )


# --- trace (de)serialization ------------------------------------------------


def _values_to_doc(values: NamedValues) -> list[list[str]]:
    return [[k, v] for k, v in values.entries]


def record_to_doc(record: AgentRunRecord) -> dict:
    return {
        "agent": record.agent,
        "inputs": _values_to_doc(record.inputs),
        "activated": record.activated,
        "output": _values_to_doc(record.output),
        "cm_prompt": record.cm_prompt,
        "cm_thought": record.cm_thought,
        "em_prompt": record.em_prompt,
        "em_thought": record.em_thought,
        "cm_calls": record.cm_calls,
        "em_calls": record.em_calls,
    }


def trace_to_doc(trace: RunTrace) -> dict:
    return {
        "lan": lan_to_doc(trace.lan_snapshot),
        "external_input": trace.external_input,
        "final_output": trace.final_output,
        "records": [record_to_doc(r) for r in trace.records],
    }


def trace_from_doc(doc: dict) -> RunTrace:
    records = []
    for rec in doc["records"]:
        records.append(
            AgentRunRecord(
                agent=rec["agent"],
                inputs=NamedValues([tuple(e) for e in rec["inputs"]]),
                activated=rec["activated"],
                output=NamedValues([tuple(e) for e in rec["output"]]),
                cm_prompt=rec.get("cm_prompt"),
                cm_thought=rec.get("cm_thought"),
                em_prompt=rec.get("em_prompt"),
                em_thought=rec.get("em_thought"),
                cm_calls=rec.get("cm_calls", 0),
                em_calls=rec.get("em_calls", 0),
            )
        )
    return RunTrace(
        lan_snapshot=lan_from_doc(doc["lan"]),
        external_input=doc["external_input"],
        records=records,
        final_output=doc["final_output"],
    )
