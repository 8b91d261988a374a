"""The few-example training pipeline.

Grows a LAN from a single agent: run a training example, measure the gap to
the ground truth, classify the cause, pick one of five update strategies,
compute its parameters, and apply it while preserving the behaviour on
previously satisfied examples. Every step can be confirmed, edited, or
retried by a supervisor.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone

from .gateway import Backend, CompletionRequest
from .model import (
    EXTERNAL_INPUT_LABEL,
    Agent,
    ControlModule,
    Example,
    ExecutionModule,
    KnowledgeItem,
    Lan,
    NamedValues,
    add_agent,
    add_edge,
    remove_agent,
    replace_agent,
    validate_lan,
)
from .runtime import (
    CM_ANSWER,
    CONTROL_TEMPERATURE,
    DEFAULT_REPAIR_BUDGET,
    FormatError,
    JsonTemplate,
    RunTrace,
    TemplateField,
    execute_agent,
    parse_or_reformat,
    run_lan,
    trace_from_doc,
    trace_to_doc,
)

logger = logging.getLogger(__name__)

PLACEHOLDER = "<???>"
DEFAULT_ITERATION_CAP = 8


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def fixed_clock(instant: str = "1970-01-01T00:00:00+00:00"):
    """A clock for replayed runs, keeping serialized outputs bit-stable."""
    return lambda: instant


class ValidationError(ValueError):
    pass


class RejectedStepError(Exception):
    """A step produced a result that violates its own postcondition."""


class UnknownReasonType(Exception):
    def __init__(self, value, attempts: list[str] | None = None):
        self.value = value
        self.attempts = attempts or []
        super().__init__(f"unknown reason_type: {value!r}")


class PlanValidationError(Exception):
    def __init__(self, violations: list[str]):
        self.violations = violations
        super().__init__("; ".join(violations))


class MergeError(Exception):
    """An edited document contains fields outside the step's template."""


class IterationCapReached(Exception):
    def __init__(self, cap: int):
        self.cap = cap
        super().__init__(f"example still unsatisfied after {cap} iteration(s)")


# --- enums and routing --------------------------------------------------------

CAUSE_TYPES = ("missing_agent", "wrongly_activated", "poor_performance")
AGENT_CAUSE_TYPES = ("not_activated", "lacks_knowledge", "needs_split", "needs_inputs")
STRATEGIES = ("AddAgent", "SplitAgent", "AddCmKnowledge", "AddEmKnowledge", "AddInputs")

_CAUSE_ALIASES = {
    "missing agent": "missing_agent",
    "lack of agents": "missing_agent",
    "no agent": "missing_agent",
    "wrongly activated": "wrongly_activated",
    "unnecessary execution": "wrongly_activated",
    "erroneously activated": "wrongly_activated",
    "poor performance": "poor_performance",
}
_AGENT_CAUSE_ALIASES = {
    "not activated": "not_activated",
    "lacks knowledge": "lacks_knowledge",
    "insufficient knowledge": "lacks_knowledge",
    "needs split": "needs_split",
    "requires split": "needs_split",
    "needs inputs": "needs_inputs",
    "requires inputs": "needs_inputs",
    "needs additional inputs": "needs_inputs",
}

# step-2 routing: the first two causes pick a strategy directly and skip
# step 3; poor performance needs the finer agent-level diagnosis
CAUSE_STRATEGY = {
    "missing_agent": "AddAgent",
    "wrongly_activated": "AddCmKnowledge",
}
AGENT_CAUSE_STRATEGY = {
    "not_activated": "AddCmKnowledge",
    "lacks_knowledge": "AddEmKnowledge",
    "needs_split": "SplitAgent",
    "needs_inputs": "AddInputs",
}


def _canonical(value: str, aliases: dict[str, str]) -> str | None:
    normalized = re.sub(r"[\s_]+", " ", value.strip().lower())
    return aliases.get(normalized)


def canonical_cause_type(value: str) -> str | None:
    return _canonical(value, _CAUSE_ALIASES)


def canonical_agent_cause_type(value: str) -> str | None:
    return _canonical(value, _AGENT_CAUSE_ALIASES)


def strategy_for_cause(reason_type: str) -> str | None:
    """Strategy selected by step 2, or None when step 3 must run first."""
    return CAUSE_STRATEGY.get(reason_type)


def strategy_for_agent_cause(reason_type: str) -> str:
    return AGENT_CAUSE_STRATEGY[reason_type]


# --- domain types -------------------------------------------------------------


@dataclass
class TrainingExample:
    id: str
    input: str
    ground_truth: str

    def __post_init__(self):
        if not self.input or not self.ground_truth:
            raise ValidationError("training examples need both input and ground truth")


@dataclass
class GapReport:
    gap: str
    sub_task: str = ""

    def to_doc(self) -> dict:
        doc = {"gap": self.gap}
        if self.sub_task:
            doc["sub_task"] = self.sub_task
        return doc


@dataclass
class CauseReport:
    reason_type: str
    agent_name: str | None
    reason_content: str

    def to_doc(self) -> dict:
        return {
            "reason_type": self.reason_type,
            "agent_name": self.agent_name,
            "reason_content": self.reason_content,
        }


@dataclass
class AgentCauseReport:
    reason_type: str
    reason_content: str

    def to_doc(self) -> dict:
        return {"reason_type": self.reason_type, "reason_content": self.reason_content}


@dataclass
class StrategyPlan:
    strategy: str
    parameters: dict

    def to_doc(self) -> dict:
        return {"parameters": self.parameters}


@dataclass
class Intervention:
    edited_document: dict | None = None
    hint_text: str | None = None

    def __post_init__(self):
        if self.edited_document is None and not self.hint_text:
            raise ValidationError(
                "an intervention needs an edited document, a hint, or both"
            )

    @property
    def mode(self) -> str:
        if self.edited_document is not None and self.hint_text:
            return "combined"
        return "edited_result" if self.edited_document is not None else "hint"


# --- initialization -----------------------------------------------------------


def _sanitize_agent_name(task_description: str) -> str:
    words = re.findall(r"[A-Za-z0-9]+", task_description)
    words = [w[:1].upper() + w[1:] for w in words][:6]
    name = " ".join(words)
    return name or "Agent"


def init_lan(
    task_description: str, input_description: str = "", output_description: str = ""
) -> Lan:
    """A single always-active agent covering the whole task, no edges."""
    if not task_description.strip():
        raise ValidationError("task description must be non-empty")
    agent = Agent(
        name=_sanitize_agent_name(task_description),
        control=ControlModule(enabled=False),  # the critical agent always runs
        execution=ExecutionModule(
            subtask_description=task_description,
            output_description=output_description or "The final output of the task.",
        ),
    )
    return Lan(
        task_description=task_description,
        input_description=input_description,
        output_description=output_description,
        agents=[agent],
        edges=[],
    )


# --- satisfaction -------------------------------------------------------------


def _normalize(text: str) -> str:
    return " ".join(text.split())


def check_satisfaction(
    trace: RunTrace,
    example: TrainingExample,
    backend: Backend,
    *,
    repair_budget: int = DEFAULT_REPAIR_BUDGET,
) -> bool:
    """Exact match (whitespace-normalized) short-circuits; otherwise ask."""
    if _normalize(trace.final_output) == _normalize(example.ground_truth):
        return True
    prompt = (
        "You are judging the output of a network of LLM agents.\n"
        f"The network performs the following task: "
        f"{trace.lan_snapshot.task_description}\n"
        "\n"
        "Network input:\n"
        f"{example.input}\n"
        "\n"
        "Expected output (ground truth):\n"
        f"{example.ground_truth}\n"
        "\n"
        "Actual output:\n"
        f"{trace.final_output}\n"
        "\n"
        "Decide whether the actual output is satisfactory: it must fulfil the "
        "task as well as the expected output does.\n"
        "\n"
        "Let's think step by step.\n"
        "\n"
        "Answer with a single JSON object following this template:\n"
        f"{CM_ANSWER.render()}"
    )
    request = CompletionRequest(prompt=prompt, temperature=CONTROL_TEMPERATURE, tag="judge")
    response = backend.complete(request)
    parsed, _ = parse_or_reformat(
        response.text, CM_ANSWER, backend, repair_budget, tag="judge"
    )
    return parsed["result"]


# --- descriptions -------------------------------------------------------------


def _render_flow_value(trace: RunTrace, agent_name: str) -> str:
    record = trace.record_for(agent_name)
    if record is None:
        return "(not executed yet)"
    if record.activated:
        return record.own_output or ""
    return "(not activated; forwarded its inputs unchanged)"


def render_lan_description(lan: Lan, trace: RunTrace | None = None) -> str:
    """Agents, last-execution data flow, and the network's input/output."""
    lines = ["Agents:"]
    for agent in lan.agents:
        lines.append(f'- "{agent.name}": {agent.execution.subtask_description}')
    lines.append("")
    lines.append("Data flow from the last execution:")
    roots = [a.name for a in lan.agents if not lan.predecessors(a.name)]
    external = trace.external_input if trace is not None else "(not executed yet)"
    for root in roots:
        lines.append(f'- external input -> "{root}": {external}')
    for source, target in lan.edges:
        value = _render_flow_value(trace, source) if trace else "(not executed yet)"
        lines.append(f'- "{source}" -> "{target}": {value}')
    lines.append("")
    input_note = f" ({lan.input_description})" if lan.input_description else ""
    output_note = f" ({lan.output_description})" if lan.output_description else ""
    lines.append(f"Network input{input_note}: {external}")
    final = trace.final_output if trace is not None else "(not executed yet)"
    lines.append(f"Network output{output_note}: {final}")
    return "\n".join(lines)


def _render_module_details(title: str, module) -> list[str]:
    lines = []
    if module.knowledge:
        lines.append(f"{title} knowledge:")
        for i, item in enumerate(module.knowledge, start=1):
            lines.append(f"{i}. {item.text}")
    if module.examples:
        lines.append(f"{title} examples:")
        for i, example in enumerate(module.examples, start=1):
            result = example.result
            if isinstance(result, bool):
                result = "true" if result else "false"
            rendered = "; ".join(
                f"{'external input' if k == EXTERNAL_INPUT_LABEL else k}: {v}"
                for k, v in example.inputs.entries
            )
            lines.append(f"{i}. inputs [{rendered}] -> {result}")
    return lines


def render_agent_description(agent: Agent, trace: RunTrace | None = None) -> str:
    """Everything the update steps need to know about one agent."""
    lines = [f'Agent "{agent.name}":']
    lines.append(f"Subtask: {agent.execution.subtask_description}")
    lines.append(f"Output description: {agent.execution.output_description}")
    lines += _render_module_details("Control module", agent.control)
    lines += _render_module_details("Execution module", agent.execution)
    record = trace.record_for(agent.name) if trace is not None else None
    lines.append("Last execution:")
    if record is None:
        lines.append("- (the agent has not executed yet)")
        return "\n".join(lines)
    lines.append("Inputs:")
    for label, value in record.inputs.entries:
        if label == EXTERNAL_INPUT_LABEL:
            lines.append(f"- external input: {value}")
        else:
            lines.append(f'- output of "{label}": {value}')
    if record.cm_thought is not None:
        lines.append(f"Control module thought: {record.cm_thought}")
    else:
        lines.append("Control module thought: (no decision was needed)")
    lines.append(f"Activated: {'true' if record.activated else 'false'}")
    if record.activated:
        if record.em_thought is not None:
            lines.append(f"Execution module thought: {record.em_thought}")
        lines.append(f"Output: {record.own_output}")
    else:
        lines.append("Output: (not activated; forwarded its inputs unchanged)")
    return "\n".join(lines)


# --- step prompts and templates ------------------------------------------------

_JSON_INSTRUCTION = "Answer with a single JSON object following this template:"


def _step1_template() -> JsonTemplate:
    def validator(doc: dict):
        sub_task = doc.get("sub_task")
        if sub_task is not None and not isinstance(sub_task, str):
            return "field 'sub_task' must be a string"
        return None

    return JsonTemplate(
        [TemplateField("gap", "string", "<the most significant deficiency>")],
        validator=validator,
    )


def build_step1_prompt(lan: Lan, trace: RunTrace, example: TrainingExample) -> str:
    return (
        "Find the gap between the network's output and the ground truth.\n"
        "A network of LLM agents processed a training example, but its output "
        "does not satisfy the expected output. Identify the most significant "
        "deficiency in the network and the crucial sub-task that was executed "
        "inadequately.\n"
        "\n"
        f"{render_lan_description(lan, trace)}\n"
        "\n"
        "Training input:\n"
        f"{example.input}\n"
        "\n"
        "Expected output (ground truth):\n"
        f"{example.ground_truth}\n"
        "\n"
        "Actual output:\n"
        f"{trace.final_output}\n"
        "\n"
        f"{_JSON_INSTRUCTION}\n"
        f"{_step1_template().render()}"
    )


def _step2_template(lan: Lan) -> JsonTemplate:
    names = set(lan.agent_names())

    def validator(doc: dict):
        reason = canonical_cause_type(doc.get("reason_type", ""))
        if reason is None:
            return (
                "field 'reason_type' must be one of: missing_agent, "
                "wrongly_activated, poor_performance"
            )
        agent_name = doc.get("agent_name")
        if reason == "missing_agent":
            if agent_name not in (None, ""):
                return "field 'agent_name' must be null when reason_type is missing_agent"
        else:
            if not isinstance(agent_name, str) or agent_name not in names:
                return "field 'agent_name' must name an existing agent"
        return None

    return JsonTemplate(
        [
            TemplateField(
                "reason_type",
                "string",
                "<missing_agent, wrongly_activated, or poor_performance>",
            ),
            TemplateField(
                "agent_name",
                "any",
                "<the agent concerned, or null for missing_agent>",
            ),
            TemplateField("reason_content", "string", "<why the gap exists>"),
        ],
        validator=validator,
    )


def build_step2_prompt(lan: Lan, trace: RunTrace, gap: GapReport) -> str:
    return (
        "Find why the gap exists.\n"
        "The reason falls into exactly one of three categories:\n"
        '- "missing_agent": no agent in the network is responsible for the '
        "sub-task.\n"
        '- "wrongly_activated": the sub-task should not have been executed, '
        "but the corresponding agent was activated.\n"
        '- "poor_performance": an agent already manages the sub-task, but its '
        "performance is poor.\n"
        "\n"
        "The gap:\n"
        f"{gap.gap}\n"
        "\n"
        f"{render_lan_description(lan, trace)}\n"
        "\n"
        f"{_JSON_INSTRUCTION}\n"
        f"{_step2_template(lan).render()}"
    )


def _step3_template() -> JsonTemplate:
    def validator(doc: dict):
        if canonical_agent_cause_type(doc.get("reason_type", "")) is None:
            return (
                "field 'reason_type' must be one of: not_activated, "
                "lacks_knowledge, needs_split, needs_inputs"
            )
        return None

    return JsonTemplate(
        [
            TemplateField(
                "reason_type",
                "string",
                "<not_activated, lacks_knowledge, needs_split, or needs_inputs>",
            ),
            TemplateField("reason_content", "string", "<why the performance is poor>"),
        ],
        validator=validator,
    )


def build_step3_prompt(agent: Agent, trace: RunTrace, cause: CauseReport) -> str:
    return (
        "Why does the agent have a poor performance?\n"
        "The reason falls into exactly one of four categories:\n"
        '- "not_activated": the agent was not activated although it should '
        "have been.\n"
        '- "lacks_knowledge": the agent lacks knowledge needed to produce a '
        "satisfactory output.\n"
        '- "needs_split": the agent requires a more refined internal '
        "structure and should be split into two or more agents.\n"
        '- "needs_inputs": the agent needs additional inputs from other '
        "agents.\n"
        "\n"
        "The poor performance:\n"
        f"{cause.reason_content}\n"
        "\n"
        f"{render_agent_description(agent, trace)}\n"
        "\n"
        f"{_JSON_INSTRUCTION}\n"
        f"{_step3_template().render()}"
    )


_STRATEGY_EXPLANATIONS = {
    "AddAgent": (
        "Create a new agent for the uncovered sub-task and position it in the "
        "network by naming its predecessor and successor agents."
    ),
    "SplitAgent": (
        "Split the agent into two or more new agents. Sequential mode breaks "
        "the sub-task into finer-grained steps executed one after another; "
        "parallel mode separates the agent by distinct conditions. The "
        "original agent's knowledge must be redistributed among the new "
        "agents."
    ),
    "AddCmKnowledge": (
        "Append one knowledge statement to the agent's control module. The "
        "statement guides when the agent should (or should not) be activated."
    ),
    "AddEmKnowledge": (
        "Append one knowledge statement to the agent's execution module to "
        "improve how it performs its sub-task."
    ),
    "AddInputs": (
        "Connect additional existing agents into this agent so it receives "
        "the inputs it is missing."
    ),
}

_PARAMETER_TEMPLATES = {
    "AddAgent": (
        '{"parameters": {"name": "<new agent name>", "subtask_description": '
        '"<the sub-task>", "output_description": "<what the agent outputs>", '
        '"predecessors": ["<existing agent name>", ...], "successors": '
        '["<existing agent name>", ...], "cm_knowledge": ["<when to '
        'activate>", ...], "em_knowledge": ["<how to execute>", ...]}}'
    ),
    "SplitAgent": (
        '{"parameters": {"agent_name": "<agent to split>", "mode": '
        '"<sequential or parallel>", "agents": [{"name": "<new agent name>", '
        '"subtask_description": "<the sub-task>", "output_description": '
        '"<what the agent outputs>", "cm_enabled": <true or false>, '
        '"cm_knowledge": ["..."], "em_knowledge": ["..."]}, ...], '
        '"internal_edges": [["<from new agent>", "<to new agent>"], ...]}}'
    ),
    "AddCmKnowledge": (
        '{"parameters": {"agent_name": "<agent to update>", "knowledge": '
        '"<the knowledge statement>"}}'
    ),
    "AddEmKnowledge": (
        '{"parameters": {"agent_name": "<agent to update>", "knowledge": '
        '"<the knowledge statement>"}}'
    ),
    "AddInputs": (
        '{"parameters": {"agent_name": "<agent to update>", '
        '"new_input_agents": ["<existing agent name>", ...]}}'
    ),
}

_STEP4_TEMPLATE = JsonTemplate(
    [TemplateField("parameters", "object", "<strategy-specific parameters>")]
)


def build_step4_prompt(
    lan: Lan,
    trace: RunTrace,
    strategy: str,
    gap: GapReport,
    cause: CauseReport,
    agent_cause: AgentCauseReport | None,
    hint: str | None = None,
) -> str:
    sections = [
        "Calculate the parameters for the update strategy.\n"
        f"The chosen strategy: {strategy}. {_STRATEGY_EXPLANATIONS[strategy]}"
    ]
    analysis = [f"The gap:\n{gap.gap}", f"The cause:\n{cause.reason_content}"]
    if agent_cause is not None:
        analysis.append(f"The agent-level cause:\n{agent_cause.reason_content}")
    sections.append("Previous analysis:\n" + "\n\n".join(analysis))
    if cause.agent_name:
        sections.append(
            "The agent to be updated:\n"
            + render_agent_description(lan.agent(cause.agent_name), trace)
        )
    sections.append(render_lan_description(lan, trace))
    sections.append(
        f"{_JSON_INSTRUCTION}\n{_PARAMETER_TEMPLATES[strategy]}"
    )
    prompt = "\n\n".join(sections)
    if hint:
        prompt += f"\n\nUser guidance:\n{hint}"
    return prompt


# --- plan validation ------------------------------------------------------------


def _agent_spec_to_agent(spec: dict, clock) -> Agent:
    def items(key):
        return [
            KnowledgeItem(text=text, origin="pipeline", created_at=clock())
            for text in spec.get(key, [])
        ]

    return Agent(
        name=spec.get("name", ""),
        control=ControlModule(
            enabled=bool(spec.get("cm_enabled", True)), knowledge=items("cm_knowledge")
        ),
        execution=ExecutionModule(
            subtask_description=spec.get("subtask_description", ""),
            output_description=spec.get("output_description", ""),
            knowledge=items("em_knowledge"),
        ),
    )


def _chain_order(agents: list[str], internal_edges: list) -> list[str] | None:
    """Order of a sequential split; None when the edges are not a single path."""
    if len(internal_edges) != len(agents) - 1:
        return None
    starts = {e[0] for e in internal_edges}
    ends = {e[1] for e in internal_edges}
    heads = [a for a in agents if a not in ends]
    if len(heads) != 1:
        return None
    order = [heads[0]]
    nexts = {e[0]: e[1] for e in internal_edges}
    if len(nexts) != len(internal_edges):
        return None
    while order[-1] in nexts:
        order.append(nexts[order[-1]])
    if len(order) != len(agents) or set(order) != set(agents):
        return None
    if not starts <= set(agents) or not ends <= set(agents):
        return None
    return order


def validate_plan(lan: Lan, plan: StrategyPlan) -> list[str]:
    """Static checks: referenced agents exist, new names are unique, the
    resulting graph stays acyclic, parameters are complete."""
    problems: list[str] = []
    params = plan.parameters
    names = set(lan.agent_names())

    def check_exists(agent_name, role):
        if not isinstance(agent_name, str) or agent_name not in names:
            problems.append(f"{role} {agent_name!r} does not name an existing agent")
            return False
        return True

    if plan.strategy == "AddAgent":
        name = params.get("name", "")
        if not name or not isinstance(name, str):
            problems.append("new agent needs a non-empty name")
        elif name in names or name == EXTERNAL_INPUT_LABEL:
            problems.append(f"agent name {name!r} is already taken or reserved")
        if not params.get("subtask_description"):
            problems.append("new agent needs a subtask description")
        if not params.get("output_description"):
            problems.append("new agent needs an output description")
        for pred in params.get("predecessors", []):
            check_exists(pred, "predecessor")
        for succ in params.get("successors", []):
            check_exists(succ, "successor")
    elif plan.strategy in ("AddCmKnowledge", "AddEmKnowledge"):
        check_exists(params.get("agent_name"), "target agent")
        if not params.get("knowledge"):
            problems.append("knowledge text must be non-empty")
    elif plan.strategy == "AddInputs":
        check_exists(params.get("agent_name"), "target agent")
        sources = params.get("new_input_agents", [])
        if not sources:
            problems.append("new_input_agents must list at least one agent")
        for source in sources:
            if check_exists(source, "input agent"):
                if (source, params.get("agent_name")) in lan.edges:
                    problems.append(f"edge {source!r} -> {params['agent_name']!r} already exists")
    elif plan.strategy == "SplitAgent":
        target = params.get("agent_name")
        check_exists(target, "agent to split")
        specs = params.get("agents", [])
        if len(specs) < 2:
            problems.append("a split needs at least two new agents")
        new_names = [spec.get("name", "") for spec in specs]
        taken = (names - {target}) | {EXTERNAL_INPUT_LABEL}
        for i, name in enumerate(new_names):
            if not name:
                problems.append(f"new agent #{i + 1} needs a non-empty name")
            elif name in taken:
                problems.append(f"agent name {name!r} is already taken or reserved")
            if not specs[i].get("subtask_description"):
                problems.append(f"new agent {name!r} needs a subtask description")
            if not specs[i].get("output_description"):
                problems.append(f"new agent {name!r} needs an output description")
        if len(set(new_names)) != len(new_names):
            problems.append("new agent names must be unique")
        mode = params.get("mode")
        internal = params.get("internal_edges", [])
        if mode == "sequential":
            if new_names and _chain_order(new_names, internal) is None:
                problems.append(
                    "sequential split needs internal_edges forming one chain "
                    "over all new agents"
                )
        elif mode == "parallel":
            if internal:
                problems.append("parallel split must not have internal edges")
        else:
            problems.append("mode must be 'sequential' or 'parallel'")
    else:
        problems.append(f"unknown strategy {plan.strategy!r}")

    if not problems:
        try:
            candidate = apply_strategy_structure(lan, plan, clock=fixed_clock())
        except Exception as exc:  # construction failure is a plan problem
            problems.append(str(exc))
            return problems
        for violation in validate_lan(candidate):
            problems.append(str(violation))
    return problems


# --- applying strategies ---------------------------------------------------------


def apply_strategy_structure(lan: Lan, plan: StrategyPlan, *, clock) -> Lan:
    """The structural part of a strategy: no history bookkeeping, no backend."""
    params = plan.parameters
    if plan.strategy == "AddAgent":
        agent = Agent(
            name=params["name"],
            control=ControlModule(
                enabled=True,
                knowledge=[
                    KnowledgeItem(text, origin="pipeline", created_at=clock())
                    for text in params.get("cm_knowledge", [])
                ],
            ),
            execution=ExecutionModule(
                subtask_description=params["subtask_description"],
                output_description=params["output_description"],
                knowledge=[
                    KnowledgeItem(text, origin="pipeline", created_at=clock())
                    for text in params.get("em_knowledge", [])
                ],
            ),
        )
        out = add_agent(lan, agent)
        for pred in params.get("predecessors", []):
            out = add_edge(out, pred, agent.name)
        for succ in params.get("successors", []):
            out = add_edge(out, agent.name, succ)
        return out

    if plan.strategy in ("AddCmKnowledge", "AddEmKnowledge"):
        target = lan.agent(params["agent_name"])
        item = KnowledgeItem(params["knowledge"], origin="pipeline", created_at=clock())
        if plan.strategy == "AddCmKnowledge":
            updated = replace(
                target, control=replace(target.control, knowledge=target.control.knowledge + [item])
            )
        else:
            updated = replace(
                target,
                execution=replace(
                    target.execution, knowledge=target.execution.knowledge + [item]
                ),
            )
        return replace_agent(lan, target.name, updated)

    if plan.strategy == "AddInputs":
        out = lan
        for source in params["new_input_agents"]:
            out = add_edge(out, source, params["agent_name"])
        return out

    if plan.strategy == "SplitAgent":
        original = lan.agent(params["agent_name"])
        preds = lan.predecessors(original.name)
        succs = lan.successors(original.name)
        new_agents = [_agent_spec_to_agent(spec, clock) for spec in params["agents"]]
        new_names = [a.name for a in new_agents]
        mode = params["mode"]
        internal = [tuple(e) for e in params.get("internal_edges", [])]
        # knowledge not redistributed by the plan survives on a deterministic
        # host: every new agent in parallel mode, the chain head in sequential
        if mode == "sequential":
            chain = _chain_order(new_names, internal)
            heads = [chain[0]]
            tails = [chain[-1]]
            cm_hosts = em_hosts = [chain[0]]
        else:
            heads = list(new_names)
            tails = list(new_names)
            cm_hosts = em_hosts = list(new_names)
        by_name = {a.name: a for a in new_agents}
        for item in original.control.knowledge:
            covered = any(
                item.text == k.text for a in new_agents for k in a.control.knowledge
            )
            if not covered:
                for host in cm_hosts:
                    agent = by_name[host]
                    by_name[host] = replace(
                        agent, control=replace(agent.control, knowledge=agent.control.knowledge + [item])
                    )
        for item in original.execution.knowledge:
            covered = any(
                item.text == k.text for a in new_agents for k in a.execution.knowledge
            )
            if not covered:
                for host in em_hosts:
                    agent = by_name[host]
                    by_name[host] = replace(
                        agent,
                        execution=replace(
                            agent.execution, knowledge=agent.execution.knowledge + [item]
                        ),
                    )
        new_agents = [by_name[name] for name in new_names]

        out = remove_agent(lan, original.name)
        for agent in new_agents:
            out = add_agent(out, agent)
        for pred in preds:
            for head in heads:
                out = add_edge(out, pred, head)
        for source, target in internal:
            out = add_edge(out, source, target)
        for tail in tails:
            for succ in succs:
                out = add_edge(out, tail, succ)
        return out

    raise ValidationError(f"unknown strategy {plan.strategy!r}")


def _with_cm_example(lan: Lan, agent_name: str, example: Example) -> Lan:
    agent = lan.agent(agent_name)
    updated = replace(
        agent, control=replace(agent.control, examples=agent.control.examples + [example])
    )
    return replace_agent(lan, agent_name, updated)


def _with_em_example(lan: Lan, agent_name: str, example: Example) -> Lan:
    agent = lan.agent(agent_name)
    updated = replace(
        agent,
        execution=replace(agent.execution, examples=agent.execution.examples + [example]),
    )
    return replace_agent(lan, agent_name, updated)


def _historical_inputs_for(
    trace: RunTrace, predecessors: list[str], external_input: str
) -> NamedValues | None:
    """What an agent wired after ``predecessors`` would have received during
    the recorded run; None when a predecessor has no record in the trace."""
    inputs = NamedValues([(EXTERNAL_INPUT_LABEL, external_input)])
    for pred in predecessors:
        record = trace.record_for(pred)
        if record is None:
            return None
        inputs = inputs.merged(record.output)
    return inputs


SPLIT_SELECT_TEMPLATE = JsonTemplate(
    [
        TemplateField("thought", "string", "<your reasoning>"),
        TemplateField("result", "string", "<the name of one new agent>"),
    ]
)


def _select_responsible_agent(
    original: Agent,
    new_agents: list[Agent],
    inputs: NamedValues,
    original_output: str,
    backend: Backend,
    repair_budget: int,
) -> str:
    names = [a.name for a in new_agents]
    template = JsonTemplate(
        SPLIT_SELECT_TEMPLATE.fields,
        validator=lambda doc: (
            None
            if doc.get("result") in names
            else f"field 'result' must be one of: {', '.join(names)}"
        ),
    )
    rendered_inputs = "\n".join(
        f"- external input: {v}" if k == EXTERNAL_INPUT_LABEL else f'- output of "{k}": {v}'
        for k, v in inputs.entries
    )
    agent_lines = "\n".join(
        f'- "{a.name}": {a.execution.subtask_description}' for a in new_agents
    )
    prompt = (
        "An agent in a network of LLM agents was split into several new "
        "agents, each handling a distinct condition.\n"
        f'The original agent "{original.name}" performed: '
        f"{original.execution.subtask_description}\n"
        "\n"
        "New agents:\n"
        f"{agent_lines}\n"
        "\n"
        "For the historical inputs below, the original agent produced the "
        "given output. Select the single new agent that should handle this "
        "case.\n"
        "\n"
        "Inputs:\n"
        f"{rendered_inputs}\n"
        "\n"
        f"Original output: {original_output}\n"
        "\n"
        f"{_JSON_INSTRUCTION}\n"
        f"{template.render()}"
    )
    request = CompletionRequest(
        prompt=prompt,
        temperature=CONTROL_TEMPERATURE,
        tag=f"split-select:{original.name}",
    )
    response = backend.complete(request)
    parsed, _ = parse_or_reformat(
        response.text, template, backend, repair_budget,
        tag=f"split-select:{original.name}",
    )
    return parsed["result"]


def apply_strategy(
    lan: Lan,
    plan: StrategyPlan,
    history: list[tuple[TrainingExample, RunTrace]],
    backend: Backend,
    *,
    clock=utc_now,
    repair_budget: int = DEFAULT_REPAIR_BUDGET,
) -> Lan:
    """Apply a validated plan plus the bookkeeping that keeps previously
    satisfied examples behaving as recorded."""
    problems = validate_plan(lan, plan)
    if problems:
        raise PlanValidationError(problems)
    params = plan.parameters
    out = apply_strategy_structure(lan, plan, clock=clock)

    if plan.strategy == "AddAgent":
        # pin the new agent inactive on every historical input
        name = params["name"]
        for example, trace in history:
            inputs = _historical_inputs_for(
                trace, params.get("predecessors", []), trace.external_input
            )
            if inputs is None:
                logger.warning(
                    "cannot reconstruct historical inputs of %r for example %s; "
                    "skipping its negative example",
                    name,
                    example.id,
                )
                continue
            out = _with_cm_example(
                out, name, Example(inputs=inputs, result=False, provenance=example.id)
            )
        return out

    if plan.strategy != "SplitAgent":
        # knowledge additions and new edges rely on the recorded few-shot
        # examples alone; nothing else to do
        return out

    original = lan.agent(params["agent_name"])
    mode = params["mode"]
    new_names = [spec["name"] for spec in params["agents"]]
    new_agents = [out.agent(name) for name in new_names]
    chain = (
        _chain_order(new_names, [tuple(e) for e in params.get("internal_edges", [])])
        if mode == "sequential"
        else None
    )
    for example, trace in history:
        record = trace.record_for(original.name)
        if record is None:
            logger.warning(
                "agent %r has no record in the trace of example %s; skipping",
                original.name,
                example.id,
            )
            continue
        if not record.activated:
            for name in new_names:
                out = _with_cm_example(
                    out,
                    name,
                    Example(inputs=record.inputs, result=False, provenance=example.id),
                )
            continue
        original_output = record.own_output or ""
        if mode == "parallel":
            selected = _select_responsible_agent(
                original, new_agents, record.inputs, original_output, backend,
                repair_budget,
            )
            for name in new_names:
                out = _with_cm_example(
                    out,
                    name,
                    Example(
                        inputs=record.inputs,
                        result=(name == selected),
                        provenance=example.id,
                    ),
                )
            out = _with_em_example(
                out,
                selected,
                Example(
                    inputs=record.inputs, result=original_output, provenance=example.id
                ),
            )
        else:
            # walk the chain on the recorded inputs; the last agent is pinned
            # to the original output, earlier ones to their fresh results
            inputs = record.inputs
            for position, name in enumerate(chain):
                is_last = position == len(chain) - 1
                if is_last:
                    result_text = original_output
                else:
                    result = _exec_for_history(
                        out, name, inputs, backend, repair_budget
                    )
                    result_text = result
                out = _with_em_example(
                    out,
                    name,
                    Example(inputs=inputs, result=result_text, provenance=example.id),
                )
                inputs = inputs.with_entry(name, result_text)
    return out


def _exec_for_history(lan: Lan, agent_name: str, inputs, backend, repair_budget) -> str:
    result = execute_agent(
        lan,
        lan.agent(agent_name),
        inputs,
        backend,
        repair_budget=repair_budget,
        temperature=CONTROL_TEMPERATURE,
    )
    return result.output


# --- success recording ------------------------------------------------------------


def record_success(lan: Lan, trace: RunTrace, provenance: str = "") -> Lan:
    """Store each agent's CM decision and EM output as module examples.

    Idempotent per (provenance, agent, module); the CM example only exists
    when the CM actually made an LLM decision.
    """
    if not provenance:
        provenance = hashlib.sha256(trace.external_input.encode("utf-8")).hexdigest()[:12]
    out = lan
    for record in trace.records:
        try:
            agent = out.agent(record.agent)
        except KeyError:
            continue
        if record.cm_prompt is not None and not any(
            e.provenance == provenance for e in agent.control.examples
        ):
            out = _with_cm_example(
                out,
                record.agent,
                Example(
                    inputs=record.inputs, result=record.activated, provenance=provenance
                ),
            )
        if record.activated:
            agent = out.agent(record.agent)
            if not any(e.provenance == provenance for e in agent.execution.examples):
                out = _with_em_example(
                    out,
                    record.agent,
                    Example(
                        inputs=record.inputs,
                        result=record.own_output or "",
                        provenance=provenance,
                    ),
                )
    return out


# --- the supervised pipeline -------------------------------------------------------

STEP_GAP = "gap"
STEP_CAUSE = "cause"
STEP_AGENT_CAUSE = "agent_cause"
STEP_PARAMS = "params"
STEP_APPLY = "apply"
STEP_DONE = "done"

STATUS_AWAITING = "awaiting_confirmation"
STATUS_COMPUTING = "computing"
STATUS_SATISFIED = "satisfied"
STATUS_ABORTED = "aborted"


@dataclass
class PipelineState:
    example: TrainingExample
    iteration: int = 1
    current_step: str = STEP_GAP
    status: str = STATUS_COMPUTING
    last_trace: RunTrace | None = None
    gap: GapReport | None = None
    cause: CauseReport | None = None
    agent_cause: AgentCauseReport | None = None
    plan: StrategyPlan | None = None
    strategy: str | None = None
    error: str | None = None
    step_prompts: dict = field(default_factory=dict)

    def step_result_doc(self, step: str) -> dict | None:
        if step == STEP_GAP and self.gap is not None:
            return self.gap.to_doc()
        if step == STEP_CAUSE and self.cause is not None:
            return self.cause.to_doc()
        if step == STEP_AGENT_CAUSE and self.agent_cause is not None:
            return self.agent_cause.to_doc()
        if step == STEP_PARAMS and self.plan is not None:
            return self.plan.to_doc()
        return None

    def to_doc(self, include_trace: bool = True) -> dict:
        doc = {
            "example": {
                "id": self.example.id,
                "input": self.example.input,
                "ground_truth": self.example.ground_truth,
            },
            "iteration": self.iteration,
            "current_step": self.current_step,
            "status": self.status,
            "strategy": self.strategy,
            "error": self.error,
            "step_results": {
                step: self.step_result_doc(step)
                for step in (STEP_GAP, STEP_CAUSE, STEP_AGENT_CAUSE, STEP_PARAMS)
                if self.step_result_doc(step) is not None
            },
        }
        if include_trace and self.last_trace is not None:
            doc["last_trace"] = trace_to_doc(self.last_trace)
        return doc


def pipeline_state_from_doc(doc: dict) -> PipelineState:
    example = TrainingExample(**doc["example"])
    state = PipelineState(
        example=example,
        iteration=doc["iteration"],
        current_step=doc["current_step"],
        status=doc["status"],
        strategy=doc.get("strategy"),
        error=doc.get("error"),
    )
    results = doc.get("step_results", {})
    if STEP_GAP in results:
        state.gap = GapReport(
            gap=results[STEP_GAP]["gap"], sub_task=results[STEP_GAP].get("sub_task", "")
        )
    if STEP_CAUSE in results:
        state.cause = CauseReport(**results[STEP_CAUSE])
    if STEP_AGENT_CAUSE in results:
        state.agent_cause = AgentCauseReport(**results[STEP_AGENT_CAUSE])
    if STEP_PARAMS in results and state.strategy:
        state.plan = StrategyPlan(
            strategy=state.strategy, parameters=results[STEP_PARAMS]["parameters"]
        )
    if doc.get("last_trace"):
        state.last_trace = trace_from_doc(doc["last_trace"])
    return state


@dataclass
class TrainingSession:
    """Library-level training context: the LAN, its history, and knobs."""

    lan: Lan
    backend: Backend
    history: list[tuple[TrainingExample, RunTrace]] = field(default_factory=list)
    clock: object = utc_now
    iteration_cap: int = DEFAULT_ITERATION_CAP
    repair_budget: int = DEFAULT_REPAIR_BUDGET
    on_revision: object = None  # callable(lan, cause) or None

    def _publish(self, cause: str):
        if self.on_revision is not None:
            self.on_revision(self.lan, cause)


class UpdatePipeline:
    """State machine for one training example.

    ``start`` runs the example and either finishes satisfied or pauses at the
    first step. ``confirm`` accepts the current step's result and advances;
    ``retry`` recomputes the current step under an intervention.
    """

    def __init__(self, session: TrainingSession, example: TrainingExample):
        self.session = session
        self.state = PipelineState(example=example)
        self.iterations_log: list[dict] = []

    # -- helpers

    @property
    def lan(self) -> Lan:
        return self.session.lan

    def _run_and_check(self) -> bool:
        state = self.state
        trace = run_lan(
            self.lan,
            state.example.input,
            self.session.backend,
            repair_budget=self.session.repair_budget,
        )
        state.last_trace = trace
        return check_satisfaction(
            trace,
            state.example,
            self.session.backend,
            repair_budget=self.session.repair_budget,
        )

    def _finish_satisfied(self):
        state = self.state
        self.session.lan = record_success(
            self.lan, state.last_trace, provenance=state.example.id
        )
        self.session.history.append((state.example, state.last_trace))
        # "record" lets persistence fold this into the strategy revision
        self.session._publish("record")
        state.status = STATUS_SATISFIED
        state.current_step = STEP_DONE
        self.iterations_log.append(
            {"iteration": state.iteration, "strategy": None, "satisfied": True}
        )

    def _selected_strategy(self) -> str:
        state = self.state
        if state.cause is None:
            raise RejectedStepError("no cause classified yet")
        direct = strategy_for_cause(state.cause.reason_type)
        if direct is not None:
            return direct
        if state.agent_cause is None:
            raise RejectedStepError("agent-level cause missing for poor_performance")
        return strategy_for_agent_cause(state.agent_cause.reason_type)

    # -- step computation

    def start(self) -> PipelineState:
        state = self.state
        if self._run_and_check():
            self._finish_satisfied()
            return state
        self._compute_step(STEP_GAP)
        return state

    def _compute_step(self, step: str, hint: str | None = None):
        state = self.state
        state.current_step = step
        state.status = STATUS_COMPUTING
        state.error = None
        compute = {
            STEP_GAP: self._compute_gap,
            STEP_CAUSE: self._compute_cause,
            STEP_AGENT_CAUSE: self._compute_agent_cause,
            STEP_PARAMS: self._compute_params,
        }[step]
        compute(hint)
        state.status = STATUS_AWAITING

    def _ask(self, prompt: str, template: JsonTemplate, tag: str) -> dict:
        backend = self.session.backend
        response = backend.complete(
            CompletionRequest(prompt=prompt, temperature=CONTROL_TEMPERATURE, tag=tag)
        )
        parsed, _ = parse_or_reformat(
            response.text, template, backend, self.session.repair_budget, tag=tag
        )
        return parsed

    def _compute_gap(self, hint: str | None = None):
        state = self.state
        prompt = build_step1_prompt(self.lan, state.last_trace, state.example)
        if hint:
            prompt += f"\n\nUser guidance:\n{hint}"
        state.step_prompts[STEP_GAP] = prompt
        parsed = self._ask(prompt, _step1_template(), "step:1")
        self._accept_gap(parsed)

    def _accept_gap(self, doc: dict):
        if not doc.get("gap", "").strip():
            raise RejectedStepError("step 1 must report a non-empty gap")
        self.state.gap = GapReport(gap=doc["gap"], sub_task=doc.get("sub_task", ""))

    def _compute_cause(self, hint: str | None = None):
        state = self.state
        prompt = build_step2_prompt(self.lan, state.last_trace, state.gap)
        if hint:
            prompt += f"\n\nUser guidance:\n{hint}"
        state.step_prompts[STEP_CAUSE] = prompt
        try:
            parsed = self._ask(prompt, _step2_template(self.lan), "step:2")
        except FormatError as exc:
            raise self._maybe_unknown_reason(exc, canonical_cause_type)
        self._accept_cause(parsed)

    def _accept_cause(self, doc: dict):
        reason = canonical_cause_type(doc.get("reason_type", ""))
        if reason is None:
            raise UnknownReasonType(doc.get("reason_type"))
        agent_name = doc.get("agent_name") or None
        if reason == "missing_agent":
            agent_name = None
        elif agent_name not in set(self.lan.agent_names()):
            raise RejectedStepError(f"agent {agent_name!r} does not exist")
        self.state.cause = CauseReport(
            reason_type=reason,
            agent_name=agent_name,
            reason_content=doc.get("reason_content", ""),
        )
        self.state.strategy = strategy_for_cause(reason)

    def _compute_agent_cause(self, hint: str | None = None):
        state = self.state
        agent = self.lan.agent(state.cause.agent_name)
        prompt = build_step3_prompt(agent, state.last_trace, state.cause)
        if hint:
            prompt += f"\n\nUser guidance:\n{hint}"
        state.step_prompts[STEP_AGENT_CAUSE] = prompt
        try:
            parsed = self._ask(prompt, _step3_template(), "step:3")
        except FormatError as exc:
            raise self._maybe_unknown_reason(exc, canonical_agent_cause_type)
        self._accept_agent_cause(parsed)

    def _accept_agent_cause(self, doc: dict):
        reason = canonical_agent_cause_type(doc.get("reason_type", ""))
        if reason is None:
            raise UnknownReasonType(doc.get("reason_type"))
        self.state.agent_cause = AgentCauseReport(
            reason_type=reason, reason_content=doc.get("reason_content", "")
        )
        self.state.strategy = strategy_for_agent_cause(reason)

    def _compute_params(self, hint: str | None = None):
        state = self.state
        strategy = self._selected_strategy()
        state.strategy = strategy
        prompt = build_step4_prompt(
            self.lan,
            state.last_trace,
            strategy,
            state.gap,
            state.cause,
            state.agent_cause,
            hint=hint,
        )
        state.step_prompts[STEP_PARAMS] = prompt
        parsed = self._ask(prompt, _STEP4_TEMPLATE, "step:4")
        self._accept_params(parsed)

    def _accept_params(self, doc: dict):
        strategy = self._selected_strategy()
        plan = StrategyPlan(strategy=strategy, parameters=doc["parameters"])
        problems = validate_plan(self.lan, plan)
        if problems:
            raise PlanValidationError(problems)
        self.state.plan = plan
        self.state.strategy = strategy

    @staticmethod
    def _maybe_unknown_reason(exc: FormatError, canonicalize) -> Exception:
        try:
            doc = json.loads(exc.attempts[-1].strip())
        except (json.JSONDecodeError, IndexError):
            return exc
        if isinstance(doc, dict) and "reason_type" in doc:
            if canonicalize(str(doc["reason_type"])) is None:
                return UnknownReasonType(doc["reason_type"], attempts=exc.attempts)
        return exc

    # -- supervisor actions

    def confirm(self) -> PipelineState:
        """Accept the current step result and advance."""
        state = self.state
        if state.status != STATUS_AWAITING:
            raise RejectedStepError(
                f"nothing awaits confirmation (status={state.status})"
            )
        if state.current_step == STEP_GAP:
            self._compute_step(STEP_CAUSE)
        elif state.current_step == STEP_CAUSE:
            if strategy_for_cause(state.cause.reason_type) is None:
                self._compute_step(STEP_AGENT_CAUSE)
            else:
                self._compute_step(STEP_PARAMS)
        elif state.current_step == STEP_AGENT_CAUSE:
            self._compute_step(STEP_PARAMS)
        elif state.current_step == STEP_PARAMS:
            self._apply_and_iterate()
        else:
            raise RejectedStepError(f"cannot confirm step {state.current_step!r}")
        return state

    def _apply_and_iterate(self):
        state = self.state
        state.current_step = STEP_APPLY
        state.status = STATUS_COMPUTING
        self.session.lan = apply_strategy(
            self.lan,
            state.plan,
            self.session.history,
            self.session.backend,
            clock=self.session.clock,
            repair_budget=self.session.repair_budget,
        )
        self.session._publish("strategy")
        self.iterations_log.append(
            {
                "iteration": state.iteration,
                "strategy": state.plan.strategy,
                "satisfied": False,
            }
        )
        state.iteration += 1
        state.gap = None
        state.cause = None
        state.agent_cause = None
        state.plan = None
        state.strategy = None
        state.step_prompts = {}
        if self._run_and_check():
            self._finish_satisfied()
            return
        if state.iteration > self.session.iteration_cap:
            state.status = STATUS_ABORTED
            raise IterationCapReached(self.session.iteration_cap)
        self._compute_step(STEP_GAP)

    def retry(self, intervention: Intervention) -> PipelineState:
        """Recompute the current step under a user intervention."""
        state = self.state
        if state.current_step not in (
            STEP_GAP,
            STEP_CAUSE,
            STEP_AGENT_CAUSE,
            STEP_PARAMS,
        ):
            raise RejectedStepError(f"cannot retry step {state.current_step!r}")
        apply_intervention(
            self, state.current_step, intervention, self.session.backend
        )
        state.status = STATUS_AWAITING
        state.error = None
        return state

    def restart_iteration(self) -> PipelineState:
        """Recompute the current iteration from a fresh run.

        Used after a manual LAN edit invalidates the pending step result: the
        edited network is re-run, the example may now be satisfied, and
        otherwise the diagnosis starts over at the gap step.
        """
        state = self.state
        state.gap = None
        state.cause = None
        state.agent_cause = None
        state.plan = None
        state.strategy = None
        state.error = None
        state.step_prompts = {}
        state.current_step = STEP_GAP
        state.status = STATUS_COMPUTING
        if self._run_and_check():
            self._finish_satisfied()
        else:
            self._compute_step(STEP_GAP)
        return state

    def abort(self):
        self.state.status = STATUS_ABORTED


# --- interventions ------------------------------------------------------------


_STEP_TEMPLATES = {
    STEP_GAP: lambda pipeline: _step1_template(),
    STEP_CAUSE: lambda pipeline: _step2_template(pipeline.lan),
    STEP_AGENT_CAUSE: lambda pipeline: _step3_template(),
    STEP_PARAMS: lambda pipeline: _STEP4_TEMPLATE,
}

_STEP_ACCEPTORS = {
    STEP_GAP: "_accept_gap",
    STEP_CAUSE: "_accept_cause",
    STEP_AGENT_CAUSE: "_accept_agent_cause",
    STEP_PARAMS: "_accept_params",
}

_STEP_FIELDS = {
    STEP_GAP: {"gap", "sub_task"},
    STEP_CAUSE: {"reason_type", "agent_name", "reason_content"},
    STEP_AGENT_CAUSE: {"reason_type", "reason_content"},
    STEP_PARAMS: {"parameters"},
}


def _rebuild_step_prompt(pipeline: UpdatePipeline, step: str) -> str:
    """Reconstruct a step prompt deterministically (after a service restart
    the in-memory prompt cache is gone)."""
    state = pipeline.state
    lan = pipeline.lan
    if state.last_trace is None:
        # the step never computed (e.g. the run itself failed); nothing to
        # merge an edited document into
        raise RejectedStepError(
            f"step {step!r} has no computed result; retry with a hint instead"
        )
    if step == STEP_GAP:
        return build_step1_prompt(lan, state.last_trace, state.example)
    if step == STEP_CAUSE:
        return build_step2_prompt(lan, state.last_trace, state.gap)
    if step == STEP_AGENT_CAUSE:
        agent = lan.agent(state.cause.agent_name)
        return build_step3_prompt(agent, state.last_trace, state.cause)
    if step == STEP_PARAMS:
        return build_step4_prompt(
            lan,
            state.last_trace,
            pipeline._selected_strategy(),
            state.gap,
            state.cause,
            state.agent_cause,
        )
    raise RejectedStepError(f"no prompt for step {step!r}")


def _contains_placeholder(value) -> bool:
    if isinstance(value, str):
        return PLACEHOLDER in value
    if isinstance(value, dict):
        return any(_contains_placeholder(v) for v in value.values())
    if isinstance(value, list):
        return any(_contains_placeholder(v) for v in value)
    return False


def _merge_documents(base: dict, override: dict) -> dict:
    merged = dict(base)
    for key, value in override.items():
        if (
            isinstance(value, dict)
            and isinstance(merged.get(key), dict)
        ):
            merged[key] = _merge_documents(merged[key], value)
        else:
            merged[key] = value
    return merged


def _strip_placeholders(doc):
    """Drop placeholder-valued fields so completed values can fill them."""
    if isinstance(doc, dict):
        return {
            k: _strip_placeholders(v)
            for k, v in doc.items()
            if not (isinstance(v, str) and v == PLACEHOLDER)
        }
    if isinstance(doc, list):
        return [_strip_placeholders(v) for v in doc if v != PLACEHOLDER]
    return doc


def apply_intervention(
    pipeline: UpdatePipeline,
    step: str,
    intervention: Intervention,
    backend: Backend,
):
    """Re-run one step under a user intervention.

    Hints re-run the step's prompt with a guidance section. Edited documents
    are merged over the computed result; any "<???>" placeholder is completed
    by the backend from the step's original prompt plus the partial document.
    The merged result goes through the same validation as the original step.
    """
    state = pipeline.state
    if step != state.current_step:
        raise RejectedStepError(f"pipeline is at {state.current_step!r}, not {step!r}")
    hint = intervention.hint_text or None

    if intervention.edited_document is None:
        # hint only: recompute from scratch with the guidance appended
        pipeline._compute_step(step, hint=hint)
        return state.step_result_doc(step)

    edited = intervention.edited_document
    unknown = set(edited) - _STEP_FIELDS[step]
    if unknown:
        raise MergeError(
            f"fields not in the step template: {', '.join(sorted(unknown))}"
        )

    if hint:
        pipeline._compute_step(step, hint=hint)
    base = state.step_result_doc(step) or {}
    merged = _merge_documents(base, edited)

    if _contains_placeholder(merged):
        template = _STEP_TEMPLATES[step](pipeline)
        original_prompt = state.step_prompts.get(step) or _rebuild_step_prompt(
            pipeline, step
        )
        prompt = (
            f"{original_prompt}\n"
            "\n"
            "A partially completed answer is given below. Replace every "
            f'"{PLACEHOLDER}" placeholder with an appropriate value and '
            "return the full JSON object. Keep all other fields exactly as "
            "given.\n"
            "\n"
            "Partial answer:\n"
            f"{json.dumps(merged, ensure_ascii=False)}"
        )
        response = backend.complete(
            CompletionRequest(
                prompt=prompt, temperature=CONTROL_TEMPERATURE, tag=f"complete:{step}"
            )
        )
        completed, _ = parse_or_reformat(
            response.text,
            template,
            backend,
            pipeline.session.repair_budget,
            tag=f"complete:{step}",
        )
        # the user's concrete fields always win over the completion
        merged = _merge_documents(completed, _strip_placeholders(edited))

    acceptor = getattr(pipeline, _STEP_ACCEPTORS[step])
    acceptor(merged)
    return state.step_result_doc(step)


# --- the outer loop -----------------------------------------------------------


def train_example(
    session: TrainingSession,
    example: TrainingExample,
    supervision_policy: str = "auto_confirm",
) -> tuple[Lan, list[dict]]:
    """Run the full pipeline for one example without interventions.

    Under ``auto_confirm`` every step is accepted as computed; the
    ``interactive`` policy behaves identically here because no intervention
    is ever submitted (interactive supervision lives in the session service).
    """
    if supervision_policy not in ("auto_confirm", "interactive"):
        raise ValidationError(f"unknown supervision policy {supervision_policy!r}")
    pipeline = UpdatePipeline(session, example)
    pipeline.start()
    while pipeline.state.status == STATUS_AWAITING:
        pipeline.confirm()
    return session.lan, pipeline.iterations_log
