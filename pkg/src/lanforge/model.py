"""Data model for LLM agent networks (LANs).

A LAN is a directed acyclic graph of agents plus a task description. Each
agent carries a control module (activation gate) and an execution module
(subtask computation). Values here are plain dataclasses treated as
immutable: every editing helper returns a new ``Lan``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

# Label under which the external (network-level) input travels. Agent names
# may not collide with it.
EXTERNAL_INPUT_LABEL = "__input__"

SCHEMA_VERSION = 1


class LanStructureError(ValueError):
    """A LAN value could not be constructed (dangling edge, reserved name...)."""


class CycleError(Exception):
    """Raised when a topological order is requested for a cyclic network."""


class InvalidLanError(Exception):
    """Raised when an operation requires a LAN that passes validation."""

    def __init__(self, violations: list["Violation"]):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


class ParseError(Exception):
    """A LAN document could not be parsed. ``location`` points at the culprit."""

    def __init__(self, message: str, location: str = "$"):
        self.location = location
        super().__init__(f"{location}: {message}")


class SchemaVersionError(ParseError):
    """The document declares a schema version this code does not understand."""


@dataclass
class NamedValues:
    """Ordered (source label, value) pairs; labels are unique.

    The label is either ``EXTERNAL_INPUT_LABEL`` or the name of the agent
    that produced the value.
    """

    entries: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self):
        self.entries = [(str(k), str(v)) for k, v in self.entries]
        seen = set()
        for label, _ in self.entries:
            if label in seen:
                raise ValueError(f"duplicate label in NamedValues: {label!r}")
            seen.add(label)

    def labels(self) -> list[str]:
        return [label for label, _ in self.entries]

    def get(self, label: str) -> str | None:
        for key, value in self.entries:
            if key == label:
                return value
        return None

    def with_entry(self, label: str, value: str) -> "NamedValues":
        if self.get(label) is not None:
            raise ValueError(f"label already present: {label!r}")
        return NamedValues(self.entries + [(label, value)])

    def merged(self, other: "NamedValues") -> "NamedValues":
        """Append entries of ``other`` whose labels are not present yet."""
        out = list(self.entries)
        have = {label for label, _ in out}
        for label, value in other.entries:
            if label not in have:
                out.append((label, value))
                have.add(label)
        return NamedValues(out)


@dataclass
class KnowledgeItem:
    text: str
    origin: str = "user"  # "user" | "pipeline"
    created_at: str = ""  # ISO-8601, filled by the creation site

    def __post_init__(self):
        if not self.text:
            raise ValueError("knowledge text must be non-empty")
        if self.origin not in ("user", "pipeline"):
            raise ValueError(f"unknown knowledge origin: {self.origin!r}")


@dataclass
class Example:
    """A recorded (inputs -> result) pair used for few-shot prompting.

    CM examples carry boolean results, EM examples carry text results.
    ``provenance`` names the training example the pair was recorded from.
    """

    inputs: NamedValues
    result: bool | str
    provenance: str = ""


@dataclass
class ControlModule:
    enabled: bool = True
    required_predecessors: list[str] = field(default_factory=list)
    knowledge: list[KnowledgeItem] = field(default_factory=list)
    examples: list[Example] = field(default_factory=list)

    def __post_init__(self):
        for example in self.examples:
            if not isinstance(example.result, bool):
                raise ValueError("control-module examples must have boolean results")


@dataclass
class ExecutionModule:
    subtask_description: str
    output_description: str
    knowledge: list[KnowledgeItem] = field(default_factory=list)
    examples: list[Example] = field(default_factory=list)

    def __post_init__(self):
        for example in self.examples:
            if isinstance(example.result, bool):
                raise ValueError("execution-module examples must have text results")


@dataclass
class Agent:
    name: str
    control: ControlModule = field(default_factory=ControlModule)
    execution: ExecutionModule = field(
        default_factory=lambda: ExecutionModule("", "")
    )


@dataclass
class Lan:
    task_description: str
    input_description: str = ""
    output_description: str = ""
    agents: list[Agent] = field(default_factory=list)
    edges: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self):
        names = [a.name for a in self.agents]
        for name in names:
            if name == EXTERNAL_INPUT_LABEL:
                raise LanStructureError(
                    f"agent name {EXTERNAL_INPUT_LABEL!r} is reserved"
                )
        name_set = set(names)
        deduped: list[tuple[str, str]] = []
        seen = set()
        for edge in self.edges:
            source, target = edge
            if source not in name_set or target not in name_set:
                raise LanStructureError(f"edge references unknown agent: {edge!r}")
            if (source, target) not in seen:
                deduped.append((source, target))
                seen.add((source, target))
        # edges are a set; keep them in a canonical order (agent insertion)
        # so equality and serialization don't depend on the editing path
        index = {name: i for i, name in reversed(list(enumerate(names)))}
        deduped.sort(key=lambda e: (index[e[0]], index[e[1]]))
        self.edges = deduped
        for agent in self.agents:
            preds = {s for s, t in self.edges if t == agent.name}
            for required in agent.control.required_predecessors:
                if required not in preds:
                    raise LanStructureError(
                        f"agent {agent.name!r} requires {required!r} which is not "
                        f"one of its predecessors"
                    )

    def agent(self, name: str) -> Agent:
        for candidate in self.agents:
            if candidate.name == name:
                return candidate
        raise KeyError(name)

    def agent_names(self) -> list[str]:
        return [a.name for a in self.agents]

    def predecessors(self, name: str) -> list[str]:
        """Direct predecessors of ``name`` in edge insertion order."""
        return [s for s, t in self.edges if t == name]

    def successors(self, name: str) -> list[str]:
        return [t for s, t in self.edges if s == name]


# --- validation -------------------------------------------------------------
#
# Exactly the three save-blocking rules: cycles, empty identity fields,
# duplicate names. Violations are data, not exceptions.


@dataclass
class CycleViolation:
    agents: list[str]

    def __str__(self):
        return f"cycle among agents: {', '.join(self.agents)}"

    def to_dict(self) -> dict:
        return {"rule": "cycle", "agents": list(self.agents)}


@dataclass
class EmptyFieldViolation:
    agent_name: str
    field: str  # "name" | "subtask_description" | "output_description"

    def __str__(self):
        who = self.agent_name or "<unnamed agent>"
        return f"agent {who!r} has an empty {self.field}"

    def to_dict(self) -> dict:
        return {"rule": "empty_field", "agent": self.agent_name, "field": self.field}


@dataclass
class DuplicateNameViolation:
    name: str

    def __str__(self):
        return f"duplicate agent name: {self.name!r}"

    def to_dict(self) -> dict:
        return {"rule": "duplicate_name", "name": self.name}


Violation = CycleViolation | EmptyFieldViolation | DuplicateNameViolation


def validate_lan(lan: Lan) -> list[Violation]:
    """Return every violation of the save-blocking rules; empty iff saveable."""
    violations: list[Violation] = []
    violations.extend(_find_cycles(lan))
    for agent in lan.agents:
        if not agent.name:
            violations.append(EmptyFieldViolation(agent.name, "name"))
        if not agent.execution.subtask_description:
            violations.append(EmptyFieldViolation(agent.name, "subtask_description"))
        if not agent.execution.output_description:
            violations.append(EmptyFieldViolation(agent.name, "output_description"))
    seen: set[str] = set()
    reported: set[str] = set()
    for name in lan.agent_names():
        if name in seen and name not in reported:
            violations.append(DuplicateNameViolation(name))
            reported.add(name)
        seen.add(name)
    return violations


def _find_cycles(lan: Lan) -> list[CycleViolation]:
    """Tarjan SCC; every non-trivial component (or self-loop) is one violation."""
    order = {name: i for i, name in enumerate(lan.agent_names())}
    graph: dict[str, list[str]] = {name: [] for name in order}
    for source, target in lan.edges:
        graph[source].append(target)

    index_of: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    counter = [0]
    components: list[list[str]] = []

    def strongconnect(node: str):
        index_of[node] = low[node] = counter[0]
        counter[0] += 1
        stack.append(node)
        on_stack.add(node)
        for succ in graph[node]:
            if succ not in index_of:
                strongconnect(succ)
                low[node] = min(low[node], low[succ])
            elif succ in on_stack:
                low[node] = min(low[node], index_of[succ])
        if low[node] == index_of[node]:
            component = []
            while True:
                member = stack.pop()
                on_stack.discard(member)
                component.append(member)
                if member == node:
                    break
            components.append(component)

    for name in graph:
        if name not in index_of:
            strongconnect(name)

    violations = []
    for component in components:
        is_cycle = len(component) > 1 or (
            (component[0], component[0]) in lan.edges
        )
        if is_cycle:
            members = sorted(set(component), key=lambda n: order[n])
            violations.append(CycleViolation(members))
    return violations


def topological_order(lan: Lan) -> list[str]:
    """Agent names with every edge (u, v) putting u before v.

    Ties break by agent insertion order, which keeps execution and traces
    reproducible.
    """
    names = lan.agent_names()
    indegree = {name: 0 for name in names}
    for _, target in lan.edges:
        indegree[target] += 1
    order: list[str] = []
    ready = [name for name in names if indegree[name] == 0]
    while ready:
        node = ready.pop(0)
        order.append(node)
        freed = []
        for source, target in lan.edges:
            if source == node:
                indegree[target] -= 1
                if indegree[target] == 0:
                    freed.append(target)
        # keep the ready list in insertion order
        ready.extend(sorted(freed, key=names.index))
        ready.sort(key=names.index)
    if len(order) != len(names):
        raise CycleError("network contains a cycle; no topological order exists")
    return order


# --- editing helpers --------------------------------------------------------


def add_agent(lan: Lan, agent: Agent) -> Lan:
    return replace(lan, agents=lan.agents + [agent], edges=list(lan.edges))


def remove_agent(lan: Lan, name: str) -> Lan:
    """Drop an agent, its incident edges, and stale required-predecessor refs."""
    agents = []
    for agent in lan.agents:
        if agent.name == name:
            continue
        if name in agent.control.required_predecessors:
            control = replace(
                agent.control,
                required_predecessors=[
                    p for p in agent.control.required_predecessors if p != name
                ],
            )
            agent = replace(agent, control=control)
        agents.append(agent)
    edges = [(s, t) for s, t in lan.edges if s != name and t != name]
    return replace(lan, agents=agents, edges=edges)


def add_edge(lan: Lan, source: str, target: str) -> Lan:
    return replace(lan, agents=list(lan.agents), edges=lan.edges + [(source, target)])


def remove_edge(lan: Lan, source: str, target: str) -> Lan:
    agents = []
    for agent in lan.agents:
        if agent.name == target and source in agent.control.required_predecessors:
            control = replace(
                agent.control,
                required_predecessors=[
                    p for p in agent.control.required_predecessors if p != source
                ],
            )
            agent = replace(agent, control=control)
        agents.append(agent)
    edges = [(s, t) for s, t in lan.edges if (s, t) != (source, target)]
    return replace(lan, agents=agents, edges=edges)


def replace_agent(lan: Lan, name: str, agent: Agent) -> Lan:
    """Swap one agent; a rename rewrites edges and required-predecessor refs."""
    agents = []
    for current in lan.agents:
        if current.name == name:
            agents.append(agent)
            continue
        if name != agent.name and name in current.control.required_predecessors:
            control = replace(
                current.control,
                required_predecessors=[
                    agent.name if p == name else p
                    for p in current.control.required_predecessors
                ],
            )
            current = replace(current, control=control)
        agents.append(current)
    edges = [
        (agent.name if s == name else s, agent.name if t == name else t)
        for s, t in lan.edges
    ]
    return replace(lan, agents=agents, edges=edges)


# --- serialization ----------------------------------------------------------


def _named_values_to_doc(values: NamedValues) -> list[list[str]]:
    return [[label, value] for label, value in values.entries]


def _example_to_doc(example: Example) -> dict:
    return {
        "inputs": _named_values_to_doc(example.inputs),
        "result": example.result,
        "provenance": example.provenance,
    }


def _knowledge_to_doc(item: KnowledgeItem) -> dict:
    return {"text": item.text, "origin": item.origin, "created_at": item.created_at}


def _agent_to_doc(agent: Agent) -> dict:
    return {
        "name": agent.name,
        "control": {
            "enabled": agent.control.enabled,
            "required_predecessors": list(agent.control.required_predecessors),
            "knowledge": [_knowledge_to_doc(k) for k in agent.control.knowledge],
            "examples": [_example_to_doc(e) for e in agent.control.examples],
        },
        "execution": {
            "subtask_description": agent.execution.subtask_description,
            "output_description": agent.execution.output_description,
            "knowledge": [_knowledge_to_doc(k) for k in agent.execution.knowledge],
            "examples": [_example_to_doc(e) for e in agent.execution.examples],
        },
    }


def lan_to_doc(lan: Lan) -> dict:
    return {
        "version": SCHEMA_VERSION,
        "task_description": lan.task_description,
        "input_description": lan.input_description,
        "output_description": lan.output_description,
        "agents": [_agent_to_doc(a) for a in lan.agents],
        "edges": [[s, t] for s, t in lan.edges],
    }


def canonical_json(doc) -> str:
    """Canonical rendering: sorted keys, two-space indent, trailing newline.

    Array order (agents, edges, knowledge, examples) is preserved as-is.
    """
    return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def serialize_lan(lan: Lan) -> str:
    violations = validate_lan(lan)
    if violations:
        raise InvalidLanError(violations)
    return canonical_json(lan_to_doc(lan))


class _DocReader:
    """Typed access into a parsed JSON document with path-tracking errors."""

    def __init__(self, doc, location: str = "$"):
        self.doc = doc
        self.location = location

    def fail(self, message: str):
        raise ParseError(message, self.location)

    def require(self, key: str) -> "_DocReader":
        if not isinstance(self.doc, dict):
            self.fail("expected an object")
        if key not in self.doc:
            self.fail(f"missing key {key!r}")
        return _DocReader(self.doc[key], f"{self.location}.{key}")

    def get(self, key: str, default) -> "_DocReader":
        if not isinstance(self.doc, dict):
            self.fail("expected an object")
        return _DocReader(self.doc.get(key, default), f"{self.location}.{key}")

    def items(self) -> list["_DocReader"]:
        if not isinstance(self.doc, list):
            self.fail("expected an array")
        return [
            _DocReader(item, f"{self.location}[{i}]")
            for i, item in enumerate(self.doc)
        ]

    def string(self) -> str:
        if not isinstance(self.doc, str):
            self.fail("expected a string")
        return self.doc

    def boolean(self) -> bool:
        if not isinstance(self.doc, bool):
            self.fail("expected a boolean")
        return self.doc


def _named_values_from(reader: _DocReader) -> NamedValues:
    entries = []
    for item in reader.items():
        if not isinstance(item.doc, list) or len(item.doc) != 2:
            item.fail("expected a [label, value] pair")
        entries.append((str(item.doc[0]), str(item.doc[1])))
    try:
        return NamedValues(entries)
    except ValueError as exc:
        reader.fail(str(exc))


def _knowledge_from(reader: _DocReader) -> KnowledgeItem:
    try:
        return KnowledgeItem(
            text=reader.require("text").string(),
            origin=reader.require("origin").string(),
            created_at=reader.require("created_at").string(),
        )
    except ValueError as exc:
        reader.fail(str(exc))


def _example_from(reader: _DocReader, boolean_result: bool) -> Example:
    result_reader = reader.require("result")
    if boolean_result:
        result: bool | str = result_reader.boolean()
    else:
        result = result_reader.string()
    return Example(
        inputs=_named_values_from(reader.require("inputs")),
        result=result,
        provenance=reader.get("provenance", "").string(),
    )


def _agent_from(reader: _DocReader) -> Agent:
    control = reader.require("control")
    execution = reader.require("execution")
    try:
        return Agent(
            name=reader.require("name").string(),
            control=ControlModule(
                enabled=control.require("enabled").boolean(),
                required_predecessors=[
                    item.string()
                    for item in control.require("required_predecessors").items()
                ],
                knowledge=[
                    _knowledge_from(item)
                    for item in control.require("knowledge").items()
                ],
                examples=[
                    _example_from(item, boolean_result=True)
                    for item in control.require("examples").items()
                ],
            ),
            execution=ExecutionModule(
                subtask_description=execution.require("subtask_description").string(),
                output_description=execution.require("output_description").string(),
                knowledge=[
                    _knowledge_from(item)
                    for item in execution.require("knowledge").items()
                ],
                examples=[
                    _example_from(item, boolean_result=False)
                    for item in execution.require("examples").items()
                ],
            ),
        )
    except ValueError as exc:
        reader.fail(str(exc))


def lan_from_doc(doc) -> Lan:
    root = _DocReader(doc)
    version = root.require("version")
    if version.doc != SCHEMA_VERSION:
        raise SchemaVersionError(
            f"unsupported schema version {version.doc!r}", version.location
        )
    edges = []
    for item in root.require("edges").items():
        if not isinstance(item.doc, list) or len(item.doc) != 2:
            item.fail("expected a [source, target] pair")
        edges.append((str(item.doc[0]), str(item.doc[1])))
    try:
        return Lan(
            task_description=root.require("task_description").string(),
            input_description=root.require("input_description").string(),
            output_description=root.require("output_description").string(),
            agents=[_agent_from(item) for item in root.require("agents").items()],
            edges=edges,
        )
    except LanStructureError as exc:
        raise ParseError(str(exc), "$.edges") from exc


def deserialize_lan(text: str) -> Lan:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(
            f"invalid JSON: {exc.msg}", f"$ (line {exc.lineno}, column {exc.colno})"
        ) from exc
    return lan_from_doc(doc)
