"""Edit scripts between two LANs and their interaction-cost metric.

The script is a deterministic sequence of baseline GUI operations (create or
delete an agent, connect or disconnect, edit a text field, toggle or list
edits) that transforms one LAN into another. Its cost under the
click/keypress/drag/select model is the LAN modification distance. The
script is canonical, not provably minimal, so the distance is an upper
bound on the true minimum.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .model import (
    Agent,
    ControlModule,
    Example,
    ExecutionModule,
    KnowledgeItem,
    Lan,
    add_agent,
    add_edge,
    remove_agent,
    remove_edge,
    replace_agent,
)

ACTION_COSTS = {"click": 1, "keypress": 1, "drag": 2, "select": 2}


@dataclass
class EditAction:
    kind: str  # "click" | "keypress" | "drag" | "select"
    cost: int = 0

    def __post_init__(self):
        if self.kind not in ACTION_COSTS:
            raise ValueError(f"unknown edit action kind: {self.kind!r}")
        self.cost = ACTION_COSTS[self.kind]


def _typing(text: str) -> list[EditAction]:
    """Click into the field, then one keypress per character."""
    return [EditAction("click")] + [EditAction("keypress")] * len(text)


def _span_delete() -> list[EditAction]:
    """Select the span, press Delete."""
    return [EditAction("select"), EditAction("keypress")]


def _example_text(example: Example) -> str:
    parts = [f"{label}: {value}" for label, value in example.inputs.entries]
    result = example.result
    if isinstance(result, bool):
        result = "true" if result else "false"
    parts.append(result)
    return "\n".join(parts)


@dataclass
class EditOp:
    def actions(self) -> list[EditAction]:
        raise NotImplementedError

    def apply(self, lan: Lan) -> Lan:
        raise NotImplementedError

    @property
    def cost(self) -> int:
        return sum(action.cost for action in self.actions())

    def to_dict(self) -> dict:
        doc = {"op": type(self).__name__, "cost": self.cost}
        for key, value in self.__dict__.items():
            if isinstance(value, KnowledgeItem):
                value = {"text": value.text, "origin": value.origin}
            elif isinstance(value, Example):
                value = {
                    "inputs": [[k, v] for k, v in value.inputs.entries],
                    "result": value.result,
                }
            doc[key] = value
        return doc


def _blank_agent() -> Agent:
    return Agent(name="", control=ControlModule(), execution=ExecutionModule("", ""))


def _find(lan: Lan, name: str) -> Agent:
    for agent in lan.agents:
        if agent.name == name:
            return agent
    raise KeyError(f"edit script references missing agent {name!r}")


@dataclass
class NewAgentOp(EditOp):
    def actions(self):
        return [EditAction("click")]

    def apply(self, lan):
        return add_agent(lan, _blank_agent())


@dataclass
class DeleteAgentOp(EditOp):
    name: str

    def actions(self):
        # click-select the node, press Delete; incident edges go with it
        return [EditAction("click"), EditAction("keypress")]

    def apply(self, lan):
        return remove_agent(lan, self.name)


@dataclass
class SetTextFieldOp(EditOp):
    agent: str  # "" targets the most recently created, still unnamed agent
    field: str  # "name" | "subtask_description" | "output_description"
    old_text: str
    new_text: str

    def actions(self):
        acts: list[EditAction] = []
        if self.old_text:
            acts.extend(_span_delete())
        if self.new_text:
            acts.extend(_typing(self.new_text))
        return acts

    def apply(self, lan):
        agent = _find(lan, self.agent)
        if self.field == "name":
            updated = replace(agent, name=self.new_text)
        elif self.field == "subtask_description":
            updated = replace(
                agent, execution=replace(agent.execution, subtask_description=self.new_text)
            )
        elif self.field == "output_description":
            updated = replace(
                agent, execution=replace(agent.execution, output_description=self.new_text)
            )
        else:
            raise ValueError(f"unknown text field: {self.field!r}")
        return replace_agent(lan, self.agent, updated)


@dataclass
class SetEnabledOp(EditOp):
    agent: str
    value: bool

    def actions(self):
        return [EditAction("click")]

    def apply(self, lan):
        agent = _find(lan, self.agent)
        updated = replace(agent, control=replace(agent.control, enabled=self.value))
        return replace_agent(lan, self.agent, updated)


@dataclass
class AddRequiredPredecessorOp(EditOp):
    agent: str
    predecessor: str

    def actions(self):
        return [EditAction("click")]

    def apply(self, lan):
        agent = _find(lan, self.agent)
        control = replace(
            agent.control,
            required_predecessors=agent.control.required_predecessors
            + [self.predecessor],
        )
        return replace_agent(lan, self.agent, replace(agent, control=control))


@dataclass
class RemoveRequiredPredecessorOp(EditOp):
    agent: str
    predecessor: str

    def actions(self):
        return [EditAction("click")]

    def apply(self, lan):
        agent = _find(lan, self.agent)
        control = replace(
            agent.control,
            required_predecessors=[
                p for p in agent.control.required_predecessors if p != self.predecessor
            ],
        )
        return replace_agent(lan, self.agent, replace(agent, control=control))


def _module_of(agent: Agent, module: str):
    return agent.control if module == "cm" else agent.execution


def _with_module(agent: Agent, module: str, updated) -> Agent:
    if module == "cm":
        return replace(agent, control=updated)
    return replace(agent, execution=updated)


@dataclass
class AddKnowledgeOp(EditOp):
    agent: str
    module: str  # "cm" | "em"
    item: KnowledgeItem

    def actions(self):
        return _typing(self.item.text)

    def apply(self, lan):
        agent = _find(lan, self.agent)
        mod = _module_of(agent, self.module)
        updated = replace(mod, knowledge=mod.knowledge + [self.item])
        return replace_agent(lan, self.agent, _with_module(agent, self.module, updated))


@dataclass
class RemoveKnowledgeOp(EditOp):
    agent: str
    module: str
    item: KnowledgeItem

    def actions(self):
        return _span_delete()

    def apply(self, lan):
        agent = _find(lan, self.agent)
        mod = _module_of(agent, self.module)
        knowledge = list(mod.knowledge)
        knowledge.remove(self.item)
        updated = replace(mod, knowledge=knowledge)
        return replace_agent(lan, self.agent, _with_module(agent, self.module, updated))


@dataclass
class AddExampleOp(EditOp):
    agent: str
    module: str
    example: Example

    def actions(self):
        return _typing(_example_text(self.example))

    def apply(self, lan):
        agent = _find(lan, self.agent)
        mod = _module_of(agent, self.module)
        updated = replace(mod, examples=mod.examples + [self.example])
        return replace_agent(lan, self.agent, _with_module(agent, self.module, updated))


@dataclass
class RemoveExampleOp(EditOp):
    agent: str
    module: str
    example: Example

    def actions(self):
        return _span_delete()

    def apply(self, lan):
        agent = _find(lan, self.agent)
        mod = _module_of(agent, self.module)
        examples = list(mod.examples)
        examples.remove(self.example)
        updated = replace(mod, examples=examples)
        return replace_agent(lan, self.agent, _with_module(agent, self.module, updated))


@dataclass
class ConnectOp(EditOp):
    source: str
    target: str

    def actions(self):
        return [EditAction("drag")]

    def apply(self, lan):
        return add_edge(lan, self.source, self.target)


@dataclass
class DisconnectOp(EditOp):
    source: str
    target: str

    def actions(self):
        return _span_delete()

    def apply(self, lan):
        return remove_edge(lan, self.source, self.target)


def _text_field_ops(agent_name: str, field_name: str, old: str, new: str) -> list[EditOp]:
    if old == new:
        return []
    return [SetTextFieldOp(agent_name, field_name, old, new)]


def _list_diff_ops(agent_name, module, old_mod, new_mod) -> list[EditOp]:
    ops: list[EditOp] = []
    for item in old_mod.knowledge:
        if item not in new_mod.knowledge:
            ops.append(RemoveKnowledgeOp(agent_name, module, item))
    for item in new_mod.knowledge:
        if item not in old_mod.knowledge:
            ops.append(AddKnowledgeOp(agent_name, module, item))
    for example in old_mod.examples:
        if example not in new_mod.examples:
            ops.append(RemoveExampleOp(agent_name, module, example))
    for example in new_mod.examples:
        if example not in old_mod.examples:
            ops.append(AddExampleOp(agent_name, module, example))
    return ops


def _agent_edit_ops(old: Agent, new: Agent) -> list[EditOp]:
    name = new.name
    ops: list[EditOp] = []
    ops += _text_field_ops(
        name,
        "subtask_description",
        old.execution.subtask_description,
        new.execution.subtask_description,
    )
    ops += _text_field_ops(
        name,
        "output_description",
        old.execution.output_description,
        new.execution.output_description,
    )
    if old.control.enabled != new.control.enabled:
        ops.append(SetEnabledOp(name, new.control.enabled))
    for pred in old.control.required_predecessors:
        if pred not in new.control.required_predecessors:
            ops.append(RemoveRequiredPredecessorOp(name, pred))
    ops += _list_diff_ops(name, "cm", old.control, new.control)
    ops += _list_diff_ops(name, "em", old.execution, new.execution)
    return ops


def _creation_ops(agent: Agent) -> list[EditOp]:
    blank = _blank_agent()
    ops: list[EditOp] = [NewAgentOp()]
    if agent.name:
        ops.append(SetTextFieldOp("", "name", "", agent.name))
    ops += _agent_edit_ops(replace(blank, name=agent.name), agent)
    # required predecessors wait until the edges exist; see lan_edit_script
    return [
        op for op in ops if not isinstance(op, AddRequiredPredecessorOp)
    ]


def lan_edit_script(old: Lan, new: Lan) -> list[EditOp]:
    """Deterministic GUI-operation script turning ``old`` into ``new``.

    Agents are matched by name, so a rename costs a delete plus a re-create.
    Op order keeps every intermediate LAN constructible: deletions, then
    creations, then field edits and required-predecessor removals, then edge
    changes, then required-predecessor additions.
    """
    old_by_name = {a.name: a for a in old.agents}
    new_by_name = {a.name: a for a in new.agents}

    ops: list[EditOp] = []
    for agent in old.agents:
        if agent.name not in new_by_name:
            ops.append(DeleteAgentOp(agent.name))
    for agent in new.agents:
        if agent.name not in old_by_name:
            ops += _creation_ops(agent)
    for agent in new.agents:
        if agent.name in old_by_name:
            ops += _agent_edit_ops(old_by_name[agent.name], agent)

    new_edges = set(new.edges)
    old_edges = set(old.edges)
    for source, target in old.edges:
        gone_with_agent = source not in new_by_name or target not in new_by_name
        if (source, target) not in new_edges and not gone_with_agent:
            ops.append(DisconnectOp(source, target))
    for source, target in new.edges:
        if (source, target) not in old_edges:
            ops.append(ConnectOp(source, target))

    for agent in new.agents:
        previous = old_by_name.get(agent.name)
        before = previous.control.required_predecessors if previous else []
        for pred in agent.control.required_predecessors:
            if pred not in before:
                ops.append(AddRequiredPredecessorOp(agent.name, pred))
    return ops


def apply_edit_script(lan: Lan, script: list[EditOp]) -> Lan:
    for op in script:
        lan = op.apply(lan)
    return lan


def lmd(old: Lan, new: Lan) -> int:
    """LAN modification distance: cost of the canonical edit script."""
    return sum(op.cost for op in lan_edit_script(old, new))
