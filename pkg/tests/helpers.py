"""Shared test utilities: LAN generators, independent oracles, backends."""

from __future__ import annotations

import itertools
import json
import re

from lanforge.gateway import Backend, CompletionResponse, OracleExhaustedError
from lanforge.model import (
    EXTERNAL_INPUT_LABEL,
    Agent,
    ControlModule,
    Example,
    ExecutionModule,
    KnowledgeItem,
    Lan,
    NamedValues,
)

FIXED_STAMP = "2024-01-01T00:00:00+00:00"


def cm_reply(result: bool, thought: str = "because") -> str:
    return json.dumps({"thought": thought, "result": result})


def em_reply(result: str, thought: str = "computed") -> str:
    return json.dumps({"thought": thought, "result": result})


# --- the history-consistency harness ----------------------------------------
#
# A three-agent network trained on two examples; every strategy is applied on
# top of it and the two examples are replayed with a backend that honors the
# recorded few-shot examples and nothing else.


def build_consistency_session():
    from lanforge.gateway import ScriptedBackend
    from lanforge.update import (
        TrainingExample,
        TrainingSession,
        fixed_clock,
        train_example,
    )

    alpha = Agent(
        name="Alpha",
        control=ControlModule(enabled=False),
        execution=ExecutionModule("always-on base step", "a string"),
    )
    beta = Agent(
        name="Beta",
        control=ControlModule(enabled=True),
        execution=ExecutionModule("conditional polish step", "a string"),
    )
    delta = Agent(
        name="Delta",
        control=ControlModule(enabled=True),
        execution=ExecutionModule("conditional side step", "a string"),
    )
    lan = Lan(
        "harness task",
        "an input",
        "an output",
        [alpha, beta, delta],
        [("Alpha", "Beta"), ("Alpha", "Delta")],
    )
    replies = [
        # example one: Beta activates, Delta does not; final output B1
        em_reply("A1"),
        cm_reply(True),
        em_reply("B1"),
        cm_reply(False),
        # example two: nothing past Alpha activates; final output A2
        em_reply("A2"),
        cm_reply(False),
        cm_reply(False),
    ]
    session = TrainingSession(
        lan=lan, backend=ScriptedBackend(replies), clock=fixed_clock()
    )
    for example_id, text, truth in (
        ("hx-1", "harness input one", "B1"),
        ("hx-2", "harness input two", "A2"),
    ):
        train_example(
            session, TrainingExample(id=example_id, input=text, ground_truth=truth)
        )
    return session


def replay_history(lan, history):
    """Re-run every historical example against the updated network with a
    backend that only honors recorded examples; returns the new traces."""
    from lanforge.runtime import run_lan

    traces = []
    for example, _recorded in history:
        backend = FewShotHonoringBackend(fallback=None)
        traces.append(run_lan(lan, example.input, backend))
    return traces


# --- random LAN generation ----------------------------------------------------


def random_lan(rng, max_agents: int = 10, edge_probability: float = 0.3) -> Lan:
    """A random valid LAN; edges only go from earlier to later agents."""
    n = rng.randint(1, max_agents)
    names = [f"Agent {i}" for i in range(n)]
    edges = [
        (names[i], names[j])
        for i in range(n)
        for j in range(i + 1, n)
        if rng.random() < edge_probability
    ]

    def knowledge():
        return [
            KnowledgeItem(
                text=f"know {rng.randrange(1000)} é",
                origin=rng.choice(["user", "pipeline"]),
                created_at=FIXED_STAMP,
            )
            for _ in range(rng.randint(0, 2))
        ]

    def values():
        entries = [(EXTERNAL_INPUT_LABEL, f"value {rng.randrange(1000)}")]
        for k in range(rng.randint(0, 2)):
            entries.append((f"source{k}", f"out {rng.randrange(1000)}"))
        return NamedValues(entries)

    agents = []
    for i, name in enumerate(names):
        preds = [s for s, t in edges if t == name]
        required = [p for p in preds if rng.random() < 0.25]
        cm_examples = [
            Example(inputs=values(), result=rng.random() < 0.5, provenance=f"p{rng.randrange(8)}")
            for _ in range(rng.randint(0, 2))
        ]
        em_examples = [
            Example(inputs=values(), result=f"res {rng.randrange(1000)}", provenance=f"p{rng.randrange(8)}")
            for _ in range(rng.randint(0, 2))
        ]
        agents.append(
            Agent(
                name=name,
                control=ControlModule(
                    enabled=rng.random() < 0.7,
                    required_predecessors=required,
                    knowledge=knowledge(),
                    examples=cm_examples,
                ),
                execution=ExecutionModule(
                    subtask_description=f"subtask {i} of the task",
                    output_description=f"output {i}",
                    knowledge=knowledge(),
                    examples=em_examples,
                ),
            )
        )
    return Lan(
        task_description="a task",
        input_description="an input",
        output_description="an output",
        agents=agents,
        edges=edges,
    )


# --- independent oracles --------------------------------------------------------


def oracle_topological_order(names: list[str], edges) -> list[str]:
    """First valid ordering in insertion-lexicographic order.

    Full permutation enumeration up to 6 agents; a scan-based greedy beyond
    (both independent of the production Kahn implementation).
    """
    edge_list = list(edges)
    if len(names) <= 6:
        for perm in itertools.permutations(range(len(names))):
            order = [names[i] for i in perm]
            position = {n: i for i, n in enumerate(order)}
            if all(position[s] < position[t] for s, t in edge_list):
                return order
        raise ValueError("no valid ordering (cycle)")
    order: list[str] = []
    placed: set[str] = set()
    remaining = list(names)
    while remaining:
        for candidate in remaining:
            preds = {s for s, t in edge_list if t == candidate}
            if preds <= placed:
                order.append(candidate)
                placed.add(candidate)
                remaining.remove(candidate)
                break
        else:
            raise ValueError("no valid ordering (cycle)")
    return order


def naive_run(lan: Lan, external_input: str, decisions: dict, em_outputs: dict) -> dict:
    """Reference interpreter: activations pre-decided, outputs pre-scripted.

    Returns per-agent inputs/outputs/activation plus the final output and
    which agents needed an LLM decision, all computed without the runtime.
    """
    order = oracle_topological_order(lan.agent_names(), lan.edges)
    outputs: dict[str, list] = {}
    activated: dict[str, bool] = {}
    inputs_of: dict[str, list] = {}
    cm_llm: dict[str, bool] = {}
    for name in order:
        agent = lan.agent(name)
        entries = [(EXTERNAL_INPUT_LABEL, external_input)]
        seen = {EXTERNAL_INPUT_LABEL}
        for source, target in lan.edges:
            if target == name:
                for key, value in outputs[source]:
                    if key not in seen:
                        entries.append((key, value))
                        seen.add(key)
        if not agent.control.enabled:
            act, used_llm = True, False
        elif any(not activated[r] for r in agent.control.required_predecessors):
            act, used_llm = False, False
        else:
            act, used_llm = decisions[name], True
        outputs[name] = entries + [(name, em_outputs[name])] if act else list(entries)
        activated[name] = act
        inputs_of[name] = entries
        cm_llm[name] = used_llm
    final = external_input
    for name in order:
        if activated[name]:
            final = dict(outputs[name])[name]
    return {
        "order": order,
        "activated": activated,
        "inputs": inputs_of,
        "outputs": outputs,
        "final": final,
        "cm_llm": cm_llm,
    }


def script_for(naive: dict, decisions: dict, em_outputs: dict) -> list[str]:
    """The FIFO reply queue a real run needs, derived from the reference run."""
    replies = []
    for name in naive["order"]:
        if naive["cm_llm"][name]:
            replies.append(cm_reply(decisions[name]))
        if naive["activated"][name]:
            replies.append(em_reply(em_outputs[name]))
    return replies


# --- scripted/rule backends -------------------------------------------------------


class RuleBackend(Backend):
    """Computes each reply from the request via a rule function."""

    backend_id = "rule"

    def __init__(self, rule):
        self.rule = rule
        self.calls = []

    def complete(self, request):
        self.calls.append(request)
        return CompletionResponse(
            text=self.rule(request), latency=0.0, backend_id=self.backend_id
        )


class TagScriptedBackend(Backend):
    """FIFO reply queues per request tag, with an optional fallback rule."""

    backend_id = "tag-scripted"

    def __init__(self, by_tag: dict[str, list[str]], fallback=None):
        self.by_tag = {tag: list(replies) for tag, replies in by_tag.items()}
        self.fallback = fallback
        self.calls = []

    def complete(self, request):
        self.calls.append(request)
        queue = self.by_tag.get(request.tag)
        if queue:
            return CompletionResponse(queue.pop(0), 0.0, self.backend_id)
        if self.fallback is not None:
            return CompletionResponse(self.fallback(request), 0.0, self.backend_id)
        raise OracleExhaustedError(f"no scripted reply for tag {request.tag!r}")


# --- prompt parsing for the few-shot honoring backend ------------------------------

_INPUT_LINE = re.compile(
    r'^- (?:External input|Output of "(?P<label>[^"]+)")(?: \([^)]*\))?: (?P<value>.*)$'
)


def _parse_input_lines(lines: list[str]) -> tuple:
    entries = []
    for line in lines:
        match = _INPUT_LINE.match(line)
        if match:
            label = match.group("label") or EXTERNAL_INPUT_LABEL
            entries.append((label, match.group("value")))
    return tuple(entries)


def extract_current_inputs(prompt: str) -> tuple:
    lines = prompt.splitlines()
    try:
        start = lines.index("Current inputs:") + 1
    except ValueError:
        return ()
    block = []
    for line in lines[start:]:
        if not line.strip():
            break
        block.append(line)
    return _parse_input_lines(block)


def extract_prompt_examples(prompt: str) -> list[tuple[tuple, str]]:
    """(inputs, raw result text) pairs from a prompt's examples section."""
    examples = []
    lines = prompt.splitlines()
    i = 0
    while i < len(lines):
        if re.match(r"^Example \d+:$", lines[i]):
            block = []
            result = None
            i += 1
            while i < len(lines):
                if lines[i].startswith("Result: "):
                    result = lines[i][len("Result: "):]
                    break
                block.append(lines[i])
                i += 1
            if result is not None:
                examples.append((_parse_input_lines(block), result))
        i += 1
    return examples


def _example_matches(example_inputs: tuple, current: tuple) -> bool:
    """Does a recorded example apply to the current inputs?

    Exact equality first; then (label, value)-subset (extra inputs arrived,
    the recorded ones are still present); then value-subset (an upstream
    agent was replaced but forwards the same content under a new label,
    which is what the split bookkeeping guarantees)."""
    if example_inputs == current:
        return True
    if set(example_inputs) <= set(current):
        return True
    example_values = {value for _, value in example_inputs}
    current_values = {value for _, value in current}
    return example_values <= current_values


class FewShotHonoringBackend(Backend):
    """A model stand-in that always honors recorded few-shot examples.

    When a CM/EM prompt carries an example that applies to the current
    inputs, the recorded result is replayed; anything else goes to the
    fallback rule. This is the deterministic ideal the history-consistency
    bookkeeping relies on.
    """

    backend_id = "few-shot-honoring"

    def __init__(self, fallback=None):
        self.fallback = fallback
        self.calls = []

    def complete(self, request):
        self.calls.append(request)
        if request.tag.startswith(("cm:", "em:")):
            current = extract_current_inputs(request.prompt)
            for inputs, result in extract_prompt_examples(request.prompt):
                if _example_matches(inputs, current):
                    if request.tag.startswith("cm:"):
                        return CompletionResponse(
                            cm_reply(result == "true", thought="recorded"),
                            0.0,
                            self.backend_id,
                        )
                    return CompletionResponse(
                        em_reply(result, thought="recorded"), 0.0, self.backend_id
                    )
        if self.fallback is None:
            raise AssertionError(
                f"no recorded example matched and no fallback set "
                f"(tag={request.tag!r})"
            )
        return CompletionResponse(self.fallback(request), 0.0, self.backend_id)
