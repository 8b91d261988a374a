"""The seven-update training scenario and its committed fixtures.

A translation LAN grows from one agent through, in order: a sequential
split, a new agent, CM deactivation knowledge, CM activation knowledge, EM
knowledge, a parallel split, and a new edge. The scripted backend is a rule
table keyed by (request tag, training-input marker); recording it once
produces the replayable transcript committed next to this file.

Regenerate with:  python tests/fixtures/fig4_scenario.py
"""

from __future__ import annotations

import json
from pathlib import Path

from lanforge.gateway import RecordingBackend
from lanforge.model import lan_to_doc, serialize_lan
from lanforge.store import RevisionCoalescer  # noqa: F401  (re-exported for tests)
from lanforge.update import (
    TrainingExample,
    TrainingSession,
    fixed_clock,
    init_lan,
    train_example,
)

HERE = Path(__file__).parent
TRANSCRIPT_FILE = HERE / "fig4_transcript.jsonl"
GOLDEN_LAN_FILE = HERE / "fig4_final_lan.json"
EXAMPLES_FILE = HERE / "fig4_examples.json"

TASK = "Translate French text to English"
INPUT_DESC = "A French text"
OUTPUT_DESC = "The English translation"

INIT = "Translate French Text To English"
LT = "Literal Translator"
RP = "Rhyming Polisher"
SR = "Structure Refiner"
STT = "Spoken Text Translator"
LTT = "Literary Text Translator"

EXAMPLES = [
    ("ex-001", "scenario input 1: vienne la nuit sonne l'heure", "rhymed translation 1"),
    ("ex-002", "scenario input 2: la porte fut ouverte par lui", "active-voice translation 2"),
    ("ex-003", "scenario input 3: une note sans aucune rime", "plain translation 3"),
    ("ex-004", "scenario input 4: repos et chateaux en echo", "rhymed translation 4"),
    ("ex-005", "scenario input 5: l'habit ne fait pas le moine", "idiomatic translation 5"),
    ("ex-006", "scenario input 6: un dialogue familier et vif", "spoken-style translation 6"),
    ("ex-007", "scenario input 7: poeme passif qui rime encore", "refined rhymed translation 7"),
]

MARKERS = [f"scenario input {i}" for i in range(1, 8)]

FINAL_AGENTS = {RP, SR, STT, LTT}
FINAL_EDGES = {(SR, RP), (STT, RP), (STT, SR), (LTT, RP), (LTT, SR)}


def _cm(result, thought="scripted decision"):
    return json.dumps({"thought": thought, "result": result})


def _em(text, thought="scripted output"):
    return json.dumps({"thought": thought, "result": text})


def _gap(text):
    return json.dumps({"gap": text})


def _cause(reason, agent, content):
    return json.dumps(
        {"reason_type": reason, "agent_name": agent, "reason_content": content}
    )


def _agent_cause(reason, content):
    return json.dumps({"reason_type": reason, "reason_content": content})


def _params(parameters):
    return json.dumps({"parameters": parameters})


def build_rules() -> dict:
    """(tag, marker) -> FIFO reply list for the whole seven-example run."""
    m1, m2, m3, m4, m5, m6, m7 = MARKERS
    gt = {i: EXAMPLES[i - 1][2] for i in range(1, 8)}

    split_sequential = _params(
        {
            "agent_name": INIT,
            "mode": "sequential",
            "agents": [
                {
                    "name": LT,
                    "subtask_description": "Translate the literal meaning of the French text into English.",
                    "output_description": "A string, the literal translation",
                    "cm_enabled": False,
                },
                {
                    "name": RP,
                    "subtask_description": "Convert the literal translation into rhyming English verse when the source rhymes.",
                    "output_description": "A string, the rhyming English translation",
                    "cm_enabled": True,
                    "cm_knowledge": [
                        "If the original text exhibits rhyming, the current agent should be activated."
                    ],
                },
            ],
            "internal_edges": [[LT, RP]],
        }
    )
    add_refiner = _params(
        {
            "name": SR,
            "subtask_description": "Adjust the syntactic structure of the translated sentence, preferring active voice.",
            "output_description": "A string, the restructured translation",
            "predecessors": [LT],
            "successors": [],
            "cm_knowledge": [
                "Activate when the sentence structure of the translation needs adjustment."
            ],
        }
    )
    split_parallel = _params(
        {
            "agent_name": LT,
            "mode": "parallel",
            "agents": [
                {
                    "name": STT,
                    "subtask_description": "Translate informal spoken French into colloquial English.",
                    "output_description": "A string, the colloquial translation",
                    "cm_enabled": True,
                    "cm_knowledge": ["Activate for informal spoken language."],
                },
                {
                    "name": LTT,
                    "subtask_description": "Translate literary French into polished English prose.",
                    "output_description": "A string, the literary translation",
                    "cm_enabled": True,
                    "cm_knowledge": ["Activate for literary or poetic language."],
                },
            ],
            "internal_edges": [],
        }
    )

    return {
        # -- control decisions
        (f"cm:{RP}", m1): [_cm(True, "the source rhymes")],
        (f"cm:{RP}", m2): [_cm(False), _cm(False)],
        (f"cm:{RP}", m3): [_cm(True, "mistaken rhyme"), _cm(False)],
        (f"cm:{RP}", m4): [_cm(False, "missed the rhyme"), _cm(True)],
        (f"cm:{RP}", m5): [_cm(False), _cm(False)],
        (f"cm:{RP}", m6): [_cm(False), _cm(False)],
        (f"cm:{RP}", m7): [_cm(True), _cm(True)],
        (f"cm:{SR}", m2): [_cm(True, "passive voice detected")],
        (f"cm:{SR}", m3): [_cm(False), _cm(False)],
        (f"cm:{SR}", m4): [_cm(False), _cm(False)],
        (f"cm:{SR}", m5): [_cm(False), _cm(False)],
        (f"cm:{SR}", m6): [_cm(False), _cm(False)],
        (f"cm:{SR}", m7): [_cm(True), _cm(True)],
        (f"cm:{STT}", m6): [_cm(True, "informal dialogue")],
        (f"cm:{STT}", m7): [_cm(False), _cm(False)],
        (f"cm:{LTT}", m6): [_cm(False)],
        (f"cm:{LTT}", m7): [_cm(True), _cm(True)],
        # -- execution outputs
        (f"em:{INIT}", m1): [_em("literal translation 1")],
        (f"em:{LT}", m1): [_em("literal translation 1")],
        (f"em:{LT}", m2): [_em("passive translation 2"), _em("passive translation 2")],
        (f"em:{LT}", m3): [_em("plain translation 3"), _em("plain translation 3")],
        (f"em:{LT}", m4): [_em("literal translation 4"), _em("literal translation 4")],
        (f"em:{LT}", m5): [_em("word-for-word translation 5"), _em(gt[5])],
        (f"em:{LT}", m6): [_em("stiff translation 6")],
        (f"em:{RP}", m1): [_em(gt[1])],
        (f"em:{RP}", m3): [_em("wrongly rhymed translation 3")],
        (f"em:{RP}", m4): [_em(gt[4])],
        (f"em:{RP}", m7): [_em("rhymed but passive translation 7"), _em(gt[7])],
        (f"em:{SR}", m2): [_em(gt[2])],
        (f"em:{SR}", m7): [_em("refined translation 7"), _em("refined translation 7")],
        (f"em:{STT}", m6): [_em(gt[6])],
        (f"em:{LTT}", m7): [_em("literary translation 7"), _em("literary translation 7")],
        # -- satisfaction judgments (only the failing first runs are asked)
        ("judge", m1): [_cm(False, "no rhyme in the output")],
        ("judge", m2): [_cm(False, "passive voice remains")],
        ("judge", m3): [_cm(False, "output rhymes needlessly")],
        ("judge", m4): [_cm(False, "rhyme is missing")],
        ("judge", m5): [_cm(False, "idiom translated literally")],
        ("judge", m6): [_cm(False, "register is wrong")],
        ("judge", m7): [_cm(False, "structure was lost again")],
        # -- update steps
        ("step:1", m1): [_gap("the translation does not rhyme although the source does")],
        ("step:1", m2): [_gap("the translation keeps a passive sentence structure")],
        ("step:1", m3): [_gap("the translation rhymes although the source does not")],
        ("step:1", m4): [_gap("the translation misses the rhyme of the source")],
        ("step:1", m5): [_gap("the idiom is translated word for word")],
        ("step:1", m6): [_gap("the register of the translation is not colloquial")],
        ("step:1", m7): [_gap("the rhymed output lost the refined sentence structure")],
        ("step:2", m1): [_cause("poor_performance", INIT, "the single agent cannot both translate and rhyme")],
        ("step:2", m2): [_cause("missing_agent", None, "no agent is responsible for sentence structure")],
        ("step:2", m3): [_cause("wrongly_activated", RP, "the polisher rhymed a non-rhyming text")],
        ("step:2", m4): [_cause("poor_performance", RP, "the polisher failed to detect the rhyme")],
        ("step:2", m5): [_cause("poor_performance", LT, "the translator does not know the idiom")],
        ("step:2", m6): [_cause("poor_performance", LT, "one translator cannot serve both registers")],
        ("step:2", m7): [_cause("poor_performance", RP, "the polisher never sees the refined structure")],
        ("step:3", m1): [_agent_cause("needs_split", "translation and rhyming are separate steps")],
        ("step:3", m4): [_agent_cause("not_activated", "the control module misjudged the vowels")],
        ("step:3", m5): [_agent_cause("lacks_knowledge", "the idiom meaning must be provided")],
        ("step:3", m6): [_agent_cause("needs_split", "spoken and literary text need different handling")],
        ("step:3", m7): [_agent_cause("needs_inputs", "the polisher needs the refiner's output")],
        ("step:4", m1): [split_sequential],
        ("step:4", m2): [add_refiner],
        ("step:4", m3): [
            _params({"agent_name": RP, "knowledge": "Do not activate when the original text does not rhyme."})
        ],
        ("step:4", m4): [
            _params({"agent_name": RP, "knowledge": "Words like 'repos' and 'chateaux' rhyme; treat matching vowel endings as rhymes."})
        ],
        ("step:4", m5): [
            _params({"agent_name": LT, "knowledge": "The idiom \"l'habit ne fait pas le moine\" means one must not trust appearances."})
        ],
        ("step:4", m6): [split_parallel],
        ("step:4", m7): [
            _params({"agent_name": RP, "new_input_agents": [SR]})
        ],
        # -- example redistribution for the parallel split of the translator
        (f"split-select:{LT}", m1): [_em(LTT, "poetry is literary")],
        (f"split-select:{LT}", m2): [_em(STT, "everyday sentence")],
        (f"split-select:{LT}", m3): [_em(STT, "plain note")],
        (f"split-select:{LT}", m4): [_em(LTT, "poetic echo")],
        (f"split-select:{LT}", m5): [_em(STT, "common saying")],
    }


def find_marker(prompt: str) -> str | None:
    """Latest training input mentioned in the prompt: recorded examples from
    earlier episodes may also appear, so the highest index wins."""
    for marker in reversed(MARKERS):
        if marker in prompt:
            return marker
    return None


class ScenarioRule:
    def __init__(self):
        self.rules = build_rules()

    def __call__(self, request) -> str:
        marker = find_marker(request.prompt)
        queue = self.rules.get((request.tag, marker))
        if not queue:
            raise AssertionError(
                f"no scripted reply for tag={request.tag!r} marker={marker!r}"
            )
        return queue.pop(0)


def run_scenario(backend):
    """Train the seven examples on a fresh session; returns (session, log)."""
    lan = init_lan(TASK, INPUT_DESC, OUTPUT_DESC)
    assert lan.agents[0].name == INIT
    session = TrainingSession(lan=lan, backend=backend, clock=fixed_clock())
    log = []
    for example_id, text, ground_truth in EXAMPLES:
        example = TrainingExample(id=example_id, input=text, ground_truth=ground_truth)
        _, entries = train_example(session, example, "auto_confirm")
        log.append((example_id, entries))
    return session, log


def generate() -> None:
    from helpers import RuleBackend

    rule = ScenarioRule()
    recorder = RecordingBackend(RuleBackend(rule))
    session, log = run_scenario(recorder)

    leftovers = {key: q for key, q in rule.rules.items() if q}
    assert not leftovers, f"unconsumed scripted replies: {sorted(leftovers)}"
    assert {a.name for a in session.lan.agents} == FINAL_AGENTS
    assert set(session.lan.edges) == FINAL_EDGES

    recorder.transcript.save(TRANSCRIPT_FILE)
    GOLDEN_LAN_FILE.write_text(serialize_lan(session.lan), encoding="utf-8")
    EXAMPLES_FILE.write_text(
        json.dumps(
            [
                {"id": i, "input": t, "ground_truth": g}
                for i, t, g in EXAMPLES
            ],
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    print(f"wrote {TRANSCRIPT_FILE.name}: {len(recorder.transcript.exchanges)} exchanges")
    print(f"wrote {GOLDEN_LAN_FILE.name}")
    print(f"wrote {EXAMPLES_FILE.name}")


if __name__ == "__main__":
    import sys

    sys.path.insert(0, str(HERE.parent))
    generate()
