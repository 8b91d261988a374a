"""Golden prompt and description fixtures.

The byte-exact wording is fixed by these files; tests compare against them
so accidental prompt drift is caught. Regenerate (after an intentional
wording change) with:  python tests/fixtures/golden_prompts.py
"""

from __future__ import annotations

from pathlib import Path

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
from lanforge.runtime import AgentRunRecord, RunTrace, build_cm_prompt, build_em_prompt
from lanforge.update import (
    TrainingExample,
    build_step1_prompt,
    render_agent_description,
    render_lan_description,
)

HERE = Path(__file__).parent

STAMP = "2024-01-01T00:00:00+00:00"


def polisher_lan() -> Lan:
    literal = Agent(
        name="Literal Translator",
        control=ControlModule(enabled=False),
        execution=ExecutionModule(
            subtask_description="Translate the literal meaning of the French text into English.",
            output_description="A string, the literal translation",
        ),
    )
    polisher = Agent(
        name="Rhyming Polisher",
        control=ControlModule(
            enabled=True,
            knowledge=[
                KnowledgeItem(
                    "If the original text exhibits rhyming, the current agent should be activated.",
                    origin="user",
                    created_at=STAMP,
                )
            ],
            examples=[
                Example(
                    inputs=NamedValues(
                        [
                            (EXTERNAL_INPUT_LABEL, "Bras leves raides pour blamer, Dans faux gestes d'aimer"),
                            ("Literal Translator", "Arms raised stiff to blame, In false gestures of loving"),
                        ]
                    ),
                    result=True,
                    provenance="ex-000",
                )
            ],
        ),
        execution=ExecutionModule(
            subtask_description="Convert the literal translation into rhyming English verse when the source rhymes.",
            output_description="A string, the rhyming English translation",
        ),
    )
    return Lan(
        task_description="Translate French poetry to English",
        input_description="A French text",
        output_description="The English translation",
        agents=[literal, polisher],
        edges=[("Literal Translator", "Rhyming Polisher")],
    )


POLISHER_INPUTS = NamedValues(
    [
        (EXTERNAL_INPUT_LABEL, "Vienne la nuit sonne l'heure, les jours s'en vont je demeure"),
        ("Literal Translator", "Let night come, let the hour ring, the days go by, I remain"),
    ]
)


def pair_trace(lan: Lan) -> RunTrace:
    external = "Vienne la nuit sonne l'heure, les jours s'en vont je demeure"
    lt_inputs = NamedValues([(EXTERNAL_INPUT_LABEL, external)])
    lt_output = lt_inputs.with_entry(
        "Literal Translator", "Let night come, let the hour ring, the days go by, I remain"
    )
    rp_inputs = lt_output
    rp_output = rp_inputs.with_entry(
        "Rhyming Polisher", "Let night come, let hours chime, the days depart while I remain in rhyme"
    )
    records = [
        AgentRunRecord(
            agent="Literal Translator",
            inputs=lt_inputs,
            activated=True,
            output=lt_output,
            em_prompt="(prompt)",
            em_thought="translate word by word",
            em_calls=1,
        ),
        AgentRunRecord(
            agent="Rhyming Polisher",
            inputs=rp_inputs,
            activated=True,
            output=rp_output,
            cm_prompt="(prompt)",
            cm_thought="l'heure and demeure rhyme",
            em_prompt="(prompt)",
            em_thought="restore the rhyme",
            cm_calls=1,
            em_calls=1,
        ),
    ]
    return RunTrace(
        lan_snapshot=lan,
        external_input=external,
        records=records,
        final_output="Let night come, let hours chime, the days depart while I remain in rhyme",
    )


GOLDENS = {
    "golden_cm_prompt.txt": lambda: build_cm_prompt(
        polisher_lan().agent("Rhyming Polisher"), POLISHER_INPUTS, polisher_lan()
    ),
    "golden_em_prompt.txt": lambda: build_em_prompt(
        polisher_lan().agent("Rhyming Polisher"), POLISHER_INPUTS, polisher_lan()
    ),
    "golden_lan_description.txt": lambda: render_lan_description(
        polisher_lan(), pair_trace(polisher_lan())
    ),
    "golden_agent_description.txt": lambda: render_agent_description(
        polisher_lan().agent("Rhyming Polisher"), pair_trace(polisher_lan())
    ),
    "golden_step1_prompt.txt": lambda: build_step1_prompt(
        polisher_lan(),
        pair_trace(polisher_lan()),
        TrainingExample(
            id="ex-g",
            input="Vienne la nuit sonne l'heure, les jours s'en vont je demeure",
            ground_truth="Let night come and ring the hour, the days go by, I stay in flower",
        ),
    ),
}


def generate() -> None:
    for name, build in GOLDENS.items():
        (HERE / name).write_text(build() + "\n", encoding="utf-8")
        print(f"wrote {name}")


if __name__ == "__main__":
    generate()
