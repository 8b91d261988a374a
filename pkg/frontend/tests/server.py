"""Replay-backed session service for the console's end-to-end tests.

Serves the committed seven-update transcript first; once it is exhausted,
falls back to canned deterministic replies so fresh sessions (used by the
placeholder test) still get answers. Prints the chosen port on stdout.
"""

import json
import socket
import sys
import tempfile
from pathlib import Path

REPO_ROOT = Path(__file__).resolve().parents[2]
sys.path.insert(0, str(REPO_ROOT / "tests" / "fixtures"))

import uvicorn

import fig4_scenario as scenario
from lanforge.gateway import (
    Backend,
    CompletionResponse,
    ReplayBackend,
    Transcript,
)
from lanforge.service import create_app
from lanforge.store import SessionStore
from lanforge.update import fixed_clock


def canned_reply(request) -> str:
    tag = request.tag
    if tag.startswith("cm:") or tag == "judge":
        return json.dumps({"thought": "canned", "result": False})
    if tag.startswith("em:"):
        return json.dumps({"thought": "canned", "result": "canned output"})
    if tag.startswith(("step:1", "repair", "complete:gap")):
        return json.dumps({"gap": "canned gap"})
    return json.dumps({"thought": "canned", "result": "canned output"})


class ReplayThenCanned(Backend):
    """Serve the scenario transcript in order; anything that does not match
    the next recorded prompt (other sessions, interventions) gets a canned
    deterministic reply instead."""

    backend_id = "replay-then-canned"

    def __init__(self, transcript: Transcript):
        self.transcript = transcript
        self.replay = ReplayBackend(transcript)

    def complete(self, request):
        from lanforge.gateway import prompt_fingerprint

        position = self.replay._position
        if position < len(self.transcript.exchanges):
            expected = self.transcript.exchanges[position].prompt_sha256
            if prompt_fingerprint(request.prompt) == expected:
                return self.replay.complete(request)
        return CompletionResponse(canned_reply(request), 0.0, self.backend_id)


def main() -> None:
    transcript = Transcript.load(scenario.TRANSCRIPT_FILE)
    shared = ReplayThenCanned(transcript)
    data_dir = tempfile.mkdtemp(prefix="lanforge-console-e2e-")
    app = create_app(
        SessionStore(data_dir),
        backend_factory=lambda cancel: shared,
        clock=fixed_clock(),
    )
    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
    print(json.dumps({"port": port}), flush=True)
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")


if __name__ == "__main__":
    main()
