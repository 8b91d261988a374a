"""Headless driver for scripting and CI.

Commands operate on a local session store directly (``--local``) or talk to
a running service (``--url``). Training against a recorded transcript
(``--replay``) is fully deterministic, including timestamps.
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click
import httpx

from .diff import lan_edit_script, lmd
from .gateway import (
    GatewayError,
    RecordingBackend,
    ReplayBackend,
    ReplayMismatchError,
    Transcript,
    backend_from_env,
)
from .model import ParseError, deserialize_lan, lan_from_doc, validate_lan
from .runtime import run_lan, trace_to_doc
from .store import (
    ENV_DATA_DIR,
    RevisionCoalescer,
    SessionStore,
    StorageError,
    new_session_id,
)
from .update import (
    TrainingExample,
    TrainingSession,
    ValidationError,
    check_satisfaction,
    fixed_clock,
    init_lan,
    train_example,
    utc_now,
)

EXIT_VIOLATIONS = 1
EXIT_USAGE = 2
EXIT_GATEWAY = 3
EXIT_REPLAY = 4


class CliContext:
    def __init__(self, url: str | None, data_dir: str, as_json: bool):
        self.url = url
        self.data_dir = data_dir
        self.as_json = as_json

    @property
    def local(self) -> bool:
        return self.url is None

    def store(self) -> SessionStore:
        return SessionStore(self.data_dir)

    def client(self) -> httpx.Client:
        return httpx.Client(base_url=self.url, timeout=300.0)

    def emit(self, doc: dict, human: str) -> None:
        if self.as_json:
            click.echo(json.dumps(doc, ensure_ascii=False, indent=2))
        else:
            click.echo(human)


def _load_examples(path: str) -> list[TrainingExample]:
    try:
        entries = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise click.ClickException(f"cannot read examples file: {exc}")
    if not isinstance(entries, list):
        raise click.ClickException("examples file must be a JSON array")
    examples = []
    for i, entry in enumerate(entries):
        try:
            examples.append(
                TrainingExample(
                    id=entry.get("id") or f"ex-{i + 1:03d}",
                    input=entry["input"],
                    ground_truth=entry["ground_truth"],
                )
            )
        except (KeyError, TypeError, ValidationError) as exc:
            raise click.ClickException(f"examples[{i}] is invalid: {exc}")
    return examples


def _make_backend(replay: str | None, record: str | None):
    """Backend per flags: replay a transcript, record one, or plain remote."""
    if replay:
        return ReplayBackend(Transcript.load(replay)), None
    if record:
        recorder = RecordingBackend(backend_from_env())
        return recorder, recorder
    return backend_from_env(), None


@click.group()
@click.option("--url", default=None, envvar="LANFORGE_URL", help="Service base URL.")
@click.option("--local", "local_", is_flag=True, help="Operate on a local store.")
@click.option(
    "--data-dir",
    default=None,
    envvar=ENV_DATA_DIR,
    help="Local store directory (default ./lanforge-data).",
)
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
@click.pass_context
def cli(ctx, url, local_, data_dir, as_json):
    """Create, run, train, evaluate, and diff LLM agent networks."""
    if local_:
        url = None
    ctx.obj = CliContext(url, data_dir or "./lanforge-data", as_json)


@cli.command()
@click.option("--task", required=True, help="Task description.")
@click.option("--input", "input_", default="", help="Input description.")
@click.option("--output", default="", help="Output description.")
@click.pass_obj
def init(obj: CliContext, task, input_, output):
    """Create a session with a fresh single-agent network."""
    if obj.local:
        try:
            lan = init_lan(task, input_, output)
        except ValidationError as exc:
            raise click.ClickException(str(exc))
        session_id = new_session_id()
        obj.store().create(session_id, lan, created_at=utc_now())
    else:
        response = obj.client().post(
            "/sessions",
            json={
                "task_description": task,
                "input_description": input_,
                "output_description": output,
            },
        )
        _check_http(response)
        session_id = response.json()["session"]["id"]
    obj.emit({"session": session_id}, f"created session {session_id}")


def _check_http(response: httpx.Response) -> None:
    if response.status_code >= 400:
        try:
            body = response.json()
            message = f"{body.get('code')}: {body.get('message')}"
        except ValueError:
            message = response.text
        raise click.ClickException(f"HTTP {response.status_code}: {message}")


@cli.command()
@click.option("--session", "session_id", required=True)
@click.option("--input", "input_", required=True)
@click.option("--trace", "trace_file", default=None, type=click.Path(dir_okay=False))
@click.option("--replay", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--record", default=None, type=click.Path(dir_okay=False))
@click.pass_obj
def run(obj: CliContext, session_id, input_, trace_file, replay, record):
    """Run the session's network on one input."""
    if obj.local:
        store = obj.store()
        stored = store.load(session_id)
        lan = store.latest_lan(stored)
        backend, recorder = _make_backend(replay, record)
        trace = run_lan(lan, input_, backend)
        store.save_trace(stored, trace)
        store.save_meta(stored)
        if recorder is not None and record:
            recorder.transcript.save(record)
        doc = trace_to_doc(trace)
    else:
        response = obj.client().post(
            f"/sessions/{session_id}/run", json={"input": input_}
        )
        _check_http(response)
        doc = response.json()["trace"]
    if trace_file:
        Path(trace_file).write_text(
            json.dumps(doc, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
        )
    obj.emit({"final_output": doc["final_output"]}, doc["final_output"])


@cli.command()
@click.option("--session", "session_id", required=True)
@click.option("--examples", "examples_file", required=True, type=click.Path(exists=True))
@click.option(
    "--policy",
    default="auto_confirm",
    type=click.Choice(["auto_confirm", "interactive"]),
)
@click.option("--replay", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--record", default=None, type=click.Path(dir_okay=False))
@click.pass_obj
def train(obj: CliContext, session_id, examples_file, policy, replay, record):
    """Feed training examples through the update pipeline."""
    examples = _load_examples(examples_file)
    if obj.local:
        store = obj.store()
        stored = store.load(session_id)
        backend, recorder = _make_backend(replay, record)
        session = TrainingSession(
            lan=store.latest_lan(stored),
            backend=backend,
            history=store.load_history(stored),
            # a replayed transcript must reproduce byte-identical output
            clock=fixed_clock() if replay else utc_now,
        )

        coalescer = RevisionCoalescer(store, stored)
        session.on_revision = coalescer
        log = []
        for example in examples:
            if not any(e.id == example.id for e in stored.queue):
                stored.queue.append(example)
            coalescer.begin_action()
            final_lan, entries = train_example(session, example, policy)
            while len(stored.history) < len(session.history):
                ex, trace = session.history[len(stored.history)]
                ref = store.save_trace(stored, trace)
                stored.history.append((ex, ref))
            store.save_meta(stored)
            log.append({"example": example.id, "iterations": entries})
        if recorder is not None and record:
            recorder.transcript.save(record)
        doc = {
            "session": session_id,
            "examples": log,
            "revision": stored.revisions[-1].revision,
        }
        human = "\n".join(
            f"{entry['example']}: "
            + ", ".join(
                e["strategy"] or ("satisfied" if e["satisfied"] else "-")
                for e in entry["iterations"]
            )
            for entry in log
        )
    else:
        client = obj.client()
        log = []
        for example in examples:
            response = client.post(
                f"/sessions/{session_id}/examples",
                json={
                    "input": example.input,
                    "ground_truth": example.ground_truth,
                    "id": example.id,
                },
            )
            _check_http(response)
            response = client.post(
                f"/sessions/{session_id}/pipeline/start",
                json={"example_id": example.id, "policy": "auto_confirm"},
            )
            _check_http(response)
            status = "computing"
            while status in ("computing", "awaiting_confirmation"):
                time.sleep(0.2)
                response = client.get(f"/sessions/{session_id}/pipeline")
                _check_http(response)
                status = response.json()["pipeline"]["status"]
            log.append({"example": example.id, "status": status})
        doc = {"session": session_id, "examples": log}
        human = "\n".join(f"{e['example']}: {e['status']}" for e in log)
    obj.emit(doc, human)


@cli.command()
@click.option("--session", "session_id", required=True)
@click.option("--examples", "examples_file", required=True, type=click.Path(exists=True))
@click.option("--judge", default="exact", type=click.Choice(["exact", "llm"]))
@click.option(
    "--report",
    "report_dir",
    default=None,
    type=click.Path(file_okay=False),
    help="Write eval_results.csv and eval_scores.png here.",
)
@click.option("--replay", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--record", default=None, type=click.Path(dir_okay=False))
@click.pass_obj
def eval(obj: CliContext, session_id, examples_file, judge, report_dir, replay, record):
    """Score the network against test examples.

    The LLM judge is a convenience, not ground truth; exact matching needs
    no backend at all (after whitespace normalization).
    """
    examples = _load_examples(examples_file)
    results = []

    def normalized_match(actual: str, expected: str) -> bool:
        return " ".join(actual.split()) == " ".join(expected.split())

    if obj.local:
        store = obj.store()
        stored = store.load(session_id)
        lan = store.latest_lan(stored)
        backend, recorder = _make_backend(replay, record)
        for example in examples:
            trace = run_lan(lan, example.input, backend)
            if judge == "exact":
                passed = normalized_match(trace.final_output, example.ground_truth)
            else:
                passed = check_satisfaction(trace, example, backend)
            results.append(
                {
                    "id": example.id,
                    "passed": passed,
                    "expected": example.ground_truth,
                    "actual": trace.final_output,
                }
            )
        if recorder is not None and record:
            recorder.transcript.save(record)
    else:
        client = obj.client()
        for example in examples:
            response = client.post(
                f"/sessions/{session_id}/run", json={"input": example.input}
            )
            _check_http(response)
            actual = response.json()["trace"]["final_output"]
            if judge == "exact":
                passed = normalized_match(actual, example.ground_truth)
            else:
                backend, _ = _make_backend(None, None)
                from .runtime import trace_from_doc

                trace = trace_from_doc(response.json()["trace"])
                passed = check_satisfaction(trace, example, backend)
            results.append(
                {
                    "id": example.id,
                    "passed": passed,
                    "expected": example.ground_truth,
                    "actual": actual,
                }
            )

    mean = sum(1 for r in results if r["passed"]) / len(results) if results else 0.0
    doc = {"results": results, "mean": mean}
    lines = [
        f"{r['id']}: {'PASS' if r['passed'] else 'FAIL'}" for r in results
    ] + [f"mean score: {mean:.3f}"]
    if report_dir:
        from .report import write_eval_report

        csv_path, png_path = write_eval_report(results, report_dir)
        doc["report"] = {"csv": str(csv_path), "figure": str(png_path)}
        lines.append(f"report: {csv_path}, {png_path}")
    obj.emit(doc, "\n".join(lines))
    if mean < 1.0 and results:
        sys.exit(EXIT_VIOLATIONS)


@cli.command()
@click.option("--session", "session_id", required=True)
@click.option("--from", "from_rev", required=True, type=int)
@click.option("--to", "to_rev", required=True, type=int)
@click.pass_obj
def diff(obj: CliContext, session_id, from_rev, to_rev):
    """Edit script and modification distance between two revisions."""
    if obj.local:
        store = obj.store()
        _, old = store.load_revision(session_id, from_rev)
        _, new = store.load_revision(session_id, to_rev)
    else:
        client = obj.client()
        docs = []
        for revision in (from_rev, to_rev):
            response = client.get(f"/sessions/{session_id}/revisions/{revision}")
            _check_http(response)
            docs.append(response.json()["lan"])
        old, new = (lan_from_doc(d) for d in docs)
    script = lan_edit_script(old, new)
    distance = lmd(old, new)
    doc = {
        "from": from_rev,
        "to": to_rev,
        "lmd": distance,
        "script": [op.to_dict() for op in script],
    }
    lines = [f"{op.to_dict()}" for op in script] + [f"LMD: {distance}"]
    obj.emit(doc, "\n".join(lines))


@cli.command()
@click.argument("lan_file", type=click.Path(exists=True, dir_okay=False))
@click.pass_obj
def validate(obj: CliContext, lan_file):
    """Check a LAN document against the save-blocking rules."""
    try:
        lan = deserialize_lan(Path(lan_file).read_text(encoding="utf-8"))
    except ParseError as exc:
        obj.emit({"error": str(exc)}, f"parse error: {exc}")
        sys.exit(EXIT_USAGE)
    violations = validate_lan(lan)
    doc = {"violations": [v.to_dict() for v in violations]}
    human = (
        "\n".join(str(v) for v in violations) if violations else "valid"
    )
    obj.emit(doc, human)
    if violations:
        sys.exit(EXIT_VIOLATIONS)


@cli.command()
@click.option("--bind", default=None, help="host:port (default 127.0.0.1:8787).")
@click.pass_obj
def serve(obj: CliContext, bind):
    """Run the session service."""
    from .service import serve as run_server

    run_server(bind, store=SessionStore(obj.data_dir))


def main():
    try:
        cli(standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        sys.exit(EXIT_USAGE)
    except click.exceptions.Abort:
        sys.exit(EXIT_USAGE)
    except ReplayMismatchError as exc:
        click.echo(f"replay mismatch: {exc}", err=True)
        sys.exit(EXIT_REPLAY)
    except GatewayError as exc:
        click.echo(f"gateway error: {exc}", err=True)
        sys.exit(EXIT_GATEWAY)
    except (StorageError, ParseError) as exc:
        click.echo(str(exc), err=True)
        sys.exit(EXIT_USAGE)


if __name__ == "__main__":
    main()
