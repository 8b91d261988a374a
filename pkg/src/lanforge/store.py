"""Durable session storage.

One directory per session: canonical LAN documents per revision, trace
files, transcript files, and a ``session.json`` with the queue, history and
any paused pipeline. Every file is written atomically (write to a temp file,
then rename), so a crash can never corrupt the previous state. Corrupted
files found during load are quarantined with a ``.corrupt`` suffix and the
session loads with warnings.
"""

from __future__ import annotations

import json
import logging
import os
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from .gateway import Transcript
from .model import Lan, canonical_json, deserialize_lan, lan_to_doc, validate_lan
from .runtime import RunTrace, trace_from_doc, trace_to_doc
from .update import TrainingExample, utc_now

logger = logging.getLogger(__name__)

ENV_DATA_DIR = "LANFORGE_DATA_DIR"


class StorageError(Exception):
    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{message}{f' ({path})' if path else ''}")


def new_session_id() -> str:
    return "s-" + uuid.uuid4().hex[:12]


def atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)
    except OSError as exc:
        raise StorageError(f"cannot write: {exc}", str(path)) from exc


@dataclass
class RevisionMeta:
    revision: int
    cause: str  # "init" | "strategy" | "manual_edit"
    parent: int | None

    def to_doc(self) -> dict:
        return {"revision": self.revision, "cause": self.cause, "parent": self.parent}


@dataclass
class StoredSession:
    id: str
    created_at: str = ""
    queue: list[TrainingExample] = field(default_factory=list)
    history: list[tuple[TrainingExample, str]] = field(default_factory=list)
    pipeline_doc: dict | None = None
    revisions: list[RevisionMeta] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def _example_to_doc(example: TrainingExample) -> dict:
    return {
        "id": example.id,
        "input": example.input,
        "ground_truth": example.ground_truth,
    }


class SessionStore:
    """Filesystem-backed session persistence."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    # -- paths

    def _session_dir(self, session_id: str) -> Path:
        return self.root / session_id

    def _session_file(self, session_id: str) -> Path:
        return self._session_dir(session_id) / "session.json"

    def _revision_file(self, session_id: str, revision: int) -> Path:
        return self._session_dir(session_id) / "revisions" / f"{revision:05d}.json"

    # -- sessions

    def list_sessions(self) -> list[str]:
        if not self.root.exists():
            return []
        return sorted(
            p.name for p in self.root.iterdir() if (p / "session.json").exists()
        )

    def exists(self, session_id: str) -> bool:
        return self._session_file(session_id).exists()

    def create(self, session_id: str, lan: Lan, created_at: str = "") -> StoredSession:
        directory = self._session_dir(session_id)
        if directory.exists():
            raise StorageError("session already exists", str(directory))
        (directory / "revisions").mkdir(parents=True)
        (directory / "traces").mkdir()
        (directory / "transcripts").mkdir()
        session = StoredSession(id=session_id, created_at=created_at or utc_now())
        self.append_revision(session, lan, "init")
        self.save_meta(session)
        return session

    def save_meta(self, session: StoredSession) -> None:
        doc = {
            "id": session.id,
            "created_at": session.created_at,
            "queue": [_example_to_doc(e) for e in session.queue],
            "history": [
                {"example": _example_to_doc(e), "trace_file": ref}
                for e, ref in session.history
            ],
            "pipeline": session.pipeline_doc,
            "revisions": [m.to_doc() for m in session.revisions],
        }
        atomic_write(self._session_file(session.id), canonical_json(doc))

    def _quarantine(self, path: Path, warnings: list[str], reason: str) -> None:
        target = path.with_name(path.name + ".corrupt")
        try:
            os.replace(path, target)
        except OSError:
            pass
        message = f"quarantined {path.name}: {reason}"
        logger.warning("%s", message)
        warnings.append(message)

    def load(self, session_id: str) -> StoredSession:
        path = self._session_file(session_id)
        if not path.exists():
            raise StorageError("no such session", str(path))
        warnings: list[str] = []
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (json.JSONDecodeError, OSError) as exc:
            self._quarantine(path, warnings, str(exc))
            raise StorageError(f"session file corrupted: {exc}", str(path)) from exc
        session = StoredSession(
            id=doc["id"],
            created_at=doc.get("created_at", ""),
            queue=[TrainingExample(**e) for e in doc.get("queue", [])],
            pipeline_doc=doc.get("pipeline"),
            revisions=[
                RevisionMeta(m["revision"], m["cause"], m.get("parent"))
                for m in doc.get("revisions", [])
            ],
            warnings=warnings,
        )
        for entry in doc.get("history", []):
            session.history.append(
                (TrainingExample(**entry["example"]), entry["trace_file"])
            )
        return session

    # -- revisions

    def append_revision(self, session: StoredSession, lan: Lan, cause: str) -> int:
        violations = validate_lan(lan)
        if violations:
            raise StorageError(
                "refusing to persist an invalid LAN: "
                + "; ".join(str(v) for v in violations)
            )
        revision = len(session.revisions)
        parent = revision - 1 if revision else None
        meta = RevisionMeta(revision=revision, cause=cause, parent=parent)
        doc = meta.to_doc() | {"lan": lan_to_doc(lan)}
        atomic_write(self._revision_file(session.id, revision), canonical_json(doc))
        session.revisions.append(meta)
        self.save_meta(session)
        return revision

    def rewrite_revision(self, session: StoredSession, revision: int, lan: Lan) -> None:
        """Amend the LAN document of an existing revision in place.

        Used to fold the example recording of a satisfied run into the
        strategy revision created by the same supervised action.
        """
        meta = session.revisions[revision]
        doc = meta.to_doc() | {"lan": lan_to_doc(lan)}
        atomic_write(self._revision_file(session.id, revision), canonical_json(doc))

    def load_revision(self, session_id: str, revision: int) -> tuple[RevisionMeta, Lan]:
        path = self._revision_file(session_id, revision)
        if not path.exists():
            raise StorageError("no such revision", str(path))
        doc = json.loads(path.read_text(encoding="utf-8"))
        lan = deserialize_lan(json.dumps(doc["lan"]))
        return RevisionMeta(doc["revision"], doc["cause"], doc.get("parent")), lan

    def latest_lan(self, session: StoredSession) -> Lan:
        if not session.revisions:
            raise StorageError("session has no revisions", session.id)
        last = session.revisions[-1].revision
        while last >= 0:
            try:
                return self.load_revision(session.id, last)[1]
            except (StorageError, json.JSONDecodeError, KeyError) as exc:
                path = self._revision_file(session.id, last)
                if path.exists():
                    self._quarantine(path, session.warnings, str(exc))
                    session.revisions = session.revisions[:last]
                    last -= 1
                    continue
                raise
        raise StorageError("all revisions corrupted", session.id)

    # -- traces

    def save_trace(self, session: StoredSession, trace: RunTrace) -> str:
        directory = self._session_dir(session.id) / "traces"
        index = len(list(directory.glob("*.json")))
        name = f"{index:06d}.json"
        atomic_write(directory / name, canonical_json(trace_to_doc(trace)))
        return f"traces/{name}"

    def load_trace(self, session_id: str, ref: str) -> RunTrace:
        path = self._session_dir(session_id) / ref
        if not path.exists():
            raise StorageError("no such trace", str(path))
        return trace_from_doc(json.loads(path.read_text(encoding="utf-8")))

    def load_history(
        self, session: StoredSession
    ) -> list[tuple[TrainingExample, RunTrace]]:
        history = []
        for example, ref in session.history:
            try:
                history.append((example, self.load_trace(session.id, ref)))
            except (StorageError, json.JSONDecodeError, KeyError) as exc:
                path = self._session_dir(session.id) / ref
                if path.exists():
                    self._quarantine(path, session.warnings, str(exc))
                else:
                    session.warnings.append(f"missing trace {ref}: {exc}")
        return history

    # -- transcripts

    def save_transcript(
        self, session_id: str, name: str, transcript: Transcript
    ) -> str:
        directory = self._session_dir(session_id) / "transcripts"
        directory.mkdir(exist_ok=True)
        path = directory / f"{name}.jsonl"
        atomic_write(path, transcript.to_jsonl())
        return f"transcripts/{name}.jsonl"

    def load_transcript(self, session_id: str, name: str) -> Transcript:
        path = self._session_dir(session_id) / "transcripts" / f"{name}.jsonl"
        if not path.exists():
            raise StorageError("no such transcript", str(path))
        return Transcript.load(path)


class RevisionCoalescer:
    """Revision policy for pipeline-driven LAN changes.

    One supervised action yields one revision: applying a strategy appends a
    ``strategy`` revision, and the example recording that follows a satisfied
    re-run amends that same revision instead of appending another. A run that
    is satisfied without any strategy still appends one revision for its
    recorded examples.
    """

    def __init__(self, store: SessionStore, session: StoredSession, on_append=None):
        self.store = store
        self.session = session
        self.on_append = on_append
        self._amendable: int | None = None

    def begin_action(self) -> None:
        self._amendable = None

    def __call__(self, lan: Lan, cause: str) -> int:
        if cause == "record" and self._amendable is not None:
            self.store.rewrite_revision(self.session, self._amendable, lan)
            return self._amendable
        revision = self.store.append_revision(
            self.session, lan, "strategy" if cause == "record" else cause
        )
        if cause == "strategy":
            self._amendable = revision
        else:
            self._amendable = None
        if self.on_append is not None:
            self.on_append(revision, "strategy" if cause == "record" else cause)
        return revision
