"""Append-only event log with replay, dedupe, and dataset export.

Every artifact the toolkit produces flows through one JSONL event log. The
first line is a schema header; each following line is one event with a
monotone sequence number and a content hash of its payload, so replays can be
verified and reruns deduplicated. A lock file serializes writers; readers
never need the lock.
"""

from __future__ import annotations

import json
import os
import time
from collections.abc import Callable, Iterator
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from filelock import FileLock

from .records import EmailRecord, Verdict, content_hash
from .session import RecipientReply, Session, Turn

__all__ = [
    "PersistenceError",
    "StoreUnavailable",
    "EVENT_KINDS",
    "EVENTS_SCHEMA",
    "Event",
    "EventLog",
    "replay_sessions",
    "export_dataset",
]


class PersistenceError(Exception):
    pass


class StoreUnavailable(PersistenceError):
    pass


EVENT_KINDS = (
    "session_started",
    "email_submitted",
    "recipient_replied",
    "outcome_simulated",
    "verdict_issued",
    "comparison_made",
    "annotation_written",
    "llm_call",
)

EVENTS_SCHEMA = "commgame/events@1"


@dataclass(frozen=True)
class Event:
    seq: int
    ts: float
    kind: str
    payload: dict[str, Any]
    payload_hash: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "seq": self.seq,
            "ts": self.ts,
            "kind": self.kind,
            "payload": self.payload,
            "payload_hash": self.payload_hash,
        }


class EventLog:
    """Single JSONL file of events; safe to reopen after a crash.

    A partially written final line (no trailing newline or broken JSON) is
    truncated away on open. ``append`` is durable before it returns.
    """

    def __init__(self, path: str | Path, clock: Callable[[], float] = time.time) -> None:
        self.path = Path(path)
        self.clock = clock
        self._lock = FileLock(str(self.path) + ".lock")
        self._last_seq = 0
        self._offset = 0
        self._seen: set[tuple[str, str]] = set()
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self._lock:
                self._recover()
        except OSError as exc:
            raise StoreUnavailable(f"cannot open event log at {self.path}: {exc}") from exc

    # -- write path ------------------------------------------------------------

    def append(self, kind: str, payload: dict[str, Any]) -> Event:
        if kind not in EVENT_KINDS:
            raise PersistenceError(f"unknown event kind {kind!r}")
        try:
            with self._lock:
                self._catch_up()
                event = Event(
                    seq=self._last_seq + 1,
                    ts=self.clock(),
                    kind=kind,
                    payload=payload,
                    payload_hash=content_hash(payload),
                )
                line = json.dumps(event.to_dict(), ensure_ascii=False, sort_keys=True)
                with open(self.path, "a", encoding="utf-8", newline="\n") as fh:
                    fh.write(line + "\n")
                    fh.flush()
                    os.fsync(fh.fileno())
                self._last_seq = event.seq
                self._offset = self.path.stat().st_size
                self._seen.add((kind, event.payload_hash))
                return event
        except OSError as exc:
            raise StoreUnavailable(f"cannot append to {self.path}: {exc}") from exc

    def append_unique(self, kind: str, payload: dict[str, Any]) -> Event | None:
        """Append unless an event with the same kind and payload hash exists."""
        key = (kind, content_hash(payload))
        with self._lock:
            self._catch_up()
            if key in self._seen:
                return None
        return self.append(kind, payload)

    # -- read path -------------------------------------------------------------

    def events(self, kind: str | None = None) -> Iterator[Event]:
        for raw in self._read_lines():
            row = json.loads(raw)
            if "schema" in row:
                continue
            if kind is not None and row["kind"] != kind:
                continue
            yield Event(
                seq=row["seq"],
                ts=row["ts"],
                kind=row["kind"],
                payload=row["payload"],
                payload_hash=row["payload_hash"],
            )

    def __len__(self) -> int:
        return self._last_seq

    # -- internals ---------------------------------------------------------------

    def _read_lines(self) -> list[str]:
        if not self.path.exists():
            return []
        text = self.path.read_text(encoding="utf-8")
        return [ln for ln in text.split("\n") if ln]

    def _recover(self) -> None:
        if not self.path.exists():
            with open(self.path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(json.dumps({"schema": EVENTS_SCHEMA}) + "\n")
            self._offset = self.path.stat().st_size
            return
        raw = self.path.read_bytes()
        good_end = 0
        position = 0
        for chunk in raw.split(b"\n"):
            line_end = position + len(chunk) + 1
            if not chunk:
                position = line_end
                continue
            complete = line_end <= len(raw)
            try:
                row = json.loads(chunk.decode("utf-8"))
            except (json.JSONDecodeError, UnicodeDecodeError):
                row = None
            if row is None or not complete:
                if line_end >= len(raw):
                    break  # partial trailing record: drop it
                raise StoreUnavailable(
                    f"corrupt event log {self.path}: bad record before end of file"
                )
            if "schema" in row and "kind" not in row:
                if row.get("schema") != EVENTS_SCHEMA:
                    raise StoreUnavailable(
                        f"unsupported log schema {row.get('schema')!r}"
                    )
            else:
                seq = row.get("seq")
                if not isinstance(seq, int) or seq != self._last_seq + 1:
                    raise StoreUnavailable(
                        f"non-monotone seq in {self.path}: got {seq!r} "
                        f"after {self._last_seq}"
                    )
                self._last_seq = seq
                self._seen.add((row["kind"], row["payload_hash"]))
            good_end = line_end
            position = line_end
        if good_end < len(raw):
            with open(self.path, "r+b") as fh:
                fh.truncate(good_end)
        if self._last_seq == 0 and good_end == 0:
            # file existed but held nothing usable; rewrite the header
            with open(self.path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(json.dumps({"schema": EVENTS_SCHEMA}) + "\n")
        self._offset = self.path.stat().st_size

    def _catch_up(self) -> None:
        """Absorb records another writer appended since we last looked."""
        try:
            size = self.path.stat().st_size
        except FileNotFoundError:
            self._recover()
            return
        if size <= self._offset:
            return
        with open(self.path, "rb") as fh:
            fh.seek(self._offset)
            tail = fh.read()
        consumed = 0
        for chunk in tail.split(b"\n"):
            end = consumed + len(chunk) + 1
            if chunk and end <= len(tail):
                row = json.loads(chunk.decode("utf-8"))
                if "kind" in row:
                    self._last_seq = max(self._last_seq, row["seq"])
                    self._seen.add((row["kind"], row["payload_hash"]))
                consumed = end
            elif not chunk:
                consumed = end
            else:
                break
        self._offset += consumed


def replay_sessions(log: EventLog) -> dict[str, Session]:
    """Rebuild every session (with turns) purely from the event log."""
    sessions: dict[str, Session] = {}
    pending: dict[tuple[str, int], dict[str, Any]] = {}

    def cell(session_id: str, turn_index: int) -> dict[str, Any]:
        return pending.setdefault(
            (session_id, turn_index),
            {"email": None, "replies": [], "outcome": None, "ending": None},
        )

    for event in log.events():
        p = event.payload
        if event.kind == "session_started":
            sessions[p["session_id"]] = Session(
                session_id=p["session_id"],
                scenario_id=p["scenario_id"],
                player_kind=p["player_kind"],
                created_at=p["created_at"],
                multi_turn=p.get("multi_turn", False),
                max_turns=p.get("max_turns", 1),
            )
        elif event.kind == "email_submitted":
            cell(p["session_id"], p["turn_index"])["email"] = EmailRecord.from_dict(p)
        elif event.kind == "recipient_replied":
            cell(p["session_id"], p["turn_index"])["replies"].append(
                RecipientReply(
                    name=p["name"],
                    visible_body=p["visible_body"],
                    thought_box=p.get("thought_box"),
                )
            )
        elif event.kind == "outcome_simulated":
            c = cell(p["session_id"], p["turn_index"])
            c["outcome"] = p["text"]
            c["ending"] = p.get("ending")
        elif event.kind == "verdict_issued":
            c = cell(p["session_id"], p["turn_index"])
            session = sessions.get(p["session_id"])
            if session is None or c["email"] is None:
                raise PersistenceError(
                    f"verdict for unknown session/turn {p['session_id']}"
                    f"/{p['turn_index']}"
                )
            session.attempts.append(
                Turn(
                    player_email=c["email"],
                    recipient_replies=tuple(c["replies"]),
                    verdict=Verdict.from_dict(p),
                    simulated_outcome=c["outcome"],
                    ending=c["ending"],
                )
            )
            session.status = p.get("session_status", session.status)
    return sessions


def export_dataset(
    log: EventLog,
    path: str | Path,
    scenario: str | None = None,
    writer: str | None = None,
    judge: str | None = None,
    schema: str = "commgame/scored-emails@1",
) -> int:
    """Write matching email+verdict(+annotations) rows; returns the row count.

    ``writer`` matches either the writer kind (``llm``) or its full name
    (``llm:gpt-4o``); ``judge`` matches the verdict's judge model.
    """
    emails: dict[tuple[str, int], EmailRecord] = {}
    verdicts: dict[tuple[str, int], Verdict] = {}
    annotations: dict[str, list[dict[str, Any]]] = {}
    for event in log.events():
        p = event.payload
        if event.kind == "email_submitted":
            emails[(p["session_id"], p["turn_index"])] = EmailRecord.from_dict(p)
        elif event.kind == "verdict_issued":
            verdicts[(p["session_id"], p["turn_index"])] = Verdict.from_dict(p)
        elif event.kind == "annotation_written":
            annotations.setdefault(p["email_id"], []).append(p)

    rows = []
    for key, email in emails.items():
        verdict = verdicts.get(key)
        if verdict is None:
            continue
        if scenario is not None and email.scenario_id != scenario:
            continue
        if writer is not None and writer not in (email.writer.kind, email.writer.name):
            continue
        if judge is not None and verdict.judge_model != judge:
            continue
        rows.append((email, verdict))
    rows.sort(key=lambda ev: ev[0].email_id)

    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps({"schema": schema}) + "\n")
        for email, verdict in rows:
            record = {"email": email.to_dict(), "verdict": verdict.to_dict()}
            if email.email_id in annotations:
                record["annotations"] = annotations[email.email_id]
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")
    return len(rows)
