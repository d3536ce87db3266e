"""Shared record vocabulary: emails, writers, verdicts.

Every email in the system is written by a human, by an LLM, or by an LLM
rewriting a human draft. These records flow through sessions, tournaments,
annotation, and the stats layer, and they serialize to line-delimited JSON
in the persistence store.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional

WRITER_KINDS = ("human", "llm", "human_plus_llm")


class RecordError(Exception):
    """Malformed or inconsistent record data."""


@dataclass(frozen=True)
class Writer:
    """Who produced an email body.

    kind "human" carries no model; "llm" carries the model id; and
    "human_plus_llm" additionally links back to the human base email that
    was rewritten.
    """

    kind: str
    model_id: Optional[str] = None
    base_email_id: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind not in WRITER_KINDS:
            raise RecordError(f"unknown writer kind: {self.kind!r}")
        if self.kind == "human" and (self.model_id or self.base_email_id):
            raise RecordError("human writer carries no model or base email")
        if self.kind == "llm" and not self.model_id:
            raise RecordError("llm writer requires model_id")
        if self.kind == "human_plus_llm" and not (self.model_id and self.base_email_id):
            raise RecordError("human_plus_llm writer requires model_id and base_email_id")

    @property
    def name(self) -> str:
        """Grouping key: 'human' for human writers, else the model id."""
        return "human" if self.kind == "human" else str(self.model_id)

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"kind": self.kind}
        if self.model_id is not None:
            d["model_id"] = self.model_id
        if self.base_email_id is not None:
            d["base_email_id"] = self.base_email_id
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Writer":
        return cls(
            kind=d["kind"],
            model_id=d.get("model_id"),
            base_email_id=d.get("base_email_id"),
        )

    @classmethod
    def human(cls) -> "Writer":
        return cls(kind="human")

    @classmethod
    def llm(cls, model_id: str) -> "Writer":
        return cls(kind="llm", model_id=model_id)

    @classmethod
    def rewrite(cls, base_email_id: str, model_id: str) -> "Writer":
        return cls(kind="human_plus_llm", model_id=model_id, base_email_id=base_email_id)


@dataclass(frozen=True)
class EmailRecord:
    """One email body with its provenance."""

    email_id: str
    scenario_id: str
    writer: Writer
    body: str
    length_chars: int = -1
    turn_index: int = 0

    def __post_init__(self) -> None:
        # length_chars defaults to the actual body length when unset
        if self.length_chars < 0:
            object.__setattr__(self, "length_chars", len(self.body))
        if self.length_chars != len(self.body):
            raise RecordError(
                f"length_chars {self.length_chars} != body length {len(self.body)}"
            )
        if self.turn_index < 0:
            raise RecordError("turn_index must be non-negative")

    def to_dict(self) -> dict[str, Any]:
        return {
            "email_id": self.email_id,
            "scenario_id": self.scenario_id,
            "writer": self.writer.to_dict(),
            "body": self.body,
            "length_chars": self.length_chars,
            "turn_index": self.turn_index,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "EmailRecord":
        return cls(
            email_id=d["email_id"],
            scenario_id=d["scenario_id"],
            writer=Writer.from_dict(d["writer"]),
            body=d["body"],
            length_chars=d.get("length_chars", -1),
            turn_index=d.get("turn_index", 0),
        )


@dataclass(frozen=True)
class Verdict:
    """Binary judge decision over one attempt."""

    passed: bool
    rationale: str
    judge_model: str

    def __post_init__(self) -> None:
        if not self.rationale:
            raise RecordError("verdict rationale must be non-empty")

    def to_dict(self) -> dict[str, Any]:
        return {
            "pass": self.passed,
            "rationale": self.rationale,
            "judge_model": self.judge_model,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Verdict":
        return cls(
            passed=bool(d["pass"]),
            rationale=d["rationale"],
            judge_model=d["judge_model"],
        )


def content_hash(payload: Any) -> str:
    """Stable sha256 over canonical JSON; used for idempotency and audit."""
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return "sha256:" + hashlib.sha256(canon.encode("utf-8")).hexdigest()


def short_hash(payload: Any, length: int = 12) -> str:
    return content_hash(payload).split(":", 1)[1][:length]


def load_scored_emails(path: Any) -> list[tuple[EmailRecord, Verdict]]:
    """Read a line-delimited file of joined email+verdict rows.

    The first line may be a schema header ({"schema": ...}); it is skipped.
    """
    pairs: list[tuple[EmailRecord, Verdict]] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            if "schema" in row and "email" not in row:
                continue
            pairs.append((EmailRecord.from_dict(row["email"]), Verdict.from_dict(row["verdict"])))
    return pairs


def dump_scored_emails(
    path: Any, pairs: Iterable[tuple[EmailRecord, Verdict]], schema: str = "commgame/scored-emails@1"
) -> None:
    """Write joined email+verdict rows, ordered by email_id, with a schema header."""
    rows = sorted(pairs, key=lambda p: p[0].email_id)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps({"schema": schema}) + "\n")
        for email, verdict in rows:
            fh.write(
                json.dumps({"email": email.to_dict(), "verdict": verdict.to_dict()}, ensure_ascii=False)
                + "\n"
            )
