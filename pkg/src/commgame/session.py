"""Session engine: runs one attempt through recipients, game master, and judge.

A session tracks every attempt a player makes at a scenario. Single-turn
scenarios allow unlimited fresh attempts, each judged in isolation; multi-turn
scenarios grow one conversation up to the turn budget. A turn only becomes
part of the session once every pipeline stage has completed, so a gateway
failure midway leaves no partial state behind.
"""

from __future__ import annotations

import itertools
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Any

from .gateway import (
    ChatRequest,
    InvalidRequest,
    LlmGateway,
    MalformedOutput,
    SchemaDescriptor,
)
from .records import EmailRecord, Verdict, Writer
from .scenarios import Scenario, ScenarioRegistry, UnknownScenario
from .thoughtbox import ThoughtBoxFormat, parse_thought_box

__all__ = [
    "SessionError",
    "SessionClosed",
    "TurnBudgetExhausted",
    "EmptyEmail",
    "UnknownBaseEmail",
    "UnknownScenario",
    "PLAYER_NAME",
    "PLAYER_KINDS",
    "SESSION_STATUSES",
    "RoleSpec",
    "ModelRoles",
    "RecipientReply",
    "Turn",
    "Session",
    "RewriteDirective",
    "SessionEngine",
    "parse_ending",
    "render_transcript",
    "verdict_schema",
]


class SessionError(Exception):
    pass


class SessionClosed(SessionError):
    pass


class TurnBudgetExhausted(SessionError):
    pass


class EmptyEmail(SessionError):
    pass


class UnknownBaseEmail(SessionError):
    pass


PLAYER_NAME = "Alex"
PLAYER_KINDS = ("human", "llm", "human_plus_llm")
SESSION_STATUSES = ("open", "passed", "failed", "abandoned")

UNPARSEABLE_JUDGE_RATIONALE = "unparseable judge output"


@dataclass(frozen=True)
class RoleSpec:
    model_id: str
    temperature: float = 0.7


@dataclass(frozen=True)
class ModelRoles:
    recipient: RoleSpec
    game_master: RoleSpec
    judge: RoleSpec
    writer: RoleSpec

    @classmethod
    def single_model(cls, model_id: str) -> "ModelRoles":
        """Every role served by one model; judges stay at temperature 0."""
        return cls(
            recipient=RoleSpec(model_id),
            game_master=RoleSpec(model_id),
            judge=RoleSpec(model_id, temperature=0.0),
            writer=RoleSpec(model_id),
        )


@dataclass(frozen=True)
class RecipientReply:
    name: str
    visible_body: str
    thought_box: str | None = None


@dataclass(frozen=True)
class Turn:
    player_email: EmailRecord
    recipient_replies: tuple[RecipientReply, ...]
    verdict: Verdict
    simulated_outcome: str | None = None
    ending: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "recipient_replies", tuple(self.recipient_replies))
        if not self.recipient_replies:
            raise ValueError("a turn needs at least one recipient reply")


@dataclass
class Session:
    session_id: str
    scenario_id: str
    player_kind: str
    created_at: float
    status: str = "open"
    attempts: list[Turn] = field(default_factory=list)
    multi_turn: bool = False
    max_turns: int = 1

    def __post_init__(self) -> None:
        if self.player_kind not in PLAYER_KINDS:
            raise ValueError(f"unknown player kind {self.player_kind!r}")
        if self.status not in SESSION_STATUSES:
            raise ValueError(f"unknown status {self.status!r}")

    @property
    def turns(self) -> list[Turn]:
        """Current conversation: all attempts when multi-turn, else the last."""
        if self.multi_turn:
            return list(self.attempts)
        return self.attempts[-1:]

    @property
    def is_open(self) -> bool:
        return self.status == "open"


@dataclass(frozen=True)
class RewriteDirective:
    kind: str
    empathy: int | None = None
    formality: int | None = None
    example_bodies: tuple[str, ...] = ()

    _KINDS = ("improve", "target_scores", "target_scores_with_examples")

    def __post_init__(self) -> None:
        object.__setattr__(self, "example_bodies", tuple(self.example_bodies))
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown directive kind {self.kind!r}")
        if self.kind != "improve" and (self.empathy is None or self.formality is None):
            raise ValueError(f"{self.kind} needs empathy and formality targets")
        if self.kind == "target_scores_with_examples" and not self.example_bodies:
            raise ValueError("target_scores_with_examples needs example bodies")

    @classmethod
    def improve(cls) -> "RewriteDirective":
        return cls(kind="improve")

    @classmethod
    def target_scores(cls, empathy: int, formality: int) -> "RewriteDirective":
        return cls(kind="target_scores", empathy=empathy, formality=formality)

    @classmethod
    def target_scores_with_examples(
        cls, empathy: int, formality: int, example_bodies: Sequence[str]
    ) -> "RewriteDirective":
        return cls(
            kind="target_scores_with_examples",
            empathy=empathy,
            formality=formality,
            example_bodies=tuple(example_bodies),
        )


def verdict_schema() -> SchemaDescriptor:
    return SchemaDescriptor(
        name="verdict",
        schema={
            "type": "object",
            "properties": {
                "pass": {"type": "boolean"},
                "rationale": {"type": "string", "minLength": 1},
            },
            "required": ["pass", "rationale"],
            "additionalProperties": False,
        },
    )


def parse_ending(outcome: str, ending_labels: Sequence[str]) -> str | None:
    """First configured label that starts a line of the outcome text."""
    for line in outcome.splitlines():
        stripped = line.strip()
        for label in ending_labels:
            if stripped.startswith(label):
                return label
    return None


def render_transcript(
    turns: Sequence[Turn],
    *,
    include_thoughts: bool = False,
    pending_email: EmailRecord | None = None,
) -> str:
    """Turn-marked transcript of the exchanged emails so far."""
    parts: list[str] = []
    for n, turn in enumerate(turns, start=1):
        parts.append(f"Turn {n} - {PLAYER_NAME}:\n{turn.player_email.body}")
        for reply in turn.recipient_replies:
            parts.append(f"Turn {n} - {reply.name}:\n{reply.visible_body}")
            if include_thoughts and reply.thought_box is not None:
                parts.append(
                    f"Turn {n} - {reply.name} (inner thoughts):\n{reply.thought_box}"
                )
    if pending_email is not None:
        parts.append(
            f"Turn {len(turns) + 1} - {PLAYER_NAME}:\n{pending_email.body}"
        )
    return "\n\n".join(parts)


_RECIPIENT_SYSTEM_SUFFIX = (
    "\n\nReply in character with the email you would send back. "
    "Write only the email."
)

_JUDGE_SYSTEM_PROMPT = (
    "You are the judge for an email communication exercise. Read the exchange "
    "and decide whether the player's email achieves the stated goal."
)

_WRITER_SYSTEM_PROMPT = (
    "You are playing an email communication exercise. Read the scenario and "
    "write the email it asks for. Reply with only the email body."
)

_REWRITER_SYSTEM_PROMPT = (
    "You edit workplace emails. Rewrite the email you are given according to "
    "the instructions, keeping the sender's intent. Reply with only the "
    "rewritten email body."
)


class SessionEngine:
    """Coordinates scenario play against a gateway and an optional event log.

    The log only needs an ``append(kind, payload)`` method; all turn events
    are buffered and flushed after the verdict so a mid-turn gateway failure
    records nothing.
    """

    def __init__(
        self,
        registry: ScenarioRegistry,
        gateway: LlmGateway,
        roles: ModelRoles,
        log: Any | None = None,
        fmt: ThoughtBoxFormat | None = None,
        clock: Callable[[], float] = time.time,
        session_seq_start: int = 1,
        email_seq_start: int = 1,
    ) -> None:
        self.registry = registry
        self.gateway = gateway
        self.roles = roles
        self.log = log
        self.fmt = fmt or ThoughtBoxFormat()
        self.clock = clock
        # seq starts let a fresh engine continue numbering over an existing store
        self._session_counter = itertools.count(session_seq_start)
        self._email_counter = itertools.count(email_seq_start)
        self.sessions: dict[str, Session] = {}
        self._known_emails: dict[str, EmailRecord] = {}

    # -- session lifecycle ---------------------------------------------------

    def start_session(self, scenario_id: str, player_kind: str) -> Session:
        scenario = self.registry.get(scenario_id)  # raises UnknownScenario
        session = Session(
            session_id=f"{scenario_id}-{next(self._session_counter):04d}",
            scenario_id=scenario_id,
            player_kind=player_kind,
            created_at=self.clock(),
            multi_turn=scenario.multi_turn,
            max_turns=scenario.max_turns,
        )
        self.sessions[session.session_id] = session
        self._emit(
            "session_started",
            {
                "session_id": session.session_id,
                "scenario_id": scenario_id,
                "player_kind": player_kind,
                "created_at": session.created_at,
                "multi_turn": session.multi_turn,
                "max_turns": session.max_turns,
            },
        )
        return session

    def abandon(self, session: Session) -> None:
        if not session.is_open:
            raise SessionClosed(f"session {session.session_id} is {session.status}")
        session.status = "abandoned"

    # -- the per-turn pipeline -----------------------------------------------

    def submit_email(
        self, session: Session, body: str, *, record: EmailRecord | None = None
    ) -> Turn:
        if not session.is_open:
            raise SessionClosed(f"session {session.session_id} is {session.status}")
        scenario = self.registry.get(session.scenario_id)
        if session.multi_turn and len(session.attempts) >= session.max_turns:
            raise TurnBudgetExhausted(
                f"session {session.session_id} used all {session.max_turns} turns"
            )
        if record is not None:
            body = record.body
        if not body.strip():
            raise EmptyEmail("email body is blank")

        turn_index = len(session.attempts)
        email = record or EmailRecord(
            email_id=self._next_email_id(session.scenario_id),
            scenario_id=session.scenario_id,
            writer=self._writer_for(session),
            body=body,
            turn_index=turn_index,
        )
        self._known_emails[email.email_id] = email

        prior = session.turns if session.multi_turn else []
        replies = [
            self._recipient_reply(scenario, name, prior, email)
            for name in (r.name for r in scenario.recipients)
        ]

        outcome: str | None = None
        ending: str | None = None
        if scenario.game_master_prompt is not None:
            outcome = self._simulate_outcome(scenario, prior, email, replies)
            if scenario.ending_labels:
                ending = parse_ending(outcome, scenario.ending_labels)

        verdict = self._judge(scenario, prior, email, replies, outcome)

        turn = Turn(
            player_email=email,
            recipient_replies=tuple(replies),
            verdict=verdict,
            simulated_outcome=outcome,
            ending=ending,
        )
        session.attempts.append(turn)
        if verdict.passed:
            session.status = "passed"
        elif session.multi_turn and len(session.attempts) >= session.max_turns:
            session.status = "failed"

        self._flush_turn(session, turn_index, turn)
        return turn

    def _recipient_reply(
        self,
        scenario: Scenario,
        name: str,
        prior: Sequence[Turn],
        email: EmailRecord,
    ) -> RecipientReply:
        spec = scenario.recipient(name)
        transcript = render_transcript(prior, pending_email=email)
        req = ChatRequest(
            model_id=self.roles.recipient.model_id,
            system_prompt=spec.persona_prompt + _RECIPIENT_SYSTEM_SUFFIX,
            messages=(("user", transcript),),
            temperature=self.roles.recipient.temperature,
        )
        raw = self.gateway.complete(req).text
        if spec.expects_thought_box:
            visible, thought = parse_thought_box(raw, self.fmt)
            return RecipientReply(name=name, visible_body=visible, thought_box=thought)
        return RecipientReply(name=name, visible_body=raw.strip())

    def _simulate_outcome(
        self,
        scenario: Scenario,
        prior: Sequence[Turn],
        email: EmailRecord,
        replies: Sequence[RecipientReply],
    ) -> str:
        gm_prompt = scenario.game_master_prompt or ""
        if "{email}" in gm_prompt:
            # fill-in template: the prompt already embeds the exchange
            filled = gm_prompt.replace("{email}", email.body)
            filled = filled.replace("{response}", replies[0].visible_body)
            req = ChatRequest(
                model_id=self.roles.game_master.model_id,
                system_prompt="",
                messages=(("user", filled),),
                temperature=self.roles.game_master.temperature,
            )
        else:
            transcript = self._turn_block(prior, email, replies, include_thoughts=False)
            req = ChatRequest(
                model_id=self.roles.game_master.model_id,
                system_prompt=gm_prompt,
                messages=(("user", transcript),),
                temperature=self.roles.game_master.temperature,
            )
        return self.gateway.complete(req).text.strip()

    def _judge(
        self,
        scenario: Scenario,
        prior: Sequence[Turn],
        email: EmailRecord,
        replies: Sequence[RecipientReply],
        outcome: str | None,
    ) -> Verdict:
        transcript = self._turn_block(
            prior, email, replies, include_thoughts=scenario.judge_sees_thought_boxes
        )
        sections = [f"Scenario context:\n{scenario.task_email}", transcript]
        if outcome is not None:
            sections.append(f"Simulated outcome:\n{outcome}")
        sections.append(f"Your goal:\n{scenario.judge_goal}")
        sections.append(
            'Respond with JSON only: { "pass": <true or false>, '
            '"rationale": "<brief reason>" }'
        )
        req = ChatRequest(
            model_id=self.roles.judge.model_id,
            system_prompt=_JUDGE_SYSTEM_PROMPT,
            messages=(("user", "\n\n".join(sections)),),
            temperature=self.roles.judge.temperature,
        )
        try:
            result = self.gateway.complete_structured(req, verdict_schema())
        except MalformedOutput:
            # fail closed rather than dropping the turn
            return Verdict(
                passed=False,
                rationale=UNPARSEABLE_JUDGE_RATIONALE,
                judge_model=self.roles.judge.model_id,
            )
        return Verdict(
            passed=bool(result.value["pass"]),
            rationale=result.value["rationale"],
            judge_model=self.roles.judge.model_id,
        )

    def _turn_block(
        self,
        prior: Sequence[Turn],
        email: EmailRecord,
        replies: Sequence[RecipientReply],
        *,
        include_thoughts: bool,
    ) -> str:
        n = len(prior) + 1
        parts = [render_transcript(prior, include_thoughts=include_thoughts)]
        parts.append(f"Turn {n} - {PLAYER_NAME}:\n{email.body}")
        for reply in replies:
            parts.append(f"Turn {n} - {reply.name}:\n{reply.visible_body}")
            if include_thoughts and reply.thought_box is not None:
                parts.append(
                    f"Turn {n} - {reply.name} (inner thoughts):\n{reply.thought_box}"
                )
        return "\n\n".join(p for p in parts if p)

    # -- email authoring -----------------------------------------------------

    def generate_llm_email(
        self,
        scenario: Scenario | str,
        writer_model: str | None = None,
        length_target: int | None = None,
    ) -> EmailRecord:
        scenario = self._resolve(scenario)
        model = writer_model or self.roles.writer.model_id
        if length_target is not None and length_target < 1:
            raise InvalidRequest("length_target must be a positive integer")
        sections = [f"Scenario:\n{scenario.task_email}"]
        for n, fwd in enumerate(scenario.forwarded_emails, start=1):
            sections.append(f"Forwarded email {n}:\n{fwd}")
        instruction = "Write your email now."
        if length_target is not None:
            instruction += (
                f" Keep the email to roughly {length_target} characters long."
            )
        sections.append(instruction)
        req = ChatRequest(
            model_id=model,
            system_prompt=_WRITER_SYSTEM_PROMPT,
            messages=(("user", "\n\n".join(sections)),),
            temperature=self.roles.writer.temperature,
        )
        body = self.gateway.complete(req).text.strip()
        email = EmailRecord(
            email_id=self._next_email_id(scenario.id),
            scenario_id=scenario.id,
            writer=Writer.llm(model),
            body=body,
            turn_index=0,
        )
        self._known_emails[email.email_id] = email
        return email

    def rewrite_email(
        self,
        base: EmailRecord | str,
        writer_model: str | None = None,
        directive: RewriteDirective | None = None,
    ) -> EmailRecord:
        if isinstance(base, str):
            if base not in self._known_emails:
                raise UnknownBaseEmail(base)
            base = self._known_emails[base]
        else:
            self._known_emails.setdefault(base.email_id, base)
        model = writer_model or self.roles.writer.model_id
        directive = directive or RewriteDirective.improve()

        sections: list[str] = []
        if directive.kind == "improve":
            sections.append(
                "Rewrite the email below to improve its quality while keeping "
                "its message."
            )
        else:
            sections.append(
                "Rewrite the email below so that it would score "
                f"{directive.empathy} out of 7 on empathy and "
                f"{directive.formality} out of 7 on formality."
            )
        if directive.kind == "target_scores_with_examples":
            sections.append(
                "Here are example emails in the target style; imitate them:"
            )
            for n, example in enumerate(directive.example_bodies, start=1):
                sections.append(f"Example {n}:\n{example}")
        sections.append(f"Email to rewrite:\n{base.body}")
        req = ChatRequest(
            model_id=model,
            system_prompt=_REWRITER_SYSTEM_PROMPT,
            messages=(("user", "\n\n".join(sections)),),
            temperature=self.roles.writer.temperature,
        )
        body = self.gateway.complete(req).text.strip()
        email = EmailRecord(
            email_id=self._next_email_id(base.scenario_id),
            scenario_id=base.scenario_id,
            writer=Writer.rewrite(base_email_id=base.email_id, model_id=model),
            body=body,
            turn_index=base.turn_index,
        )
        self._known_emails[email.email_id] = email
        return email

    # -- helpers ---------------------------------------------------------------

    def _resolve(self, scenario: Scenario | str) -> Scenario:
        if isinstance(scenario, Scenario):
            return scenario
        return self.registry.get(scenario)

    def _writer_for(self, session: Session) -> Writer:
        if session.player_kind == "human":
            return Writer.human()
        if session.player_kind == "llm":
            return Writer.llm(self.roles.writer.model_id)
        raise SessionError(
            "human_plus_llm sessions must submit a rewritten EmailRecord via "
            "the record argument so the base email stays linked"
        )

    def _next_email_id(self, scenario_id: str) -> str:
        return f"{scenario_id}-email-{next(self._email_counter):04d}"

    def _emit(self, kind: str, payload: dict[str, Any]) -> None:
        if self.log is not None:
            self.log.append(kind, payload)

    def _flush_turn(self, session: Session, turn_index: int, turn: Turn) -> None:
        sid = session.session_id
        self._emit(
            "email_submitted",
            {"session_id": sid, "turn_index": turn_index, **turn.player_email.to_dict()},
        )
        for reply in turn.recipient_replies:
            self._emit(
                "recipient_replied",
                {
                    "session_id": sid,
                    "turn_index": turn_index,
                    "name": reply.name,
                    "visible_body": reply.visible_body,
                    "thought_box": reply.thought_box,
                },
            )
        if turn.simulated_outcome is not None:
            self._emit(
                "outcome_simulated",
                {
                    "session_id": sid,
                    "turn_index": turn_index,
                    "text": turn.simulated_outcome,
                    "ending": turn.ending,
                },
            )
        self._emit(
            "verdict_issued",
            {
                "session_id": sid,
                "turn_index": turn_index,
                **turn.verdict.to_dict(),
                "session_status": session.status,
            },
        )
