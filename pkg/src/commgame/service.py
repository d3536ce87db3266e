"""HTTP surface for players: session lifecycle, email submission, transcripts.

The information asymmetry of the game lives here: responses never include
recipient persona prompts or judge goals, and recipient thought boxes are
omitted unless the scenario manifest explicitly reveals them after the
verdict. Requests for the same session are serialized; distinct sessions
proceed concurrently.
"""

from __future__ import annotations

import threading
from typing import Any

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .config import AppConfig, build_gateway, build_roles, load_config
from .gateway import GatewayError, LlmGateway
from .persistence import EventLog
from .scenarios import (
    Scenario,
    ScenarioRegistry,
    UnknownScenario,
    default_scenario_root,
    load_registry,
)
from .session import (
    EmptyEmail,
    Session,
    SessionClosed,
    SessionEngine,
    Turn,
    TurnBudgetExhausted,
)

__all__ = ["ApiException", "create_app", "API_VERSION"]

API_VERSION = "1"


class ApiException(Exception):
    def __init__(self, status_code: int, code: str, message: str) -> None:
        super().__init__(message)
        self.status_code = status_code
        self.code = code
        self.message = message


class _StartSessionBody(BaseModel):
    scenario_id: str | None = None
    player_tag: str | None = None


class _SubmitEmailBody(BaseModel):
    body: str = ""


def _scenario_listing(scenario: Scenario) -> dict[str, Any]:
    """Player-facing view only: no persona prompts, no judge goal."""
    return {
        "scenario_id": scenario.id,
        "title": scenario.title,
        "task_email": scenario.task_email,
        "forwarded_emails": list(scenario.forwarded_emails),
        "recipients": [r.name for r in scenario.recipients],
        "multi_turn": scenario.multi_turn,
        "max_turns": scenario.max_turns,
    }


def _turn_view(turn: Turn, turn_index: int, reveal_thoughts: bool) -> dict[str, Any]:
    replies = []
    for reply in turn.recipient_replies:
        view: dict[str, Any] = {"name": reply.name, "visible_body": reply.visible_body}
        if reveal_thoughts and reply.thought_box is not None:
            view["thought_box"] = reply.thought_box
        replies.append(view)
    return {
        "turn_index": turn_index,
        "player_email": {
            "email_id": turn.player_email.email_id,
            "body": turn.player_email.body,
        },
        "recipient_replies": replies,
        "simulated_outcome": turn.simulated_outcome,
        "ending": turn.ending,
        "verdict": {"pass": turn.verdict.passed, "rationale": turn.verdict.rationale},
    }


def _session_view(session: Session, scenario: Scenario) -> dict[str, Any]:
    reveal = scenario.reveal_thought_boxes_post_verdict
    return {
        "session_id": session.session_id,
        "scenario_id": session.scenario_id,
        "player_kind": session.player_kind,
        "status": session.status,
        "created_at": session.created_at,
        "multi_turn": session.multi_turn,
        "max_turns": session.max_turns,
        "turns": [
            _turn_view(turn, n, reveal) for n, turn in enumerate(session.attempts)
        ],
    }


def create_app(
    config: AppConfig | None = None,
    *,
    stub: bool = False,
    registry: ScenarioRegistry | None = None,
    log: EventLog | None = None,
    gateway: LlmGateway | None = None,
) -> FastAPI:
    cfg = config or load_config()
    if registry is None:
        root = cfg.scenario_root or default_scenario_root()
        registry = load_registry(root)
    if log is None:
        log = EventLog(cfg.store)
    if gateway is None:
        gateway = build_gateway(
            cfg, stub=stub, on_call=lambda payload: log.append("llm_call", payload)
        )
    engine = SessionEngine(registry=registry, gateway=gateway, roles=build_roles(cfg), log=log)

    app = FastAPI(title="commgame", version=API_VERSION)
    app.state.engine = engine
    app.state.registry = registry
    app.state.log = log
    app.state.player_tags = {}
    app.state.locks = {}
    app.state.locks_guard = threading.Lock()

    def session_lock(session_id: str) -> threading.Lock:
        with app.state.locks_guard:
            return app.state.locks.setdefault(session_id, threading.Lock())

    @app.exception_handler(ApiException)
    async def handle_api_error(request: Request, exc: ApiException) -> JSONResponse:
        return JSONResponse(
            status_code=exc.status_code,
            content={"code": exc.code, "message": exc.message},
        )

    @app.middleware("http")
    async def require_api_version(request: Request, call_next):
        if request.headers.get("x-api-version") != API_VERSION:
            return JSONResponse(
                status_code=400,
                content={
                    "code": "invalid_input",
                    "message": f"X-Api-Version: {API_VERSION} header required",
                },
            )
        return await call_next(request)

    def get_session(session_id: str) -> Session:
        session = engine.sessions.get(session_id)
        if session is None:
            raise ApiException(404, "not_found", f"no session {session_id!r}")
        return session

    @app.get("/scenarios")
    def list_scenarios() -> dict[str, Any]:
        return {"scenarios": [_scenario_listing(s) for s in registry]}

    @app.post("/sessions", status_code=201)
    def start_session(body: _StartSessionBody) -> dict[str, Any]:
        if not body.player_tag or not body.player_tag.strip():
            raise ApiException(400, "invalid_input", "player_tag is required")
        if not body.scenario_id:
            raise ApiException(400, "invalid_input", "scenario_id is required")
        try:
            session = engine.start_session(body.scenario_id, "human")
        except UnknownScenario as exc:
            raise ApiException(404, "not_found", str(exc)) from exc
        app.state.player_tags[session.session_id] = body.player_tag
        return {
            "session_id": session.session_id,
            "scenario_id": session.scenario_id,
            "player_tag": body.player_tag,
            "status": session.status,
            "max_turns": session.max_turns,
            "multi_turn": session.multi_turn,
        }

    @app.post("/sessions/{session_id}/emails")
    def submit_email(session_id: str, body: _SubmitEmailBody) -> dict[str, Any]:
        session = get_session(session_id)
        if not body.body.strip():
            raise ApiException(422, "invalid_input", "email body must not be blank")
        scenario = registry.get(session.scenario_id)
        with session_lock(session_id):
            try:
                turn = engine.submit_email(session, body.body)
            except SessionClosed as exc:
                raise ApiException(409, "conflict", str(exc)) from exc
            except TurnBudgetExhausted as exc:
                raise ApiException(409, "turn_budget_exhausted", str(exc)) from exc
            except EmptyEmail as exc:
                raise ApiException(422, "invalid_input", str(exc)) from exc
            except GatewayError as exc:
                raise ApiException(
                    502, "upstream_llm_error", f"language-model call failed: {exc}"
                ) from exc
        view = _turn_view(
            turn,
            len(session.attempts) - 1,
            scenario.reveal_thought_boxes_post_verdict,
        )
        view["session_status"] = session.status
        return view

    @app.get("/sessions/{session_id}")
    def read_session(session_id: str) -> dict[str, Any]:
        session = get_session(session_id)
        scenario = registry.get(session.scenario_id)
        view = _session_view(session, scenario)
        view["player_tag"] = app.state.player_tags.get(session_id)
        return view

    return app
