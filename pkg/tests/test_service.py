"""HTTP surface: versioning, session flow, error mapping, and the
information asymmetry (no personas, no judge goals, no hidden thoughts)."""
from __future__ import annotations

import json

import pytest
from fastapi.testclient import TestClient

from commgame.config import AppConfig
from commgame.gateway import LlmGateway, StubProvider
from commgame.persistence import EventLog
from commgame.scenarios import RecipientSpec, Scenario, ScenarioRegistry
from commgame.service import API_VERSION, create_app

HEADERS = {"X-Api-Version": API_VERSION}
PASS_VERDICT = json.dumps({"pass": True, "rationale": "goal met"})
FAIL_VERDICT = json.dumps({"pass": False, "rationale": "missed"})
BOXED_REPLY = (
    "Understood, thanks.\n\n[What I really think: they still owe me an answer]"
)


@pytest.fixture
def client(tmp_path):
    cfg = AppConfig(store=str(tmp_path / "events.jsonl"))
    app = create_app(cfg, stub=True)
    return TestClient(app)


def scripted_client(tmp_path, *script, registry=None, max_retries: int = 0):
    cfg = AppConfig(store=str(tmp_path / "events.jsonl"))
    gateway = LlmGateway(
        {"*": StubProvider(script=list(script))},
        max_retries=max_retries,
        sleep_fn=lambda _s: None,
    )
    log = EventLog(cfg.store)
    app = create_app(cfg, registry=registry, log=log, gateway=gateway)
    return TestClient(app)


# -- versioning --------------------------------------------------------------------


def test_requests_without_the_version_header_are_rejected(client):
    resp = client.get("/scenarios")
    assert resp.status_code == 400
    assert resp.json()["code"] == "invalid_input"
    assert API_VERSION in resp.json()["message"]


def test_wrong_version_is_rejected(client):
    resp = client.get("/scenarios", headers={"X-Api-Version": "2"})
    assert resp.status_code == 400


# -- scenario listing -----------------------------------------------------------------


def test_scenario_listing_shape(client):
    resp = client.get("/scenarios", headers=HEADERS)
    assert resp.status_code == 200
    listing = resp.json()["scenarios"]
    assert [s["scenario_id"] for s in listing] == ["s1", "s2", "s3", "s4", "s5"]
    s2 = listing[1]
    assert s2["recipients"] == ["Emily", "Mark"]
    assert len(s2["forwarded_emails"]) == 2
    assert listing[3]["multi_turn"] is True
    assert listing[3]["max_turns"] == 8


def test_scenario_listing_never_leaks_hidden_prompts(client, registry):
    resp = client.get("/scenarios", headers=HEADERS)
    text = resp.text
    for scenario in registry:
        assert scenario.judge_goal not in text
        for spec in scenario.recipients:
            assert spec.persona_prompt not in text
    for key in ("persona_prompt", "judge_goal", "game_master"):
        assert key not in text


# -- session lifecycle ------------------------------------------------------------------


def test_start_session_happy_path(client):
    resp = client.post(
        "/sessions",
        headers=HEADERS,
        json={"scenario_id": "s1", "player_tag": "tester"},
    )
    assert resp.status_code == 201
    body = resp.json()
    assert body["scenario_id"] == "s1"
    assert body["status"] == "open"
    assert body["player_tag"] == "tester"
    assert body["session_id"].startswith("s1-")


def test_start_session_requires_tag_and_known_scenario(client):
    resp = client.post("/sessions", headers=HEADERS, json={"scenario_id": "s1"})
    assert resp.status_code == 400
    resp = client.post(
        "/sessions", headers=HEADERS, json={"player_tag": "t", "scenario_id": "s99"}
    )
    assert resp.status_code == 404
    resp = client.post("/sessions", headers=HEADERS, json={"player_tag": "t"})
    assert resp.status_code == 400


def test_read_unknown_session_is_404(client):
    resp = client.get("/sessions/none-0001", headers=HEADERS)
    assert resp.status_code == 404
    assert resp.json()["code"] == "not_found"


def test_submit_and_read_back_a_turn(tmp_path):
    client = scripted_client(tmp_path, BOXED_REPLY, PASS_VERDICT)
    start = client.post(
        "/sessions", headers=HEADERS, json={"scenario_id": "s1", "player_tag": "t"}
    ).json()
    sid = start["session_id"]
    resp = client.post(
        f"/sessions/{sid}/emails",
        headers=HEADERS,
        json={"body": "Hi Sam,\n\nHere is my plan.\n\nAlex"},
    )
    assert resp.status_code == 200
    turn = resp.json()
    assert turn["verdict"] == {"pass": True, "rationale": "goal met"}
    assert turn["session_status"] == "passed"
    assert turn["recipient_replies"][0]["name"] == "Sam"

    session = client.get(f"/sessions/{sid}", headers=HEADERS).json()
    assert session["status"] == "passed"
    assert len(session["turns"]) == 1
    assert session["player_tag"] == "t"
    assert session["turns"][0]["player_email"]["body"].startswith("Hi Sam,")


def test_blank_email_is_422(client):
    sid = client.post(
        "/sessions", headers=HEADERS, json={"scenario_id": "s1", "player_tag": "t"}
    ).json()["session_id"]
    resp = client.post(
        f"/sessions/{sid}/emails", headers=HEADERS, json={"body": "   "}
    )
    assert resp.status_code == 422
    assert resp.json()["code"] == "invalid_input"


def test_submit_to_closed_session_is_409(tmp_path):
    client = scripted_client(
        tmp_path, BOXED_REPLY, PASS_VERDICT, BOXED_REPLY, PASS_VERDICT
    )
    sid = client.post(
        "/sessions", headers=HEADERS, json={"scenario_id": "s1", "player_tag": "t"}
    ).json()["session_id"]
    first = client.post(
        f"/sessions/{sid}/emails", headers=HEADERS, json={"body": "Winning email."}
    )
    assert first.json()["session_status"] == "passed"
    second = client.post(
        f"/sessions/{sid}/emails", headers=HEADERS, json={"body": "Another email."}
    )
    assert second.status_code == 409
    assert second.json()["code"] == "conflict"


def test_gateway_outage_maps_to_502(tmp_path):
    client = scripted_client(tmp_path, {"error": "provider_unavailable"})
    sid = client.post(
        "/sessions", headers=HEADERS, json={"scenario_id": "s1", "player_tag": "t"}
    ).json()["session_id"]
    resp = client.post(
        f"/sessions/{sid}/emails", headers=HEADERS, json={"body": "Hello Sam."}
    )
    assert resp.status_code == 502
    assert resp.json()["code"] == "upstream_llm_error"
    # the failed turn left no state behind
    session = client.get(f"/sessions/{sid}", headers=HEADERS).json()
    assert session["turns"] == []
    assert session["status"] == "open"


# -- information asymmetry -----------------------------------------------------------------


def test_thought_boxes_are_hidden_by_default(tmp_path):
    client = scripted_client(tmp_path, BOXED_REPLY, FAIL_VERDICT)
    sid = client.post(
        "/sessions", headers=HEADERS, json={"scenario_id": "s1", "player_tag": "t"}
    ).json()["session_id"]
    turn = client.post(
        f"/sessions/{sid}/emails", headers=HEADERS, json={"body": "Hi Sam."}
    ).json()
    reply = turn["recipient_replies"][0]
    assert reply["visible_body"] == "Understood, thanks."
    assert "thought_box" not in reply
    assert "[What I really think:" not in json.dumps(turn)
    session_text = client.get(f"/sessions/{sid}", headers=HEADERS).text
    assert "they still owe me an answer" not in session_text


def _revealing_registry() -> ScenarioRegistry:
    scenario = Scenario(
        id="r1",
        title="Reveal after verdict",
        task_email="Task.",
        judge_goal="Goal.",
        recipients=(
            RecipientSpec(
                name="Rex",
                persona_prompt="Persona with [What I really think: marker].",
                expects_thought_box=True,
            ),
        ),
        reveal_thought_boxes_post_verdict=True,
    )
    return ScenarioRegistry([scenario])


def test_thought_boxes_revealed_when_the_scenario_says_so(tmp_path):
    client = scripted_client(
        tmp_path, BOXED_REPLY, PASS_VERDICT, registry=_revealing_registry()
    )
    sid = client.post(
        "/sessions", headers=HEADERS, json={"scenario_id": "r1", "player_tag": "t"}
    ).json()["session_id"]
    turn = client.post(
        f"/sessions/{sid}/emails", headers=HEADERS, json={"body": "Hi Rex."}
    ).json()
    reply = turn["recipient_replies"][0]
    assert reply["thought_box"] == "they still owe me an answer"


def test_session_view_never_includes_judge_goal(tmp_path, registry):
    client = scripted_client(tmp_path, BOXED_REPLY, FAIL_VERDICT)
    sid = client.post(
        "/sessions", headers=HEADERS, json={"scenario_id": "s1", "player_tag": "t"}
    ).json()["session_id"]
    client.post(f"/sessions/{sid}/emails", headers=HEADERS, json={"body": "Hi."})
    text = client.get(f"/sessions/{sid}", headers=HEADERS).text
    assert registry.get("s1").judge_goal not in text
    assert registry.get("s1").recipients[0].persona_prompt not in text


# -- persistence wiring ----------------------------------------------------------------


def test_service_writes_the_event_log(tmp_path):
    store = tmp_path / "events.jsonl"
    cfg = AppConfig(store=str(store))
    client = TestClient(create_app(cfg, stub=True))
    sid = client.post(
        "/sessions", headers=HEADERS, json={"scenario_id": "s1", "player_tag": "t"}
    ).json()["session_id"]
    client.post(
        f"/sessions/{sid}/emails",
        headers=HEADERS,
        json={"body": "Hi Sam,\n\nQuick note.\n\nAlex"},
    )
    log = EventLog(store)
    kinds = [e.kind for e in log.events()]
    assert "session_started" in kinds
    assert "email_submitted" in kinds
    assert "verdict_issued" in kinds
    assert "llm_call" in kinds  # every provider round-trip is audited
