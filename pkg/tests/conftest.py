"""Shared fixtures: the packaged scenario set, stub-backed gateways, engines."""
from __future__ import annotations

from pathlib import Path

import pytest

from commgame.config import AppConfig, build_roles
from commgame.gateway import LlmGateway, StubProvider
from commgame.scenarios import default_scenario_root, load_registry
from commgame.session import SessionEngine
from commgame.stubprovider import ProceduralStubProvider


class RecordingLog:
    """Minimal in-memory stand-in for EventLog's append interface."""

    def __init__(self) -> None:
        self.events: list[tuple[str, dict]] = []

    def append(self, kind: str, payload: dict) -> None:
        self.events.append((kind, payload))

    def kinds(self) -> list[str]:
        return [kind for kind, _ in self.events]


@pytest.fixture(scope="session")
def registry():
    return load_registry(default_scenario_root())


@pytest.fixture
def stub_gateway() -> LlmGateway:
    return LlmGateway({"*": ProceduralStubProvider()})


@pytest.fixture
def stub_roles():
    return build_roles(AppConfig())


@pytest.fixture
def recording_log() -> RecordingLog:
    return RecordingLog()


@pytest.fixture
def engine(registry, stub_gateway, stub_roles, recording_log) -> SessionEngine:
    return SessionEngine(
        registry=registry,
        gateway=stub_gateway,
        roles=stub_roles,
        log=recording_log,
    )


@pytest.fixture
def make_scripted_engine(registry, stub_roles, recording_log):
    """Engine whose provider plays back an explicit response script."""

    def build(*script, max_retries: int = 0) -> tuple[SessionEngine, StubProvider]:
        provider = StubProvider(script=list(script))
        gateway = LlmGateway(
            {"*": provider}, max_retries=max_retries, sleep_fn=lambda _s: None
        )
        eng = SessionEngine(
            registry=registry,
            gateway=gateway,
            roles=stub_roles,
            log=recording_log,
        )
        return eng, provider

    return build


@pytest.fixture(scope="session")
def fixture_dir() -> Path:
    from importlib import resources

    return Path(str(resources.files("commgame"))) / "data" / "fixtures"
