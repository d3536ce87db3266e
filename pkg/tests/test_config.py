"""Config loading and the gateway/role wiring it drives."""
from __future__ import annotations

import json

import pytest

from commgame.config import (
    AppConfig,
    ConfigError,
    ProviderConfig,
    build_gateway,
    build_roles,
    default_config_path,
    load_config,
)
from commgame.gateway import ChatRequest
from commgame.stubprovider import ProceduralStubProvider


def test_default_config_loads_and_is_stub_only():
    cfg = load_config()
    assert default_config_path().is_file()
    assert cfg.port > 0
    gateway = build_gateway(cfg, stub=True)
    req = ChatRequest(model_id="whatever", system_prompt="", messages=(("user", "x"),))
    assert gateway.complete(req).text


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(bad)
    wrong_schema = tmp_path / "schema.json"
    wrong_schema.write_text(json.dumps({"schema": "other@1"}), encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(wrong_schema)


def test_full_config_round_trip(tmp_path):
    raw = {
        "schema": "commgame/config@1",
        "listen": {"host": "0.0.0.0", "port": 9999},
        "store": "custom.jsonl",
        "gateway": {"max_retries": 7, "backoff_base": 0.1},
        "providers": {
            "local": {
                "type": "openai_compatible",
                "base_url": "http://localhost:8000/v1",
                "models": ["m1", "m2"],
                "api_key_env": "LOCAL_KEY",
            },
            "offline": {"type": "stub", "models": ["stub/x"]},
        },
        "roles": {
            "judge": {"model": "m1", "temperature": 0.0},
            "writer": {"model": "m2"},
        },
        "tournament": {"judges": ["m1", "m2"]},
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(raw), encoding="utf-8")
    cfg = load_config(path)
    assert (cfg.host, cfg.port) == ("0.0.0.0", 9999)
    assert cfg.store == "custom.jsonl"
    assert cfg.max_retries == 7
    assert {p.name for p in cfg.providers} == {"local", "offline"}
    assert cfg.judge.model_id == "m1"
    assert cfg.writer.model_id == "m2"
    assert cfg.writer.temperature == AppConfig().writer.temperature
    assert cfg.recipient == AppConfig().recipient  # untouched role keeps defaults
    assert cfg.tournament_judges == ("m1", "m2")


def test_role_entries_must_carry_a_model(tmp_path):
    raw = {"schema": "commgame/config@1", "roles": {"judge": {"temperature": 0.0}}}
    path = tmp_path / "config.json"
    path.write_text(json.dumps(raw), encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(path)


def test_provider_config_validation():
    with pytest.raises(ConfigError):
        ProviderConfig(name="p", type="grpc", models=("m",))
    with pytest.raises(ConfigError):
        ProviderConfig(name="p", type="openai_compatible", models=("m",))
    with pytest.raises(ConfigError):
        ProviderConfig(name="p", type="stub", models=())


def test_with_store_override():
    cfg = AppConfig()
    assert cfg.with_store(None) is cfg
    assert cfg.with_store("elsewhere.jsonl").store == "elsewhere.jsonl"


def test_build_roles_maps_every_role():
    cfg = AppConfig()
    roles = build_roles(cfg)
    assert roles.recipient == cfg.recipient
    assert roles.game_master == cfg.game_master
    assert roles.judge == cfg.judge
    assert roles.writer == cfg.writer


def test_build_gateway_stub_flag_overrides_providers():
    cfg = AppConfig(
        providers=(
            ProviderConfig(
                name="real",
                type="openai_compatible",
                base_url="http://example.invalid/v1",
                models=("m1",),
            ),
        )
    )
    gateway = build_gateway(cfg, stub=True)
    assert isinstance(gateway._providers["*"], ProceduralStubProvider)
    assert "m1" not in gateway._providers


def test_build_gateway_registers_each_model_id():
    cfg = AppConfig(
        providers=(ProviderConfig(name="offline", type="stub", models=("a", "b")),)
    )
    gateway = build_gateway(cfg)
    assert gateway._providers["a"] is gateway._providers["b"]
    assert isinstance(gateway._providers["a"], ProceduralStubProvider)
