"""One JSON config file drives the server, gateway, and batch tooling.

The shipped default runs entirely on the offline stub provider; real
deployments replace provider entries with OpenAI-compatible endpoints and
put credentials in the environment variable each entry names.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from .gateway import LlmGateway, Provider
from .openai_compat import OpenAiCompatProvider
from .session import ModelRoles, RoleSpec
from .stubprovider import ProceduralStubProvider

__all__ = [
    "ConfigError",
    "ProviderConfig",
    "AppConfig",
    "load_config",
    "default_config_path",
    "build_gateway",
    "build_roles",
]

CONFIG_SCHEMA = "commgame/config@1"


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class ProviderConfig:
    name: str
    type: str
    models: tuple[str, ...]
    base_url: str | None = None
    api_key_env: str | None = None
    capabilities: tuple[str, ...] = ("complete", "structured")
    timeout_s: float = 120.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "models", tuple(self.models))
        object.__setattr__(self, "capabilities", tuple(self.capabilities))
        if self.type not in ("stub", "openai_compatible"):
            raise ConfigError(f"unknown provider type {self.type!r}")
        if self.type == "openai_compatible" and not self.base_url:
            raise ConfigError(f"provider {self.name!r} needs a base_url")
        if not self.models:
            raise ConfigError(f"provider {self.name!r} lists no models")


@dataclass(frozen=True)
class AppConfig:
    host: str = "127.0.0.1"
    port: int = 8321
    store: str = "commgame-events.jsonl"
    scenario_root: str | None = None
    max_retries: int = 2
    backoff_base: float = 0.5
    max_inflight_per_provider: int = 4
    providers: tuple[ProviderConfig, ...] = field(default_factory=tuple)
    recipient: RoleSpec = RoleSpec("stub/recipient", 0.7)
    game_master: RoleSpec = RoleSpec("stub/game-master", 0.7)
    judge: RoleSpec = RoleSpec("stub/judge", 0.0)
    writer: RoleSpec = RoleSpec("stub/writer", 0.7)
    labeler: RoleSpec = RoleSpec("stub/labeler", 0.0)
    tournament_judges: tuple[str, ...] = ("stub/judge-a", "stub/judge-b")

    def with_store(self, store: str | None) -> "AppConfig":
        return replace(self, store=store) if store else self


def default_config_path() -> Path:
    return Path(str(resources.files("commgame"))) / "data" / "default_config.json"


def _role(raw: dict, name: str, fallback: RoleSpec) -> RoleSpec:
    entry = raw.get(name)
    if entry is None:
        return fallback
    if not isinstance(entry, dict) or "model" not in entry:
        raise ConfigError(f"role {name!r} must be an object with a model key")
    return RoleSpec(
        model_id=entry["model"],
        temperature=float(entry.get("temperature", fallback.temperature)),
    )


def load_config(path: str | Path | None = None) -> AppConfig:
    cfg_path = Path(path) if path else default_config_path()
    try:
        raw = json.loads(cfg_path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {cfg_path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {cfg_path} is not valid JSON: {exc}") from exc
    if raw.get("schema") != CONFIG_SCHEMA:
        raise ConfigError(f"config must declare schema {CONFIG_SCHEMA!r}")

    providers = []
    for name, entry in raw.get("providers", {}).items():
        providers.append(
            ProviderConfig(
                name=name,
                type=entry.get("type", "openai_compatible"),
                models=tuple(entry.get("models", ())),
                base_url=entry.get("base_url"),
                api_key_env=entry.get("api_key_env"),
                capabilities=tuple(
                    entry.get("capabilities", ("complete", "structured"))
                ),
                timeout_s=float(entry.get("timeout_s", 120.0)),
            )
        )

    defaults = AppConfig()
    roles_raw = raw.get("roles", {})
    listen = raw.get("listen", {})
    return AppConfig(
        host=listen.get("host", defaults.host),
        port=int(listen.get("port", defaults.port)),
        store=raw.get("store", defaults.store),
        scenario_root=raw.get("scenario_root"),
        max_retries=int(raw.get("gateway", {}).get("max_retries", defaults.max_retries)),
        backoff_base=float(
            raw.get("gateway", {}).get("backoff_base", defaults.backoff_base)
        ),
        max_inflight_per_provider=int(
            raw.get("gateway", {}).get(
                "max_inflight_per_provider", defaults.max_inflight_per_provider
            )
        ),
        providers=tuple(providers),
        recipient=_role(roles_raw, "recipient", defaults.recipient),
        game_master=_role(roles_raw, "game_master", defaults.game_master),
        judge=_role(roles_raw, "judge", defaults.judge),
        writer=_role(roles_raw, "writer", defaults.writer),
        labeler=_role(roles_raw, "labeler", defaults.labeler),
        tournament_judges=tuple(
            raw.get("tournament", {}).get("judges", defaults.tournament_judges)
        ),
    )


def build_roles(cfg: AppConfig) -> ModelRoles:
    return ModelRoles(
        recipient=cfg.recipient,
        game_master=cfg.game_master,
        judge=cfg.judge,
        writer=cfg.writer,
    )


def build_gateway(
    cfg: AppConfig,
    stub: bool = False,
    on_call=None,
    sleep_fn=None,
) -> LlmGateway:
    """Instantiate providers and wire them into a gateway.

    With ``stub=True`` every model id (known or not) is served by the
    deterministic offline responder.
    """
    providers: dict[str, Provider] = {}
    if stub or not cfg.providers:
        providers["*"] = ProceduralStubProvider()
    else:
        for entry in cfg.providers:
            built: Provider
            if entry.type == "stub":
                built = ProceduralStubProvider()
            else:
                api_key = os.environ.get(entry.api_key_env) if entry.api_key_env else None
                built = OpenAiCompatProvider(
                    base_url=entry.base_url or "",
                    api_key=api_key,
                    capabilities=entry.capabilities,
                    timeout_s=entry.timeout_s,
                )
            for model_id in entry.models:
                providers[model_id] = built
    kwargs = {
        "max_retries": cfg.max_retries,
        "backoff_base": cfg.backoff_base,
        "max_inflight_per_provider": cfg.max_inflight_per_provider,
    }
    if on_call is not None:
        kwargs["on_call"] = on_call
    if sleep_fn is not None:
        kwargs["sleep_fn"] = sleep_fn
    return LlmGateway(providers, **kwargs)
