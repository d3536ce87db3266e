"""Single gateway over chat-completion providers.

Three capabilities are exposed: plain completions, schema-validated
structured completions, and token-logprob scoring. The gateway owns retry
policy, capability negotiation, per-provider concurrency limits, and the
audit trail of every call it makes. A deterministic stub provider backs the
test suite and the offline pipeline.
"""

from __future__ import annotations

import json
import math
import re
import threading
import time
from collections import deque
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, replace
from typing import Any

import jsonschema

from .records import content_hash

__all__ = [
    "GatewayError",
    "ProviderUnavailable",
    "RateLimited",
    "InvalidRequest",
    "Timeout",
    "MalformedOutput",
    "CapabilityUnsupported",
    "ChatRequest",
    "ChatResponse",
    "TokenLogProbs",
    "SchemaDescriptor",
    "StructuredValue",
    "Provider",
    "StubProvider",
    "LlmGateway",
    "stub_tokenize",
]

ROLE_CHOICES = ("user", "assistant")
FINISH_REASONS = ("stop", "length", "error")
CAPABILITIES = ("complete", "structured", "logprobs")


class GatewayError(Exception):
    """Base for everything the gateway can raise."""


class ProviderUnavailable(GatewayError):
    pass


class RateLimited(GatewayError):
    def __init__(self, message: str = "rate limited", retry_after: float | None = None):
        super().__init__(message)
        self.retry_after = retry_after


class InvalidRequest(GatewayError):
    pass


class Timeout(GatewayError):
    pass


class MalformedOutput(GatewayError):
    """Model output that failed schema validation even after repair."""

    def __init__(self, message: str, raw_text: str):
        super().__init__(message)
        self.raw_text = raw_text


class CapabilityUnsupported(GatewayError):
    def __init__(self, model_id: str, capability: str):
        super().__init__(f"model {model_id!r} does not support {capability!r}")
        self.model_id = model_id
        self.capability = capability


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    system_prompt: str
    messages: tuple[tuple[str, str], ...]
    temperature: float = 0.0
    max_output_tokens: int = 2048
    seed: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "messages", tuple(tuple(m) for m in self.messages))
        if not self.model_id:
            raise InvalidRequest("model_id must be non-empty")
        if not self.messages:
            raise InvalidRequest("messages must be non-empty")
        for role, text in self.messages:
            if role not in ROLE_CHOICES:
                raise InvalidRequest(f"unknown message role {role!r}")
            if not isinstance(text, str):
                raise InvalidRequest("message text must be a string")
        if not math.isfinite(self.temperature) or self.temperature < 0:
            raise InvalidRequest("temperature must be finite and >= 0")
        if self.max_output_tokens < 1:
            raise InvalidRequest("max_output_tokens must be positive")

    def last_user_text(self) -> str:
        for role, text in reversed(self.messages):
            if role == "user":
                return text
        return ""

    def to_payload(self) -> dict[str, Any]:
        return {
            "model_id": self.model_id,
            "system_prompt": self.system_prompt,
            "messages": [list(m) for m in self.messages],
            "temperature": self.temperature,
            "max_output_tokens": self.max_output_tokens,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class ChatResponse:
    text: str
    finish_reason: str = "stop"
    usage: tuple[int, int] = (0, 0)
    provider_latency_ms: int = 0
    attempt_count: int = 1

    def __post_init__(self) -> None:
        if self.finish_reason not in FINISH_REASONS:
            raise ValueError(f"unknown finish_reason {self.finish_reason!r}")
        if self.finish_reason == "stop" and not self.text:
            raise ValueError("finish_reason=stop requires non-empty text")
        if self.provider_latency_ms < 0:
            raise ValueError("provider_latency_ms must be non-negative")
        if self.attempt_count < 1:
            raise ValueError("attempt_count must be at least 1")


@dataclass(frozen=True)
class TokenLogProbs:
    """Per-token natural-log probabilities with the scored span marked.

    ``scored_span`` is a half-open ``(start, end)`` index pair selecting the
    target tokens; everything before the span is conditioning context.
    """

    tokens: tuple[str, ...]
    logprobs: tuple[float, ...]
    scored_span: tuple[int, int]

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "logprobs", tuple(float(v) for v in self.logprobs))
        object.__setattr__(self, "scored_span", tuple(self.scored_span))
        if len(self.tokens) != len(self.logprobs):
            raise ValueError("tokens and logprobs must have equal length")
        for lp in self.logprobs:
            if lp > 0:
                raise ValueError(f"logprob {lp} is positive")
        start, end = self.scored_span
        if not (0 <= start <= end <= len(self.tokens)):
            raise ValueError(f"scored_span {self.scored_span} out of bounds")

    def span_tokens(self) -> tuple[str, ...]:
        start, end = self.scored_span
        return self.tokens[start:end]

    def span_logprobs(self) -> tuple[float, ...]:
        start, end = self.scored_span
        return self.logprobs[start:end]

    def span_text(self) -> str:
        return "".join(self.span_tokens())


@dataclass(frozen=True)
class SchemaDescriptor:
    """Named JSON Schema the structured completion must satisfy."""

    name: str
    schema: Mapping[str, Any]

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("schema name must be non-empty")
        jsonschema.Draft202012Validator.check_schema(dict(self.schema))


@dataclass(frozen=True)
class StructuredValue:
    value: Any
    raw_text: str
    repair_count: int = 0


def stub_tokenize(text: str) -> list[str]:
    """Whitespace-attached tokens whose concatenation is exactly ``text``."""
    if not text:
        return []
    pieces = re.findall(r"\S+\s*", text)
    lead = re.match(r"\s*", text).group(0)
    if lead:
        if pieces:
            pieces[0] = lead + pieces[0]
        else:
            pieces = [lead]
    return pieces


class Provider:
    """Capability-declaring backend the gateway routes requests to."""

    capabilities: frozenset[str] = frozenset()

    def complete_once(self, req: ChatRequest) -> ChatResponse:
        raise NotImplementedError

    def score_logprobs_once(self, context: str, target: str, model_id: str) -> TokenLogProbs:
        raise NotImplementedError


@dataclass
class _ScriptEntry:
    text: str | None = None
    error: str | None = None
    retry_after: float | None = None


class StubProvider(Provider):
    """Deterministic in-memory provider.

    Three behaviours, consulted in order: a scripted queue of responses and
    errors, a pure ``responder`` function of the request, and finally an echo
    of the last user message. Logprob scoring assigns ``logprob_value`` to
    every token unless ``logprob_fn`` overrides it per token.
    """

    capabilities = frozenset(CAPABILITIES)

    def __init__(
        self,
        script: Iterable[Mapping[str, Any] | str] | None = None,
        responder: Callable[[ChatRequest], str] | None = None,
        logprob_value: float = math.log(0.5),
        logprob_fn: Callable[[str], float] | None = None,
    ):
        self._script: deque[_ScriptEntry] = deque()
        for entry in script or ():
            if isinstance(entry, str):
                self._script.append(_ScriptEntry(text=entry))
            else:
                self._script.append(
                    _ScriptEntry(
                        text=entry.get("text"),
                        error=entry.get("error"),
                        retry_after=entry.get("retry_after"),
                    )
                )
        self._responder = responder
        self._logprob_value = logprob_value
        self._logprob_fn = logprob_fn
        self.calls: list[ChatRequest] = []

    def push(self, *entries: Mapping[str, Any] | str) -> None:
        for entry in entries:
            if isinstance(entry, str):
                self._script.append(_ScriptEntry(text=entry))
            else:
                self._script.append(
                    _ScriptEntry(
                        text=entry.get("text"),
                        error=entry.get("error"),
                        retry_after=entry.get("retry_after"),
                    )
                )

    _ERRORS: Mapping[str, Callable[..., GatewayError]] = {
        "provider_unavailable": lambda: ProviderUnavailable("scripted outage"),
        "timeout": lambda: Timeout("scripted timeout"),
        "invalid_request": lambda: InvalidRequest("scripted rejection"),
    }

    def complete_once(self, req: ChatRequest) -> ChatResponse:
        self.calls.append(req)
        if self._script:
            entry = self._script.popleft()
            if entry.error is not None:
                if entry.error == "rate_limited":
                    raise RateLimited(retry_after=entry.retry_after)
                factory = self._ERRORS.get(entry.error)
                if factory is None:
                    raise ValueError(f"unknown scripted error {entry.error!r}")
                raise factory()
            text = entry.text or ""
        elif self._responder is not None:
            text = self._responder(req)
        else:
            text = req.last_user_text()
        prompt_tokens = len(stub_tokenize(req.system_prompt)) + sum(
            len(stub_tokenize(t)) for _, t in req.messages
        )
        return ChatResponse(
            text=text,
            finish_reason="stop" if text else "error",
            usage=(prompt_tokens, len(stub_tokenize(text))),
            provider_latency_ms=0,
        )

    def score_logprobs_once(self, context: str, target: str, model_id: str) -> TokenLogProbs:
        ctx_tokens = stub_tokenize(context)
        tgt_tokens = stub_tokenize(target)
        tokens = tuple(ctx_tokens + tgt_tokens)
        if self._logprob_fn is not None:
            logprobs = tuple(self._logprob_fn(tok) for tok in tokens)
        else:
            logprobs = tuple(self._logprob_value for _ in tokens)
        return TokenLogProbs(
            tokens=tokens,
            logprobs=logprobs,
            scored_span=(len(ctx_tokens), len(tokens)),
        )


_REPAIR_PROMPT = (
    "Your previous reply could not be used: {reason}. "
    "Respond with JSON only, matching the required schema exactly. "
    "Do not add commentary or code fences."
)


def _coerce_json(text: str) -> Any:
    """Parse model output as JSON, tolerating fences and surrounding prose."""
    stripped = text.strip()
    fence = re.search(r"```(?:json)?\s*(.*?)```", stripped, flags=re.DOTALL)
    if fence:
        stripped = fence.group(1).strip()
    try:
        return json.loads(stripped)
    except json.JSONDecodeError:
        pass
    starts = [i for i in (stripped.find("{"), stripped.find("[")) if i >= 0]
    ends = [i for i in (stripped.rfind("}"), stripped.rfind("]")) if i >= 0]
    if not starts or not ends:
        raise ValueError("no JSON document found")
    candidate = stripped[min(starts) : max(ends) + 1]
    return json.loads(candidate)


class LlmGateway:
    """Routes requests to providers with retries, limits, and an audit log.

    ``providers`` maps model ids to provider instances. Transient failures
    (rate limits, outages, timeouts) are retried with exponential backoff up
    to ``max_retries`` extra attempts; ``InvalidRequest`` is never retried.
    Every provider round-trip is reported to ``on_call`` as an llm_call
    payload carrying content hashes of the request and response.
    """

    def __init__(
        self,
        providers: Mapping[str, Provider],
        *,
        max_retries: int = 2,
        backoff_base: float = 0.5,
        max_inflight_per_provider: int = 4,
        sleep_fn: Callable[[float], None] = time.sleep,
        on_call: Callable[[dict[str, Any]], None] | None = None,
    ):
        if max_retries < 0:
            raise ValueError("max_retries must be non-negative")
        self._providers = dict(providers)
        self._max_retries = max_retries
        self._backoff_base = backoff_base
        self._sleep = sleep_fn
        self._on_call = on_call
        self._limits: dict[int, threading.Semaphore] = {}
        for provider in self._providers.values():
            self._limits.setdefault(
                id(provider), threading.Semaphore(max_inflight_per_provider)
            )

    def _provider_for(self, model_id: str, capability: str) -> Provider:
        # "*" registers a catch-all provider for otherwise-unknown models
        provider = self._providers.get(model_id) or self._providers.get("*")
        if provider is None:
            raise InvalidRequest(f"model {model_id!r} is not registered")
        if capability not in provider.capabilities:
            raise CapabilityUnsupported(model_id, capability)
        return provider

    def _record(
        self,
        capability: str,
        model_id: str,
        request_payload: Any,
        response_payload: Any,
        attempt_count: int,
        status: str,
        error: str | None = None,
    ) -> None:
        if self._on_call is None:
            return
        payload: dict[str, Any] = {
            "capability": capability,
            "model_id": model_id,
            "request_hash": content_hash(request_payload),
            "response_hash": content_hash(response_payload),
            "attempt_count": attempt_count,
            "status": status,
        }
        if error is not None:
            payload["error"] = error
        self._on_call(payload)

    def _attempt_loop(
        self, provider: Provider, call: Callable[[], Any], counter: list[int]
    ) -> Any:
        # attempts <= 1 + max_retries regardless of the failure pattern
        sem = self._limits[id(provider)]
        while True:
            counter[0] += 1
            try:
                with sem:
                    return call()
            except InvalidRequest:
                raise
            except RateLimited as exc:
                if counter[0] > self._max_retries:
                    raise
                delay = exc.retry_after
                if delay is None:
                    delay = self._backoff_base * (2 ** (counter[0] - 1))
                self._sleep(delay)
            except (ProviderUnavailable, Timeout):
                if counter[0] > self._max_retries:
                    raise
                self._sleep(self._backoff_base * (2 ** (counter[0] - 1)))

    def complete(self, req: ChatRequest) -> ChatResponse:
        provider = self._provider_for(req.model_id, "complete")
        attempts = [0]
        try:
            resp = self._attempt_loop(
                provider, lambda: provider.complete_once(req), attempts
            )
        except GatewayError as exc:
            self._record(
                "complete",
                req.model_id,
                req.to_payload(),
                None,
                max(attempts[0], 1),
                "error",
                type(exc).__name__,
            )
            raise
        resp = replace(resp, attempt_count=attempts[0])
        self._record(
            "complete",
            req.model_id,
            req.to_payload(),
            {"text": resp.text, "finish_reason": resp.finish_reason},
            attempts[0],
            "ok",
        )
        return resp

    def complete_structured(
        self, req: ChatRequest, shape: SchemaDescriptor
    ) -> StructuredValue:
        self._provider_for(req.model_id, "structured")
        resp = self.complete(req)
        value, reason = self._parse_against(resp.text, shape)
        if reason is None:
            return StructuredValue(value=value, raw_text=resp.text, repair_count=0)

        # one repair re-prompt, then fail loudly with the raw text attached
        repair_req = replace(
            req,
            messages=req.messages
            + (
                ("assistant", resp.text),
                ("user", _REPAIR_PROMPT.format(reason=reason)),
            ),
        )
        repaired = self.complete(repair_req)
        value, reason = self._parse_against(repaired.text, shape)
        if reason is None:
            return StructuredValue(value=value, raw_text=repaired.text, repair_count=1)
        raise MalformedOutput(
            f"output failed schema {shape.name!r} after repair: {reason}",
            raw_text=repaired.text,
        )

    @staticmethod
    def _parse_against(
        text: str, shape: SchemaDescriptor
    ) -> tuple[Any, str | None]:
        try:
            value = _coerce_json(text)
        except (ValueError, json.JSONDecodeError) as exc:
            return None, f"not parseable as JSON ({exc})"
        try:
            jsonschema.validate(value, dict(shape.schema))
        except jsonschema.ValidationError as exc:
            return None, f"schema violation at {list(exc.absolute_path)}: {exc.message}"
        return value, None

    def score_logprobs(self, context: str, target: str, model_id: str) -> TokenLogProbs:
        provider = self._provider_for(model_id, "logprobs")
        request_payload = {"context": context, "target": target, "model_id": model_id}
        attempts = [0]
        try:
            scored = self._attempt_loop(
                provider,
                lambda: provider.score_logprobs_once(context, target, model_id),
                attempts,
            )
        except GatewayError as exc:
            self._record(
                "logprobs",
                model_id,
                request_payload,
                None,
                max(attempts[0], 1),
                "error",
                type(exc).__name__,
            )
            raise
        self._record(
            "logprobs",
            model_id,
            request_payload,
            {"tokens": list(scored.tokens), "logprobs": list(scored.logprobs)},
            attempts[0],
            "ok",
        )
        return scored
