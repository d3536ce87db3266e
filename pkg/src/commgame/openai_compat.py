"""Provider adapter for OpenAI-compatible chat/completions HTTP endpoints.

Covers hosted judges and recipients (chat completions) and logprob scoring
via the legacy completions echo mode. Credentials come from the environment;
base URL and capability list come from the config file. HTTP failures map
onto the gateway error taxonomy so retry policy stays in one place.
"""

from __future__ import annotations

import time
from collections.abc import Iterable

import httpx

from .gateway import (
    ChatRequest,
    ChatResponse,
    InvalidRequest,
    Provider,
    ProviderUnavailable,
    RateLimited,
    Timeout,
    TokenLogProbs,
)

__all__ = ["OpenAiCompatProvider"]


class OpenAiCompatProvider(Provider):
    def __init__(
        self,
        base_url: str,
        api_key: str | None = None,
        capabilities: Iterable[str] = ("complete", "structured"),
        timeout_s: float = 120.0,
        client: httpx.Client | None = None,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.capabilities = frozenset(capabilities)
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = client or httpx.Client(timeout=timeout_s, headers=headers)

    def complete_once(self, req: ChatRequest) -> ChatResponse:
        messages = [{"role": "system", "content": req.system_prompt}]
        messages += [{"role": role, "content": text} for role, text in req.messages]
        payload: dict = {
            "model": req.model_id,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        }
        if req.seed is not None:
            payload["seed"] = req.seed
        started = time.monotonic()
        data = self._post("/chat/completions", payload)
        elapsed_ms = (time.monotonic() - started) * 1000.0
        try:
            choice = data["choices"][0]
            text = choice["message"]["content"] or ""
            finish = choice.get("finish_reason") or "stop"
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderUnavailable(f"malformed completion response: {exc}") from exc
        if finish not in ("stop", "length"):
            finish = "error"
        if finish == "stop" and not text:
            finish = "error"
        usage = data.get("usage") or {}
        return ChatResponse(
            text=text,
            finish_reason=finish,
            usage=(usage.get("prompt_tokens", 0), usage.get("completion_tokens", 0)),
            provider_latency_ms=elapsed_ms,
        )

    def score_logprobs_once(
        self, context: str, target: str, model_id: str
    ) -> TokenLogProbs:
        payload = {
            "model": model_id,
            "prompt": context + target,
            "max_tokens": 0,
            "echo": True,
            "logprobs": 0,
        }
        data = self._post("/completions", payload)
        try:
            lp = data["choices"][0]["logprobs"]
            tokens = lp["tokens"]
            raw = lp["token_logprobs"]
            offsets = lp["text_offset"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderUnavailable(f"endpoint returned no logprobs: {exc}") from exc
        # the first echoed token has no conditional probability; treat as 0
        logprobs = tuple(0.0 if v is None else float(v) for v in raw)
        span_start = next(
            (n for n, off in enumerate(offsets) if off >= len(context)), len(tokens)
        )
        return TokenLogProbs(
            tokens=tuple(tokens),
            logprobs=logprobs,
            scored_span=(span_start, len(tokens)),
        )

    def _post(self, route: str, payload: dict) -> dict:
        try:
            resp = self._client.post(self.base_url + route, json=payload)
        except httpx.TimeoutException as exc:
            raise Timeout(f"{route} timed out") from exc
        except httpx.HTTPError as exc:
            raise ProviderUnavailable(f"{route} unreachable: {exc}") from exc
        if resp.status_code == 429:
            retry_after = resp.headers.get("retry-after")
            raise RateLimited(
                "rate limited",
                retry_after=float(retry_after) if retry_after else None,
            )
        if resp.status_code >= 500:
            raise ProviderUnavailable(f"{route} returned {resp.status_code}")
        if resp.status_code >= 400:
            raise InvalidRequest(f"{route} rejected request: {resp.text[:500]}")
        try:
            return resp.json()
        except ValueError as exc:
            raise ProviderUnavailable(f"{route} returned non-JSON body") from exc
