"""Offline provider that answers every pipeline role deterministically.

Responses are pure functions of the request content (model id, prompts,
message history), so replays and reruns are byte-identical without any
network access. The provider recognizes the toolkit's own prompt shapes —
verdict, pairwise pick, paragraph ratings, recipient personas — and answers
each with well-formed output; anything else gets a generic note.
"""

from __future__ import annotations

import hashlib
import json
import re

from .gateway import ChatRequest, ChatResponse, Provider, TokenLogProbs, stub_tokenize
from .thoughtbox import ThoughtBoxFormat

__all__ = ["ProceduralStubProvider"]


def _digest(*parts: str) -> bytes:
    h = hashlib.sha256()
    for part in parts:
        h.update(part.encode("utf-8"))
        h.update(b"\x1f")
    return h.digest()


def _pick(seed: bytes, index: int, modulus: int) -> int:
    return int.from_bytes(_digest(seed.hex(), str(index))[:8], "big") % modulus


_FILLER_SENTENCES = (
    "I appreciate you taking the time to lay this out.",
    "Let me walk through where things stand on my side.",
    "There are a couple of constraints shaping what we can do here.",
    "I want to be straightforward about the tradeoffs involved.",
    "Here is what I can commit to in the near term.",
    "I would rather we solve this together than let it fester.",
    "Please tell me if I have misread any part of the situation.",
    "We can revisit this once the current crunch is behind us.",
)

_THOUGHT_SNIPPETS = (
    "I am not fully convinced, but the tone lands well enough.",
    "This reads as sincere, though the details feel thin.",
    "They clearly put thought into this; I will give it a chance.",
    "Still irritated, but this is a reasonable opening move.",
    "I notice what they avoided saying. Watching for follow-through.",
)


class ProceduralStubProvider(Provider):
    """Hash-driven responder covering complete, structured, and logprobs."""

    capabilities = frozenset({"complete", "structured", "logprobs"})

    def __init__(self, fmt: ThoughtBoxFormat | None = None) -> None:
        self.fmt = fmt or ThoughtBoxFormat()
        self.calls: list[ChatRequest] = []

    # -- completion routing -----------------------------------------------------

    def complete_once(self, req: ChatRequest) -> ChatResponse:
        self.calls.append(req)
        user = req.last_user_text()
        seed = _digest(req.model_id, req.system_prompt, *(t for _, t in req.messages))
        if '"pass"' in user and "Respond with JSON only" in user:
            text = self._verdict(seed)
        elif '"winner"' in user and "Respond with JSON only" in user:
            text = self._pairwise(req.model_id, user)
        elif '"paragraph_ratings"' in user:
            text = self._ratings(req.model_id, user)
        elif self.fmt.marker in req.system_prompt:
            text = self._recipient_reply(seed, with_thought=True)
        elif "Game Master" in req.system_prompt or "Game Master" in user:
            text = self._outcome(seed, user)
        elif "Write your email now." in user or "rewrite" in req.system_prompt.lower():
            text = self._player_email(seed, user)
        elif "Reply in character" in req.system_prompt:
            text = self._recipient_reply(seed, with_thought=False)
        else:
            text = "Noted. " + _FILLER_SENTENCES[_pick(seed, 0, len(_FILLER_SENTENCES))]
        tokens = stub_tokenize(text)
        return ChatResponse(
            text=text,
            finish_reason="stop",
            usage=(len(stub_tokenize(req.last_user_text())), len(tokens)),
            provider_latency_ms=0.0,
        )

    def score_logprobs_once(
        self, context: str, target: str, model_id: str
    ) -> TokenLogProbs:
        ctx = stub_tokenize(context)
        tgt = stub_tokenize(target)
        tokens = ctx + tgt
        logprobs = []
        for n, tok in enumerate(tokens):
            jitter = _pick(_digest(model_id, tok), n, 1000) / 400.0
            logprobs.append(-0.3 - jitter)
        return TokenLogProbs(
            tokens=tuple(tokens),
            logprobs=tuple(logprobs),
            scored_span=(len(ctx), len(tokens)),
        )

    # -- role-specific responders -------------------------------------------------

    def _verdict(self, seed: bytes) -> str:
        passed = _pick(seed, 1, 2) == 0
        rationale = (
            "The email addresses the goal directly and keeps a workable tone."
            if passed
            else "The email leaves the core concern unresolved."
        )
        return json.dumps({"pass": passed, "rationale": rationale})

    def _pairwise(self, model_id: str, user: str) -> str:
        first = _extract(user, "Email (first):", "Email (second):")
        second = _extract(user, "Email (second):", "Respond with JSON only")
        # position-independent scores so A/B shuffling cannot flip the pick
        score_first = _digest(model_id, first.strip())
        score_second = _digest(model_id, second.strip())
        if score_first == score_second:
            winner = "tie"
        else:
            winner = "first" if score_first > score_second else "second"
        return json.dumps(
            {"winner": winner, "rationale": "Chosen for clearer goal alignment."}
        )

    def _ratings(self, model_id: str, user: str) -> str:
        body = _extract(user, "Email:", "Respond with JSON only")
        blocks = [b.strip() for b in re.split(r"\n\s*\n", body) if b.strip()]
        if len(blocks) > 1:
            blocks = blocks[1:] if _looks_like_greeting(blocks[0]) else blocks
        if len(blocks) > 1 and _looks_like_signoff(blocks[-1]):
            blocks = blocks[:-1]
        rubric = re.search(r"scale for (\w+)", user)
        entries = []
        for n, block in enumerate(blocks, start=1):
            seed = _digest(model_id, block)
            if rubric:
                name = rubric.group(1)
                entries.append(
                    {
                        "paragraph_index": n,
                        f"{name}_score": 1 + _pick(seed, 2, 7),
                        f"{name}_rationale": "Scored against the stated criteria.",
                    }
                )
            else:
                entries.append(
                    {
                        "paragraph_index": n,
                        "empathy_score": 1 + _pick(seed, 3, 7),
                        "empathy_rationale": "Reflects the warmth shown here.",
                        "formality_score": 1 + _pick(seed, 4, 7),
                        "formality_rationale": "Reflects the register used here.",
                    }
                )
        return json.dumps({"paragraph_ratings": entries})

    def _recipient_reply(self, seed: bytes, with_thought: bool) -> str:
        first = _FILLER_SENTENCES[_pick(seed, 5, len(_FILLER_SENTENCES))]
        second = _FILLER_SENTENCES[_pick(seed, 6, len(_FILLER_SENTENCES))]
        body = f"Thanks for your email. {first}\n\n{second}"
        if with_thought:
            thought = _THOUGHT_SNIPPETS[_pick(seed, 7, len(_THOUGHT_SNIPPETS))]
            return f"{body}\n\n{self.fmt.marker} {thought}{self.fmt.terminator}"
        return body

    def _outcome(self, seed: bytes, user: str) -> str:
        labels = ("Good Ending", "Bad Ending", "Fail Ending", "Wildcard Ending")
        lines = []
        if "<insert Ending type>" in user:
            lines.append(labels[_pick(seed, 8, len(labels))])
        lines.append(
            "The conversation settles into a cautious truce: the immediate "
            "issue is acknowledged, a concrete next step is agreed, and both "
            "sides leave with something to prove next week."
        )
        return "\n\n".join(lines)

    def _player_email(self, seed: bytes, user: str) -> str:
        target = re.search(r"roughly (\d+) characters", user)
        sentences = [
            _FILLER_SENTENCES[_pick(seed, 10 + n, len(_FILLER_SENTENCES))]
            for n in range(4)
        ]
        body = (
            "Hi,\n\n"
            f"{sentences[0]} {sentences[1]}\n\n{sentences[2]} {sentences[3]}\n\n"
            "Best,\nAlex"
        )
        if target:
            want = int(target.group(1))
            while len(body) < want:
                extra = _FILLER_SENTENCES[_pick(seed, len(body), len(_FILLER_SENTENCES))]
                body = body.replace("\n\nBest,", f" {extra}\n\nBest,", 1)
            # do not trim below the greeting; close enough is fine
        return body


def _extract(text: str, start: str, end: str) -> str:
    i = text.find(start)
    j = text.find(end, i + len(start)) if i >= 0 else -1
    if i < 0:
        return text
    return text[i + len(start) : j if j >= 0 else len(text)].strip()


def _looks_like_greeting(block: str) -> bool:
    return "\n" not in block and len(block) <= 60 and len(block.split()) <= 6


def _looks_like_signoff(block: str) -> bool:
    lines = block.splitlines()
    return len(lines) <= 2 and all(len(ln) <= 40 for ln in lines)
