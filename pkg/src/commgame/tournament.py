"""Pairwise email tournaments: balanced sampling, sparse schedules, Elo fits.

Each judge model runs the same schedule of pairwise comparisons over a
balanced email subset; sequential Elo updates turn the outcomes into one
ranking per judge, and rankings from different judges are diffed for
large-gap disagreements.
"""

from __future__ import annotations

import random
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from typing import Any

from .gateway import ChatRequest, LlmGateway, MalformedOutput, SchemaDescriptor
from .records import EmailRecord, Verdict
from .scenarios import Scenario

__all__ = [
    "TournamentError",
    "InsufficientEmails",
    "SubsetTooSmall",
    "MixedPartition",
    "MismatchedEmailSets",
    "TournamentConfig",
    "ComparisonOutcome",
    "RatingTable",
    "sample_balanced",
    "build_schedule",
    "run_comparison",
    "compute_elo",
    "expected_score",
    "rank",
    "find_disagreements",
    "pairwise_schema",
]


class TournamentError(Exception):
    pass


class InsufficientEmails(TournamentError):
    def __init__(self, group: str, needed: int, available: int) -> None:
        super().__init__(
            f"group {group!r} needs {needed} emails but only {available} qualify"
        )
        self.group = group
        self.needed = needed
        self.available = available


class SubsetTooSmall(TournamentError):
    pass


class MixedPartition(TournamentError):
    pass


class MismatchedEmailSets(TournamentError):
    pass


@dataclass(frozen=True)
class TournamentConfig:
    per_writer_count: int = 6
    pass_count: int = 3
    fail_count: int = 3
    neighbors_k: int = 10
    initial_rating: float = 1500.0
    k_factor: float = 32.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if min(self.per_writer_count, self.pass_count, self.fail_count) < 1:
            raise ValueError("counts must be positive")
        if self.pass_count + self.fail_count != self.per_writer_count:
            raise ValueError("pass_count + fail_count must equal per_writer_count")
        if self.neighbors_k < 1:
            raise ValueError("neighbors_k must be >= 1")


@dataclass(frozen=True)
class ComparisonOutcome:
    judge_model: str
    scenario_id: str
    email_a: str
    email_b: str
    winner: str
    rationale: str
    presentation_seed: int | None = None

    def __post_init__(self) -> None:
        if self.email_a == self.email_b:
            raise ValueError("an email cannot be compared with itself")
        if self.winner not in ("a", "b", "tie"):
            raise ValueError(f"unknown winner {self.winner!r}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "judge_model": self.judge_model,
            "scenario_id": self.scenario_id,
            "email_a": self.email_a,
            "email_b": self.email_b,
            "winner": self.winner,
            "rationale": self.rationale,
            "presentation_seed": self.presentation_seed,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ComparisonOutcome":
        return cls(
            judge_model=d["judge_model"],
            scenario_id=d["scenario_id"],
            email_a=d["email_a"],
            email_b=d["email_b"],
            winner=d["winner"],
            rationale=d["rationale"],
            presentation_seed=d.get("presentation_seed"),
        )


@dataclass(frozen=True)
class RatingTable:
    judge_model: str
    scenario_id: str
    ratings: Mapping[str, float]
    processed_comparisons: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "ratings", dict(self.ratings))
        if self.processed_comparisons < 0:
            raise ValueError("processed_comparisons must be non-negative")

    def to_dict(self) -> dict[str, Any]:
        return {
            "judge_model": self.judge_model,
            "scenario_id": self.scenario_id,
            "ratings": dict(sorted(self.ratings.items())),
            "processed_comparisons": self.processed_comparisons,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RatingTable":
        return cls(
            judge_model=d["judge_model"],
            scenario_id=d["scenario_id"],
            ratings=d["ratings"],
            processed_comparisons=d["processed_comparisons"],
        )


def _group_key(email: EmailRecord) -> str:
    # one group per (writer kind, model): llm and rewrite groups stay apart
    w = email.writer
    return w.kind if w.kind == "human" else f"{w.kind}:{w.model_id}"


def sample_balanced(
    emails: Sequence[tuple[EmailRecord, Verdict]], cfg: TournamentConfig
) -> list[EmailRecord]:
    """Seeded pick of pass_count passes and fail_count fails per writer group."""
    groups: dict[str, dict[bool, list[EmailRecord]]] = {}
    for email, verdict in emails:
        bucket = groups.setdefault(_group_key(email), {True: [], False: []})
        bucket[verdict.passed].append(email)

    rng = random.Random(cfg.rng_seed)
    chosen: list[EmailRecord] = []
    for group in sorted(groups):
        for passed, needed in ((True, cfg.pass_count), (False, cfg.fail_count)):
            pool = sorted(groups[group][passed], key=lambda e: e.email_id)
            if len(pool) < needed:
                raise InsufficientEmails(
                    f"{group}/{'pass' if passed else 'fail'}", needed, len(pool)
                )
            chosen.extend(rng.sample(pool, needed))
    return chosen


def build_schedule(
    subset: Sequence[str], cfg: TournamentConfig
) -> list[tuple[str, str]]:
    """Each email draws min(k, n-1) distinct counterparts; pairs keep draw order."""
    ids = list(subset)
    if len(ids) < 2:
        raise SubsetTooSmall(f"need at least 2 emails, got {len(ids)}")
    rng = random.Random(cfg.rng_seed)
    k = min(cfg.neighbors_k, len(ids) - 1)
    schedule: list[tuple[str, str]] = []
    for eid in ids:
        others = [o for o in ids if o != eid]
        for counterpart in rng.sample(others, k):
            schedule.append((eid, counterpart))
    return schedule


_PAIRWISE_SYSTEM_PROMPT = (
    "You are the judge for an email communication exercise. Two different "
    "emails attempt the same scenario; pick the one that better achieves the "
    "communication goal."
)

_PAIRWISE_USER_PROMPT = """Scenario context:
{task_email}

Communication goal:
{judge_goal}

Email (first):
{first_body}

Email (second):
{second_body}

Respond with JSON only: {{ "winner": "first" | "second" | "tie", "rationale": "<brief reason>" }}"""


def pairwise_schema() -> SchemaDescriptor:
    return SchemaDescriptor(
        name="pairwise_verdict",
        schema={
            "type": "object",
            "properties": {
                "winner": {"type": "string", "enum": ["first", "second", "tie"]},
                "rationale": {"type": "string", "minLength": 1},
            },
            "required": ["winner", "rationale"],
            "additionalProperties": False,
        },
    )


def run_comparison(
    gateway: LlmGateway,
    judge_model: str,
    scenario: Scenario,
    a: EmailRecord,
    b: EmailRecord,
    presentation_seed: int | None = None,
) -> ComparisonOutcome:
    """One pairwise judgment; presentation order is seeded-random per call."""
    if a.scenario_id != b.scenario_id:
        raise MixedPartition(
            f"emails from different scenarios: {a.scenario_id} vs {b.scenario_id}"
        )
    seed = (
        presentation_seed
        if presentation_seed is not None
        else random.randrange(2**31)
    )
    a_first = random.Random(seed).random() < 0.5
    first, second = (a, b) if a_first else (b, a)
    prompt = _PAIRWISE_USER_PROMPT.format(
        task_email=scenario.task_email,
        judge_goal=scenario.judge_goal,
        first_body=first.body,
        second_body=second.body,
    )
    req = ChatRequest(
        model_id=judge_model,
        system_prompt=_PAIRWISE_SYSTEM_PROMPT,
        messages=(("user", prompt),),
        temperature=0.0,
    )
    try:
        result = gateway.complete_structured(req, pairwise_schema())
    except MalformedOutput:
        return ComparisonOutcome(
            judge_model=judge_model,
            scenario_id=a.scenario_id,
            email_a=a.email_id,
            email_b=b.email_id,
            winner="tie",
            rationale="unparseable",
            presentation_seed=seed,
        )
    pick = result.value["winner"]
    if pick == "tie":
        winner = "tie"
    elif pick == "first":
        winner = "a" if a_first else "b"
    else:
        winner = "b" if a_first else "a"
    return ComparisonOutcome(
        judge_model=judge_model,
        scenario_id=a.scenario_id,
        email_a=a.email_id,
        email_b=b.email_id,
        winner=winner,
        rationale=result.value["rationale"],
        presentation_seed=seed,
    )


def expected_score(rating_a: float, rating_b: float) -> float:
    return 1.0 / (1.0 + 10.0 ** ((rating_b - rating_a) / 400.0))


def compute_elo(
    outcomes: Sequence[ComparisonOutcome], cfg: TournamentConfig
) -> RatingTable:
    """Single sequential pass over outcomes in list order; ties are skipped."""
    if not outcomes:
        raise MixedPartition("no outcomes to rate")
    judge = outcomes[0].judge_model
    scenario_id = outcomes[0].scenario_id
    for o in outcomes:
        if o.judge_model != judge or o.scenario_id != scenario_id:
            raise MixedPartition(
                "outcomes mix judges or scenarios: "
                f"({judge}, {scenario_id}) vs ({o.judge_model}, {o.scenario_id})"
            )
    ratings: dict[str, float] = {}
    processed = 0
    for o in outcomes:
        ratings.setdefault(o.email_a, cfg.initial_rating)
        ratings.setdefault(o.email_b, cfg.initial_rating)
        if o.winner == "tie":
            continue
        e_a = expected_score(ratings[o.email_a], ratings[o.email_b])
        s_a = 1.0 if o.winner == "a" else 0.0
        ratings[o.email_a] += cfg.k_factor * (s_a - e_a)
        ratings[o.email_b] += cfg.k_factor * ((1.0 - s_a) - (1.0 - e_a))
        processed += 1
    return RatingTable(
        judge_model=judge,
        scenario_id=scenario_id,
        ratings=ratings,
        processed_comparisons=processed,
    )


def rank(table: RatingTable) -> list[str]:
    """Email ids descending by rating, equal ratings broken lexicographically."""
    return sorted(table.ratings, key=lambda eid: (-table.ratings[eid], eid))


def find_disagreements(
    ranks_a: Sequence[str], ranks_b: Sequence[str], threshold: int = 20
) -> set[tuple[str, int, int]]:
    """Emails whose 1-based positions differ by more than the threshold."""
    if threshold < 1:
        raise ValueError("threshold must be a positive integer")
    if set(ranks_a) != set(ranks_b) or len(ranks_a) != len(ranks_b):
        raise MismatchedEmailSets("rankings must cover the identical email set")
    pos_a = {eid: n for n, eid in enumerate(ranks_a, start=1)}
    pos_b = {eid: n for n, eid in enumerate(ranks_b, start=1)}
    return {
        (eid, pos_a[eid], pos_b[eid])
        for eid in pos_a
        if abs(pos_a[eid] - pos_b[eid]) > threshold
    }
