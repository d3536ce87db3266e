"""Paragraph-level email annotation and derived tone analyses.

Two scenario-independent tone scales (empathy, formality) and arbitrary
rubric-driven scales (tact, politeness) are scored per paragraph by an LLM
labeler at temperature 0, then aggregated to per-email means. On top of that
sit quadrant classification, rewrite vectors in tone space, cross-annotator
correlation, and the perplexity harness.
"""

from __future__ import annotations

import json
import math
import re
import warnings
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from scipy import stats as _scipy_stats

from .gateway import ChatRequest, LlmGateway, SchemaDescriptor, TokenLogProbs
from .records import EmailRecord
from .scenarios import Rubric, Scenario

__all__ = [
    "AnnotationError",
    "NoBodyParagraphs",
    "NoPlayerTurns",
    "OutOfScale",
    "AnnotatorMismatch",
    "EmptySpan",
    "ParagraphCountMismatch",
    "ParagraphRating",
    "AnnotationRecord",
    "ToneVector",
    "segment_paragraphs",
    "extract_player_turns",
    "annotate_tone",
    "annotate_rubric",
    "classify_quadrant",
    "rewrite_vector",
    "perplexity",
    "cross_annotator_pearson",
    "tone_schema",
    "rubric_schema",
    "LABELER_SYSTEM_PROMPT",
    "load_annotations",
    "dump_annotations",
]


class AnnotationError(Exception):
    pass


class NoBodyParagraphs(AnnotationError):
    pass


class NoPlayerTurns(AnnotationError):
    pass


class OutOfScale(AnnotationError):
    pass


class AnnotatorMismatch(AnnotationError):
    pass


class EmptySpan(AnnotationError):
    pass


class ParagraphCountMismatch(UserWarning):
    """Labeler paragraph count differs from local segmentation."""


def _check_scale(value: float, lo: int, hi: int, what: str) -> None:
    if not (lo <= value <= hi):
        raise OutOfScale(f"{what} {value} outside [{lo}, {hi}]")


@dataclass(frozen=True)
class ParagraphRating:
    paragraph_index: int
    empathy: int | None = None
    formality: int | None = None
    rubric_scores: Mapping[str, float] = field(default_factory=dict)
    rationales: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "rubric_scores", dict(self.rubric_scores))
        object.__setattr__(self, "rationales", dict(self.rationales))
        if self.paragraph_index < 1:
            raise ValueError("paragraph_index is 1-based")
        if self.empathy is not None:
            _check_scale(self.empathy, 1, 7, "empathy")
        if self.formality is not None:
            _check_scale(self.formality, 1, 7, "formality")
        for name, score in self.rubric_scores.items():
            _check_scale(score, 1, 7, name)


def _mean(values: Sequence[float]) -> float | None:
    return sum(values) / len(values) if values else None


@dataclass(frozen=True)
class AnnotationRecord:
    email_id: str
    annotator_model: str
    paragraphs: tuple[ParagraphRating, ...]
    mean_empathy: float | None = None
    mean_formality: float | None = None
    mean_rubrics: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "paragraphs", tuple(self.paragraphs))
        object.__setattr__(self, "mean_rubrics", dict(self.mean_rubrics))
        if not self.paragraphs:
            raise ValueError("paragraphs must be non-empty")
        expect_e, expect_f, expect_r = _aggregate(self.paragraphs)
        for got, want, what in (
            (self.mean_empathy, expect_e, "mean_empathy"),
            (self.mean_formality, expect_f, "mean_formality"),
        ):
            if (got is None) != (want is None) or (
                got is not None and not math.isclose(got, want, abs_tol=1e-9)
            ):
                raise ValueError(f"{what} must be the mean of paragraph scores")
        if set(self.mean_rubrics) != set(expect_r) or any(
            not math.isclose(self.mean_rubrics[k], expect_r[k], abs_tol=1e-9)
            for k in expect_r
        ):
            raise ValueError("mean_rubrics must be the means of paragraph scores")

    @classmethod
    def from_paragraphs(
        cls,
        email_id: str,
        annotator_model: str,
        paragraphs: Sequence[ParagraphRating],
    ) -> "AnnotationRecord":
        mean_e, mean_f, mean_r = _aggregate(paragraphs)
        return cls(
            email_id=email_id,
            annotator_model=annotator_model,
            paragraphs=tuple(paragraphs),
            mean_empathy=mean_e,
            mean_formality=mean_f,
            mean_rubrics=mean_r,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "email_id": self.email_id,
            "annotator_model": self.annotator_model,
            "paragraphs": [
                {
                    "paragraph_index": p.paragraph_index,
                    "empathy": p.empathy,
                    "formality": p.formality,
                    "rubric_scores": dict(p.rubric_scores),
                    "rationales": dict(p.rationales),
                }
                for p in self.paragraphs
            ],
            "mean_empathy": self.mean_empathy,
            "mean_formality": self.mean_formality,
            "mean_rubrics": dict(self.mean_rubrics),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "AnnotationRecord":
        return cls(
            email_id=data["email_id"],
            annotator_model=data["annotator_model"],
            paragraphs=tuple(
                ParagraphRating(
                    paragraph_index=p["paragraph_index"],
                    empathy=p.get("empathy"),
                    formality=p.get("formality"),
                    rubric_scores=p.get("rubric_scores", {}),
                    rationales=p.get("rationales", {}),
                )
                for p in data["paragraphs"]
            ),
            mean_empathy=data.get("mean_empathy"),
            mean_formality=data.get("mean_formality"),
            mean_rubrics=data.get("mean_rubrics", {}),
        )


def _aggregate(
    paragraphs: Sequence[ParagraphRating],
) -> tuple[float | None, float | None, dict[str, float]]:
    mean_e = _mean([p.empathy for p in paragraphs if p.empathy is not None])
    mean_f = _mean([p.formality for p in paragraphs if p.formality is not None])
    rubric_names = {name for p in paragraphs for name in p.rubric_scores}
    mean_r = {
        name: _mean([p.rubric_scores[name] for p in paragraphs if name in p.rubric_scores])
        for name in sorted(rubric_names)
    }
    return mean_e, mean_f, mean_r


@dataclass(frozen=True)
class ToneVector:
    email_id_before: str
    email_id_after: str
    d_empathy: float
    d_formality: float
    magnitude: float

    def __post_init__(self) -> None:
        if not math.isclose(
            self.magnitude, math.hypot(self.d_empathy, self.d_formality), abs_tol=1e-9
        ):
            raise ValueError("magnitude must be the Euclidean norm of the deltas")


_GREETING_WORDS = {"hi", "hello", "hey", "hiya", "dear", "greetings", "good"}
_CLOSER_WORDS = {
    "best",
    "regards",
    "thanks",
    "thank",
    "sincerely",
    "cheers",
    "warmly",
    "respectfully",
    "yours",
    "kind",
    "warm",
    "cordially",
}
_NAME_WORD = re.compile(r"^[A-Z][A-Za-z.'-]*$")


def _is_greeting(block: str) -> bool:
    lines = block.splitlines()
    if len(lines) != 1:
        return False
    line = lines[0].strip()
    words = line.split()
    if len(line) > 60 or len(words) > 6 or not words:
        return False
    if line.endswith(","):
        return True
    return words[0].lower().strip(",!") in _GREETING_WORDS


def _is_signoff(block: str) -> bool:
    lines = [ln.strip() for ln in block.splitlines()]
    if not lines or len(lines) > 2 or any(len(ln) > 40 for ln in lines):
        return False
    first_words = lines[0].split()
    if first_words and first_words[0].lower().strip(",!") in _CLOSER_WORDS:
        return True
    if lines[0].endswith(","):
        return True
    # a bare signature line such as "Alex" or "Brittany Hay"
    return all(
        len(ln.split()) <= 4 and all(_NAME_WORD.match(w) for w in ln.split())
        for ln in lines
    )


def segment_paragraphs(body: str) -> list[str]:
    """Split on blank lines and drop the greeting and trailing sign-off.

    This local segmentation is a tripwire: the labeler's own paragraph
    handling is authoritative, and a count mismatch only produces a warning.
    """
    blocks = [b.strip() for b in re.split(r"\n\s*\n", body) if b.strip()]
    if blocks and _is_greeting(blocks[0]):
        blocks = blocks[1:]
    while blocks and _is_signoff(blocks[-1]):
        blocks = blocks[:-1]
    if not blocks:
        raise NoBodyParagraphs("no body paragraphs after greeting/sign-off removal")
    return blocks


_TURN_MARKER = re.compile(r"^Turn (\d+) - ([^:\n]+):", flags=re.MULTILINE)


def extract_player_turns(thread: str, player_name: str = "Alex") -> list[tuple[int, str]]:
    """Return (turn_index, text) for player-tagged spans, dropping the rest."""
    matches = list(_TURN_MARKER.finditer(thread))
    out: list[tuple[int, str]] = []
    for pos, m in enumerate(matches):
        if m.group(2).strip() != player_name:
            continue
        end = matches[pos + 1].start() if pos + 1 < len(matches) else len(thread)
        out.append((int(m.group(1)), thread[m.end() : end].strip()))
    if not out:
        raise NoPlayerTurns(f"no turns tagged for player {player_name!r}")
    return out


LABELER_SYSTEM_PROMPT = (
    "You are an expert communication coach who scores workplace emails. "
    "Use the provided Likert scales strictly."
)

_TONE_USER_PROMPT = """Rate the following email independently on two 1-7 scales.

Empathy scale: 1 = cold, no compromise or concern. 4 = neutral or mixed tone. 7 = warm, accommodating, clearly empathetic.

Formality scale: 1 = highly informal or blunt. 4 = neutral, not too formal or informal. 7 = polished corporate/professional.

Scenario context:
{scenario_context}

Evaluate each paragraph separately. Paragraphs are separated by blank lines; do not treat a standalone greeting or the sign-off/signature as paragraphs for rating. Start paragraph indexing at the first body paragraph after the greeting.

Email:
{email_text}

Respond with JSON only: {{ "paragraph_ratings": [ {{ "paragraph_index": 1, "empathy_score": <integer 1-7>, "empathy_rationale": "<brief reason. 1 sentence max.>", "formality_score": <integer 1-7>, "formality_rationale": "<brief reason. 1 sentence max.>" }}, ... ] }}"""

_RUBRIC_USER_PROMPT = """Rate the following email independently on a {lo}-{hi} scale for {name}.

Scoring criteria:

{criteria}

Scenario context:
{scenario_context}

Evaluate each paragraph separately. Paragraphs are separated by blank lines; do not treat a standalone greeting or the sign-off/signature as paragraphs for rating. Start paragraph indexing at the first body paragraph after the greeting.

Email:
{email_text}

Respond with JSON only: {{ "paragraph_ratings": [ {{ "paragraph_index": 1, "{name}_score": <number {lo}-{hi}>, "{name}_rationale": "<brief reason. 1 sentence max.>" }}, ... ] }}"""


def tone_schema() -> SchemaDescriptor:
    entry = {
        "type": "object",
        "properties": {
            "paragraph_index": {"type": "integer", "minimum": 1},
            "empathy_score": {"type": "integer", "minimum": 1, "maximum": 7},
            "empathy_rationale": {"type": "string"},
            "formality_score": {"type": "integer", "minimum": 1, "maximum": 7},
            "formality_rationale": {"type": "string"},
        },
        "required": [
            "paragraph_index",
            "empathy_score",
            "empathy_rationale",
            "formality_score",
            "formality_rationale",
        ],
        "additionalProperties": False,
    }
    return SchemaDescriptor(
        name="paragraph_ratings",
        schema={
            "type": "object",
            "properties": {
                "paragraph_ratings": {"type": "array", "minItems": 1, "items": entry}
            },
            "required": ["paragraph_ratings"],
            "additionalProperties": False,
        },
    )


def rubric_schema(rubric: Rubric) -> SchemaDescriptor:
    entry = {
        "type": "object",
        "properties": {
            "paragraph_index": {"type": "integer", "minimum": 1},
            f"{rubric.name}_score": {
                "type": "number",
                "minimum": rubric.scale_min,
                "maximum": rubric.scale_max,
            },
            f"{rubric.name}_rationale": {"type": "string"},
        },
        "required": [
            "paragraph_index",
            f"{rubric.name}_score",
            f"{rubric.name}_rationale",
        ],
        "additionalProperties": False,
    }
    return SchemaDescriptor(
        name=f"{rubric.name}_ratings",
        schema={
            "type": "object",
            "properties": {
                "paragraph_ratings": {"type": "array", "minItems": 1, "items": entry}
            },
            "required": ["paragraph_ratings"],
            "additionalProperties": False,
        },
    )


def _warn_on_count_mismatch(body: str, labeled_count: int) -> None:
    try:
        local = len(segment_paragraphs(body))
    except NoBodyParagraphs:
        local = 0
    if local != labeled_count:
        warnings.warn(
            f"labeler rated {labeled_count} paragraphs, local segmentation "
            f"found {local}; keeping the labeler's indexing",
            ParagraphCountMismatch,
            stacklevel=3,
        )


def annotate_tone(
    gateway: LlmGateway,
    email: EmailRecord,
    scenario: Scenario,
    annotator_model: str,
) -> AnnotationRecord:
    prompt = _TONE_USER_PROMPT.format(
        scenario_context=scenario.task_email, email_text=email.body
    )
    req = ChatRequest(
        model_id=annotator_model,
        system_prompt=LABELER_SYSTEM_PROMPT,
        messages=(("user", prompt),),
        temperature=0.0,
    )
    result = gateway.complete_structured(req, tone_schema())
    entries = result.value["paragraph_ratings"]
    _warn_on_count_mismatch(email.body, len(entries))
    paragraphs = [
        ParagraphRating(
            paragraph_index=e["paragraph_index"],
            empathy=e["empathy_score"],
            formality=e["formality_score"],
            rationales={
                "empathy": e["empathy_rationale"],
                "formality": e["formality_rationale"],
            },
        )
        for e in entries
    ]
    return AnnotationRecord.from_paragraphs(email.email_id, annotator_model, paragraphs)


def _format_criteria(rubric: Rubric) -> str:
    parts = []
    for n, (name, low, high) in enumerate(rubric.criteria, start=1):
        parts.append(
            f"{n}. {name}\n"
            f"Low {rubric.name} ({rubric.scale_min}-3): {low}\n"
            f"High {rubric.name} (5-{rubric.scale_max}): {high}"
        )
    return "\n\n".join(parts)


def annotate_rubric(
    gateway: LlmGateway,
    email: EmailRecord,
    scenario: Scenario,
    rubric: Rubric,
    annotator_model: str,
) -> AnnotationRecord:
    # hard rules inside criteria text (e.g. auto-score clauses) reach the
    # labeler verbatim because the anchors are embedded untouched
    prompt = _RUBRIC_USER_PROMPT.format(
        lo=rubric.scale_min,
        hi=rubric.scale_max,
        name=rubric.name,
        criteria=_format_criteria(rubric),
        scenario_context=scenario.task_email,
        email_text=email.body,
    )
    req = ChatRequest(
        model_id=annotator_model,
        system_prompt=LABELER_SYSTEM_PROMPT,
        messages=(("user", prompt),),
        temperature=0.0,
    )
    result = gateway.complete_structured(req, rubric_schema(rubric))
    entries = result.value["paragraph_ratings"]
    _warn_on_count_mismatch(email.body, len(entries))
    paragraphs = [
        ParagraphRating(
            paragraph_index=e["paragraph_index"],
            rubric_scores={rubric.name: e[f"{rubric.name}_score"]},
            rationales={rubric.name: e[f"{rubric.name}_rationale"]},
        )
        for e in entries
    ]
    return AnnotationRecord.from_paragraphs(email.email_id, annotator_model, paragraphs)


def classify_quadrant(mean_empathy: float, mean_formality: float) -> str:
    """Quadrant label; an axis is low iff strictly below 4."""
    _check_scale(mean_empathy, 1, 7, "mean_empathy")
    _check_scale(mean_formality, 1, 7, "mean_formality")
    e = "low" if mean_empathy < 4 else "high"
    f = "low" if mean_formality < 4 else "high"
    return f"{e}_{f}"


def rewrite_vector(before: AnnotationRecord, after: AnnotationRecord) -> ToneVector:
    if before.annotator_model != after.annotator_model:
        raise AnnotatorMismatch(
            f"{before.annotator_model!r} vs {after.annotator_model!r}"
        )
    if None in (
        before.mean_empathy,
        before.mean_formality,
        after.mean_empathy,
        after.mean_formality,
    ):
        raise AnnotationError("rewrite vectors need tone-annotated records")
    d_e = after.mean_empathy - before.mean_empathy
    d_f = after.mean_formality - before.mean_formality
    return ToneVector(
        email_id_before=before.email_id,
        email_id_after=after.email_id,
        d_empathy=d_e,
        d_formality=d_f,
        magnitude=math.hypot(d_e, d_f),
    )


def perplexity(logprobs: TokenLogProbs) -> float:
    """exp of the negative mean logprob over the scored span."""
    span = logprobs.span_logprobs()
    if not span:
        raise EmptySpan("scored_span selects no tokens")
    return math.exp(-sum(span) / len(span))


def cross_annotator_pearson(
    records_a: Iterable[AnnotationRecord],
    records_b: Iterable[AnnotationRecord],
    rubric_name: str,
) -> float:
    """Pearson correlation of per-email rubric means on the common emails."""
    by_id_a = {r.email_id: r.mean_rubrics.get(rubric_name) for r in records_a}
    by_id_b = {r.email_id: r.mean_rubrics.get(rubric_name) for r in records_b}
    common = sorted(
        eid
        for eid in by_id_a.keys() & by_id_b.keys()
        if by_id_a[eid] is not None and by_id_b[eid] is not None
    )
    if len(common) < 2:
        raise AnnotationError(
            f"need at least 2 common emails with {rubric_name!r} means"
        )
    xs = [by_id_a[e] for e in common]
    ys = [by_id_b[e] for e in common]
    return float(_scipy_stats.pearsonr(xs, ys).statistic)


_ANNOTATIONS_SCHEMA = "commgame/annotations@1"


def dump_annotations(path: str | Path, records: Iterable[AnnotationRecord]) -> None:
    lines = [json.dumps({"schema": _ANNOTATIONS_SCHEMA})]
    ordered = sorted(records, key=lambda r: (r.email_id, r.annotator_model))
    for rec in ordered:
        lines.append(json.dumps(rec.to_dict(), sort_keys=True))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_annotations(path: str | Path) -> list[AnnotationRecord]:
    raw = Path(path).read_text(encoding="utf-8").splitlines()
    if not raw or json.loads(raw[0]).get("schema") != _ANNOTATIONS_SCHEMA:
        raise AnnotationError(f"{path} is not an annotations file")
    return [AnnotationRecord.from_dict(json.loads(line)) for line in raw[1:] if line]
