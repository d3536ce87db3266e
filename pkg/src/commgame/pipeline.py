"""Fixture-driven analysis pipeline.

Each stage reads a shipped dataset (or runs live pairwise judging through
the gateway) and writes one family of report tables as TSV files. Reports
carry no timestamps and pin every float format, so a rerun with the same
seed reproduces each file byte for byte.
"""

from __future__ import annotations

import hashlib
import json
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Sequence

from . import stats
from .annotation import (
    AnnotationRecord,
    ParagraphRating,
    annotate_tone,
    classify_quadrant,
    cross_annotator_pearson,
    perplexity,
    rewrite_vector,
)
from .gateway import ChatRequest, LlmGateway, MalformedOutput, TokenLogProbs
from .persistence import EventLog
from .records import EmailRecord, Verdict, load_scored_emails
from .scenarios import Scenario, ScenarioRegistry
from .session import UNPARSEABLE_JUDGE_RATIONALE, verdict_schema
from .tournament import (
    InsufficientEmails,
    TournamentConfig,
    build_schedule,
    compute_elo,
    find_disagreements,
    rank,
    run_comparison,
    sample_balanced,
)

__all__ = [
    "PipelineError",
    "StageFailed",
    "REPORT_FILES",
    "fixture_path",
    "load_fixture_pairs",
    "comparison_seed",
    "judge_email",
    "run_all",
]


class PipelineError(Exception):
    pass


class StageFailed(PipelineError):
    def __init__(self, stage: str, message: str) -> None:
        self.stage = stage
        super().__init__(f"stage {stage}: {message}")


REPORT_FILES = (
    "pass_rates.tsv",
    "hybrid.tsv",
    "tournament_rankings.tsv",
    "tournament_skips.tsv",
    "judge_disagreements.tsv",
    "alpha_nominal.tsv",
    "sweep.tsv",
    "tact_range.tsv",
    "tact_categories.tsv",
    "iaa.tsv",
    "quadrants.tsv",
    "rewrite_vectors.tsv",
    "tact_pearson.tsv",
    "perplexity.tsv",
    "agreement_regression.tsv",
)


def fixture_path(name: str) -> Path:
    return Path(str(resources.files("commgame"))) / "data" / "fixtures" / name


def load_fixture_pairs() -> list[tuple[EmailRecord, Verdict]]:
    return load_scored_emails(fixture_path("scored_emails.jsonl"))


def _read_json(name: str) -> Any:
    return json.loads(fixture_path(name).read_text(encoding="utf-8"))


def _write_table(path: Path, header: Sequence[str], rows: Sequence[Sequence[str]]) -> Path:
    lines = ["\t".join(header)]
    lines.extend("\t".join(row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return path


def comparison_seed(seed: int, judge: str, index: int, email_a: str, email_b: str) -> int:
    """Stable presentation seed for one scheduled comparison."""
    h = hashlib.sha256()
    for part in (str(seed), judge, str(index), email_a, email_b):
        h.update(part.encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest()[:4], "big")


# -- single-email judging (used for cross-judge agreement reports) ----------------

_EMAIL_JUDGE_SYSTEM = (
    "You judge whether a workplace email achieves a communication goal. "
    "Respond with JSON only."
)

_EMAIL_JUDGE_PROMPT = """Scenario context:
{task_email}

Email:
{body}

Your goal:
{judge_goal}

Respond with JSON only: {{ "pass": true | false, "rationale": "<brief reason>" }}"""


def judge_email(
    gateway: LlmGateway, judge_model: str, scenario: Scenario, email: EmailRecord
) -> Verdict:
    """Pass/fail one stored email against the scenario goal, outside a session."""
    prompt = _EMAIL_JUDGE_PROMPT.format(
        task_email=scenario.task_email, body=email.body, judge_goal=scenario.judge_goal
    )
    req = ChatRequest(
        model_id=judge_model,
        system_prompt=_EMAIL_JUDGE_SYSTEM,
        messages=(("user", prompt),),
        temperature=0.0,
    )
    try:
        result = gateway.complete_structured(req, verdict_schema())
    except MalformedOutput:
        return Verdict(
            passed=False, rationale=UNPARSEABLE_JUDGE_RATIONALE, judge_model=judge_model
        )
    return Verdict(
        passed=bool(result.value["pass"]),
        rationale=str(result.value["rationale"]),
        judge_model=judge_model,
    )


# -- stages -----------------------------------------------------------------------


def _stage_pass_rates(pairs: list[tuple[EmailRecord, Verdict]], out: Path) -> list[Path]:
    groups: dict[tuple[str, str], list[bool]] = {}
    for email, verdict in pairs:
        groups.setdefault((email.writer.kind, email.writer.name), []).append(verdict.passed)
    rows = []
    for (kind, name), verdicts in sorted(groups.items()):
        rows.append(
            (
                name,
                kind,
                str(len(verdicts)),
                str(sum(verdicts)),
                f"{stats.pass_rate(verdicts):.3f}",
            )
        )
    p1 = _write_table(
        out / "pass_rates.tsv", ("writer", "kind", "attempts", "passes", "pass_rate"), rows
    )

    table = stats.hybrid_table(pairs)
    hybrid_rows = []
    scenarios = sorted({sc for sc, _, _ in table})
    models = sorted({w for _, w, kind in table if kind == "human_plus_llm"})
    for sc in scenarios:
        for model in models:
            llm = table.get((sc, model, "llm"))
            hyb = table.get((sc, model, "human_plus_llm"))
            if llm is None or hyb is None:
                continue
            hybrid_rows.append(
                (sc, model, f"{llm:.3f}", f"{hyb:.3f}", f"{(hyb - llm) * 100:+.1f}")
            )
    p2 = _write_table(
        out / "hybrid.tsv",
        ("scenario", "writer_model", "llm_rate", "hybrid_rate", "delta_pp"),
        hybrid_rows,
    )
    return [p1, p2]


def _stage_tournament(
    pairs: list[tuple[EmailRecord, Verdict]],
    registry: ScenarioRegistry,
    gateway: LlmGateway,
    judges: Sequence[str],
    seed: int,
    out: Path,
    log: EventLog | None,
) -> list[Path]:
    if len(judges) < 2:
        raise PipelineError("tournament reports need at least two judge models")
    cfg = TournamentConfig(rng_seed=seed)
    rank_rows: list[tuple[str, ...]] = []
    skip_rows: list[tuple[str, ...]] = []
    gap_rows: list[tuple[str, ...]] = []
    alpha_rows: list[tuple[str, ...]] = []

    for scenario_id in sorted({e.scenario_id for e, _ in pairs}):
        sc_pairs = [(e, v) for e, v in pairs if e.scenario_id == scenario_id]
        try:
            subset = sample_balanced(sc_pairs, cfg)
        except InsufficientEmails as exc:
            skip_rows.append((scenario_id, str(exc)))
            continue
        scenario = registry.get(scenario_id)
        by_id = {e.email_id: e for e in subset}
        schedule = build_schedule(sorted(by_id), cfg)

        rankings: dict[str, list[str]] = {}
        for judge in judges:
            outcomes = []
            for i, (a_id, b_id) in enumerate(schedule):
                pseed = comparison_seed(seed, judge, i, a_id, b_id)
                outcome = run_comparison(
                    gateway, judge, scenario, by_id[a_id], by_id[b_id],
                    presentation_seed=pseed,
                )
                outcomes.append(outcome)
                if log is not None:
                    log.append_unique("comparison_made", outcome.to_dict())
            table = compute_elo(outcomes, cfg)
            ranking = rank(table)
            rankings[judge] = ranking
            for pos, eid in enumerate(ranking, start=1):
                rank_rows.append(
                    (scenario_id, judge, str(pos), eid, f"{table.ratings[eid]:.2f}")
                )

        first, second = judges[0], judges[1]
        for eid, pos_a, pos_b in sorted(
            find_disagreements(rankings[first], rankings[second], threshold=20)
        ):
            gap_rows.append(
                (scenario_id, eid, str(pos_a), str(pos_b), str(abs(pos_a - pos_b)))
            )

        labels: dict[str, list[bool]] = {j: [] for j in (first, second)}
        for eid in sorted(by_id):
            for j in (first, second):
                labels[j].append(judge_email(gateway, j, scenario, by_id[eid]).passed)
        alpha = stats.alpha_nominal(labels[first], labels[second])
        alpha_rows.append((scenario_id, first, second, f"{alpha:.3f}"))

    return [
        _write_table(
            out / "tournament_rankings.tsv",
            ("scenario", "judge", "position", "email_id", "rating"),
            rank_rows,
        ),
        _write_table(out / "tournament_skips.tsv", ("scenario", "reason"), skip_rows),
        _write_table(
            out / "judge_disagreements.tsv",
            ("scenario", "email_id", "position_a", "position_b", "gap"),
            gap_rows,
        ),
        _write_table(
            out / "alpha_nominal.tsv",
            ("scenario", "judge_a", "judge_b", "alpha"),
            alpha_rows,
        ),
    ]


def _stage_sweep(out: Path) -> list[Path]:
    lines = fixture_path("rankings.jsonl").read_text(encoding="utf-8").splitlines()
    header = json.loads(lines[0])
    if header.get("schema") != "commgame/ranking-pairs@1":
        raise PipelineError("rankings fixture has the wrong schema header")
    pairs = [json.loads(line) for line in lines[1:] if line]

    rows = []
    for threshold in (10, 20, 30, 40):
        count = 0
        weak: list[float] = []
        strong: list[float] = []
        for pair in pairs:
            found = find_disagreements(
                pair["ranking_weak"], pair["ranking_strong"], threshold=threshold
            )
            count += len(found)
            for eid, pos_weak, pos_strong in found:
                side = weak if pos_weak < pos_strong else strong
                side.append(float(pair["tact"][eid]))
        rows.append(
            (
                str(threshold),
                str(count),
                f"{sum(weak) / len(weak):.2f}",
                f"{sum(strong) / len(strong):.2f}",
            )
        )
    return [
        _write_table(
            out / "sweep.tsv",
            ("rank_gap_over", "disagreements", "weak_judge_mean_tact", "strong_judge_mean_tact"),
            rows,
        )
    ]


def _stage_tact(out: Path) -> list[Path]:
    fixture = _read_json("tact_fixture.json")
    range_rows = []
    cat_rows = []
    for scenario_id in sorted(fixture):
        block = fixture[scenario_id]
        ranked = block["ranked_email_ids"]
        tact = {e: float(v) for e, v in block["tact"].items()}
        writers = block["writers"]
        lo, hi = stats.tact_range(ranked, tact, top_n=10)
        human = stats.category_mean(tact, writers, "human")
        range_rows.append((scenario_id, f"{lo:.2f}", f"{hi:.2f}", f"{human:.2f}"))
        models = sorted(
            {c.split(":", 1)[1] for c in set(writers.values()) if c.startswith("llm:")}
        )
        for model in models:
            llm_mean = stats.category_mean(tact, writers, f"llm:{model}")
            hyb_mean = stats.category_mean(tact, writers, f"human_plus_llm:{model}")
            cat_rows.append((scenario_id, model, f"{llm_mean:.2f}", f"{hyb_mean:.2f}"))
    return [
        _write_table(
            out / "tact_range.tsv",
            ("scenario", "top10_min", "top10_max", "human_mean"),
            range_rows,
        ),
        _write_table(
            out / "tact_categories.tsv",
            ("scenario", "writer_model", "llm_mean", "hybrid_mean"),
            cat_rows,
        ),
    ]


def _stage_iaa(out: Path) -> list[Path]:
    fixture = _read_json("iaa_ratings.json")
    items = tuple(fixture["items"])
    annotators = tuple(fixture["annotators"])
    rows = []
    for metric in ("empathy", "formality"):
        values = {
            (ann, item): float(fixture[metric][ann][item])
            for ann in annotators
            for item in items
        }
        matrix = stats.RatingMatrix(items=items, annotators=annotators, values=values)
        alpha = stats.alpha_interval(matrix)
        rho = stats.avg_pairwise_spearman(matrix)
        rows.append((metric, f"{alpha:.3f}", f"{rho:.3f}"))
    return [
        _write_table(out / "iaa.tsv", ("metric", "alpha_interval", "avg_spearman"), rows)
    ]


def _stage_tone(
    pairs: list[tuple[EmailRecord, Verdict]],
    registry: ScenarioRegistry,
    gateway: LlmGateway,
    labeler_model: str,
    out: Path,
    log: EventLog | None,
) -> list[Path]:
    subset = sorted(
        (e for e, _ in pairs if e.scenario_id == "s3" and e.writer.kind == "human"),
        key=lambda e: e.email_id,
    )[:6]
    scenario = registry.get("s3")
    quadrant_rows = []
    for email in subset:
        record = annotate_tone(gateway, email, scenario, labeler_model)
        if log is not None:
            log.append_unique("annotation_written", record.to_dict())
        quadrant_rows.append(
            (
                email.email_id,
                f"{record.mean_empathy:.2f}",
                f"{record.mean_formality:.2f}",
                classify_quadrant(record.mean_empathy, record.mean_formality),
            )
        )
    p1 = _write_table(
        out / "quadrants.tsv",
        ("email_id", "mean_empathy", "mean_formality", "quadrant"),
        quadrant_rows,
    )

    pair = _read_json("rewrite_pair.json")
    before = AnnotationRecord.from_dict(pair["before"])
    after = AnnotationRecord.from_dict(pair["after"])
    vec = rewrite_vector(before, after)
    p2 = _write_table(
        out / "rewrite_vectors.tsv",
        (
            "rewrite_model",
            "empathy_before",
            "empathy_after",
            "d_empathy",
            "formality_before",
            "formality_after",
            "d_formality",
            "magnitude",
        ),
        [
            (
                pair["rewrite_model"],
                f"{before.mean_empathy:.2f}",
                f"{after.mean_empathy:.2f}",
                f"{vec.d_empathy:+.2f}",
                f"{before.mean_formality:.2f}",
                f"{after.mean_formality:.2f}",
                f"{vec.d_formality:+.2f}",
                f"{vec.magnitude:.3f}",
            )
        ],
    )

    cross = _read_json("cross_annotator.json")
    pearson_rows = []
    for scenario_id in sorted(cross):
        block = cross[scenario_id]
        ids = block["email_ids"]

        def as_records(annotator: str, scores: Sequence[float]) -> list[AnnotationRecord]:
            return [
                AnnotationRecord.from_paragraphs(
                    email_id=eid,
                    annotator_model=annotator,
                    paragraphs=[
                        ParagraphRating(paragraph_index=1, rubric_scores={"tact": s})
                    ],
                )
                for eid, s in zip(ids, scores)
            ]

        human = as_records("human", block["human"])
        for model in sorted(k for k in block if k not in ("email_ids", "human")):
            r = cross_annotator_pearson(human, as_records(model, block[model]), "tact")
            pearson_rows.append((scenario_id, model, f"{r:.3f}"))
    p3 = _write_table(
        out / "tact_pearson.tsv", ("scenario", "annotator_model", "pearson_r"), pearson_rows
    )
    return [p1, p2, p3]


def _stage_perplexity(out: Path) -> list[Path]:
    rows = []
    for span in _read_json("logprob_spans.json"):
        token_probs = TokenLogProbs(
            tokens=tuple(span["tokens"]),
            logprobs=tuple(span["logprobs"]),
            scored_span=tuple(span["scored_span"]),
        )
        rows.append(
            (
                span["category"],
                span["condition"],
                span["model"],
                f"{perplexity(token_probs):.2f}",
            )
        )
    return [
        _write_table(
            out / "perplexity.tsv", ("category", "condition", "model", "perplexity"), rows
        )
    ]


def _stage_regression(out: Path) -> list[Path]:
    fixture = _read_json("judge_meta.json")
    metas = {
        m["judge_model"]: stats.JudgeMeta(
            judge_model=m["judge_model"],
            size_billions=m["size_billions"],
            arena_elo=m["arena_elo"],
        )
        for m in fixture["models"]
    }
    points = [
        ((metas[p["judge_a"]], metas[p["judge_b"]]), float(p["alpha"]))
        for p in fixture["pair_alphas"]
    ]
    rows = []
    for axis in ("size", "elo"):
        slope, intercept, r = stats.agreement_regression(points, axis=axis)
        rows.append((axis, str(len(points)), f"{slope:.6f}", f"{intercept:.4f}", f"{r:.4f}"))
    return [
        _write_table(
            out / "agreement_regression.tsv",
            ("axis", "pairs", "slope", "intercept", "r"),
            rows,
        )
    ]


def run_all(
    out_dir: str | Path,
    *,
    registry: ScenarioRegistry,
    gateway: LlmGateway,
    tournament_judges: Sequence[str],
    labeler_model: str,
    seed: int = 0,
    log: EventLog | None = None,
) -> list[Path]:
    """Run every analysis stage; returns the written report paths in order."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pairs = load_fixture_pairs()

    stages: list[tuple[str, Callable[[], list[Path]]]] = [
        ("pass_rates", lambda: _stage_pass_rates(pairs, out)),
        (
            "tournament",
            lambda: _stage_tournament(
                pairs, registry, gateway, tournament_judges, seed, out, log
            ),
        ),
        ("sweep", lambda: _stage_sweep(out)),
        ("tact", lambda: _stage_tact(out)),
        ("iaa", lambda: _stage_iaa(out)),
        ("tone", lambda: _stage_tone(pairs, registry, gateway, labeler_model, out, log)),
        ("perplexity", lambda: _stage_perplexity(out)),
        ("regression", lambda: _stage_regression(out)),
    ]
    written: list[Path] = []
    for name, fn in stages:
        try:
            written.extend(fn())
        except PipelineError:
            raise
        except Exception as exc:
            raise StageFailed(name, str(exc)) from exc
    return written
