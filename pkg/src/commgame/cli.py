"""Operator command line.

Subcommands cover the full offline workflow: serving the HTTP API, batch
LLM play, pairwise tournaments, corpus annotation, the statistics suite,
and the one-shot report pipeline. Batch commands resume over an existing
store: completed work is detected there and never rerun or duplicated.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import click

from . import pipeline as pipeline_mod
from . import stats
from .annotation import (
    annotate_rubric,
    annotate_tone,
    dump_annotations,
    load_annotations,
    perplexity,
    rewrite_vector,
)
from .config import AppConfig, build_gateway, build_roles, load_config
from .gateway import LlmGateway, TokenLogProbs
from .persistence import EventLog, replay_sessions
from .records import (
    EmailRecord,
    Verdict,
    dump_scored_emails,
    load_scored_emails,
)
from .scenarios import ScenarioRegistry, default_scenario_root, load_registry
from .session import RewriteDirective, SessionEngine
from .tournament import (
    ComparisonOutcome,
    RatingTable,
    TournamentConfig,
    build_schedule,
    compute_elo,
    find_disagreements,
    rank,
    run_comparison,
    sample_balanced,
)


@dataclass
class CliContext:
    config_path: str | None = None
    store: str | None = None
    seed: int = 0
    jobs: int = 1
    stub: bool = False
    _cfg: AppConfig | None = field(default=None, repr=False)
    _registry: ScenarioRegistry | None = field(default=None, repr=False)
    _log: EventLog | None = field(default=None, repr=False)
    _gateway: LlmGateway | None = field(default=None, repr=False)

    @property
    def cfg(self) -> AppConfig:
        if self._cfg is None:
            cfg = load_config(self.config_path)
            if self.store is not None:
                cfg = cfg.with_store(self.store)
            self._cfg = cfg
        return self._cfg

    @property
    def registry(self) -> ScenarioRegistry:
        if self._registry is None:
            root = self.cfg.scenario_root or default_scenario_root()
            self._registry = load_registry(root)
        return self._registry

    @property
    def log(self) -> EventLog:
        if self._log is None:
            self._log = EventLog(self.cfg.store)
        return self._log

    @property
    def gateway(self) -> LlmGateway:
        if self._gateway is None:
            log = self.log
            self._gateway = build_gateway(
                self.cfg,
                stub=self.stub,
                on_call=lambda payload: log.append_unique("llm_call", payload),
            )
        return self._gateway

    def map_jobs(self, fn: Callable, items: Sequence) -> list:
        """Run fn over items, in order, with at most self.jobs in flight."""
        if self.jobs <= 1 or len(items) <= 1:
            return [fn(item) for item in items]
        with ThreadPoolExecutor(max_workers=self.jobs) as pool:
            return list(pool.map(fn, items))


pass_ctx = click.make_pass_decorator(CliContext)


def _echo_table(
    header: Sequence[str], rows: Iterable[Sequence[str]], out: str | None
) -> None:
    lines = ["\t".join(header)]
    lines.extend("\t".join(row) for row in rows)
    text = "\n".join(lines) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8", newline="\n")
        click.echo(f"wrote {out}")
    else:
        click.echo(text, nl=False)


def _fail(message: str) -> "click.ClickException":
    return click.ClickException(message)


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Config file (JSON); defaults to the shipped config.")
@click.option("--store", type=click.Path(dir_okay=False), default=None,
              help="Event store path; overrides the config.")
@click.option("--seed", type=int, default=0, show_default=True,
              help="Seed for sampling, scheduling, and presentation order.")
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Max parallel gateway calls for batch commands.")
@click.option("--stub", is_flag=True, help="Force the offline deterministic provider.")
@click.pass_context
def cli(ctx, config_path, store, seed, jobs, stub) -> None:
    """Communication-game engine and evaluation toolkit."""
    if jobs < 1:
        raise _fail("--jobs must be at least 1")
    ctx.obj = CliContext(
        config_path=config_path, store=store, seed=seed, jobs=jobs, stub=stub
    )


# -- serve / scenarios --------------------------------------------------------------


@cli.command()
@click.option("--host", default=None, help="Bind address; overrides the config.")
@click.option("--port", type=int, default=None, help="Port; overrides the config.")
@pass_ctx
def serve(ctx: CliContext, host, port) -> None:
    """Serve the HTTP API."""
    import uvicorn

    from .service import create_app

    app = create_app(ctx.cfg, stub=ctx.stub)
    uvicorn.run(app, host=host or ctx.cfg.host, port=port or ctx.cfg.port)


@cli.command()
@pass_ctx
def scenarios(ctx: CliContext) -> None:
    """List playable scenarios."""
    rows = []
    for sid in ctx.registry.ids():
        sc = ctx.registry.get(sid)
        rows.append(
            (
                sid,
                sc.title,
                ",".join(r.name for r in sc.recipients),
                "multi" if sc.multi_turn else "single",
                str(sc.max_turns),
            )
        )
    _echo_table(("id", "title", "recipients", "mode", "max_turns"), rows, None)


# -- batch play ----------------------------------------------------------------------


def _warm_engine(ctx: CliContext) -> tuple[SessionEngine, dict]:
    """Engine whose id counters continue after everything already in the store."""
    existing = replay_sessions(ctx.log)
    n_sessions = len(existing)
    n_emails = sum(len(s.attempts) for s in existing.values())
    engine = SessionEngine(
        ctx.registry,
        ctx.gateway,
        build_roles(ctx.cfg),
        log=ctx.log,
        session_seq_start=n_sessions + 1,
        email_seq_start=n_emails + 1,
    )
    return engine, existing


def _recorded_rows(existing: dict) -> list[tuple[EmailRecord, Verdict]]:
    rows = []
    for session in existing.values():
        for turn in session.attempts:
            if turn.verdict is not None:
                rows.append((turn.player_email, turn.verdict))
    return rows


@cli.command("run-batch")
@click.option("--scenario", "scenario_id", default=None, help="Scenario to play.")
@click.option("--writer-model", default=None,
              help="Writer model id; defaults to the configured writer role.")
@click.option("-n", "--count", type=int, default=1, show_default=True,
              help="Total sessions wanted in the store for this scenario+writer.")
@click.option("--length-control", is_flag=True,
              help="Ask for a length sampled from the stored human emails.")
@click.option("--rewrite-of", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Rewrite every email in this dataset instead of free writing.")
@click.option("--out", type=click.Path(dir_okay=False), required=True,
              help="Dataset file to write (email+verdict rows).")
@pass_ctx
def run_batch(ctx: CliContext, scenario_id, writer_model, count, length_control,
              rewrite_of, out) -> None:
    """Run LLM-written sessions and export the scored results."""
    engine, existing = _warm_engine(ctx)
    writer = writer_model or ctx.cfg.writer.model_id
    engine.roles = replace(
        engine.roles, writer=replace(engine.roles.writer, model_id=writer)
    )
    rows: list[tuple[EmailRecord, Verdict]]

    if rewrite_of:
        bases = load_scored_emails(rewrite_of)
        done_bases = {
            t.player_email.writer.base_email_id
            for s in existing.values()
            for t in s.attempts
            if t.player_email.writer.kind == "human_plus_llm"
            and t.player_email.writer.model_id == writer
        }
        todo = [e for e, _ in bases if e.email_id not in done_bases]

        def rewrite_one(base: EmailRecord):
            record = engine.rewrite_email(base, writer, RewriteDirective.improve())
            session = engine.start_session(base.scenario_id, "human_plus_llm")
            turn = engine.submit_email(session, record.body, record=record)
            return (turn.player_email, turn.verdict)

        fresh = ctx.map_jobs(rewrite_one, todo)
        prior = [
            (t.player_email, t.verdict)
            for s in existing.values()
            for t in s.attempts
            if t.player_email.writer.kind == "human_plus_llm"
            and t.player_email.writer.model_id == writer
            and t.player_email.writer.base_email_id in {e.email_id for e, _ in bases}
        ]
        rows = prior + fresh
        click.echo(f"rewrote {len(fresh)} of {len(bases)} (rest already in store)")
    else:
        if not scenario_id:
            raise _fail("--scenario is required unless --rewrite-of is given")
        ctx.registry.get(scenario_id)
        prior = [
            (t.player_email, t.verdict)
            for s in existing.values()
            if s.scenario_id == scenario_id
            for t in s.attempts
            if t.player_email.writer.kind == "llm"
            and t.player_email.writer.model_id == writer
        ]
        human_lengths = _human_lengths(scenario_id)

        def play_one(slot: int):
            target = None
            if length_control:
                target = stats.sample_target_length(human_lengths, ctx.seed + slot)
            record = engine.generate_llm_email(scenario_id, writer, target)
            session = engine.start_session(scenario_id, "llm")
            turn = engine.submit_email(session, record.body, record=record)
            return (turn.player_email, turn.verdict)

        slots = list(range(len(prior), count))
        fresh = ctx.map_jobs(play_one, slots)
        rows = prior[:count] + fresh
        click.echo(f"played {len(fresh)} new sessions ({len(prior)} already in store)")

    dump_scored_emails(out, rows)
    click.echo(f"wrote {out} ({len(rows)} rows)")


def _human_lengths(scenario_id: str) -> list[int]:
    pairs = pipeline_mod.load_fixture_pairs()
    lengths = [
        len(e.body)
        for e, _ in pairs
        if e.scenario_id == scenario_id and e.writer.kind == "human"
    ]
    return lengths or [400]


# -- tournaments -----------------------------------------------------------------------


@cli.group()
def tournament() -> None:
    """Pairwise ranking tournaments."""


@tournament.command("sample")
@click.option("--dataset", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Scored-email dataset; defaults to the shipped corpus.")
@click.option("--scenario", "scenario_id", required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@pass_ctx
def tournament_sample(ctx: CliContext, dataset, scenario_id, out) -> None:
    """Draw the balanced pass/fail subset for one scenario."""
    pairs = (
        load_scored_emails(dataset) if dataset else pipeline_mod.load_fixture_pairs()
    )
    sc_pairs = [(e, v) for e, v in pairs if e.scenario_id == scenario_id]
    if not sc_pairs:
        raise _fail(f"dataset has no emails for scenario {scenario_id}")
    cfg = TournamentConfig(rng_seed=ctx.seed)
    subset = sample_balanced(sc_pairs, cfg)
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps({"schema": "commgame/subset@1", "scenario_id": scenario_id})
                 + "\n")
        for email in subset:
            fh.write(json.dumps({"email_id": email.email_id}) + "\n")
    click.echo(f"wrote {out} ({len(subset)} emails)")


def _load_subset_ids(path: str) -> tuple[str, list[str]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = json.loads(lines[0])
    if header.get("schema") != "commgame/subset@1":
        raise _fail(f"{path} is not a tournament subset file")
    return header["scenario_id"], [json.loads(ln)["email_id"] for ln in lines[1:] if ln]


@tournament.command("run")
@click.option("--dataset", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--subset", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--judge", "judge_model", required=True, help="Judge model id.")
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@pass_ctx
def tournament_run(ctx: CliContext, dataset, subset, judge_model, out) -> None:
    """Judge every scheduled pair in a sampled subset."""
    scenario_id, ids = _load_subset_ids(subset)
    pairs = (
        load_scored_emails(dataset) if dataset else pipeline_mod.load_fixture_pairs()
    )
    by_id = {e.email_id: e for e, _ in pairs}
    missing = [i for i in ids if i not in by_id]
    if missing:
        raise _fail(f"subset emails missing from dataset: {missing[:3]}")
    scenario = ctx.registry.get(scenario_id)
    cfg = TournamentConfig(rng_seed=ctx.seed)
    schedule = build_schedule(sorted(ids), cfg)

    def compare(item: tuple[int, tuple[str, str]]) -> ComparisonOutcome:
        i, (a_id, b_id) = item
        pseed = pipeline_mod.comparison_seed(ctx.seed, judge_model, i, a_id, b_id)
        outcome = run_comparison(
            ctx.gateway, judge_model, scenario, by_id[a_id], by_id[b_id],
            presentation_seed=pseed,
        )
        ctx.log.append_unique("comparison_made", outcome.to_dict())
        return outcome

    outcomes = ctx.map_jobs(compare, list(enumerate(schedule)))
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps({"schema": "commgame/comparisons@1"}) + "\n")
        for o in outcomes:
            fh.write(json.dumps(o.to_dict(), sort_keys=True) + "\n")
    click.echo(f"wrote {out} ({len(outcomes)} comparisons)")


def _load_comparisons(path: str) -> list[ComparisonOutcome]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = json.loads(lines[0])
    if header.get("schema") != "commgame/comparisons@1":
        raise _fail(f"{path} is not a comparisons file")
    return [ComparisonOutcome.from_dict(json.loads(ln)) for ln in lines[1:] if ln]


@tournament.command("elo")
@click.option("--comparisons", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@pass_ctx
def tournament_elo(ctx: CliContext, comparisons, out) -> None:
    """Fold a comparison file into a rating table."""
    outcomes = _load_comparisons(comparisons)
    table = compute_elo(outcomes, TournamentConfig(rng_seed=ctx.seed))
    Path(out).write_text(
        json.dumps(table.to_dict(), indent=1, sort_keys=True) + "\n",
        encoding="utf-8", newline="\n",
    )
    click.echo(f"wrote {out} ({len(table.ratings)} rated emails)")


@tournament.command("disagree")
@click.option("--ratings-a", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--ratings-b", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--threshold", type=int, default=20, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def tournament_disagree(ratings_a, ratings_b, threshold, out) -> None:
    """Emails whose rank positions differ by more than the threshold."""
    tables = []
    for path in (ratings_a, ratings_b):
        tables.append(RatingTable.from_dict(json.loads(Path(path).read_text())))
    ranks = [rank(t) for t in tables]
    found = sorted(
        find_disagreements(ranks[0], ranks[1], threshold=threshold),
        key=lambda t: (-abs(t[1] - t[2]), t[0]),
    )
    rows = [
        (eid, str(pa), str(pb), str(abs(pa - pb))) for eid, pa, pb in found
    ]
    _echo_table(("email_id", "position_a", "position_b", "gap"), rows, out)


# -- annotation ------------------------------------------------------------------------


@cli.group()
def annotate() -> None:
    """Tone and rubric labeling over stored emails."""


def _dataset_emails(dataset: str | None, scenario_id: str | None,
                    limit: int | None) -> list[EmailRecord]:
    pairs = (
        load_scored_emails(dataset) if dataset else pipeline_mod.load_fixture_pairs()
    )
    emails = [e for e, _ in pairs]
    if scenario_id:
        emails = [e for e in emails if e.scenario_id == scenario_id]
    emails.sort(key=lambda e: e.email_id)
    return emails[:limit] if limit else emails


@annotate.command("tone")
@click.option("--dataset", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--scenario", "scenario_id", default=None)
@click.option("--limit", type=int, default=None, help="Annotate at most this many.")
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@pass_ctx
def annotate_tone_cmd(ctx: CliContext, dataset, scenario_id, limit, out) -> None:
    """Per-paragraph empathy/formality labels."""
    emails = _dataset_emails(dataset, scenario_id, limit)
    labeler = ctx.cfg.labeler.model_id

    def label(email: EmailRecord):
        record = annotate_tone(
            ctx.gateway, email, ctx.registry.get(email.scenario_id), labeler
        )
        ctx.log.append_unique("annotation_written", record.to_dict())
        return record

    records = ctx.map_jobs(label, emails)
    dump_annotations(out, records)
    click.echo(f"wrote {out} ({len(records)} annotations)")


@annotate.command("rubric")
@click.option("--dataset", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--scenario", "scenario_id", required=True)
@click.option("--rubric", "rubric_name", default="tact", show_default=True)
@click.option("--limit", type=int, default=None)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@pass_ctx
def annotate_rubric_cmd(ctx: CliContext, dataset, scenario_id, rubric_name, limit,
                        out) -> None:
    """Scenario-rubric scores (tact, politeness, ...)."""
    scenario = ctx.registry.get(scenario_id)
    if rubric_name not in scenario.rubrics:
        raise _fail(
            f"scenario {scenario_id} has no rubric {rubric_name!r}; "
            f"available: {', '.join(sorted(scenario.rubrics))}"
        )
    rubric = scenario.rubrics[rubric_name]
    emails = _dataset_emails(dataset, scenario_id, limit)
    labeler = ctx.cfg.labeler.model_id

    def label(email: EmailRecord):
        record = annotate_rubric(ctx.gateway, email, scenario, rubric, labeler)
        ctx.log.append_unique("annotation_written", record.to_dict())
        return record

    records = ctx.map_jobs(label, emails)
    dump_annotations(out, records)
    click.echo(f"wrote {out} ({len(records)} annotations)")


@annotate.command("vectors")
@click.option("--dataset", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Dataset holding the rewrite links (base_email_id).")
@click.option("--annotations", "annotations_path",
              type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@pass_ctx
def annotate_vectors(ctx: CliContext, dataset, annotations_path, out) -> None:
    """Empathy/formality deltas from each base email to its rewrite."""
    pairs = (
        load_scored_emails(dataset) if dataset else pipeline_mod.load_fixture_pairs()
    )
    by_id = {}
    for record in load_annotations(annotations_path):
        by_id[(record.email_id, record.annotator_model)] = record
    rows = []
    for email, _ in sorted(pairs, key=lambda p: p[0].email_id):
        writer = email.writer
        if writer.kind != "human_plus_llm" or not writer.base_email_id:
            continue
        for (eid, annotator), after in sorted(by_id.items()):
            if eid != email.email_id:
                continue
            before = by_id.get((writer.base_email_id, annotator))
            if before is None:
                continue
            vec = rewrite_vector(before, after)
            rows.append(
                (
                    writer.base_email_id,
                    email.email_id,
                    writer.model_id,
                    annotator,
                    f"{vec.d_empathy:+.2f}",
                    f"{vec.d_formality:+.2f}",
                    f"{vec.magnitude:.3f}",
                )
            )
    if not rows:
        raise _fail("no (base, rewrite) annotation pairs found")
    _echo_table(
        ("base_email_id", "rewrite_email_id", "rewrite_model", "annotator",
         "d_empathy", "d_formality", "magnitude"),
        rows, out,
    )


@annotate.command("perplexity")
@click.option("--spans", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Token logprob spans (JSON); defaults to the shipped spans.")
@click.option("--dataset", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Score these emails live through the gateway instead.")
@click.option("--scenario", "scenario_id", default=None)
@click.option("--model", "model_id", default=None, help="Scoring model for --dataset.")
@click.option("--limit", type=int, default=None)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@pass_ctx
def annotate_perplexity(ctx: CliContext, spans, dataset, scenario_id, model_id, limit,
                        out) -> None:
    """Per-span perplexity, from stored spans or live logprob scoring."""
    rows = []
    if dataset:
        if not model_id:
            raise _fail("--model is required with --dataset")
        emails = _dataset_emails(dataset, scenario_id, limit)
        for email in emails:
            context = ctx.registry.get(email.scenario_id).task_email + "\n\n"
            scored = ctx.gateway.score_logprobs(context, email.body, model_id)
            rows.append((email.email_id, model_id, f"{perplexity(scored):.2f}"))
        header = ("email_id", "model", "perplexity")
    else:
        path = spans or str(pipeline_mod.fixture_path("logprob_spans.json"))
        for span in json.loads(Path(path).read_text(encoding="utf-8")):
            scored = TokenLogProbs(
                tokens=tuple(span["tokens"]),
                logprobs=tuple(span["logprobs"]),
                scored_span=tuple(span["scored_span"]),
            )
            rows.append(
                (span["category"], span["condition"], span["model"],
                 f"{perplexity(scored):.2f}")
            )
        header = ("category", "condition", "model", "perplexity")
    _echo_table(header, rows, out)


# -- statistics ------------------------------------------------------------------------


@cli.group("stats")
def stats_group() -> None:
    """Agreement, pass-rate, and ranking statistics."""


@stats_group.command("alpha-nominal")
@click.option("--verdicts", type=click.Path(exists=True, dir_okay=False), required=True,
              help="Scored-email dataset with two or more judge models.")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def stats_alpha_nominal(verdicts, out) -> None:
    """Chance-corrected pass/fail agreement for every judge pair."""
    pairs = load_scored_emails(verdicts)
    by_judge: dict[str, dict[str, bool]] = {}
    for email, verdict in pairs:
        by_judge.setdefault(verdict.judge_model, {})[email.email_id] = verdict.passed
    judges = sorted(by_judge)
    if len(judges) < 2:
        raise _fail(f"need verdicts from at least 2 judges, found {len(judges)}")
    rows = []
    for i, ja in enumerate(judges):
        for jb in judges[i + 1:]:
            common = sorted(by_judge[ja].keys() & by_judge[jb].keys())
            if not common:
                continue
            alpha = stats.alpha_nominal(
                [by_judge[ja][e] for e in common], [by_judge[jb][e] for e in common]
            )
            rows.append((ja, jb, str(len(common)), f"{alpha:.3f}"))
    _echo_table(("judge_a", "judge_b", "n_common", "alpha"), rows, out)


def _load_rating_matrix(path: str | None, metric: str) -> stats.RatingMatrix:
    raw = json.loads(
        Path(path or pipeline_mod.fixture_path("iaa_ratings.json")).read_text()
    )
    items = tuple(raw["items"])
    annotators = tuple(raw["annotators"])
    return stats.RatingMatrix(
        items=items,
        annotators=annotators,
        values={
            (ann, item): float(raw[metric][ann][item])
            for ann in annotators
            for item in items
        },
    )


@stats_group.command("alpha-interval")
@click.option("--ratings", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--metric", type=click.Choice(["empathy", "formality", "all"]),
              default="all", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def stats_alpha_interval(ratings, metric, out) -> None:
    """Interval-scale agreement over a rating matrix."""
    metrics = ["empathy", "formality"] if metric == "all" else [metric]
    rows = [
        (m, f"{stats.alpha_interval(_load_rating_matrix(ratings, m)):.3f}")
        for m in metrics
    ]
    _echo_table(("metric", "alpha_interval"), rows, out)


@stats_group.command("spearman")
@click.option("--ratings", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--metric", type=click.Choice(["empathy", "formality", "all"]),
              default="all", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def stats_spearman(ratings, metric, out) -> None:
    """Mean pairwise rank correlation over a rating matrix."""
    metrics = ["empathy", "formality"] if metric == "all" else [metric]
    rows = [
        (m, f"{stats.avg_pairwise_spearman(_load_rating_matrix(ratings, m)):.3f}")
        for m in metrics
    ]
    _echo_table(("metric", "avg_spearman"), rows, out)


@stats_group.command("pass-rates")
@click.option("--dataset", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def stats_pass_rates(dataset, out) -> None:
    """Attempts, passes, and pass rate per writer."""
    pairs = (
        load_scored_emails(dataset) if dataset else pipeline_mod.load_fixture_pairs()
    )
    groups: dict[tuple[str, str], list[bool]] = {}
    for email, verdict in pairs:
        groups.setdefault((email.writer.kind, email.writer.name), []).append(
            verdict.passed
        )
    rows = [
        (name, kind, str(len(vs)), str(sum(vs)), f"{stats.pass_rate(vs):.3f}")
        for (kind, name), vs in sorted(groups.items())
    ]
    _echo_table(("writer", "kind", "attempts", "passes", "pass_rate"), rows, out)


@stats_group.command("hybrid")
@click.option("--dataset", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def stats_hybrid(dataset, out) -> None:
    """LLM-alone vs human-plus-LLM pass rates per scenario."""
    pairs = (
        load_scored_emails(dataset) if dataset else pipeline_mod.load_fixture_pairs()
    )
    table = stats.hybrid_table(pairs)
    rows = []
    for sc in sorted({k[0] for k in table}):
        for model in sorted({k[1] for k in table if k[2] == "human_plus_llm"}):
            llm = table.get((sc, model, "llm"))
            hyb = table.get((sc, model, "human_plus_llm"))
            if llm is None or hyb is None:
                continue
            rows.append(
                (sc, model, f"{llm:.3f}", f"{hyb:.3f}", f"{(hyb - llm) * 100:+.1f}")
            )
    _echo_table(
        ("scenario", "writer_model", "llm_rate", "hybrid_rate", "delta_pp"), rows, out
    )


@stats_group.command("tact-range")
@click.option("--tact", "tact_path", type=click.Path(exists=True, dir_okay=False),
              default=None)
@click.option("--top-n", type=int, default=10, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def stats_tact_range(tact_path, top_n, out) -> None:
    """Tact spread over the top-ranked emails, plus the human mean."""
    fixture = json.loads(
        Path(tact_path or pipeline_mod.fixture_path("tact_fixture.json")).read_text()
    )
    rows = []
    for scenario_id in sorted(fixture):
        block = fixture[scenario_id]
        tact = {e: float(v) for e, v in block["tact"].items()}
        lo, hi = stats.tact_range(block["ranked_email_ids"], tact, top_n=top_n)
        human = stats.category_mean(tact, block["writers"], "human")
        rows.append((scenario_id, f"{lo:.2f}", f"{hi:.2f}", f"{human:.2f}"))
    _echo_table(("scenario", "top_min", "top_max", "human_mean"), rows, out)


@stats_group.command("regress")
@click.option("--meta", "meta_path", type=click.Path(exists=True, dir_okay=False),
              default=None)
@click.option("--axis", type=click.Choice(["size", "elo", "both"]), default="both",
              show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def stats_regress(meta_path, axis, out) -> None:
    """Judge-pair agreement regressed on judge capability."""
    fixture = json.loads(
        Path(meta_path or pipeline_mod.fixture_path("judge_meta.json")).read_text()
    )
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
    axes = ["size", "elo"] if axis == "both" else [axis]
    rows = []
    for ax in axes:
        slope, intercept, r = stats.agreement_regression(points, axis=ax)
        rows.append((ax, str(len(points)), f"{slope:.6f}", f"{intercept:.4f}",
                     f"{r:.4f}"))
    _echo_table(("axis", "pairs", "slope", "intercept", "r"), rows, out)


# -- pipeline --------------------------------------------------------------------------


@cli.group("pipeline")
def pipeline_group() -> None:
    """Multi-stage report generation."""


@pipeline_group.command("run-all")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default="reports",
              show_default=True)
@pass_ctx
def pipeline_run_all(ctx: CliContext, out_dir) -> None:
    """Write every report table into a directory."""
    try:
        written = pipeline_mod.run_all(
            out_dir,
            registry=ctx.registry,
            gateway=ctx.gateway,
            tournament_judges=ctx.cfg.tournament_judges,
            labeler_model=ctx.cfg.labeler.model_id,
            seed=ctx.seed,
            log=ctx.log,
        )
    except pipeline_mod.PipelineError as exc:
        raise _fail(str(exc)) from exc
    for path in written:
        click.echo(str(path))
    click.echo(f"{len(written)} reports in {out_dir}")


if __name__ == "__main__":
    cli()
