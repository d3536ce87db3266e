"""Tournament layer: Elo fits against a straight-line reference, sampling,
schedules, pairwise judging, and ranking diffs.

The reference below is written directly from the rating-update definition
(expected score from the logistic curve, symmetric K-weighted updates) with
no shared code, so agreement is meaningful.
"""
from __future__ import annotations

import math
import random
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from commgame.gateway import LlmGateway, StubProvider
from commgame.records import EmailRecord, Verdict, Writer
from commgame.stubprovider import ProceduralStubProvider
from commgame.tournament import (
    ComparisonOutcome,
    InsufficientEmails,
    MismatchedEmailSets,
    MixedPartition,
    RatingTable,
    SubsetTooSmall,
    TournamentConfig,
    build_schedule,
    compute_elo,
    expected_score,
    find_disagreements,
    rank,
    run_comparison,
    sample_balanced,
)


def reference_elo(outcomes, initial=1500.0, k=32.0):
    """Straight-line sequential Elo: one pass, ties skipped."""
    ratings: dict[str, float] = {}
    processed = 0
    for o in outcomes:
        if o.email_a not in ratings:
            ratings[o.email_a] = initial
        if o.email_b not in ratings:
            ratings[o.email_b] = initial
        if o.winner == "tie":
            continue
        r_a = ratings[o.email_a]
        r_b = ratings[o.email_b]
        e_a = 1.0 / (1.0 + 10.0 ** ((r_b - r_a) / 400.0))
        s_a = 1.0 if o.winner == "a" else 0.0
        ratings[o.email_a] = r_a + k * (s_a - e_a)
        ratings[o.email_b] = r_b + k * ((1.0 - s_a) - (1.0 - e_a))
        processed += 1
    return ratings, processed


def random_outcome_sequence(rng: random.Random) -> list[ComparisonOutcome]:
    n_emails = rng.randint(2, 12)
    ids = [f"e{k:02d}" for k in range(n_emails)]
    outcomes = []
    for _ in range(rng.randint(1, 40)):
        email_a, email_b = rng.sample(ids, 2)
        outcomes.append(
            ComparisonOutcome(
                judge_model="judge",
                scenario_id="sx",
                email_a=email_a,
                email_b=email_b,
                winner=rng.choice(("a", "b", "tie")),
                rationale="r",
            )
        )
    return outcomes


def test_compute_elo_matches_reference_bit_for_bit_on_1000_sequences():
    rng = random.Random(12345)
    cfg = TournamentConfig()
    started = time.monotonic()
    for _ in range(1000):
        outcomes = random_outcome_sequence(rng)
        table = compute_elo(outcomes, cfg)
        want, processed = reference_elo(outcomes)
        assert dict(table.ratings) == want  # exact float equality
        assert table.processed_comparisons == processed
    assert time.monotonic() - started < 5.0


def test_compute_elo_conserves_total_rating_and_bounds_updates():
    rng = random.Random(777)
    cfg = TournamentConfig()
    for _ in range(300):
        outcomes = random_outcome_sequence(rng)
        table = compute_elo(outcomes, cfg)
        total = math.fsum(table.ratings.values())
        assert total == pytest.approx(1500.0 * len(table.ratings), abs=1e-6)
        # per-update delta never exceeds K: replay stepwise and diff
        ratings: dict[str, float] = {}
        for o in outcomes:
            ratings.setdefault(o.email_a, 1500.0)
            ratings.setdefault(o.email_b, 1500.0)
            if o.winner == "tie":
                continue
            before = (ratings[o.email_a], ratings[o.email_b])
            e_a = expected_score(ratings[o.email_a], ratings[o.email_b])
            s_a = 1.0 if o.winner == "a" else 0.0
            ratings[o.email_a] += cfg.k_factor * (s_a - e_a)
            ratings[o.email_b] += cfg.k_factor * ((1.0 - s_a) - (1.0 - e_a))
            assert abs(ratings[o.email_a] - before[0]) <= cfg.k_factor + 1e-9
            assert abs(ratings[o.email_b] - before[1]) <= cfg.k_factor + 1e-9
        assert ratings == dict(table.ratings)


def test_compute_elo_skips_ties_but_still_registers_emails():
    cfg = TournamentConfig()
    outcomes = [
        ComparisonOutcome(
            judge_model="j",
            scenario_id="s",
            email_a="a",
            email_b="b",
            winner="tie",
            rationale="even",
        )
    ]
    table = compute_elo(outcomes, cfg)
    assert table.ratings == {"a": 1500.0, "b": 1500.0}
    assert table.processed_comparisons == 0


def test_compute_elo_rejects_empty_and_mixed_inputs():
    cfg = TournamentConfig()
    with pytest.raises(MixedPartition):
        compute_elo([], cfg)
    base = ComparisonOutcome(
        judge_model="j",
        scenario_id="s",
        email_a="a",
        email_b="b",
        winner="a",
        rationale="r",
    )
    other_judge = ComparisonOutcome(
        judge_model="k",
        scenario_id="s",
        email_a="a",
        email_b="b",
        winner="a",
        rationale="r",
    )
    with pytest.raises(MixedPartition):
        compute_elo([base, other_judge], cfg)


def test_expected_score_midpoint_and_symmetry():
    assert expected_score(1500.0, 1500.0) == 0.5
    assert expected_score(1600.0, 1400.0) + expected_score(1400.0, 1600.0) == (
        pytest.approx(1.0, abs=1e-12)
    )
    assert expected_score(2400.0, 1200.0) > 0.99


@given(st.integers(min_value=0, max_value=2**31 - 1))
@settings(max_examples=30)
def test_expected_score_in_unit_interval(seed):
    rng = random.Random(seed)
    r_a = rng.uniform(0.0, 3000.0)
    r_b = rng.uniform(0.0, 3000.0)
    e = expected_score(r_a, r_b)
    assert 0.0 < e < 1.0


# -- balanced sampling -----------------------------------------------------------


def _pool(scenario="s", groups=("human", "llm:m1"), passes=4, fails=4):
    out = []
    counter = 0
    for group in groups:
        if group == "human":
            writer = Writer.human()
        else:
            writer = Writer.llm(group.split(":", 1)[1])
        for passed, count in ((True, passes), (False, fails)):
            for _ in range(count):
                counter += 1
                email = EmailRecord(
                    email_id=f"{group}-{counter:03d}",
                    scenario_id=scenario,
                    writer=writer,
                    body=f"Body {counter}.",
                )
                verdict = Verdict(passed=passed, rationale="r", judge_model="j")
                out.append((email, verdict))
    return out


def test_sample_balanced_takes_three_passes_and_fails_per_group():
    cfg = TournamentConfig(rng_seed=5)
    pool = _pool(groups=("human", "llm:m1", "llm:m2"), passes=5, fails=5)
    subset = sample_balanced(pool, cfg)
    assert len(subset) == 3 * 6
    verdict_by_id = {e.email_id: v.passed for e, v in pool}
    for group in ("human", "m1", "m2"):
        chosen = [e for e in subset if e.writer.name == ("human" if group == "human" else group)]
        assert len(chosen) == 6
        assert sum(verdict_by_id[e.email_id] for e in chosen) == 3


def test_sample_balanced_is_seed_deterministic():
    pool = _pool(passes=6, fails=6)
    first = [e.email_id for e in sample_balanced(pool, TournamentConfig(rng_seed=3))]
    second = [e.email_id for e in sample_balanced(pool, TournamentConfig(rng_seed=3))]
    assert first == second


def test_sample_balanced_reports_the_starved_group():
    pool = _pool(groups=("human", "llm:m1"), passes=3, fails=2)
    with pytest.raises(InsufficientEmails) as err:
        sample_balanced(pool, TournamentConfig())
    assert err.value.needed == 3
    assert err.value.available == 2
    assert "fail" in err.value.group


def test_sample_balanced_keeps_rewrites_apart_from_llm_groups():
    pool = _pool(groups=("human",), passes=3, fails=3)
    rewrites = []
    for k in range(6):
        email = EmailRecord(
            email_id=f"rw-{k}",
            scenario_id="s",
            writer=Writer.rewrite(base_email_id="human-001", model_id="m1"),
            body="Rewritten body.",
        )
        rewrites.append(
            (email, Verdict(passed=k < 3, rationale="r", judge_model="j"))
        )
    subset = sample_balanced(pool + rewrites, TournamentConfig())
    kinds = {e.writer.kind for e in subset}
    assert kinds == {"human", "human_plus_llm"}
    assert len(subset) == 12


# -- schedules --------------------------------------------------------------------


def test_build_schedule_draws_min_k_counterparts_each():
    cfg = TournamentConfig(rng_seed=1)
    ids = [f"e{k}" for k in range(5)]
    schedule = build_schedule(ids, cfg)
    # k = min(10, 4) = 4 counterparts per email
    assert len(schedule) == 5 * 4
    for left, right in schedule:
        assert left != right
    for eid in ids:
        mine = [pair for pair in schedule if pair[0] == eid]
        assert len(mine) == 4
        assert len({right for _, right in mine}) == 4


def test_build_schedule_is_seed_deterministic_and_validates():
    ids = [f"e{k}" for k in range(12)]
    a = build_schedule(ids, TournamentConfig(rng_seed=9))
    b = build_schedule(ids, TournamentConfig(rng_seed=9))
    assert a == b
    with pytest.raises(SubsetTooSmall):
        build_schedule(["only"], TournamentConfig())


# -- pairwise judging --------------------------------------------------------------


def _email(eid, body, scenario="s1"):
    return EmailRecord(
        email_id=eid, scenario_id=scenario, writer=Writer.human(), body=body
    )


def test_run_comparison_winner_is_presentation_order_independent(registry):
    gateway = LlmGateway({"*": ProceduralStubProvider()})
    scenario = registry.get("s1")
    a = _email("a1", "First candidate body with some substance to weigh.")
    b = _email("b1", "Second candidate body making a different argument.")
    seeds = [0, 1, 2, 3, 4, 5, 6, 7]
    orders = {random.Random(s).random() < 0.5 for s in seeds}
    assert orders == {True, False}  # both presentations exercised
    winners = set()
    for seed in seeds:
        outcome = run_comparison(
            gateway, "judge-x", scenario, a, b, presentation_seed=seed
        )
        assert outcome.presentation_seed == seed
        winner_id = {"a": "a1", "b": "b1", "tie": "tie"}[outcome.winner]
        winners.add(winner_id)
    assert len(winners) == 1


def test_run_comparison_rejects_cross_scenario_pairs(registry):
    gateway = LlmGateway({"*": ProceduralStubProvider()})
    scenario = registry.get("s1")
    a = _email("a1", "Body.", scenario="s1")
    b = _email("b1", "Body.", scenario="s2")
    with pytest.raises(MixedPartition):
        run_comparison(gateway, "j", scenario, a, b)


def test_run_comparison_malformed_judge_output_becomes_a_tie(registry):
    provider = StubProvider(script=["not json at all", "still not json"])
    gateway = LlmGateway({"*": provider}, sleep_fn=lambda _s: None)
    scenario = registry.get("s1")
    outcome = run_comparison(
        gateway, "j", scenario, _email("a1", "A."), _email("b1", "B."),
        presentation_seed=11,
    )
    assert outcome.winner == "tie"
    assert outcome.rationale == "unparseable"
    assert outcome.presentation_seed == 11


def test_comparison_outcome_validation_and_round_trip():
    with pytest.raises(ValueError):
        ComparisonOutcome(
            judge_model="j",
            scenario_id="s",
            email_a="same",
            email_b="same",
            winner="a",
            rationale="r",
        )
    with pytest.raises(ValueError):
        ComparisonOutcome(
            judge_model="j",
            scenario_id="s",
            email_a="a",
            email_b="b",
            winner="first",
            rationale="r",
        )
    outcome = ComparisonOutcome(
        judge_model="j",
        scenario_id="s",
        email_a="a",
        email_b="b",
        winner="b",
        rationale="r",
        presentation_seed=42,
    )
    assert ComparisonOutcome.from_dict(outcome.to_dict()) == outcome


def test_rating_table_round_trip_and_validation():
    table = RatingTable(
        judge_model="j",
        scenario_id="s",
        ratings={"b": 1510.0, "a": 1490.0},
        processed_comparisons=1,
    )
    assert RatingTable.from_dict(table.to_dict()).ratings == dict(table.ratings)
    with pytest.raises(ValueError):
        RatingTable(
            judge_model="j", scenario_id="s", ratings={}, processed_comparisons=-1
        )


# -- rankings and disagreements ------------------------------------------------------


def test_rank_sorts_descending_with_lexicographic_ties():
    table = RatingTable(
        judge_model="j",
        scenario_id="s",
        ratings={"c": 1500.0, "a": 1500.0, "b": 1600.0},
        processed_comparisons=0,
    )
    assert rank(table) == ["b", "a", "c"]


def test_find_disagreements_hand_case():
    ranks_a = [f"e{k}" for k in range(30)]
    ranks_b = list(ranks_a)
    # move e0 to the bottom: displacement 29 for e0, 1 for everyone else
    ranks_b.append(ranks_b.pop(0))
    found = find_disagreements(ranks_a, ranks_b, threshold=20)
    assert found == {("e0", 1, 30)}
    assert find_disagreements(ranks_a, ranks_b, threshold=29) == set()


def test_find_disagreements_validation():
    with pytest.raises(ValueError):
        find_disagreements(["a", "b"], ["a", "b"], threshold=0)
    with pytest.raises(MismatchedEmailSets):
        find_disagreements(["a", "b"], ["a", "c"])
    with pytest.raises(MismatchedEmailSets):
        find_disagreements(["a", "b"], ["a", "b", "c"])


def test_tournament_config_validation():
    with pytest.raises(ValueError):
        TournamentConfig(per_writer_count=5, pass_count=3, fail_count=3)
    with pytest.raises(ValueError):
        TournamentConfig(per_writer_count=0, pass_count=0, fail_count=0)
    with pytest.raises(ValueError):
        TournamentConfig(neighbors_k=0)
