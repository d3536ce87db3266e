"""Aggregate statistics over recorded game data.

Pass rates and hybrid tables, chance-corrected agreement (nominal alpha for
binary verdicts, interval alpha for Likert tone means), average pairwise
Spearman correlation, agreement-vs-capability regression, tact-range
analysis over tournament rankings, and length-control sampling.

All functions are pure and operate on in-memory data. The agreement
coefficients are implemented directly from their defining sums rather than
delegated to a generic library, so the exact denominator structure is
auditable here.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence, Union

from scipy import stats as _scipy_stats

from .records import EmailRecord, Verdict

Label = Union[bool, str]


class StatsError(Exception):
    """Base class for statistics failures."""


class EmptyInput(StatsError):
    pass


class LengthMismatch(StatsError):
    pass


class DegenerateDistribution(StatsError):
    """Expected disagreement is zero; the coefficient is undefined."""


class IncompleteMatrix(StatsError):
    pass


class DegenerateRanking(StatsError):
    pass


class InsufficientPoints(StatsError):
    pass


class MissingMetric(StatsError):
    pass


class MissingScores(StatsError):
    pass


@dataclass(frozen=True)
class VerdictMatrix:
    """Complete pass/fail matrix: every judge labelled every attempt."""

    attempts: tuple[str, ...]
    judges: tuple[str, ...]
    labels: Mapping[tuple[str, str], str]  # (judge, attempt) -> "pass" | "fail"

    def __post_init__(self) -> None:
        for judge in self.judges:
            for attempt in self.attempts:
                if (judge, attempt) not in self.labels:
                    raise IncompleteMatrix(f"missing label for ({judge}, {attempt})")

    def judge_labels(self, judge: str) -> list[str]:
        return [self.labels[(judge, a)] for a in self.attempts]


@dataclass(frozen=True)
class RatingMatrix:
    """Complete real-valued matrix of per-email means by annotator."""

    items: tuple[str, ...]
    annotators: tuple[str, ...]
    values: Mapping[tuple[str, str], float]  # (annotator, item) -> value

    def __post_init__(self) -> None:
        for ann in self.annotators:
            for item in self.items:
                if (ann, item) not in self.values:
                    raise IncompleteMatrix(f"missing value for ({ann}, {item})")

    def row(self, annotator: str) -> list[float]:
        return [float(self.values[(annotator, item)]) for item in self.items]


@dataclass(frozen=True)
class JudgeMeta:
    """Capability metadata for one judge model."""

    judge_model: str
    size_billions: Optional[float] = None
    arena_elo: Optional[float] = None

    def __post_init__(self) -> None:
        if self.size_billions is None and self.arena_elo is None:
            raise StatsError(f"{self.judge_model}: need size or elo for regression use")


def _as_pass(label: Label) -> bool:
    if isinstance(label, bool):
        return label
    if label == "pass":
        return True
    if label == "fail":
        return False
    raise StatsError(f"not a pass/fail label: {label!r}")


def pass_rate(verdicts: Sequence[Label]) -> float:
    """Fraction of attempts that passed."""
    if not verdicts:
        raise EmptyInput("pass_rate over zero attempts")
    passes = sum(1 for v in verdicts if _as_pass(v))
    return passes / len(verdicts)


def hybrid_table(
    records: Iterable[tuple[EmailRecord, Verdict]],
) -> dict[tuple[str, str, str], float]:
    """Pass rate per (scenario, writer, category) cell.

    Category is the writer kind (human / llm / human_plus_llm); the writer
    key is "human" or the model id. Groups with no records are absent from
    the map, never reported as zero.
    """
    groups: dict[tuple[str, str, str], list[bool]] = {}
    for email, verdict in records:
        key = (email.scenario_id, email.writer.name, email.writer.kind)
        groups.setdefault(key, []).append(verdict.passed)
    return {key: sum(vs) / len(vs) for key, vs in groups.items()}


def alpha_nominal(labels_i: Sequence[Label], labels_j: Sequence[Label]) -> float:
    """Chance-corrected agreement between two judges' binary verdicts.

    alpha = 1 - D_o / D_e with D_o = n_d / n the observed disagreement
    fraction and D_e = n_P * n_F / (n * (2n - 1)) the expected disagreement
    when the 2n pooled labels are drawn without replacement.
    """
    if len(labels_i) != len(labels_j):
        raise LengthMismatch(f"{len(labels_i)} vs {len(labels_j)} labels")
    n = len(labels_i)
    if n < 2:
        raise EmptyInput("need at least 2 labelled attempts")
    a = [_as_pass(v) for v in labels_i]
    b = [_as_pass(v) for v in labels_j]
    n_d = sum(1 for x, y in zip(a, b) if x != y)
    n_pass = sum(a) + sum(b)
    n_fail = 2 * n - n_pass
    if n_pass == 0 or n_fail == 0:
        raise DegenerateDistribution("pooled labels contain a single class")
    d_o = n_d / n
    d_e = (n_pass * n_fail) / (n * (2 * n - 1))
    return 1.0 - d_o / d_e


def alpha_nominal_matrix(matrix: VerdictMatrix) -> dict[tuple[str, str], float]:
    """alpha_nominal for every unordered judge pair of a complete matrix."""
    out: dict[tuple[str, str], float] = {}
    for i, ji in enumerate(matrix.judges):
        for jj in matrix.judges[i + 1 :]:
            out[(ji, jj)] = alpha_nominal(matrix.judge_labels(ji), matrix.judge_labels(jj))
    return out


def alpha_interval(m: RatingMatrix) -> float:
    """Interval-scale agreement over a complete rating matrix.

    Distance d(a, b) = (a - b)^2. Observed disagreement averages squared
    annotator-pair differences within each item; expected disagreement
    averages squared differences over every ordered pair of distinct
    (item, annotator) cells, i.e. a pool of n*C values with the n*C - 1
    denominator structure kept literal.
    """
    n = len(m.items)
    c = len(m.annotators)
    if c < 2:
        raise IncompleteMatrix("need at least 2 annotators")
    if n < 2:
        raise IncompleteMatrix("need at least 2 items")

    rows = {ann: m.row(ann) for ann in m.annotators}
    pooled = [rows[ann][i] for i in range(n) for ann in m.annotators]
    if max(pooled) == min(pooled):
        raise DegenerateDistribution("all ratings identical; expected disagreement is zero")

    d_o = 0.0
    for i in range(n):
        within = 0.0
        for ca in m.annotators:
            for cb in m.annotators:
                if ca == cb:
                    continue
                within += (rows[ca][i] - rows[cb][i]) ** 2
        d_o += within / (c * (c - 1))
    d_o /= n

    total = len(pooled)
    d_e = 0.0
    for x in range(total):
        for y in range(total):
            if x == y:
                continue
            d_e += (pooled[x] - pooled[y]) ** 2
    d_e /= total * (total - 1)

    return 1.0 - d_o / d_e


def avg_pairwise_spearman(m: RatingMatrix) -> float:
    """Mean Spearman rank correlation over all annotator pairs.

    Ties receive average ranks (the standard convention; ties are common
    because per-email values are paragraph means).
    """
    if len(m.annotators) < 2:
        raise IncompleteMatrix("need at least 2 annotators")
    for ann in m.annotators:
        row = m.row(ann)
        if max(row) == min(row):
            raise DegenerateRanking(f"annotator {ann} rated every item identically")
    corr = []
    for i, ca in enumerate(m.annotators):
        for cb in m.annotators[i + 1 :]:
            rho = _scipy_stats.spearmanr(m.row(ca), m.row(cb)).statistic
            corr.append(float(rho))
    return sum(corr) / len(corr)


def agreement_regression(
    points: Sequence[tuple[tuple[JudgeMeta, JudgeMeta], float]],
    axis: str,
) -> tuple[float, float, float]:
    """OLS fit of pairwise agreement against judge capability.

    x is the mean of the two judges' capability metrics: log10 of parameter
    count for axis "size", raw rating for axis "elo". Judge pairs where
    either side lacks the metric are excluded, not imputed.
    """
    if axis not in ("size", "elo"):
        raise StatsError(f"unknown axis {axis!r}")
    xs: list[float] = []
    ys: list[float] = []
    for (meta_i, meta_j), alpha in points:
        if axis == "size":
            if meta_i.size_billions is None or meta_j.size_billions is None:
                continue
            x = (math.log10(meta_i.size_billions) + math.log10(meta_j.size_billions)) / 2.0
        else:
            if meta_i.arena_elo is None or meta_j.arena_elo is None:
                continue
            x = (meta_i.arena_elo + meta_j.arena_elo) / 2.0
        xs.append(x)
        ys.append(alpha)
    if not xs:
        raise MissingMetric(f"no judge pair carries the {axis} metric")
    if len(xs) < 2:
        raise InsufficientPoints("regression needs at least 2 usable points")
    if len(set(ys)) == 1:
        # scipy returns nan r for zero variance in y; the line is flat
        return 0.0, ys[0], 0.0
    fit = _scipy_stats.linregress(xs, ys)
    return float(fit.slope), float(fit.intercept), float(fit.rvalue)


def tact_range(
    ranked: Sequence[str],
    tact_scores: Mapping[str, float],
    top_n: int = 10,
) -> tuple[float, float]:
    """(min, max) tact over the top_n ranked emails."""
    if top_n < 1 or top_n > len(ranked):
        raise StatsError(f"top_n {top_n} out of range for {len(ranked)} ranked emails")
    top = ranked[:top_n]
    missing = [e for e in top if e not in tact_scores]
    if missing:
        raise MissingScores(f"unscored emails in top {top_n}: {missing}")
    scores = [float(tact_scores[e]) for e in top]
    return min(scores), max(scores)


def category_mean(
    tact_scores: Mapping[str, float],
    categories: Mapping[str, str],
    category: str,
) -> float:
    """Mean tact over every scored email in one writer category."""
    scores = [float(s) for e, s in tact_scores.items() if categories.get(e) == category]
    if not scores:
        raise EmptyInput(f"no scored emails in category {category!r}")
    return sum(scores) / len(scores)


def sample_target_length(human_lengths: Sequence[int], seed: int) -> int:
    """Seeded uniform draw from the empirical length list (with replacement)."""
    if not human_lengths:
        raise EmptyInput("empty length distribution")
    for length in human_lengths:
        if length <= 0:
            raise StatsError(f"non-positive length {length}")
    return random.Random(seed).choice(list(human_lengths))
