"""Alignment error metrics over Sure/Possible gold sets.

All three scores share one structure: one minus a ratio of matched mass to
hypothesis-plus-sure mass. The plain variant counts alignment points; the
time-weighted variant weighs each point by word durations. Ratios are
evaluated in exact rational arithmetic and rounded to float once at the
end, which makes the equal-durations case land exactly on the unweighted
score instead of merely close to it.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import fsum
from typing import Iterable, Sequence

from .core import (
    AlignmentPoint,
    GoldAlignment,
    HardAlignment,
    ScoreReport,
    TaskKind,
    ValidationError,
)


class UndefinedScoreError(ValueError):
    """The score's denominator is empty, so the metric carries no information."""


@dataclass(frozen=True)
class WeightModel:
    """Word durations backing the per-alignment weights.

    Which durations must be present follows the task: speech-to-speech
    carries both sides, speech-to-text only the source side, text-to-text
    neither (every weight is 1).
    """

    task: TaskKind
    src_durations: tuple[float, ...] | None = None
    tgt_durations: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        need_src = self.task in (TaskKind.S2TT, TaskKind.S2ST)
        need_tgt = self.task is TaskKind.S2ST
        for name, durations, needed in (
            ("src_durations", self.src_durations, need_src),
            ("tgt_durations", self.tgt_durations, need_tgt),
        ):
            if needed and durations is None:
                raise ValidationError(f"{self.task.value} weight model requires {name}")
            if not needed and durations is not None:
                raise ValidationError(f"{self.task.value} weight model must not carry {name}")
            if durations is not None:
                object.__setattr__(self, name, tuple(float(d) for d in durations))
                if any(d <= 0 for d in durations):
                    raise ValidationError(f"{name} must be strictly positive")


def _duration(durations: Sequence[float], idx: int, side: str) -> Fraction:
    if not 0 <= idx < len(durations):
        raise ValidationError(
            f"{side} word index {idx} outside duration array of length {len(durations)}"
        )
    return Fraction(durations[idx])


def _weight(point: AlignmentPoint, wm: WeightModel) -> Fraction:
    if wm.task is TaskKind.T2T:
        return Fraction(1)
    w = _duration(wm.src_durations, point.src_word, "source")
    if wm.task is TaskKind.S2ST:
        w *= _duration(wm.tgt_durations, point.tgt_word, "target")
    return w


def alignment_weight(point: AlignmentPoint, wm: WeightModel) -> float:
    """Weight of one alignment point: source duration times target duration
    (target side counts as 1 when it is text)."""
    return float(_weight(point, wm))


def _error_rate(matched: Fraction, total: Fraction) -> float:
    if total == 0:
        raise UndefinedScoreError("empty hypothesis and empty sure set")
    return float(1 - matched / total)


def aer(gold: GoldAlignment, hypothesis: Iterable[AlignmentPoint]) -> float:
    """Classic alignment error rate of a hypothesis point set."""
    a = frozenset(hypothesis)
    matched = Fraction(len(a & gold.sure) + len(a & gold.possible))
    return _error_rate(matched, Fraction(len(a) + len(gold.sure)))


def saer(gold: GoldAlignment, hard: HardAlignment) -> float:
    """Alignment error rate of a hard word-level alignment.

    The formula is the classic one; only the construction of the sets
    differs (they come from word-aggregated contribution maps).
    """
    return aer(gold, hard.points)


def tw_saer(gold: GoldAlignment, hard: HardAlignment, wm: WeightModel) -> float:
    """Duration-weighted alignment error rate.

    Each point contributes its alignment weight instead of a unit count;
    the denominator pools the hypothesis and sure weights, mirroring the
    unweighted formula.
    """
    a = hard.points
    matched = sum((_weight(p, wm) for p in a & gold.sure), Fraction(0))
    matched += sum((_weight(p, wm) for p in a & gold.possible), Fraction(0))
    total = sum((_weight(p, wm) for p in a), Fraction(0))
    total += sum((_weight(p, wm) for p in gold.sure), Fraction(0))
    return _error_rate(matched, total)


def score_sample(
    sample_id: str,
    gold: GoldAlignment,
    hard: HardAlignment,
    wm: WeightModel,
) -> ScoreReport:
    """Compute both scores plus the pooling counts/weights for one sample."""
    a = hard.points
    hyp_sure = a & gold.sure
    hyp_possible = a & gold.possible

    def pool(points: Iterable[AlignmentPoint]) -> float:
        return float(sum((_weight(p, wm) for p in points), Fraction(0)))

    return ScoreReport(
        sample_id=sample_id,
        saer=saer(gold, hard),
        tw_saer=tw_saer(gold, hard, wm),
        n_sure=len(gold.sure),
        n_possible=len(gold.possible),
        n_hypothesis=len(a),
        n_hyp_sure=len(hyp_sure),
        n_hyp_possible=len(hyp_possible),
        w_hypothesis=pool(a),
        w_sure=pool(gold.sure),
        w_hyp_sure=pool(hyp_sure),
        w_hyp_possible=pool(hyp_possible),
    )


@dataclass(frozen=True)
class MetricPair:
    saer: float
    tw_saer: float


@dataclass(frozen=True)
class CorpusAggregate:
    """Corpus scores pooled two ways.

    micro recomputes the formulas on counts and weights summed across
    samples; macro is the unweighted mean of per-sample scores.
    """

    micro: MetricPair
    macro: MetricPair


def corpus_aggregate(reports: Sequence[ScoreReport]) -> CorpusAggregate:
    if not reports:
        raise UndefinedScoreError("cannot aggregate an empty report list")
    micro_saer = _error_rate(
        Fraction(sum(r.n_hyp_sure + r.n_hyp_possible for r in reports)),
        Fraction(sum(r.n_hypothesis + r.n_sure for r in reports)),
    )
    micro_tw = _error_rate(
        sum((Fraction(r.w_hyp_sure) + Fraction(r.w_hyp_possible) for r in reports),
            Fraction(0)),
        sum((Fraction(r.w_hypothesis) + Fraction(r.w_sure) for r in reports),
            Fraction(0)),
    )
    n = len(reports)
    return CorpusAggregate(
        micro=MetricPair(saer=micro_saer, tw_saer=micro_tw),
        macro=MetricPair(
            saer=fsum(r.saer for r in reports) / n,
            tw_saer=fsum(r.tw_saer for r in reports) / n,
        ),
    )
