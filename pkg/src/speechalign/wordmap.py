"""Token-to-token contribution matrices to word-to-word maps.

Speech tokens are mapped to words by assuming a linear relation between
token index and audio time: a word occupying [start, end) seconds of an
utterance whose words end at T seconds owns tokens
[ceil(start*n/T), floor(end*n/T)). Source-word columns are summed,
target-word rows are averaged, and hard alignments take the argmax per
target word. Text sides skip the timing step and use explicit token spans.

Short words at coarse token resolution can produce an empty interval
(ceil crossing floor). The default keeps them empty, yielding an all-zero
column or row; "repair-empty-spans" instead assigns the single token
nearest the word's midpoint, which may also be claimed by a neighbour.
Either way a warning is emitted.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .core import (
    AlignmentPoint,
    ContributionMatrix,
    HardAlignment,
    TaskKind,
    UtteranceTimeline,
    ValidationError,
    WordContributionMap,
)

MODE_FAITHFUL = "paper-faithful"
MODE_REPAIR = "repair-empty-spans"
MODES = (MODE_FAITHFUL, MODE_REPAIR)


class AggregationWarning(UserWarning):
    """Degenerate input survived aggregation (empty span, all-zero row)."""


@dataclass(frozen=True)
class TokenSpan:
    """Half-open token interval [start, end) owned by one word."""

    start: int
    end: int

    def __post_init__(self) -> None:
        if self.start < 0 or self.end < 0:
            raise ValidationError(f"token span bounds must be non-negative: {self}")

    @property
    def is_empty(self) -> bool:
        return self.start >= self.end

    def __len__(self) -> int:
        return max(0, self.end - self.start)


SideSpec = Union[UtteranceTimeline, Sequence[TokenSpan]]


def check_mode(mode: str) -> str:
    if mode not in MODES:
        raise ValidationError(f"unknown empty-span mode {mode!r}; expected one of {MODES}")
    return mode


def token_span_for_word(
    timeline: UtteranceTimeline, word_idx: int, n_tokens: int
) -> TokenSpan:
    """Tokens owned by one timed word under the linear time-token relation.

    The reference duration is the end of the *last word*, not the total
    audio length, so trailing silence never stretches the mapping. The
    result is clamped to [0, n_tokens]; emptiness is visible via
    ``is_empty`` rather than raised.
    """
    if not 0 <= word_idx < len(timeline.words):
        raise ValidationError(f"word index {word_idx} outside timeline of {len(timeline.words)} words")
    if n_tokens < 1:
        raise ValidationError(f"need at least one token, got {n_tokens}")
    max_duration = timeline.last_end_s
    w = timeline.words[word_idx]

    def clamp(t: int) -> int:
        return min(max(t, 0), n_tokens)

    return TokenSpan(
        start=clamp(math.ceil(w.start_s * n_tokens / max_duration)),
        end=clamp(math.floor(w.end_s * n_tokens / max_duration)),
    )


def _repair_token(timeline: UtteranceTimeline, word_idx: int, n_tokens: int) -> int:
    w = timeline.words[word_idx]
    mid = (w.start_s + w.end_s) / 2
    t = round(mid * n_tokens / timeline.last_end_s)
    return min(max(t, 0), n_tokens - 1)


def spans_for_timeline(
    timeline: UtteranceTimeline,
    n_tokens: int,
    mode: str = MODE_FAITHFUL,
    side: str = "source",
) -> list[TokenSpan]:
    """Token spans for every word of a timed side, applying the empty-span policy."""
    check_mode(mode)
    spans = []
    for idx in range(len(timeline.words)):
        span = token_span_for_word(timeline, idx, n_tokens)
        if span.is_empty:
            if mode == MODE_REPAIR:
                t = _repair_token(timeline, idx, n_tokens)
                warnings.warn(
                    f"{side} word {idx} maps to an empty token interval "
                    f"[{span.start}, {span.end}); repaired to token {t}",
                    AggregationWarning,
                    stacklevel=2,
                )
                span = TokenSpan(t, t + 1)
            else:
                warnings.warn(
                    f"{side} word {idx} maps to an empty token interval "
                    f"[{span.start}, {span.end}); its contributions will be zero",
                    AggregationWarning,
                    stacklevel=2,
                )
        spans.append(span)
    return spans


def _check_bounds(spans: Sequence[TokenSpan], n_tokens: int, axis: str) -> None:
    for idx, span in enumerate(spans):
        if span.end > n_tokens or span.start > n_tokens:
            raise ValidationError(
                f"{axis} span {idx} = [{span.start}, {span.end}) exceeds "
                f"{n_tokens} tokens"
            )


def aggregate_source(
    matrix: ContributionMatrix, src_spans: Sequence[TokenSpan]
) -> np.ndarray:
    """Sum token columns into one column per source word.

    Joint contribution of a word is the sum of its tokens' contributions;
    empty spans produce all-zero columns.
    """
    values = matrix.values
    _check_bounds(src_spans, values.shape[1], "source")
    out = np.zeros((values.shape[0], len(src_spans)), dtype=np.float64)
    for idx, span in enumerate(src_spans):
        if not span.is_empty:
            out[:, idx] = values[:, span.start:span.end].sum(axis=1)
    return out


def aggregate_target(
    c_w2t: np.ndarray, tgt_spans: Sequence[TokenSpan]
) -> WordContributionMap:
    """Average token rows into one row per target word.

    Each target token carries its own distribution over the source, so a
    word's row is the mean of its tokens' rows; empty spans produce
    all-zero rows.
    """
    _check_bounds(tgt_spans, c_w2t.shape[0], "target")
    out = np.zeros((len(tgt_spans), c_w2t.shape[1]), dtype=np.float64)
    for idx, span in enumerate(tgt_spans):
        if not span.is_empty:
            out[idx, :] = c_w2t[span.start:span.end, :].mean(axis=0)
    return WordContributionMap(values=out)


def _resolve_side(
    side: SideSpec,
    n_tokens: int,
    *,
    speech: bool,
    mode: str,
    name: str,
) -> list[TokenSpan]:
    if speech:
        if not isinstance(side, UtteranceTimeline):
            raise ValidationError(f"{name} side must be a timeline for this task")
        return spans_for_timeline(side, n_tokens, mode, side=name)
    if isinstance(side, UtteranceTimeline):
        raise ValidationError(f"{name} side must be token spans for this task")
    spans = list(side)
    for idx, span in enumerate(spans):
        if span.is_empty:
            warnings.warn(
                f"{name} word {idx} has an empty token span; "
                f"its contributions will be zero",
                AggregationWarning,
                stacklevel=3,
            )
    return spans


def contributions_to_word_map(
    matrix: ContributionMatrix,
    src_side: SideSpec,
    tgt_side: SideSpec,
    task: TaskKind,
    mode: str = MODE_FAITHFUL,
) -> WordContributionMap:
    """Full preprocessing: token matrix plus side descriptors to a word map.

    Speech sides are described by timelines, text sides by token spans;
    the task decides which is which. Output is |target words| x |source
    words|. Tokens in inter-word gaps are never assigned, so row sums may
    fall below 1; no renormalization is applied.
    """
    check_mode(mode)
    src_speech = task in (TaskKind.S2TT, TaskKind.S2ST)
    tgt_speech = task is TaskKind.S2ST
    src_spans = _resolve_side(
        src_side, matrix.n_source_tokens, speech=src_speech, mode=mode, name="source"
    )
    tgt_spans = _resolve_side(
        tgt_side, matrix.n_target_tokens, speech=tgt_speech, mode=mode, name="target"
    )
    c_w2t = aggregate_source(matrix, src_spans)
    return aggregate_target(c_w2t, tgt_spans)


def extract_hard_alignment(word_map: WordContributionMap) -> HardAlignment:
    """One alignment point per target word: the source word with the highest
    contribution, ties broken toward the lowest source index."""
    values = word_map.values
    if values.shape[0] < 1 or values.shape[1] < 1:
        raise ValidationError(f"word map must be non-empty, got shape {values.shape}")
    points = []
    for i in range(values.shape[0]):
        row = values[i, :]
        if not row.any():
            warnings.warn(
                f"target word {i} has an all-zero contribution row; "
                f"aligning it to source word 0",
                AggregationWarning,
                stacklevel=2,
            )
        points.append(AlignmentPoint(src_word=int(np.argmax(row)), tgt_word=i))
    return HardAlignment(points=frozenset(points))
