"""Shared domain types for word-alignment scoring of speech translation models.

Every type validates its invariants at construction and is immutable
afterwards, so instances can be shared freely across threads. Contribution
matrices are the one exception to hard validation: real attention exports
carry float rounding, so their health is reported through diagnostics
instead of constructor failures.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

import numpy as np

# Row-sum health thresholds: deviations above WARN are flagged, deviations
# above FAIL mark the matrix as unusable.
ROW_SUM_WARN = 1e-4
ROW_SUM_FAIL = 1e-2


class ValidationError(ValueError):
    """A domain object violates one of its invariants."""


class TaskKind(enum.Enum):
    """Translation setting; decides which sides carry timings."""

    T2T = "t2t"
    S2TT = "s2tt"
    S2ST = "s2st"

    @classmethod
    def parse(cls, text: str) -> TaskKind:
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ValidationError(f"unknown task kind: {text!r}") from None


@dataclass(frozen=True, order=True)
class AlignmentPoint:
    """A single word-level alignment link (source word, target word).

    Indices are 0-based and always word-level, never token-level.
    """

    src_word: int
    tgt_word: int

    def __post_init__(self) -> None:
        if self.src_word < 0 or self.tgt_word < 0:
            raise ValidationError(
                f"alignment point indices must be non-negative, "
                f"got ({self.src_word}, {self.tgt_word})"
            )


@dataclass(frozen=True)
class GoldAlignment:
    """Reference alignment: Sure (unambiguous) and Possible (ambiguous) links.

    The Sure set must be contained in the Possible set.
    """

    sure: frozenset[AlignmentPoint]
    possible: frozenset[AlignmentPoint]

    def __post_init__(self) -> None:
        object.__setattr__(self, "sure", frozenset(self.sure))
        object.__setattr__(self, "possible", frozenset(self.possible))
        stray = self.sure - self.possible
        if stray:
            shown = ", ".join(
                f"({p.src_word},{p.tgt_word})" for p in sorted(stray)[:5]
            )
            raise ValidationError(
                f"sure set is not contained in possible set; stray points: {shown}"
            )

    @classmethod
    def from_points(
        cls,
        sure: Iterable[AlignmentPoint],
        possible: Iterable[AlignmentPoint] = (),
    ) -> GoldAlignment:
        """Build a gold alignment, automatically including Sure in Possible."""
        s = frozenset(sure)
        return cls(sure=s, possible=s | frozenset(possible))

    def max_src_word(self) -> int:
        return max((p.src_word for p in self.possible), default=-1)

    def max_tgt_word(self) -> int:
        return max((p.tgt_word for p in self.possible), default=-1)


@dataclass(frozen=True)
class WordTiming:
    """One word with its start/end position in the audio, in seconds."""

    word: str
    start_s: float
    end_s: float

    def __post_init__(self) -> None:
        if self.start_s < 0:
            raise ValidationError(
                f"word {self.word!r}: start {self.start_s} is negative"
            )
        if not self.start_s < self.end_s:
            raise ValidationError(
                f"word {self.word!r}: start {self.start_s} >= end {self.end_s}"
            )

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


@dataclass(frozen=True)
class UtteranceTimeline:
    """Ordered, non-overlapping word timings covering one utterance."""

    words: tuple[WordTiming, ...]
    total_duration_s: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "words", tuple(self.words))
        if self.total_duration_s <= 0:
            raise ValidationError(
                f"total duration must be positive, got {self.total_duration_s}"
            )
        for k in range(len(self.words) - 1):
            if self.words[k].end_s > self.words[k + 1].start_s:
                raise ValidationError(
                    f"overlap between words {k} and {k + 1}: "
                    f"[{self.words[k].start_s}, {self.words[k].end_s}) vs "
                    f"[{self.words[k + 1].start_s}, {self.words[k + 1].end_s})"
                )
        if self.words and self.words[-1].end_s > self.total_duration_s:
            raise ValidationError(
                f"last word ends at {self.words[-1].end_s}, after the "
                f"total duration {self.total_duration_s}"
            )

    def __len__(self) -> int:
        return len(self.words)

    def durations(self) -> tuple[float, ...]:
        return tuple(w.duration_s for w in self.words)

    @property
    def last_end_s(self) -> float:
        """End of the final word; the reference span for token mapping."""
        if not self.words:
            raise ValidationError("timeline has no words")
        return self.words[-1].end_s


@dataclass(frozen=True)
class Diagnostic:
    """One validation finding on a contribution matrix."""

    severity: str  # "warning" | "error"
    code: str
    row: int | None
    col: int | None
    magnitude: float | None
    message: str


@dataclass(frozen=True, eq=False)
class ContributionMatrix:
    """Dense token-to-token contribution matrix.

    Rows are target tokens, columns are source tokens. Values are promoted
    to float64 and frozen. Health is reported via :func:`validate_contribution_matrix`
    rather than enforced, so slightly-off attention exports still load.
    """

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.values, dtype=np.float64, copy=True)
        if arr.ndim != 2:
            raise ValidationError(f"matrix must be 2-dimensional, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValidationError(f"matrix must be non-empty, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def n_target_tokens(self) -> int:
        return self.values.shape[0]

    @property
    def n_source_tokens(self) -> int:
        return self.values.shape[1]

    @cached_property
    def diagnostics(self) -> tuple[Diagnostic, ...]:
        return tuple(validate_contribution_matrix(self))


@dataclass(frozen=True, eq=False)
class WordContributionMap:
    """Word-to-word contribution matrix: rows target words, columns source words."""

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.values, dtype=np.float64, copy=True)
        if arr.ndim != 2:
            raise ValidationError(f"word map must be 2-dimensional, got shape {arr.shape}")
        if np.any(arr < 0):
            r, c = np.argwhere(arr < 0)[0]
            raise ValidationError(f"negative contribution at word cell ({r}, {c})")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def n_target_words(self) -> int:
        return self.values.shape[0]

    @property
    def n_source_words(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class HardAlignment:
    """Hypothesis alignment with exactly one source word per target word."""

    points: frozenset[AlignmentPoint]

    def __post_init__(self) -> None:
        object.__setattr__(self, "points", frozenset(self.points))
        targets = sorted(p.tgt_word for p in self.points)
        if targets != list(range(len(self.points))):
            raise ValidationError(
                "hard alignment must map each target word 0..n-1 to exactly "
                f"one source word; got target indices {targets}"
            )

    def __len__(self) -> int:
        return len(self.points)

    @cached_property
    def by_target(self) -> dict[int, int]:
        return {p.tgt_word: p.src_word for p in sorted(self.points)}


@dataclass(frozen=True)
class ScoreReport:
    """Per-sample scoring outcome with the counts and duration-weighted sums
    needed for corpus pooling."""

    sample_id: str
    saer: float
    tw_saer: float
    n_sure: int
    n_possible: int
    n_hypothesis: int
    n_hyp_sure: int       # |A ∩ S|
    n_hyp_possible: int   # |A ∩ P|
    w_hypothesis: float   # Σ_A w
    w_sure: float         # Σ_S w
    w_hyp_sure: float     # Σ_{A∩S} w
    w_hyp_possible: float  # Σ_{A∩P} w

    def __post_init__(self) -> None:
        counts = (
            self.n_sure, self.n_possible, self.n_hypothesis,
            self.n_hyp_sure, self.n_hyp_possible,
        )
        if any(c < 0 for c in counts):
            raise ValidationError(f"negative count in score report {self.sample_id!r}")
        for name in ("saer", "tw_saer"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0) or math.isnan(v):
                raise ValidationError(f"{name} out of [0, 1]: {v}")


def validate_contribution_matrix(m: ContributionMatrix) -> list[Diagnostic]:
    """Check non-negativity and row-stochasticity; return findings, never raise.

    Pure: the same matrix always yields the same diagnostics.
    """
    diags: list[Diagnostic] = []
    values = m.values
    for i, j in np.argwhere(values < 0):
        diags.append(Diagnostic(
            severity="error",
            code="negative-entry",
            row=int(i),
            col=int(j),
            magnitude=float(values[i, j]),
            message=f"negative contribution {values[i, j]!r} at ({i}, {j})",
        ))
    row_sums = values.sum(axis=1)
    for i, s in enumerate(row_sums):
        if not math.isfinite(s):
            diags.append(Diagnostic(
                severity="error",
                code="row-sum",
                row=int(i),
                col=None,
                magnitude=float("inf"),
                message=f"row {i} sums to {float(s)!r}",
            ))
            continue
        dev = abs(float(s) - 1.0)
        if dev <= ROW_SUM_WARN:
            continue
        severity = "error" if dev > ROW_SUM_FAIL else "warning"
        diags.append(Diagnostic(
            severity=severity,
            code="row-sum",
            row=int(i),
            col=None,
            magnitude=dev,
            message=f"row {i} sums to {float(s)!r} (deviation {dev:.3g})",
        ))
    return diags


def fatal_diagnostics(diags: Iterable[Diagnostic]) -> list[Diagnostic]:
    """The subset of diagnostics that should stop scoring."""
    return [d for d in diags if d.severity == "error"]
