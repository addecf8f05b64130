"""Word timelines from phonemizer output and duration-predictor dumps.

A phonemizer emits a unit sequence (phonemes, blanks, punctuation), each
with an integer duration. Blank-delimited phoneme runs map monotonically
onto the utterance's words; blank and punctuation durations are folded
half into each neighbouring word. Dividing the audio length by the total
unit count converts the per-word unit totals into a contiguous timeline.

The monotone mapping breaks when the phonemizer merges adjacent words
into one run (fusion: short function words, tokenizer-split clitics) or
expands one word into several runs (fragmentation: numbers, years,
percentages). Both cases are reconciled by data-driven rules: a fused
run's duration is split among its words proportionally to their lengths,
fragmented runs are merged back onto the original word, and percent-style
expansions keep the final run for the unit word. Substitution tables
("EU" -> "E U") feed the phonemizer a spoken form and come back as
fragmentation rules.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .core import UtteranceTimeline, ValidationError, WordTiming
from .ingest import ParseError


class MatchingError(ValueError):
    """Phoneme groups cannot be reconciled with the word sequence."""


class UnitKind(enum.Enum):
    PHONEME = "phoneme"
    BLANK = "blank"
    PUNCTUATION = "punctuation"


@dataclass(frozen=True)
class PhonemeUnit:
    """One phonemizer unit with its predicted duration in integer units."""

    symbol: str
    duration_units: int
    kind: UnitKind

    def __post_init__(self) -> None:
        if self.duration_units < 0:
            raise ValidationError(
                f"unit {self.symbol!r} has negative duration {self.duration_units}"
            )


@dataclass(frozen=True)
class PhonemeSequence:
    units: tuple[PhonemeUnit, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "units", tuple(self.units))
        if not any(u.kind is UnitKind.PHONEME for u in self.units):
            raise ValidationError("phoneme sequence contains no phoneme units")

    def total_units(self) -> int:
        return sum(u.duration_units for u in self.units)


class RulePolicy(enum.Enum):
    PROPORTIONAL_SPLIT = "proportional-split"
    MERGE_ALL = "merge-all"
    MERGE_EXCEPT_LAST = "merge-except-last"


@dataclass(frozen=True)
class MatchRule:
    """Reconciliation rule: regex patterns over consecutive words plus a policy.

    proportional-split: the matched words share a single phoneme run.
    merge-all: one word owns `fragments` consecutive runs.
    merge-except-last: a pair (number, unit) owns `fragments` runs, the
    last run belonging to the unit word.

    `fragments` may be omitted for at most one rule application per
    utterance; the count is then inferred from the leftover run budget.
    """

    patterns: tuple[str, ...]
    policy: RulePolicy
    fragments: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "patterns", tuple(self.patterns))
        if self.policy is RulePolicy.PROPORTIONAL_SPLIT:
            if len(self.patterns) < 2:
                raise ValidationError("proportional-split rule needs at least two words")
            if self.fragments is not None:
                raise ValidationError("proportional-split rule takes no fragment count")
        elif self.policy is RulePolicy.MERGE_ALL:
            if len(self.patterns) != 1:
                raise ValidationError("merge-all rule matches exactly one word")
            if self.fragments is not None and self.fragments < 1:
                raise ValidationError("merge-all rule needs at least one fragment")
        else:
            if len(self.patterns) != 2:
                raise ValidationError("merge-except-last rule matches a word pair")
            if self.fragments is not None and self.fragments < 2:
                raise ValidationError("merge-except-last rule needs at least two fragments")
        for p in self.patterns:
            try:
                re.compile(p)
            except re.error as e:
                raise ValidationError(f"bad word pattern {p!r}: {e}") from None

    def matches_at(self, words: Sequence[str], w: int) -> bool:
        if w + len(self.patterns) > len(words):
            return False
        return all(
            re.fullmatch(p, words[w + k]) for k, p in enumerate(self.patterns)
        )


@dataclass(frozen=True)
class SubstitutionTable:
    """Spoken-form replacements applied before phonemization."""

    mapping: Mapping[str, str]

    def __post_init__(self) -> None:
        object.__setattr__(self, "mapping", dict(self.mapping))
        for word, expansion in self.mapping.items():
            if not expansion.split():
                raise ValidationError(f"substitution for {word!r} expands to nothing")


@dataclass(frozen=True)
class MatchSite:
    """One reconciled stretch: words [w0, w1] own phoneme runs [g0, g1]."""

    policy: RulePolicy | None  # None = direct 1:1
    words: tuple[int, int]
    groups: tuple[int, int]


@dataclass(frozen=True)
class MatchResult:
    """Outcome of phoneme-word matching.

    `groups` holds the phoneme units assigned to each word, in order;
    concatenated they reproduce the phoneme-kind unit sequence exactly.
    `sites` records how runs and words were paired, which the duration
    step needs to apply fusion splits and fragmentation merges.
    """

    words: tuple[str, ...]
    groups: tuple[tuple[PhonemeUnit, ...], ...]
    sites: tuple[MatchSite, ...]


def _proportional_integers(total: int, weights: Sequence[int]) -> list[int]:
    """Split `total` into integer shares proportional to `weights`.

    Largest-remainder rounding; remainder ties go to the lowest index.
    The shares always sum exactly to `total`.
    """
    denom = sum(weights)
    if denom <= 0:
        raise ValidationError("proportional split needs positive weights")
    quotas = [Fraction(total * w, denom) for w in weights]
    shares = [int(q) for q in quotas]
    leftovers = sorted(
        range(len(weights)), key=lambda i: (shares[i] - quotas[i], i)
    )
    for i in leftovers[: total - sum(shares)]:
        shares[i] += 1
    return shares


def _raw_groups(seq: PhonemeSequence) -> list[tuple[int, int]]:
    """Half-open unit-index ranges of the blank/punctuation-delimited phoneme runs."""
    groups = []
    start = None
    for idx, unit in enumerate(seq.units):
        if unit.kind is UnitKind.PHONEME:
            if start is None:
                start = idx
        elif start is not None:
            groups.append((start, idx))
            start = None
    if start is not None:
        groups.append((start, len(seq.units)))
    return groups


def _first_rule(
    rules: Sequence[MatchRule], words: Sequence[str], w: int
) -> MatchRule | None:
    for rule in rules:
        if rule.matches_at(words, w):
            return rule
    return None


def _groups_needed_after(
    words: Sequence[str], rules: Sequence[MatchRule], start: int
) -> int | None:
    """Exact phoneme-run demand of words[start:], or None if another rule
    with an unknown fragment count lies ahead."""
    w = start
    need = 0
    while w < len(words):
        rule = _first_rule(rules, words, w)
        if rule is None:
            need += 1
            w += 1
        elif rule.policy is RulePolicy.PROPORTIONAL_SPLIT:
            need += 1
            w += len(rule.patterns)
        else:
            if rule.fragments is None:
                return None
            need += rule.fragments
            w += len(rule.patterns)
    return need


def match_phonemes_to_words(
    seq: PhonemeSequence,
    words: Sequence[str],
    rules: Sequence[MatchRule] = (),
) -> MatchResult:
    """Monotonically map blank-delimited phoneme runs onto words.

    Without rules the mapping is 1:1. Rules are tried in order at each
    word position and the first match wins; they fire unconditionally, so
    a rule file should describe what the phonemizer actually did for this
    utterance.
    """
    words = list(words)
    if not words:
        raise ValidationError("word list is empty")
    ranges = _raw_groups(seq)
    n_groups = len(ranges)
    sites: list[MatchSite] = []
    w = g = 0
    while w < len(words):
        rule = _first_rule(rules, words, w)
        if rule is None:
            span_w, span_g = 1, 1
        elif rule.policy is RulePolicy.PROPORTIONAL_SPLIT:
            span_w, span_g = len(rule.patterns), 1
        else:
            span_w = len(rule.patterns)
            if rule.fragments is not None:
                span_g = rule.fragments
            else:
                need_after = _groups_needed_after(
                    words, rules, w + len(rule.patterns)
                )
                if need_after is None:
                    raise MatchingError(
                        "cannot infer fragment counts: more than one rule "
                        "application without an explicit count"
                    )
                span_g = (n_groups - g) - need_after
                minimum = 2 if rule.policy is RulePolicy.MERGE_EXCEPT_LAST else 1
                if span_g < minimum:
                    raise MatchingError(
                        f"inferred fragment count {span_g} for words "
                        f"{words[w:w + span_w]} is below the minimum {minimum}"
                    )
        if g + span_g > n_groups:
            break
        sites.append(MatchSite(
            policy=rule.policy if rule else None,
            words=(w, w + span_w - 1),
            groups=(g, g + span_g - 1),
        ))
        w += span_w
        g += span_g
    if w != len(words) or g != n_groups:
        raise MatchingError(
            f"cannot match {len(words)} words to {n_groups} phoneme groups: "
            f"{len(words) - w} words and {n_groups - g} groups left unmatched"
        )

    group_units = [
        tuple(u for u in seq.units[a:b] if u.kind is UnitKind.PHONEME)
        for a, b in ranges
    ]
    word_groups: list[tuple[PhonemeUnit, ...]] = []
    for site in sites:
        w0, w1 = site.words
        g0, g1 = site.groups
        merged = tuple(u for k in range(g0, g1 + 1) for u in group_units[k])
        if site.policy is None:
            word_groups.append(group_units[g0])
        elif site.policy is RulePolicy.PROPORTIONAL_SPLIT:
            chars = [len(words[k]) for k in range(w0, w1 + 1)]
            counts = _proportional_integers(len(merged), chars)
            pos = 0
            for c in counts:
                word_groups.append(merged[pos:pos + c])
                pos += c
        elif site.policy is RulePolicy.MERGE_ALL:
            word_groups.append(merged)
        else:  # MERGE_EXCEPT_LAST
            last = group_units[g1]
            word_groups.append(merged[: len(merged) - len(last)])
            word_groups.append(last)
    return MatchResult(
        words=tuple(words), groups=tuple(word_groups), sites=tuple(sites)
    )


def _redistributed_group_durations(seq: PhonemeSequence) -> list[int]:
    """Per-run unit totals with blank/punctuation durations folded in.

    Every separator unit gives the ceiling half of its duration to the
    preceding run and the floor half to the succeeding one; at the
    utterance edges the sole neighbour takes everything.
    """
    ranges = _raw_groups(seq)
    totals = [
        sum(u.duration_units for u in seq.units[a:b] if u.kind is UnitKind.PHONEME)
        for a, b in ranges
    ]
    for idx, unit in enumerate(seq.units):
        if unit.kind is UnitKind.PHONEME:
            continue
        prev_g = next_g = None
        for k, (a, b) in enumerate(ranges):
            if b <= idx:
                prev_g = k
            if a > idx and next_g is None:
                next_g = k
        d = unit.duration_units
        if prev_g is not None and next_g is not None:
            totals[prev_g] += (d + 1) // 2
            totals[next_g] += d // 2
        elif prev_g is not None:
            totals[prev_g] += d
        else:
            totals[next_g] += d
    return totals


def word_durations_units(match: MatchResult, seq: PhonemeSequence) -> list[int]:
    """Integer duration of each word, conserving the sequence total.

    Direct words take their run's redistributed total; fused runs are
    split proportionally to word length in characters; fragmented runs
    are merged (keeping the last run separate for percent-style pairs).
    """
    group_durations = _redistributed_group_durations(seq)
    durations: list[int] = []
    for site in match.sites:
        g0, g1 = site.groups
        total = sum(group_durations[g0:g1 + 1])
        if site.policy is None:
            durations.append(total)
        elif site.policy is RulePolicy.PROPORTIONAL_SPLIT:
            w0, w1 = site.words
            durations.extend(
                split_fused_duration(total, [match.words[k] for k in range(w0, w1 + 1)])
            )
        elif site.policy is RulePolicy.MERGE_ALL:
            durations.append(merge_fragmented_duration(
                group_durations[g0:g1 + 1], RulePolicy.MERGE_ALL
            ))
        else:
            first, last = merge_fragmented_duration(
                group_durations[g0:g1 + 1], RulePolicy.MERGE_EXCEPT_LAST
            )
            durations.extend((first, last))
    return durations


def split_fused_duration(merged_units: int, words: Sequence[str]) -> list[int]:
    """Distribute a fused run's duration over its words, proportional to
    their length in characters; the shares sum exactly to the input."""
    if len(words) < 2:
        raise ValidationError("fusion split needs at least two words")
    if merged_units < 0:
        raise ValidationError("merged duration must be non-negative")
    chars = [len(w) for w in words]
    if any(c == 0 for c in chars):
        raise ValidationError("fusion split over an empty word")
    return _proportional_integers(merged_units, chars)


def merge_fragmented_duration(
    fragment_units: Sequence[int], policy: RulePolicy | str
) -> int | tuple[int, int]:
    """Collapse fragment durations back onto the original word(s).

    merge-all returns the plain sum; merge-except-last returns the pair
    (everything but the last fragment, last fragment).
    """
    if isinstance(policy, str):
        policy = RulePolicy(policy)
    if not fragment_units:
        raise ValidationError("no fragments to merge")
    if policy is RulePolicy.MERGE_ALL:
        return sum(fragment_units)
    if policy is RulePolicy.MERGE_EXCEPT_LAST:
        if len(fragment_units) < 2:
            raise ValidationError("merge-except-last needs at least two fragments")
        return sum(fragment_units[:-1]), fragment_units[-1]
    raise ValidationError(f"policy {policy} does not merge fragments")


def units_to_seconds(
    words: Sequence[str], word_units: Sequence[int], total_audio_s: float
) -> UtteranceTimeline:
    """Tile the audio with the words, proportionally to their unit totals.

    One unit lasts total_audio_s / total_units seconds; words occupy
    consecutive intervals from zero and the last word ends exactly at the
    audio length.
    """
    if len(words) != len(word_units):
        raise ValidationError(
            f"{len(words)} words but {len(word_units)} duration entries"
        )
    if total_audio_s <= 0:
        raise ValidationError(f"audio length must be positive, got {total_audio_s}")
    total_units = sum(word_units)
    if total_units <= 0:
        raise ValidationError("total duration is zero units")
    for k, units in enumerate(word_units):
        if units <= 0:
            raise ValidationError(
                f"word {k} ({words[k]!r}) has zero duration units; "
                f"it cannot occupy a time interval"
            )
    prefix = [0]
    for units in word_units:
        prefix.append(prefix[-1] + units)
    bounds = [(p / total_units) * total_audio_s for p in prefix]
    timings = tuple(
        WordTiming(word=words[k], start_s=bounds[k], end_s=bounds[k + 1])
        for k in range(len(words))
    )
    return UtteranceTimeline(words=timings, total_duration_s=total_audio_s)


def apply_substitutions(
    words: Sequence[str], table: SubstitutionTable
) -> tuple[list[str], dict[int, list[int]]]:
    """Replace words with their spoken form before phonemization.

    Returns the expanded word list plus, for every original index, the
    expanded indices it became; multi-word expansions are later undone by
    the fragmentation rules from :func:`rules_from_substitutions`.
    """
    expanded: list[str] = []
    back: dict[int, list[int]] = {}
    for idx, word in enumerate(words):
        parts = table.mapping.get(word, word).split() or [word]
        back[idx] = list(range(len(expanded), len(expanded) + len(parts)))
        expanded.extend(parts)
    return expanded, back


def rules_from_substitutions(
    words: Sequence[str], back: Mapping[int, Sequence[int]]
) -> list[MatchRule]:
    """Fragmentation rules that merge a substitution's expansion back onto
    the original word."""
    rules: list[MatchRule] = []
    seen: set[tuple[str, int]] = set()
    for idx in sorted(back):
        n = len(back[idx])
        if n < 2:
            continue
        key = (words[idx], n)
        if key in seen:
            continue
        seen.add(key)
        rules.append(MatchRule(
            patterns=(re.escape(words[idx]),),
            policy=RulePolicy.MERGE_ALL,
            fragments=n,
        ))
    return rules


def build_timeline(
    seq: PhonemeSequence,
    words: Sequence[str],
    total_audio_s: float,
    rules: Sequence[MatchRule] = (),
) -> UtteranceTimeline:
    """Full construction: match runs to words, total the durations, convert
    to seconds."""
    match = match_phonemes_to_words(seq, words, rules)
    units = word_durations_units(match, seq)
    return units_to_seconds(words, units, total_audio_s)


# ---------------------------------------------------------------------------
# On-disk formats (JSON): phoneme dumps, rule files, substitution tables.

def parse_phoneme_sequence(text: str) -> PhonemeSequence:
    """Read a phonemizer dump: {"units": [{"symbol", "duration", "kind"}]}."""
    doc = _load_json(text, "phoneme sequence")
    units_doc = doc.get("units")
    if not isinstance(units_doc, list):
        raise ParseError("phoneme sequence needs a 'units' list")
    units = []
    for k, entry in enumerate(units_doc):
        try:
            units.append(PhonemeUnit(
                symbol=str(entry["symbol"]),
                duration_units=int(entry["duration"]),
                kind=UnitKind(entry["kind"]),
            ))
        except (KeyError, TypeError, ValueError) as e:
            raise ParseError(f"unit {k}: {e}") from None
    try:
        return PhonemeSequence(units=tuple(units))
    except ValidationError as e:
        raise ParseError(str(e)) from None


def serialize_phoneme_sequence(seq: PhonemeSequence) -> str:
    doc = {"units": [
        {"symbol": u.symbol, "duration": u.duration_units, "kind": u.kind.value}
        for u in seq.units
    ]}
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def parse_rules(text: str) -> list[MatchRule]:
    """Read a rule file: {"rules": [{"policy", "words", "fragments"?}]}."""
    doc = _load_json(text, "rule file")
    rules_doc = doc.get("rules")
    if not isinstance(rules_doc, list):
        raise ParseError("rule file needs a 'rules' list")
    rules = []
    for k, entry in enumerate(rules_doc):
        try:
            rules.append(MatchRule(
                patterns=tuple(str(p) for p in entry["words"]),
                policy=RulePolicy(entry["policy"]),
                fragments=(int(entry["fragments"])
                           if entry.get("fragments") is not None else None),
            ))
        except (KeyError, TypeError, ValueError) as e:
            raise ParseError(f"rule {k}: {e}") from None
    return rules


def parse_substitutions(text: str) -> SubstitutionTable:
    """Read a substitution table: {"substitutions": {word: spoken form}}."""
    doc = _load_json(text, "substitution table")
    subs = doc.get("substitutions")
    if not isinstance(subs, dict):
        raise ParseError("substitution file needs a 'substitutions' object")
    try:
        return SubstitutionTable(mapping={str(k): str(v) for k, v in subs.items()})
    except ValidationError as e:
        raise ParseError(str(e)) from None


def _load_json(text: str, what: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid {what}: {e}") from None
    if not isinstance(doc, dict):
        raise ParseError(f"invalid {what}: expected a JSON object")
    return doc
