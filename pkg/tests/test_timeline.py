import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from speechalign import (
    MatchingError,
    MatchRule,
    ParseError,
    PhonemeSequence,
    PhonemeUnit,
    RulePolicy,
    SubstitutionTable,
    UnitKind,
    ValidationError,
    apply_substitutions,
    build_timeline,
    match_phonemes_to_words,
    merge_fragmented_duration,
    parse_phoneme_sequence,
    parse_rules,
    parse_substitutions,
    rules_from_substitutions,
    split_fused_duration,
    units_to_seconds,
    word_durations_units,
)
from speechalign.timeline import serialize_phoneme_sequence

from oracles import oracle_proportional_split, oracle_redistributed, oracle_seconds


def ph(symbol, duration):
    return PhonemeUnit(symbol=symbol, duration_units=duration,
                       kind=UnitKind.PHONEME)


def blank(duration):
    return PhonemeUnit(symbol=" ", duration_units=duration, kind=UnitKind.BLANK)


def punct(symbol, duration):
    return PhonemeUnit(symbol=symbol, duration_units=duration,
                       kind=UnitKind.PUNCTUATION)


def seq(*units):
    return PhonemeSequence(units=tuple(units))


class TestMatching:
    def test_direct_one_to_one(self):
        s = seq(ph("a", 2), blank(1), ph("b", 3), blank(1), ph("c", 4))
        m = match_phonemes_to_words(s, ["one", "two", "three"])
        assert len(m.groups) == 3
        assert [u.symbol for u in m.groups[0]] == ["a"]
        assert all(site.policy is None for site in m.sites)

    def test_fusion_splits_one_group_over_two_words(self):
        # "I am" phonemized as one run /aIam/, "here" as its own run
        s = seq(ph("a", 3), ph("I", 2), ph("am", 4), blank(2), ph("hIr", 5))
        rule = MatchRule(patterns=("I", "am"), policy=RulePolicy.PROPORTIONAL_SPLIT)
        m = match_phonemes_to_words(s, ["I", "am", "here"], [rule])
        assert len(m.groups) == 3
        # 3 fused units split 1:2 by character count
        assert [u.symbol for u in m.groups[0]] == ["a"]
        assert [u.symbol for u in m.groups[1]] == ["I", "am"]
        assert [u.symbol for u in m.groups[2]] == ["hIr"]
        assert m.sites[0].policy is RulePolicy.PROPORTIONAL_SPLIT

    def test_fragmentation_merges_groups_onto_one_word(self):
        # "1996" spoken as three runs
        s = seq(ph("n", 3), blank(1), ph("m", 4), blank(1), ph("s", 5))
        rule = MatchRule(patterns=(r"\d+",), policy=RulePolicy.MERGE_ALL,
                         fragments=3)
        m = match_phonemes_to_words(s, ["1996"], [rule])
        assert len(m.groups) == 1
        assert [u.symbol for u in m.groups[0]] == ["n", "m", "s"]

    def test_merge_except_last_keeps_final_run_separate(self):
        s = seq(ph("f", 2), blank(1), ph("t", 3), blank(1), ph("p", 4))
        rule = MatchRule(patterns=(r"\d+", "%"),
                         policy=RulePolicy.MERGE_EXCEPT_LAST, fragments=3)
        m = match_phonemes_to_words(s, ["50", "%"], [rule])
        assert [u.symbol for u in m.groups[0]] == ["f", "t"]
        assert [u.symbol for u in m.groups[1]] == ["p"]

    def test_unknown_fragment_count_inferred_from_budget(self):
        s = seq(ph("a", 1), blank(1), ph("b", 1), blank(1), ph("c", 1),
                blank(1), ph("d", 1))
        rule = MatchRule(patterns=(r"\d+",), policy=RulePolicy.MERGE_ALL)
        m = match_phonemes_to_words(s, ["1996", "ist"], [rule])
        assert len(m.groups[0]) == 3
        assert len(m.groups[1]) == 1

    def test_two_unknown_counts_rejected(self):
        s = seq(ph("a", 1), blank(1), ph("b", 1), blank(1), ph("c", 1))
        rule = MatchRule(patterns=(r"\d+",), policy=RulePolicy.MERGE_ALL)
        with pytest.raises(MatchingError, match="more than one rule"):
            match_phonemes_to_words(s, ["12", "34"], [rule])

    def test_mismatch_reports_residual_counts(self):
        s = seq(*[u for k in range(5) for u in (ph("x", 1), blank(1))][:-1])
        with pytest.raises(MatchingError,
                           match="3 words to 5 phoneme groups.*2 groups left"):
            match_phonemes_to_words(s, ["a", "b", "c"])

    def test_too_few_groups_reports_leftover_words(self):
        s = seq(ph("x", 1), blank(1), ph("y", 1))
        with pytest.raises(MatchingError, match="2 words .* left unmatched"):
            match_phonemes_to_words(s, ["a", "b", "c", "d"])

    def test_empty_word_list_rejected(self):
        with pytest.raises(ValidationError, match="empty"):
            match_phonemes_to_words(seq(ph("x", 1)), [])

    def test_first_matching_rule_wins(self):
        s = seq(ph("a", 1), ph("b", 1), blank(1), ph("c", 1))
        merge = MatchRule(patterns=("of",), policy=RulePolicy.MERGE_ALL,
                          fragments=1)
        fuse = MatchRule(patterns=("of", "the"),
                         policy=RulePolicy.PROPORTIONAL_SPLIT)
        m = match_phonemes_to_words(s, ["of", "the"], [merge, fuse])
        # merge-all with 1 fragment fires first, leaving a 1:1 for "the"
        assert m.sites[0].policy is RulePolicy.MERGE_ALL
        assert m.sites[1].policy is None


class TestDurations:
    def test_interior_blank_split_between_neighbours(self):
        s = seq(ph("a", 4), blank(2), ph("b", 6))
        m = match_phonemes_to_words(s, ["A", "B"])
        assert word_durations_units(m, s) == [5, 7]

    def test_leading_blank_folds_into_sole_neighbour(self):
        s = seq(blank(2), ph("a", 4))
        m = match_phonemes_to_words(s, ["A"])
        assert word_durations_units(m, s) == [6]

    def test_trailing_punctuation_folds_back(self):
        s = seq(ph("a", 5), punct(".", 3))
        m = match_phonemes_to_words(s, ["A"])
        assert word_durations_units(m, s) == [8]

    def test_odd_separator_unit_goes_to_preceding_word(self):
        s = seq(ph("a", 4), blank(3), ph("b", 6))
        m = match_phonemes_to_words(s, ["A", "B"])
        assert word_durations_units(m, s) == [6, 7]

    def test_fused_durations_split_by_characters(self):
        s = seq(ph("x", 6), ph("y", 6), blank(0), ph("z", 5))
        rule = MatchRule(patterns=("of", "the"),
                         policy=RulePolicy.PROPORTIONAL_SPLIT)
        m = match_phonemes_to_words(s, ["of", "the", "sea"], [rule])
        assert word_durations_units(m, s) == [5, 7, 5]

    def test_fragment_durations_merge(self):
        s = seq(ph("n", 3), blank(0), ph("m", 4), blank(0), ph("s", 5))
        rule = MatchRule(patterns=(r"\d+",), policy=RulePolicy.MERGE_ALL,
                         fragments=3)
        m = match_phonemes_to_words(s, ["1996"], [rule])
        assert word_durations_units(m, s) == [12]

    def test_percent_durations_keep_last_fragment(self):
        s = seq(ph("f", 3), blank(0), ph("t", 4), blank(0), ph("p", 5))
        rule = MatchRule(patterns=(r"\d+", "%"),
                         policy=RulePolicy.MERGE_EXCEPT_LAST, fragments=3)
        m = match_phonemes_to_words(s, ["50", "%"], [rule])
        assert word_durations_units(m, s) == [7, 5]


class TestUnitsToSeconds:
    def test_even_split(self):
        t = units_to_seconds(["a", "b"], [5, 5], 2.0)
        assert t.words[0].start_s == 0.0
        assert t.words[0].end_s == 1.0
        assert t.words[1].end_s == 2.0

    def test_single_word_fills_audio(self):
        t = units_to_seconds(["a"], [10], 3.3)
        assert (t.words[0].start_s, t.words[0].end_s) == (0.0, 3.3)

    def test_uneven_split(self):
        t = units_to_seconds(["a", "b"], [1, 3], 1.0)
        assert t.words[0].end_s == 0.25
        assert t.words[1].start_s == 0.25
        assert t.words[1].end_s == 1.0

    def test_zero_unit_word_rejected(self):
        with pytest.raises(ValidationError, match="word 1 .* zero duration"):
            units_to_seconds(["a", "b"], [3, 0], 1.0)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValidationError, match="2 words but 3"):
            units_to_seconds(["a", "b"], [1, 2, 3], 1.0)

    def test_non_positive_audio_rejected(self):
        with pytest.raises(ValidationError, match="positive"):
            units_to_seconds(["a"], [1], 0.0)


class TestSplitAndMerge:
    def test_split_proportional_to_characters(self):
        assert split_fused_duration(12, ["of", "the"]) == [5, 7]

    def test_split_symmetric(self):
        assert split_fused_duration(10, ["a", "a"]) == [5, 5]

    def test_split_zero_total(self):
        assert split_fused_duration(0, ["of", "the"]) == [0, 0]

    def test_split_needs_two_words(self):
        with pytest.raises(ValidationError, match="two words"):
            split_fused_duration(5, ["only"])

    def test_merge_all_sums(self):
        assert merge_fragmented_duration([3, 4, 5], RulePolicy.MERGE_ALL) == 12

    def test_merge_except_last_pairs(self):
        got = merge_fragmented_duration([3, 4, 5], RulePolicy.MERGE_EXCEPT_LAST)
        assert got == (7, 5)

    def test_merge_single_fragment_identity(self):
        assert merge_fragmented_duration([9], RulePolicy.MERGE_ALL) == 9

    def test_merge_except_last_needs_two(self):
        with pytest.raises(ValidationError, match="two fragments"):
            merge_fragmented_duration([9], RulePolicy.MERGE_EXCEPT_LAST)

    def test_policy_accepts_string_names(self):
        assert merge_fragmented_duration([1, 2], "merge-all") == 3


class TestSubstitutions:
    def test_expansion_with_back_mapping(self):
        table = SubstitutionTable(mapping={"EU": "E U"})
        expanded, back = apply_substitutions(["EU", "Staaten"], table)
        assert expanded == ["E", "U", "Staaten"]
        assert back == {0: [0, 1], 1: [2]}

    def test_empty_table_is_identity(self):
        expanded, back = apply_substitutions(["a", "b"], SubstitutionTable({}))
        assert expanded == ["a", "b"]
        assert back == {0: [0], 1: [1]}

    def test_year_expansion(self):
        table = SubstitutionTable(mapping={"1996": "nineteen ninety six"})
        expanded, back = apply_substitutions(["1996"], table)
        assert expanded == ["nineteen", "ninety", "six"]
        assert back == {0: [0, 1, 2]}

    def test_rules_from_back_mapping(self):
        table = SubstitutionTable(mapping={"EU": "E U"})
        _, back = apply_substitutions(["EU", "Staaten"], table)
        rules = rules_from_substitutions(["EU", "Staaten"], back)
        assert len(rules) == 1
        assert rules[0].policy is RulePolicy.MERGE_ALL
        assert rules[0].fragments == 2
        assert rules[0].matches_at(["EU", "Staaten"], 0)

    def test_empty_expansion_rejected(self):
        with pytest.raises(ValidationError, match="nothing"):
            SubstitutionTable(mapping={"x": "  "})

    def test_substitution_pipeline_end_to_end(self):
        # phonemizer saw "E U Staaten": three runs
        s = seq(ph("e", 2), blank(2), ph("u", 2), blank(2), ph("St", 6))
        words = ["EU", "Staaten"]
        table = SubstitutionTable(mapping={"EU": "E U"})
        _, back = apply_substitutions(words, table)
        rules = rules_from_substitutions(words, back)
        t = build_timeline(s, words, 1.4, rules)
        # EU owns runs 0-1 (2+1, 1+2+1 = 7 units), Staaten the rest (7)
        assert t.words[0].word == "EU"
        assert t.words[0].end_s == pytest.approx(0.7, abs=1e-9)
        assert t.total_duration_s == 1.4


class TestBuildTimeline:
    def test_plain_three_words(self):
        s = seq(ph("a", 2), blank(2), ph("b", 2), blank(2), ph("c", 2))
        t = build_timeline(s, ["one", "two", "three"], 2.0)
        # redistributed: [3, 4, 3]
        assert t.words[0].end_s == pytest.approx(0.6, abs=1e-12)
        assert t.words[1].end_s == pytest.approx(1.4, abs=1e-12)
        assert t.words[2].end_s == pytest.approx(2.0, abs=1e-12)

    def test_rules_applied_inside_build(self):
        s = seq(ph("a", 3), ph("b", 6), blank(0), ph("c", 7))
        rule = MatchRule(patterns=("I", "am"),
                         policy=RulePolicy.PROPORTIONAL_SPLIT)
        t = build_timeline(s, ["I", "am", "here"], 1.6, [rule])
        assert t.words[0].end_s == pytest.approx(0.3, abs=1e-9)
        assert t.words[1].end_s == pytest.approx(0.9, abs=1e-9)
        assert t.words[2].end_s == pytest.approx(1.6, abs=1e-9)


class TestRuleValidation:
    def test_split_rule_needs_two_patterns(self):
        with pytest.raises(ValidationError, match="at least two words"):
            MatchRule(patterns=("x",), policy=RulePolicy.PROPORTIONAL_SPLIT)

    def test_split_rule_takes_no_fragments(self):
        with pytest.raises(ValidationError, match="no fragment count"):
            MatchRule(patterns=("x", "y"),
                      policy=RulePolicy.PROPORTIONAL_SPLIT, fragments=2)

    def test_merge_all_single_pattern(self):
        with pytest.raises(ValidationError, match="exactly one word"):
            MatchRule(patterns=("x", "y"), policy=RulePolicy.MERGE_ALL)

    def test_bad_regex_rejected(self):
        with pytest.raises(ValidationError, match="bad word pattern"):
            MatchRule(patterns=("[", "x"), policy=RulePolicy.PROPORTIONAL_SPLIT)

    def test_patterns_anchor_to_whole_word(self):
        rule = MatchRule(patterns=(r"\d+",), policy=RulePolicy.MERGE_ALL,
                         fragments=2)
        assert rule.matches_at(["1996"], 0)
        assert not rule.matches_at(["x1996y"], 0)


class TestFileFormats:
    def test_phoneme_sequence_round_trip(self):
        s = seq(ph("a", 2), blank(1), punct(".", 3))
        assert parse_phoneme_sequence(serialize_phoneme_sequence(s)) == s

    def test_phoneme_sequence_bad_kind(self):
        with pytest.raises(ParseError, match="unit 0"):
            parse_phoneme_sequence(
                '{"units": [{"symbol": "a", "duration": 1, "kind": "vowel"}]}'
            )

    def test_phoneme_sequence_needs_units(self):
        with pytest.raises(ParseError, match="'units' list"):
            parse_phoneme_sequence('{"phones": []}')

    def test_rules_file(self):
        rules = parse_rules(
            '{"rules": [{"policy": "proportional-split", "words": ["I", "am"]},'
            ' {"policy": "merge-all", "words": ["\\\\d+"], "fragments": 3}]}'
        )
        assert rules[0].policy is RulePolicy.PROPORTIONAL_SPLIT
        assert rules[1].fragments == 3

    def test_rules_file_bad_policy(self):
        with pytest.raises(ParseError, match="rule 0"):
            parse_rules('{"rules": [{"policy": "explode", "words": ["x"]}]}')

    def test_substitution_file(self):
        table = parse_substitutions('{"substitutions": {"EU": "E U"}}')
        assert table.mapping == {"EU": "E U"}

    def test_substitution_file_shape(self):
        with pytest.raises(ParseError, match="'substitutions' object"):
            parse_substitutions('{"subs": {}}')


# --- properties ---------------------------------------------------------------

@st.composite
def word_sequences(draw):
    """A phoneme sequence with one run per word, plus optional separators."""
    n_words = draw(st.integers(1, 6))
    units = []
    lead = draw(st.integers(0, 3))
    if lead:
        units.append(blank(lead))
    for k in range(n_words):
        run = draw(st.integers(1, 3))
        for j in range(run):
            units.append(ph(f"p{k}_{j}", draw(st.integers(0, 9))))
        sep = draw(st.integers(0, 4))
        if k < n_words - 1:
            units.append(blank(sep) if draw(st.booleans()) else punct(",", sep))
        elif sep:
            units.append(punct(".", sep))
    words = [f"w{k}" for k in range(n_words)]
    return PhonemeSequence(units=tuple(units)), words


@given(word_sequences())
@settings(max_examples=200)
def test_unit_conservation(case):
    s, words = case
    m = match_phonemes_to_words(s, words)
    durations = word_durations_units(m, s)
    assert sum(durations) == s.total_units()
    assert len(durations) == len(words)


@given(word_sequences())
@settings(max_examples=200)
def test_groups_reproduce_phoneme_sequence(case):
    s, words = case
    m = match_phonemes_to_words(s, words)
    flat = [u for g in m.groups for u in g]
    assert flat == [u for u in s.units if u.kind is UnitKind.PHONEME]


@given(word_sequences(), st.floats(min_value=0.1, max_value=200.0,
                                   allow_nan=False))
@settings(max_examples=200)
def test_seconds_tile_the_audio(case, audio_s):
    s, words = case
    m = match_phonemes_to_words(s, words)
    durations = [max(d, 0) for d in word_durations_units(m, s)]
    if any(d == 0 for d in durations):
        durations = [d + 1 for d in durations]
    t = units_to_seconds(words, durations, audio_s)
    assert t.words[0].start_s == 0.0
    for a, b in zip(t.words, t.words[1:]):
        assert a.end_s == b.start_s
    assert abs(t.words[-1].end_s - audio_s) <= 1e-9


@given(st.integers(0, 10_000),
       st.lists(st.text(alphabet="ab", min_size=1, max_size=12),
                min_size=2, max_size=6))
@settings(max_examples=200)
def test_split_sums_exactly(total, words):
    shares = split_fused_duration(total, words)
    assert sum(shares) == total
    assert all(x >= 0 for x in shares)


@given(st.lists(st.text(alphabet="xyz", min_size=1, max_size=8),
                min_size=1, max_size=6),
       st.dictionaries(st.sampled_from(["xy", "yz", "zz"]),
                       st.sampled_from(["a b", "c d e", "f"]), max_size=3))
@settings(max_examples=200)
def test_substitution_round_trip_one_duration_per_word(words, mapping):
    table = SubstitutionTable(mapping=mapping)
    expanded, back = apply_substitutions(words, table)
    rules = rules_from_substitutions(words, back)
    units = []
    for k, w in enumerate(expanded):
        if k:
            units.append(blank(1))
        units.append(ph(w, 2))
    s = PhonemeSequence(units=tuple(units))
    m = match_phonemes_to_words(s, words, rules)
    durations = word_durations_units(m, s)
    assert len(durations) == len(words)
    assert sum(durations) == s.total_units()


def test_randomized_oracle_agreement():
    rng = random.Random(20240818)
    for _ in range(250):
        n_words = rng.randint(1, 6)
        units = []
        kinds = []
        if rng.random() < 0.3:
            units.append(blank(rng.randint(1, 3)))
            kinds.append(("sep", units[-1].duration_units))
        for k in range(n_words):
            for j in range(rng.randint(1, 3)):
                u = ph(f"p{k}", rng.randint(0, 8))
                units.append(u)
                kinds.append(("phoneme", u.duration_units))
            if k < n_words - 1 or rng.random() < 0.4:
                u = blank(rng.randint(0, 5)) if rng.random() < 0.5 \
                    else punct(".", rng.randint(0, 5))
                units.append(u)
                kinds.append(("sep", u.duration_units))
        s = PhonemeSequence(units=tuple(units))
        words = [f"w{k}" for k in range(n_words)]
        m = match_phonemes_to_words(s, words)
        durations = word_durations_units(m, s)
        assert durations == oracle_redistributed(kinds)

        total = rng.randint(0, 500)
        names = [
            "x" * rng.randint(1, 9) for _ in range(rng.randint(2, 5))
        ]
        assert split_fused_duration(total, names) == \
            oracle_proportional_split(total, [len(w) for w in names])

        positive = [d + 1 for d in durations]
        audio = rng.uniform(0.2, 30.0)
        t = units_to_seconds(words, positive, audio)
        expect = oracle_seconds(positive, audio)
        for timing, (lo, hi) in zip(t.words, expect):
            assert abs(timing.start_s - lo) <= 1e-12
            assert abs(timing.end_s - hi) <= 1e-12
