"""Word-alignment quality scoring for speech translation models.

The pipeline: token-level contribution matrices (cross-attention or
feature attributions) are aggregated into word-to-word maps using word
timings, a hard alignment is extracted per target word, and it is scored
against Sure/Possible gold alignments, unweighted and duration-weighted.
"""

from .core import (
    AlignmentPoint,
    ContributionMatrix,
    Diagnostic,
    GoldAlignment,
    HardAlignment,
    ScoreReport,
    TaskKind,
    UtteranceTimeline,
    ValidationError,
    WordContributionMap,
    WordTiming,
    fatal_diagnostics,
    validate_contribution_matrix,
)
from .ingest import (
    CorpusManifest,
    CorpusResult,
    ManifestEntry,
    ParseError,
    SampleFailure,
    format_report_table,
    parse_gold_alignment,
    parse_hard_alignment,
    parse_manifest,
    parse_report,
    parse_timeline,
    parse_token_spans,
    read_contribution_matrix,
    serialize_gold_alignment,
    serialize_hard_alignment,
    serialize_manifest,
    serialize_report,
    serialize_timeline,
    serialize_token_spans,
    write_contribution_matrix,
)
from .metrics import (
    CorpusAggregate,
    MetricPair,
    UndefinedScoreError,
    WeightModel,
    aer,
    alignment_weight,
    corpus_aggregate,
    saer,
    score_sample,
    tw_saer,
)
from .render import render_heatmap
from .timeline import (
    MatchingError,
    MatchResult,
    MatchRule,
    PhonemeSequence,
    PhonemeUnit,
    RulePolicy,
    SubstitutionTable,
    UnitKind,
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
from .wordmap import (
    MODE_FAITHFUL,
    MODE_REPAIR,
    MODES,
    AggregationWarning,
    TokenSpan,
    aggregate_source,
    aggregate_target,
    contributions_to_word_map,
    extract_hard_alignment,
    spans_for_timeline,
    token_span_for_word,
)

__version__ = "0.1.0"
