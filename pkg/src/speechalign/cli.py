"""Command-line front end.

Subcommands:
  score            score one sample from its gold, timing, and matrix files
  corpus-score     score every sample of a manifest, with micro/macro pooling
  build-timeline   construct a word timeline from a phonemizer dump
  render           draw a matrix (plus optional gold/hard points) as SVG

Exit codes: 0 success, 2 input or validation error, 3 corpus run with at
least one failed sample. All commands are deterministic: identical inputs
and flags give byte-identical outputs, whatever --jobs says.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .core import (
    HardAlignment,
    ScoreReport,
    TaskKind,
    UtteranceTimeline,
    ValidationError,
    fatal_diagnostics,
)
from .ingest import (
    CorpusResult,
    ManifestEntry,
    ParseError,
    SampleFailure,
    format_percent,
    format_report_table,
    parse_gold_alignment,
    parse_hard_alignment,
    parse_manifest,
    parse_timeline,
    parse_token_spans,
    read_contribution_matrix,
    report_to_dict,
    serialize_report,
    serialize_timeline,
)
from .metrics import UndefinedScoreError, WeightModel, corpus_aggregate, score_sample
from .render import render_heatmap
from .timeline import (
    MatchingError,
    apply_substitutions,
    build_timeline,
    parse_phoneme_sequence,
    parse_rules,
    parse_substitutions,
    rules_from_substitutions,
)
from .wordmap import (
    MODES,
    MODE_FAITHFUL,
    AggregationWarning,
    check_mode,
    contributions_to_word_map,
    extract_hard_alignment,
)

MODE_ENV_VAR = "SPEECHALIGN_MODE"


def _resolve_mode(flag: str | None) -> str:
    return check_mode(flag or os.environ.get(MODE_ENV_VAR) or MODE_FAITHFUL)


def _read_text(path: Path) -> str:
    return path.read_text(encoding="utf-8")


def _parse_file(path: Path, parser_fn, *extra):
    try:
        return parser_fn(_read_text(path), *extra)
    except ParseError as e:
        raise ParseError(f"{path}: {e}") from None


def _load_matrix(path: Path):
    try:
        return read_contribution_matrix(path.read_bytes())
    except ParseError as e:
        raise ParseError(f"{path}: {e}") from None


def _write_or_stdout(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


@dataclass(frozen=True)
class _Scored:
    report: ScoreReport
    hard: HardAlignment
    n_source_words: int
    n_target_words: int
    warnings: tuple[str, ...]


def _score_files(
    sample_id: str,
    task: TaskKind,
    mode: str,
    gold_path: Path,
    src_timeline_path: Path,
    tgt_timeline_path: Path | None,
    tgt_spans_path: Path | None,
    contrib_path: Path,
    one_based: bool,
) -> _Scored:
    """Score one sample from its files; the library pipeline, no CLI logic."""
    gold = _parse_file(gold_path, parse_gold_alignment, one_based)
    src_timeline: UtteranceTimeline = _parse_file(src_timeline_path, parse_timeline)
    if task is TaskKind.S2ST:
        tgt_timeline = _parse_file(tgt_timeline_path, parse_timeline)
        tgt_side = tgt_timeline
        tgt_durations = tgt_timeline.durations()
    else:
        tgt_side = _parse_file(tgt_spans_path, parse_token_spans)
        tgt_durations = None
    matrix = _load_matrix(contrib_path)
    fatal = fatal_diagnostics(matrix.diagnostics)
    if fatal:
        raise ValidationError(
            f"{contrib_path}: " + "; ".join(d.message for d in fatal)
        )
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        word_map = contributions_to_word_map(matrix, src_timeline, tgt_side, task, mode)
        hard = extract_hard_alignment(word_map)
    n_tgt_words, n_src_words = word_map.values.shape
    if gold.max_src_word() >= n_src_words:
        raise ValidationError(
            f"{gold_path}: gold references source word {gold.max_src_word()} "
            f"but the map has {n_src_words} source words"
        )
    if gold.max_tgt_word() >= n_tgt_words:
        raise ValidationError(
            f"{gold_path}: gold references target word {gold.max_tgt_word()} "
            f"but the map has {n_tgt_words} target words"
        )
    wm = WeightModel(
        task=task,
        src_durations=src_timeline.durations(),
        tgt_durations=tgt_durations,
    )
    report = score_sample(sample_id, gold, hard, wm)
    notes = tuple(
        str(w.message) for w in caught
        if issubclass(w.category, AggregationWarning)
    )
    return _Scored(report, hard, n_src_words, n_tgt_words, notes)


def cmd_score(args: argparse.Namespace) -> int:
    task = TaskKind.parse(args.task)
    mode = _resolve_mode(args.mode)
    if task is TaskKind.S2ST:
        if not args.tgt_timeline or args.tgt_spans:
            raise ValidationError("s2st scoring needs --tgt-timeline and no --tgt-spans")
    else:
        if not args.tgt_spans or args.tgt_timeline:
            raise ValidationError("s2tt scoring needs --tgt-spans and no --tgt-timeline")
    label = args.label or Path(args.contrib).stem
    scored = _score_files(
        sample_id=label,
        task=task,
        mode=mode,
        gold_path=Path(args.gold),
        src_timeline_path=Path(args.src_timeline),
        tgt_timeline_path=Path(args.tgt_timeline) if args.tgt_timeline else None,
        tgt_spans_path=Path(args.tgt_spans) if args.tgt_spans else None,
        contrib_path=Path(args.contrib),
        one_based=args.one_based,
    )
    doc = report_to_dict(scored.report)
    doc["task"] = task.value
    doc["mode"] = mode
    doc["n_source_words"] = scored.n_source_words
    doc["n_target_words"] = scored.n_target_words
    doc["hard"] = [[p.src_word, p.tgt_word] for p in sorted(scored.hard.points)]
    doc["warnings"] = list(scored.warnings)
    text = json.dumps(doc, indent=2, ensure_ascii=False) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        sys.stdout.write(
            f"{label}  SAER(%) {format_percent(scored.report.saer)}  "
            f"TW-SAER(%) {format_percent(scored.report.tw_saer)}\n"
        )
    else:
        sys.stdout.write(text)
    return 0


def _score_entry(
    base: Path, entry: ManifestEntry, mode: str, best_of: str
) -> tuple[ScoreReport | SampleFailure, dict | None]:
    """Worker for corpus scoring; returns the outcome plus layer-sweep info.

    Entries listing several matrices (e.g. one per decoder layer) are
    scored per matrix; the report of the layer minimizing the --best-of
    metric is kept for pooling and both per-metric minima are recorded.
    """
    try:
        per_layer = []
        for contrib in entry.contrib:
            scored = _score_files(
                sample_id=entry.sample_id,
                task=entry.task,
                mode=mode,
                gold_path=base / entry.gold,
                src_timeline_path=base / entry.src_timeline,
                tgt_timeline_path=(
                    base / entry.tgt_timeline if entry.tgt_timeline else None
                ),
                tgt_spans_path=base / entry.tgt_spans if entry.tgt_spans else None,
                contrib_path=base / contrib,
                one_based=entry.one_based,
            )
            per_layer.append(scored.report)
    except (ParseError, ValidationError, MatchingError, UndefinedScoreError, OSError) as e:
        return SampleFailure(sample_id=entry.sample_id, error=str(e)), None
    if len(per_layer) == 1:
        return per_layer[0], None
    metric = (lambda r: r.tw_saer) if best_of == "tw-saer" else (lambda r: r.saer)
    chosen = min(range(len(per_layer)), key=lambda i: (metric(per_layer[i]), i))
    details = {
        "n_layers": len(per_layer),
        "chosen_layer": chosen,
        "min_saer": min(r.saer for r in per_layer),
        "min_tw_saer": min(r.tw_saer for r in per_layer),
    }
    return per_layer[chosen], details


def _score_entry_star(work) -> tuple[ScoreReport | SampleFailure, dict | None]:
    return _score_entry(*work)


def cmd_corpus_score(args: argparse.Namespace) -> int:
    mode = _resolve_mode(args.mode)
    if args.jobs < 1:
        raise ValidationError(f"--jobs must be at least 1, got {args.jobs}")
    manifest_path = Path(args.manifest)
    manifest = _parse_file(manifest_path, parse_manifest)
    base = manifest_path.resolve().parent
    work = [(base, entry, mode, args.best_of) for entry in manifest.entries]
    if args.jobs == 1 or len(work) <= 1:
        results = [_score_entry(*w) for w in work]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_score_entry_star, work))
    outcomes = tuple(r[0] for r in results)
    layer_details = {
        outcome.sample_id: details
        for outcome, details in results
        if details is not None
    }
    reports = [o for o in outcomes if isinstance(o, ScoreReport)]
    aggregate = corpus_aggregate(reports) if reports else None
    result = CorpusResult(label=args.label, outcomes=outcomes, aggregate=aggregate)
    if args.out:
        Path(args.out).write_text(
            serialize_report(result, layer_details), encoding="utf-8"
        )
    sys.stdout.write(format_report_table(result))
    return 3 if any(isinstance(o, SampleFailure) for o in outcomes) else 0


def cmd_build_timeline(args: argparse.Namespace) -> int:
    seq = _parse_file(Path(args.phonemes), parse_phoneme_sequence)
    words = _read_text(Path(args.words)).split()
    if not words:
        raise ValidationError(f"{args.words}: word file is empty")
    rules = list(_parse_file(Path(args.rules), parse_rules)) if args.rules else []
    if args.substitutions:
        table = _parse_file(Path(args.substitutions), parse_substitutions)
        _, back = apply_substitutions(words, table)
        rules.extend(rules_from_substitutions(words, back))
    timeline = build_timeline(seq, words, args.audio_seconds, rules)
    _write_or_stdout(serialize_timeline(timeline), args.out)
    return 0


def cmd_render(args: argparse.Namespace) -> int:
    source = Path(args.contrib or args.wordmap)
    matrix = _load_matrix(source)
    if args.contrib:
        axes = ("source token", "target token")
    else:
        axes = ("source word", "target word")
    gold = (
        _parse_file(Path(args.gold), parse_gold_alignment, args.one_based)
        if args.gold else None
    )
    hard = _parse_file(Path(args.hard), parse_hard_alignment) if args.hard else None
    svg = render_heatmap(
        matrix.values, gold=gold, hard=hard, src_axis=axes[0], tgt_axis=axes[1]
    )
    _write_or_stdout(svg, args.out)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="speechalign",
        description="Word-alignment quality scoring for speech translation models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="score one sample")
    p.add_argument("--task", required=True, choices=["s2tt", "s2st"],
                   help="which sides are speech (text-to-text has no files to read; "
                        "use the library API)")
    p.add_argument("--gold", required=True, help="gold alignment file (src tgt S|P)")
    p.add_argument("--src-timeline", required=True, help="source word timeline JSON")
    p.add_argument("--tgt-timeline", help="target word timeline JSON (s2st)")
    p.add_argument("--tgt-spans", help="target word token spans (s2tt)")
    p.add_argument("--contrib", required=True,
                   help="contribution matrix, SALN binary or CSV")
    p.add_argument("--mode", choices=list(MODES), default=None,
                   help=f"empty-span handling (default from ${MODE_ENV_VAR}, "
                        f"else {MODE_FAITHFUL})")
    p.add_argument("--one-based", action="store_true",
                   help="gold file uses 1-based word indices")
    p.add_argument("--label", default=None, help="sample id for the report")
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("corpus-score", help="score every sample of a manifest")
    p.add_argument("--manifest", required=True, help="corpus manifest JSON")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--mode", choices=list(MODES), default=None)
    p.add_argument("--label", default="corpus", help="model label for the report")
    p.add_argument("--best-of", choices=["saer", "tw-saer"], default="saer",
                   help="metric picking the pooled layer for multi-matrix entries")
    p.add_argument("--out", help="write the JSON report here (table goes to stdout)")
    p.set_defaults(func=cmd_corpus_score)

    p = sub.add_parser("build-timeline", help="word timeline from a phonemizer dump")
    p.add_argument("--phonemes", required=True, help="phoneme units JSON")
    p.add_argument("--words", required=True, help="whitespace-separated word file")
    p.add_argument("--audio-seconds", type=float, required=True,
                   help="total audio length in seconds")
    p.add_argument("--rules", help="fusion/fragmentation rule file JSON")
    p.add_argument("--substitutions", help="spoken-form substitution table JSON")
    p.add_argument("--out", help="write the timeline here instead of stdout")
    p.set_defaults(func=cmd_build_timeline)

    p = sub.add_parser("render", help="draw a matrix as an SVG heatmap")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--contrib", help="token-level matrix file")
    g.add_argument("--wordmap", help="word-level matrix file")
    p.add_argument("--gold", help="gold alignment to outline")
    p.add_argument("--hard", help="hard alignment file (src tgt per line)")
    p.add_argument("--one-based", action="store_true",
                   help="gold file uses 1-based word indices")
    p.add_argument("--out", help="write the SVG here instead of stdout")
    p.set_defaults(func=cmd_render)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValidationError, MatchingError, UndefinedScoreError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
