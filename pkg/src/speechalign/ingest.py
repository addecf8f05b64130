"""Parsers and serializers for the toolkit's on-disk formats.

Formats are deterministic and round-trip exactly: gold alignments and
token spans as line-oriented text, timelines and manifests and score
reports as JSON, contribution matrices as CSV or as the SALN binary
container (magic "SALN", u32 version, u64 rows, u64 cols, little-endian
float32 payload, row-major, rows = target tokens). Floats in text formats
are written as the shortest decimal that parses back to the identical
value. All parsers are pure; files may be parsed concurrently.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

from .core import (
    AlignmentPoint,
    ContributionMatrix,
    GoldAlignment,
    HardAlignment,
    ScoreReport,
    TaskKind,
    UtteranceTimeline,
    ValidationError,
    WordTiming,
)
from .metrics import CorpusAggregate, MetricPair
from .wordmap import TokenSpan

SALN_MAGIC = b"SALN"
SALN_VERSION = 1
_HEADER = struct.Struct("<4sIQQ")
_MAX_ELEMENTS = 2**31


class ParseError(ValueError):
    """Input text or bytes do not conform to the expected format."""


def format_float(value: float) -> str:
    """Shortest decimal form that parses back to the identical float."""
    return repr(float(value))


# ---------------------------------------------------------------------------
# Gold alignments: one `<src> <tgt> <S|P>` triple per line, '#' comments.

def parse_gold_alignment(text: str, one_based: bool = False) -> GoldAlignment:
    """Read a gold alignment; every Sure line is automatically Possible too.

    `one_based` accepts legacy corpora whose word indices start at 1.
    """
    sure: set[AlignmentPoint] = set()
    possible: set[AlignmentPoint] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ParseError(
                f"line {lineno}: expected '<src> <tgt> <S|P>', got {raw.strip()!r}"
            )
        try:
            src, tgt = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(f"line {lineno}: bad word index in {raw.strip()!r}") from None
        if one_based:
            if src < 1 or tgt < 1:
                raise ParseError(
                    f"line {lineno}: index below 1 in one-based input"
                )
            src, tgt = src - 1, tgt - 1
        try:
            point = AlignmentPoint(src_word=src, tgt_word=tgt)
        except ValidationError as e:
            raise ParseError(f"line {lineno}: {e}") from None
        tag = parts[2]
        if tag == "S":
            sure.add(point)
            possible.add(point)
        elif tag == "P":
            possible.add(point)
        else:
            raise ParseError(f"line {lineno}: unknown tag {tag!r}, expected S or P")
    return GoldAlignment(sure=frozenset(sure), possible=frozenset(possible))


def serialize_gold_alignment(gold: GoldAlignment) -> str:
    lines = [
        f"{p.src_word} {p.tgt_word} {'S' if p in gold.sure else 'P'}"
        for p in sorted(gold.possible)
    ]
    return "\n".join(lines) + ("\n" if lines else "")


# ---------------------------------------------------------------------------
# Hard alignments: one `<src> <tgt>` pair per line, '#' comments.

def parse_hard_alignment(text: str) -> HardAlignment:
    points = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(f"line {lineno}: expected '<src> <tgt>', got {raw.strip()!r}")
        try:
            points.add(AlignmentPoint(src_word=int(parts[0]), tgt_word=int(parts[1])))
        except (ValueError, ValidationError) as e:
            raise ParseError(f"line {lineno}: {e}") from None
    try:
        return HardAlignment(points=frozenset(points))
    except ValidationError as e:
        raise ParseError(str(e)) from None


def serialize_hard_alignment(hard: HardAlignment) -> str:
    lines = [f"{p.src_word} {p.tgt_word}" for p in sorted(hard.points)]
    return "\n".join(lines) + ("\n" if lines else "")


# ---------------------------------------------------------------------------
# Timelines: JSON {"words": [{"w", "start", "end"}], "total_duration"}.

def parse_timeline(text: str) -> UtteranceTimeline:
    doc = _json_object(text, "timeline")
    words_doc = doc.get("words")
    if not isinstance(words_doc, list):
        raise ParseError("timeline needs a 'words' list")
    if "total_duration" not in doc:
        raise ParseError("timeline needs a 'total_duration' field")
    timings = []
    for k, entry in enumerate(words_doc):
        try:
            timing = WordTiming(
                word=str(entry["w"]),
                start_s=float(entry["start"]),
                end_s=float(entry["end"]),
            )
        except (KeyError, TypeError) as e:
            raise ParseError(f"word {k}: missing or bad field {e}") from None
        except ValidationError as e:
            raise ParseError(f"word {k}: {e}") from None
        timings.append(timing)
    try:
        return UtteranceTimeline(
            words=tuple(timings),
            total_duration_s=float(doc["total_duration"]),
        )
    except ValidationError as e:
        raise ParseError(str(e)) from None


def serialize_timeline(timeline: UtteranceTimeline) -> str:
    doc = {
        "words": [
            {"w": w.word, "start": w.start_s, "end": w.end_s}
            for w in timeline.words
        ],
        "total_duration": timeline.total_duration_s,
    }
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


# ---------------------------------------------------------------------------
# Contribution matrices: SALN binary or CSV, one row per target token.

def read_contribution_matrix(
    data: Union[bytes, str], fmt: str | None = None
) -> ContributionMatrix:
    """Decode a matrix; `fmt` is "binary", "csv", or None to sniff."""
    if fmt is None:
        if isinstance(data, bytes):
            fmt = "binary" if data[:4] == SALN_MAGIC else "csv"
        else:
            fmt = "csv"
    if fmt == "binary":
        if not isinstance(data, bytes):
            raise ParseError("binary matrix input must be bytes")
        return _read_binary_matrix(data)
    if fmt == "csv":
        if isinstance(data, bytes):
            try:
                data = data.decode("utf-8")
            except UnicodeDecodeError as e:
                raise ParseError(f"matrix CSV is not valid UTF-8: {e}") from None
        return _read_csv_matrix(data)
    raise ParseError(f"unknown matrix format {fmt!r}, expected 'binary' or 'csv'")


def _read_binary_matrix(data: bytes) -> ContributionMatrix:
    if len(data) < 4 or data[:4] != SALN_MAGIC:
        raise ParseError(f"bad magic at offset 0: expected {SALN_MAGIC!r}")
    if len(data) < _HEADER.size:
        raise ParseError(
            f"truncated header: expected {_HEADER.size} bytes, got {len(data)}"
        )
    _, version, rows, cols = _HEADER.unpack_from(data)
    if version != SALN_VERSION:
        raise ParseError(f"unsupported version {version} at offset 4")
    if rows < 1 or cols < 1:
        raise ParseError(f"matrix dimensions must be positive, got {rows}x{cols}")
    if rows * cols > _MAX_ELEMENTS:
        raise ParseError(f"dimension overflow: {rows}x{cols}")
    expected = rows * cols * 4
    got = len(data) - _HEADER.size
    if got != expected:
        raise ParseError(f"expected {expected} payload bytes, got {got}")
    values = np.frombuffer(data, dtype="<f4", offset=_HEADER.size)
    return ContributionMatrix(
        values=values.reshape(rows, cols).astype(np.float64)
    )


def _read_csv_matrix(text: str) -> ContributionMatrix:
    rows = []
    width = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        cells = raw.split(",")
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise ParseError(
                f"line {lineno}: expected {width} columns, got {len(cells)}"
            )
        try:
            rows.append([float(c) for c in cells])
        except ValueError:
            raise ParseError(f"line {lineno}: bad number in {raw!r}") from None
    if not rows:
        raise ParseError("matrix CSV contains no rows")
    return ContributionMatrix(values=np.array(rows, dtype=np.float64))


def write_contribution_matrix(
    matrix: ContributionMatrix, fmt: str
) -> Union[bytes, str]:
    """Encode a matrix as SALN bytes ("binary") or CSV text ("csv").

    The binary payload is float32; callers holding values outside float32
    range or precision lose the difference, matching the format contract.
    """
    if fmt == "binary":
        rows, cols = matrix.values.shape
        header = _HEADER.pack(SALN_MAGIC, SALN_VERSION, rows, cols)
        return header + matrix.values.astype("<f4").tobytes(order="C")
    if fmt == "csv":
        lines = [
            ",".join(format_float(v) for v in row) for row in matrix.values
        ]
        return "\n".join(lines) + "\n"
    raise ValidationError(f"unknown matrix format {fmt!r}, expected 'binary' or 'csv'")


# ---------------------------------------------------------------------------
# Token spans: `<word_idx> <first_token_incl> <last_token_excl>` per line.

def parse_token_spans(text: str) -> list[TokenSpan]:
    """Read the token interval of each target word of a text side.

    Intervals must be listed for words 0, 1, ... in order, non-empty and
    non-overlapping; gaps between them are allowed (special tokens that
    belong to no word).
    """
    spans: list[TokenSpan] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ParseError(
                f"line {lineno}: expected '<word> <start> <end>', got {raw.strip()!r}"
            )
        try:
            word_idx, start, end = (int(p) for p in parts)
        except ValueError:
            raise ParseError(f"line {lineno}: bad integer in {raw.strip()!r}") from None
        if word_idx != len(spans):
            raise ParseError(
                f"line {lineno}: expected word index {len(spans)}, got {word_idx}"
            )
        if start < 0:
            raise ParseError(f"line {lineno}: negative token index {start}")
        if start >= end:
            raise ParseError(
                f"line {lineno}: empty interval [{start}, {end}) for word {word_idx}"
            )
        if spans and start < spans[-1].end:
            raise ParseError(
                f"line {lineno}: span [{start}, {end}) overlaps span "
                f"[{spans[-1].start}, {spans[-1].end}) of word {len(spans) - 1}"
            )
        spans.append(TokenSpan(start=start, end=end))
    if not spans:
        raise ParseError("token span file contains no spans")
    return spans


def serialize_token_spans(spans: Sequence[TokenSpan]) -> str:
    lines = [f"{k} {s.start} {s.end}" for k, s in enumerate(spans)]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Corpus manifests: JSON with a default task plus one entry per sample.

@dataclass(frozen=True)
class ManifestEntry:
    """Paths (relative to the manifest file) and task for one sample."""

    sample_id: str
    gold: str
    src_timeline: str
    contrib: tuple[str, ...]
    task: TaskKind
    tgt_timeline: str | None = None
    tgt_spans: str | None = None
    one_based: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "contrib", tuple(self.contrib))
        if not self.contrib:
            raise ValidationError(f"entry {self.sample_id!r}: no contribution matrix")
        if self.task is TaskKind.S2ST:
            if self.tgt_timeline is None:
                raise ValidationError(
                    f"entry {self.sample_id!r}: s2st requires tgt_timeline"
                )
            if self.tgt_spans is not None:
                raise ValidationError(
                    f"entry {self.sample_id!r}: s2st takes no tgt_spans"
                )
        elif self.task is TaskKind.S2TT:
            if self.tgt_spans is None:
                raise ValidationError(
                    f"entry {self.sample_id!r}: s2tt requires tgt_spans"
                )
            if self.tgt_timeline is not None:
                raise ValidationError(
                    f"entry {self.sample_id!r}: s2tt takes no tgt_timeline"
                )
        else:
            raise ValidationError(
                f"entry {self.sample_id!r}: manifests describe speech sources; "
                f"t2t is scored through the library API"
            )


@dataclass(frozen=True)
class CorpusManifest:
    entries: tuple[ManifestEntry, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))
        seen = set()
        for entry in self.entries:
            if entry.sample_id in seen:
                raise ValidationError(f"duplicate sample_id {entry.sample_id!r}")
            seen.add(entry.sample_id)

    def __len__(self) -> int:
        return len(self.entries)


def parse_manifest(text: str) -> CorpusManifest:
    doc = _json_object(text, "manifest")
    entries_doc = doc.get("entries")
    if not isinstance(entries_doc, list):
        raise ParseError("manifest needs an 'entries' list")
    default_task = doc.get("task")
    entries = []
    for k, entry in enumerate(entries_doc):
        if not isinstance(entry, dict):
            raise ParseError(f"entry {k}: expected an object")
        task_doc = entry.get("task", default_task)
        if task_doc is None:
            raise ParseError(
                f"entry {k}: no task given and the manifest has no default"
            )
        contrib = entry.get("contrib")
        if isinstance(contrib, str):
            contrib = (contrib,)
        elif isinstance(contrib, list) and all(isinstance(c, str) for c in contrib):
            contrib = tuple(contrib)
        else:
            raise ParseError(f"entry {k}: 'contrib' must be a path or list of paths")
        try:
            entries.append(ManifestEntry(
                sample_id=str(entry["sample_id"]),
                gold=str(entry["gold"]),
                src_timeline=str(entry["src_timeline"]),
                contrib=contrib,
                task=TaskKind.parse(str(task_doc)),
                tgt_timeline=_opt_str(entry, "tgt_timeline"),
                tgt_spans=_opt_str(entry, "tgt_spans"),
                one_based=bool(entry.get("one_based", False)),
            ))
        except KeyError as e:
            raise ParseError(f"entry {k}: missing field {e}") from None
        except ValidationError as e:
            raise ParseError(f"entry {k}: {e}") from None
    try:
        return CorpusManifest(entries=tuple(entries))
    except ValidationError as e:
        raise ParseError(str(e)) from None


def serialize_manifest(manifest: CorpusManifest) -> str:
    entries = []
    for entry in manifest.entries:
        doc: dict = {
            "sample_id": entry.sample_id,
            "task": entry.task.value,
            "gold": entry.gold,
            "src_timeline": entry.src_timeline,
        }
        if entry.tgt_timeline is not None:
            doc["tgt_timeline"] = entry.tgt_timeline
        if entry.tgt_spans is not None:
            doc["tgt_spans"] = entry.tgt_spans
        doc["contrib"] = (
            entry.contrib[0] if len(entry.contrib) == 1 else list(entry.contrib)
        )
        if entry.one_based:
            doc["one_based"] = True
        entries.append(doc)
    return json.dumps({"entries": entries}, indent=2, ensure_ascii=False) + "\n"


# ---------------------------------------------------------------------------
# Score reports: JSON with per-sample rows plus micro/macro aggregates,
# and a table rendering for humans (percentages, one decimal).

@dataclass(frozen=True)
class SampleFailure:
    sample_id: str
    error: str


@dataclass(frozen=True)
class CorpusResult:
    """Everything a corpus run produced, in manifest order."""

    label: str
    outcomes: tuple[Union[ScoreReport, SampleFailure], ...]
    aggregate: CorpusAggregate | None

    @property
    def reports(self) -> tuple[ScoreReport, ...]:
        return tuple(o for o in self.outcomes if isinstance(o, ScoreReport))

    @property
    def failures(self) -> tuple[SampleFailure, ...]:
        return tuple(o for o in self.outcomes if isinstance(o, SampleFailure))


_REPORT_FIELDS = (
    "saer", "tw_saer",
    "n_sure", "n_possible", "n_hypothesis", "n_hyp_sure", "n_hyp_possible",
    "w_hypothesis", "w_sure", "w_hyp_sure", "w_hyp_possible",
)


def report_to_dict(report: ScoreReport) -> dict:
    doc = {"sample_id": report.sample_id, "status": "scored"}
    doc.update({f: getattr(report, f) for f in _REPORT_FIELDS})
    return doc


def report_from_dict(doc: dict) -> ScoreReport:
    try:
        return ScoreReport(
            sample_id=str(doc["sample_id"]),
            **{f: doc[f] for f in _REPORT_FIELDS},
        )
    except KeyError as e:
        raise ParseError(f"score row is missing field {e}") from None
    except ValidationError as e:
        raise ParseError(str(e)) from None


def serialize_report(
    result: CorpusResult,
    layer_details: Mapping[str, dict] | None = None,
) -> str:
    """JSON corpus report; `layer_details` attaches per-sample layer-sweep
    records (both per-metric minima) for entries scored from several
    matrices."""
    samples = []
    for outcome in result.outcomes:
        if isinstance(outcome, ScoreReport):
            row = report_to_dict(outcome)
            if layer_details and outcome.sample_id in layer_details:
                row["layers"] = dict(layer_details[outcome.sample_id])
            samples.append(row)
        else:
            samples.append({
                "sample_id": outcome.sample_id,
                "status": "failed",
                "error": outcome.error,
            })
    doc = {
        "label": result.label,
        "n_samples": len(result.outcomes),
        "n_scored": len(result.reports),
        "n_failed": len(result.failures),
        "samples": samples,
        "micro": _pair_to_dict(result.aggregate.micro) if result.aggregate else None,
        "macro": _pair_to_dict(result.aggregate.macro) if result.aggregate else None,
    }
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def parse_report(text: str) -> CorpusResult:
    doc = _json_object(text, "score report")
    outcomes: list[Union[ScoreReport, SampleFailure]] = []
    for row in doc.get("samples", ()):
        if row.get("status") == "failed":
            outcomes.append(SampleFailure(
                sample_id=str(row["sample_id"]), error=str(row["error"])
            ))
        else:
            outcomes.append(report_from_dict(row))
    aggregate = None
    if doc.get("micro") is not None:
        aggregate = CorpusAggregate(
            micro=_pair_from_dict(doc["micro"]),
            macro=_pair_from_dict(doc.get("macro") or doc["micro"]),
        )
    return CorpusResult(
        label=str(doc.get("label", "")),
        outcomes=tuple(outcomes),
        aggregate=aggregate,
    )


def format_percent(score: float) -> str:
    return f"{100.0 * score:.1f}"


def format_report_table(result: CorpusResult) -> str:
    """Human-readable report: per-sample rows, pooled scores, and a final
    model-vs-score table."""
    id_width = max(
        [len("sample"), len(result.label), len("micro (pooled)")]
        + [len(o.sample_id) for o in result.outcomes]
    )
    header = f"{'sample':<{id_width}}  {'SAER(%)':>8}  {'TW-SAER(%)':>10}"
    lines = [
        f"{len(result.outcomes)} samples "
        f"({len(result.reports)} scored, {len(result.failures)} failed)",
        "",
        header,
        "-" * len(header),
    ]
    for outcome in result.outcomes:
        if isinstance(outcome, ScoreReport):
            lines.append(
                f"{outcome.sample_id:<{id_width}}  "
                f"{format_percent(outcome.saer):>8}  "
                f"{format_percent(outcome.tw_saer):>10}"
            )
        else:
            lines.append(f"{outcome.sample_id:<{id_width}}  {'FAILED':>8}  {outcome.error}")
    lines.append("-" * len(header))
    if result.aggregate is not None:
        micro, macro = result.aggregate.micro, result.aggregate.macro
        lines.append(
            f"{'micro (pooled)':<{id_width}}  {format_percent(micro.saer):>8}  "
            f"{format_percent(micro.tw_saer):>10}"
        )
        lines.append(
            f"{'macro (mean)':<{id_width}}  {format_percent(macro.saer):>8}  "
            f"{format_percent(macro.tw_saer):>10}"
        )
        lines.extend([
            "",
            f"{'model':<{id_width}}  {'SAER(%)':>8}  {'TW-SAER(%)':>10}",
            f"{result.label:<{id_width}}  {format_percent(micro.saer):>8}  "
            f"{format_percent(micro.tw_saer):>10}",
        ])
    return "\n".join(lines) + "\n"


def _pair_to_dict(pair: MetricPair) -> dict:
    return {"saer": pair.saer, "tw_saer": pair.tw_saer}


def _pair_from_dict(doc: dict) -> MetricPair:
    return MetricPair(saer=float(doc["saer"]), tw_saer=float(doc["tw_saer"]))


def _opt_str(doc: dict, key: str) -> str | None:
    value = doc.get(key)
    return None if value is None else str(value)


def _json_object(text: str, what: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid {what}: {e}") from None
    if not isinstance(doc, dict):
        raise ParseError(f"invalid {what}: expected a JSON object")
    return doc
