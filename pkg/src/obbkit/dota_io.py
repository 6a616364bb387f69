"""DOTA-style annotation and prediction files.

Annotation lines::

    x1 y1 x2 y2 x3 y3 x4 y4 category difficult

optionally preceded by ``imagesource:`` / ``gsd:`` header lines. Prediction
lines::

    category score x1 y1 x2 y2 x3 y3 x4 y4

Parsing is tolerant: a bad line becomes a :class:`Diagnostic` and the rest
of the file is still read. Writing is canonical (canonical vertex winding,
shortest round-trip decimals, LF endings), so parse then write is
byte-identical for files already in canonical form.
"""

from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

from .errors import DotaFormatError, DotaIOError, InvalidPolygonError
from .geometry import VertexQuad

HEADER_PREFIXES = ("imagesource:", "gsd:")


@dataclass(frozen=True)
class AnnotationRecord:
    quad: VertexQuad
    category: str
    difficult: int = 0


@dataclass(frozen=True)
class PredictionRecord:
    quad: VertexQuad
    category: str
    score: float


class Diagnostic(NamedTuple):
    line: int
    kind: str
    message: str


class ParseResult(NamedTuple):
    records: list
    diagnostics: list
    header: list = []
    #: source line number of each record
    lines: list = []


def format_number(x: float) -> str:
    """Shortest decimal that round-trips, without a trailing ``.0``."""
    x = float(x) + 0.0
    s = repr(x)
    if s.endswith(".0"):
        s = s[:-2]
    return s


def _read_lines(source) -> list:
    """Split a source into raw lines (bytes or str) without decoding errors escaping.

    ``bytes`` are file content; ``str`` and ``os.PathLike`` are paths; anything
    else is read as a stream.
    """
    if isinstance(source, (bytes, bytearray)):
        data = bytes(source)
    elif isinstance(source, (str, os.PathLike)):
        try:
            data = Path(source).read_bytes()
        except OSError as exc:
            raise DotaIOError(f"cannot read {source}: {exc}") from exc
    else:
        try:
            data = source.read()
        except (OSError, ValueError) as exc:
            raise DotaIOError(f"cannot read stream: {exc}") from exc
    if isinstance(data, str):
        return data.split("\n")
    return data.split(b"\n")


def _decoded(raw_lines):
    for lineno, raw in enumerate(raw_lines, start=1):
        if isinstance(raw, bytes):
            try:
                text = raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                yield lineno, None, Diagnostic(lineno, "encoding", f"invalid UTF-8: {exc.reason}")
                continue
        else:
            text = raw
        yield lineno, text.rstrip("\r"), None


def _parse_floats(tokens, lineno):
    vals = []
    for tok in tokens:
        try:
            v = float(tok)
        except ValueError:
            return None, Diagnostic(lineno, "malformed", f"not a number: {tok!r}")
        if not math.isfinite(v):
            return None, Diagnostic(lineno, "malformed", f"non-finite number: {tok!r}")
        vals.append(v)
    return vals, None


def _make_quad(coords, lineno):
    try:
        return VertexQuad.from_flat(coords), None
    except InvalidPolygonError as exc:
        kind = "degenerate-quad" if "degenerate" in str(exc) else "nonconvex-quad"
        return None, Diagnostic(lineno, kind, str(exc))


def _finish(records, diags, header, lines, saw_data, what):
    if saw_data and not records:
        raise DotaFormatError(f"no parseable {what} lines", diags)
    return ParseResult(records, diags, header, lines)


def parse_annotation_file(source) -> ParseResult:
    """Parse annotation lines from a path, a text/binary stream, or raw bytes."""
    records, diags, header, lines = [], [], [], []
    saw_data = False
    in_header = True
    for lineno, text, diag in _decoded(_read_lines(source)):
        if diag is not None:
            saw_data = True
            diags.append(diag)
            continue
        stripped = text.strip()
        if not stripped:
            continue
        if in_header and stripped.startswith(HEADER_PREFIXES):
            header.append(stripped)
            continue
        in_header = False
        saw_data = True
        tokens = stripped.split()
        if len(tokens) != 10:
            diags.append(Diagnostic(lineno, "malformed", f"expected 10 fields, got {len(tokens)}"))
            continue
        coords, d = _parse_floats(tokens[:8], lineno)
        if d:
            diags.append(d)
            continue
        category, flag = tokens[8], tokens[9]
        if flag not in ("0", "1"):
            diags.append(Diagnostic(lineno, "malformed", f"difficult flag must be 0 or 1, got {flag!r}"))
            continue
        quad, d = _make_quad(coords, lineno)
        if d:
            diags.append(d)
            continue
        records.append(AnnotationRecord(quad, category, int(flag)))
        lines.append(lineno)
    return _finish(records, diags, header, lines, saw_data, "annotation")


def parse_prediction_file(source) -> ParseResult:
    """Parse prediction lines (``category score x1 y1 ... x4 y4``)."""
    records, diags, lines = [], [], []
    saw_data = False
    for lineno, text, diag in _decoded(_read_lines(source)):
        if diag is not None:
            saw_data = True
            diags.append(diag)
            continue
        stripped = text.strip()
        if not stripped:
            continue
        saw_data = True
        tokens = stripped.split()
        if len(tokens) != 10:
            diags.append(Diagnostic(lineno, "malformed", f"expected 10 fields, got {len(tokens)}"))
            continue
        nums, d = _parse_floats(tokens[1:], lineno)
        if d:
            diags.append(d)
            continue
        score, coords = nums[0], nums[1:]
        if not 0.0 <= score <= 1.0:
            diags.append(Diagnostic(lineno, "score-range", f"score {tokens[1]} outside [0, 1]"))
            continue
        quad, d = _make_quad(coords, lineno)
        if d:
            diags.append(d)
            continue
        records.append(PredictionRecord(quad, tokens[0], score))
        lines.append(lineno)
    return _finish(records, diags, [], lines, saw_data, "prediction")


def annotation_line(rec: AnnotationRecord) -> str:
    coords = " ".join(format_number(c) for c in rec.quad.flat())
    return f"{coords} {rec.category} {int(rec.difficult)}"


def prediction_line(rec: PredictionRecord) -> str:
    coords = " ".join(format_number(c) for c in rec.quad.flat())
    return f"{rec.category} {format_number(rec.score)} {coords}"


def write_annotation_file(records: Iterable[AnnotationRecord], stream=None, header=()) -> str:
    """Render records canonically; also writes to ``stream`` when given."""
    lines = list(header) + [annotation_line(r) for r in records]
    text = "".join(line + "\n" for line in lines)
    if stream is not None:
        stream.write(text)
    return text


def write_prediction_file(records: Iterable[PredictionRecord], stream=None) -> str:
    text = "".join(prediction_line(r) + "\n" for r in records)
    if stream is not None:
        stream.write(text)
    return text


def write_text(path, text: str) -> None:
    """Write UTF-8 with LF endings regardless of platform."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with io.open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# corpus validation


class Finding(NamedTuple):
    path: str
    line: int
    kind: str
    message: str


@dataclass
class ValidationReport:
    root: str
    n_files: int = 0
    n_records: int = 0
    findings: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.findings

    def count(self, kind: str) -> int:
        return sum(1 for f in self.findings if f.kind == kind)

    def to_dict(self) -> dict:
        return {
            "root": self.root,
            "n_files": self.n_files,
            "n_records": self.n_records,
            "findings": [f._asdict() for f in self.findings],
        }


def annotation_files(root) -> list[Path]:
    """All ``*.txt`` files under ``root``, sorted by relative path."""
    root = Path(root)
    return sorted(p for p in root.rglob("*.txt") if p.is_file())


def validate_corpus(root, categories: Iterable[str] | None = None) -> ValidationReport:
    """Check an annotation directory (one ``<image_id>.txt`` per image).

    Reports duplicate image ids (same file stem twice), every parser
    diagnostic (degenerate / non-convex quads, malformed lines), unknown
    categories when ``categories`` is given, and unreadable files.
    """
    root = Path(root)
    if not root.is_dir():
        raise DotaIOError(f"not a directory: {root}")
    known = set(categories) if categories is not None else None
    report = ValidationReport(str(root))
    seen: dict[str, Path] = {}
    for path in annotation_files(root):
        rel = path.relative_to(root).as_posix()
        report.n_files += 1
        image_id = path.stem
        if image_id in seen:
            report.findings.append(
                Finding(rel, 0, "duplicate-id", f"image id {image_id!r} also in {seen[image_id].relative_to(root).as_posix()}")
            )
        else:
            seen[image_id] = path
        try:
            result = parse_annotation_file(path)
            diags = result.diagnostics
            records = result.records
            linenos = result.lines
        except DotaFormatError as exc:
            diags = exc.diagnostics or [Diagnostic(0, "format", str(exc))]
            records, linenos = [], []
        except DotaIOError as exc:
            report.findings.append(Finding(rel, 0, "io-error", str(exc)))
            continue
        report.n_records += len(records)
        for d in diags:
            report.findings.append(Finding(rel, d.line, d.kind, d.message))
        if known is not None:
            for lineno, rec in zip(linenos, records):
                if rec.category not in known:
                    report.findings.append(
                        Finding(rel, lineno, "unknown-category", f"category {rec.category!r} not in list")
                    )
    return report
