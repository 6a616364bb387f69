"""Glue between DOTA file records and the evaluation types.

Also holds the ``(cx cy w h theta)`` text form used by ``obbkit convert``:

    annotation:  cx cy w h theta category difficult
    prediction:  category score cx cy w h theta
"""

from __future__ import annotations

import math
import re
from pathlib import Path
from typing import NamedTuple

from . import dota_io
from .dota_io import AnnotationRecord, Diagnostic, ParseResult, PredictionRecord, format_number
from .errors import DotaFormatError, InvalidBoxError
from .evaluator import GroundTruth
from .geometry import OrientedBox, fit_rectangle, to_vertices
from .nms import Detection


def slug(tag: str) -> str:
    """Filesystem-safe directory name for a condition or run tag."""
    s = re.sub(r"[^A-Za-z0-9._-]+", "_", tag).strip("_")
    return s or "_"


def gts_to_records(gts) -> list[AnnotationRecord]:
    return [AnnotationRecord(to_vertices(g.box), str(g.class_id), int(g.difficult)) for g in gts]


def dets_to_records(dets) -> list[PredictionRecord]:
    return [PredictionRecord(to_vertices(d.box), str(d.class_id), d.score) for d in dets]


def records_to_gts(records) -> tuple[list[GroundTruth], int]:
    """GroundTruths plus the number of non-rectangular quads that needed fitting."""
    out, approx = [], 0
    for r in records:
        fit = fit_rectangle(r.quad)
        approx += not fit.exact
        out.append(GroundTruth(fit.box, r.category, bool(r.difficult)))
    return out, approx


def records_to_dets(records) -> tuple[list[Detection], int]:
    out, approx = [], 0
    for r in records:
        fit = fit_rectangle(r.quad)
        approx += not fit.exact
        out.append(Detection(fit.box, r.category, r.score))
    return out, approx


class LoadedImage(NamedTuple):
    gts: list
    dets: list


class LoadedCorpus(NamedTuple):
    images: dict
    diagnostics: list  # (relative file, Diagnostic)
    n_gt_files: int
    n_pred_files: int
    non_rectangular: int


def _image_files(root: Path) -> dict[str, Path]:
    return {p.relative_to(root).with_suffix("").as_posix(): p for p in dota_io.annotation_files(root)}


def load_eval_dirs(gt_dir, pred_dir) -> LoadedCorpus:
    """Pair ``<id>.txt`` annotation files with same-named prediction files.

    A missing prediction file means no detections for that image; a
    prediction file without annotations is an image with no ground truth.
    """
    gt_dir, pred_dir = Path(gt_dir), Path(pred_dir)
    gt_files = _image_files(gt_dir)
    pred_files = _image_files(pred_dir)
    diags = []
    approx = 0
    images = {}
    for image_id in sorted(set(gt_files) | set(pred_files)):
        gts, dets = [], []
        if image_id in gt_files:
            res = _parse(dota_io.parse_annotation_file, gt_files[image_id], gt_dir)
            diags.extend((f"gt/{image_id}.txt", d) for d in res.diagnostics)
            gts, n = records_to_gts(res.records)
            approx += n
        if image_id in pred_files:
            res = _parse(dota_io.parse_prediction_file, pred_files[image_id], pred_dir)
            diags.extend((f"pred/{image_id}.txt", d) for d in res.diagnostics)
            dets, n = records_to_dets(res.records)
            approx += n
        images[image_id] = LoadedImage(gts, dets)
    return LoadedCorpus(images, diags, len(gt_files), len(pred_files), approx)


def _parse(fn, path, root):
    try:
        return fn(path)
    except DotaFormatError as exc:
        where = path.relative_to(root).as_posix()
        raise DotaFormatError(f"{where}: {exc}", exc.diagnostics) from None


# ---------------------------------------------------------------------------
# (cx cy w h theta) text form


def _box_fields(box: OrientedBox) -> str:
    return " ".join(format_number(v) for v in box.as_tuple())


def obb_annotation_line(box: OrientedBox, category: str, difficult: int) -> str:
    return f"{_box_fields(box)} {category} {int(difficult)}"


def obb_prediction_line(box: OrientedBox, category: str, score: float) -> str:
    return f"{category} {format_number(score)} {_box_fields(box)}"


def _floats(tokens):
    vals = [float(t) for t in tokens]
    if not all(math.isfinite(v) for v in vals):
        raise ValueError("non-finite number")
    return vals


def parse_obb_file(source, kind: str = "annotation") -> ParseResult:
    """Parse the five-parameter form back into DOTA records (same diagnostic policy)."""
    records, diags, lines = [], [], []
    saw_data = False
    for lineno, text, diag in dota_io._decoded(dota_io._read_lines(source)):
        if diag is not None:
            saw_data = True
            diags.append(diag)
            continue
        tokens = text.split()
        if not tokens:
            continue
        saw_data = True
        if len(tokens) != 7:
            diags.append(Diagnostic(lineno, "malformed", f"expected 7 fields, got {len(tokens)}"))
            continue
        try:
            if kind == "annotation":
                cx, cy, w, h, theta = _floats(tokens[:5])
                category, flag = tokens[5], tokens[6]
                if flag not in ("0", "1"):
                    raise ValueError(f"difficult flag must be 0 or 1, got {flag!r}")
                rec = AnnotationRecord(to_vertices(OrientedBox(cx, cy, w, h, theta)), category, int(flag))
            else:
                category = tokens[0]
                score, cx, cy, w, h, theta = _floats(tokens[1:])
                if not 0.0 <= score <= 1.0:
                    diags.append(Diagnostic(lineno, "score-range", f"score {tokens[1]} outside [0, 1]"))
                    continue
                rec = PredictionRecord(to_vertices(OrientedBox(cx, cy, w, h, theta)), category, score)
        except InvalidBoxError as exc:
            diags.append(Diagnostic(lineno, "invalid-box", str(exc)))
            continue
        except ValueError as exc:
            diags.append(Diagnostic(lineno, "malformed", str(exc)))
            continue
        records.append(rec)
        lines.append(lineno)
    if saw_data and not records:
        raise DotaFormatError("no parseable box lines", diags)
    return ParseResult(records, diags, [], lines)
