"""Oriented detection evaluation: matching, PR curves, AP and mAP.

Matching is greedy by descending score within each image. A detection takes
the unmatched, non-difficult ground truth of its class with the highest
rotated IoU, provided that IoU reaches the threshold. Failing that, a
detection that overlaps a difficult ground truth at the threshold is ignored
(counted as neither TP nor FP); anything else is a false positive.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Hashable, Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, EmptyEvaluationError
from .geometry import OrientedBox, boxes_to_array, iou_matrix
from .nms import Detection, check_threshold, score_order

AP_MODES = ("all_points", "eleven_point")
_AP_ALIASES = {"all": "all_points", "all_points": "all_points", "11pt": "eleven_point", "eleven_point": "eleven_point"}


@dataclass(frozen=True)
class GroundTruth:
    box: OrientedBox
    class_id: Hashable
    difficult: bool = False


class Match(NamedTuple):
    det_index: int
    gt_index: int | None
    #: True for TP, False for FP, None when ignored because of a difficult GT
    is_tp: bool | None


@dataclass(frozen=True)
class PrCurve:
    class_id: Hashable
    points: tuple[tuple[float, float], ...]
    n_gt: int

    @property
    def defined(self) -> bool:
        return self.n_gt > 0

    @property
    def recalls(self) -> np.ndarray:
        return np.array([p[0] for p in self.points], dtype=np.float64)

    @property
    def precisions(self) -> np.ndarray:
        return np.array([p[1] for p in self.points], dtype=np.float64)


def class_sort_key(c) -> tuple:
    # ints sort numerically, everything else by its string form
    if isinstance(c, (int, np.integer)) and not isinstance(c, bool):
        return (0, int(c), "")
    return (1, 0, str(c))


def normalize_ap_mode(mode: str) -> str:
    try:
        return _AP_ALIASES[mode]
    except KeyError:
        raise ConfigError(f"unknown AP mode {mode!r}; expected 'all' or '11pt'") from None


def match_detections(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruth],
    iou_threshold: float = 0.5,
) -> list[Match]:
    """Greedy single-image matching; returns one Match per detection in score order."""
    iou_threshold = check_threshold("iou_threshold", iou_threshold)
    order = score_order(dets)
    if not dets:
        return []
    if gts:
        ious = iou_matrix(boxes_to_array([d.box for d in dets]), boxes_to_array([g.box for g in gts]))
    else:
        ious = np.zeros((len(dets), 0))
    taken = [False] * len(gts)
    out = []
    for i in order:
        det = dets[i]
        best_j, best_iou = None, -1.0
        hits_difficult = False
        for j, gt in enumerate(gts):
            if gt.class_id != det.class_id:
                continue
            iou = ious[i, j]
            if iou < iou_threshold:
                continue
            if gt.difficult:
                hits_difficult = True
            elif not taken[j] and iou > best_iou:
                best_j, best_iou = j, iou
        if best_j is not None:
            taken[best_j] = True
            out.append(Match(i, best_j, True))
        elif hits_difficult:
            out.append(Match(i, None, None))
        else:
            out.append(Match(i, None, False))
    return out


def precision_recall_curve(scored: Iterable[tuple[float, bool | None]], n_gt: int, class_id=None) -> PrCurve:
    """Cumulative PR sweep over (score, is_tp) pairs in descending score order.

    One point per distinct score: tied detections enter together, so the
    curve does not depend on how ties happen to be ordered. Ignored entries
    (``None``) are skipped.
    """
    tp = fp = 0
    points = []
    if n_gt > 0:
        rows = [(float(s), t) for s, t in scored if t is not None]
        for i, (score, is_tp) in enumerate(rows):
            if is_tp:
                tp += 1
            else:
                fp += 1
            if i + 1 == len(rows) or rows[i + 1][0] != score:
                points.append((tp / n_gt, tp / (tp + fp)))
    return PrCurve(class_id, tuple(points), int(n_gt))


def precision_envelope(precisions: np.ndarray) -> np.ndarray:
    """Right-to-left running maximum; nonincreasing in recall."""
    if len(precisions) == 0:
        return np.asarray(precisions, dtype=np.float64)
    return np.maximum.accumulate(np.asarray(precisions, dtype=np.float64)[::-1])[::-1]


def average_precision(curve: PrCurve, mode: str = "all_points") -> float | None:
    """Area under the monotone precision envelope; None for classes without GT."""
    mode = normalize_ap_mode(mode)
    if not curve.defined:
        return None
    if not curve.points:
        return 0.0
    rec = curve.recalls
    prec = curve.precisions
    if mode == "eleven_point":
        total = 0.0
        for k in range(11):
            mask = rec >= k / 10
            total += float(prec[mask].max()) if mask.any() else 0.0
        return total / 11.0
    mrec = np.concatenate(([0.0], rec, [1.0]))
    mpre = precision_envelope(np.concatenate(([0.0], prec, [0.0])))
    steps = np.nonzero(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def mean_ap(per_class: Mapping) -> float:
    """Arithmetic mean over classes whose AP is defined (not None)."""
    values = [v for v in per_class.values() if v is not None]
    if not values:
        raise EmptyEvaluationError("no class has ground truth; mAP is undefined")
    return float(sum(values) / len(values))


@dataclass(frozen=True)
class EvalReport:
    per_class_ap: dict
    map: float
    n_images: int
    n_gt: int
    iou_threshold: float
    ap_mode: str
    curves: dict = field(default_factory=dict, compare=False)
    config: dict = field(default_factory=dict)
    sub_reports: dict = field(default_factory=dict)

    def to_dict(self, include_curves: bool = False) -> dict:
        d = {
            "map": self.map,
            "per_class_ap": {str(k): v for k, v in self.per_class_ap.items()},
            "n_images": self.n_images,
            "n_gt": self.n_gt,
            "iou_threshold": self.iou_threshold,
            "ap_mode": self.ap_mode,
            "config": self.config,
        }
        if include_curves:
            d["curves"] = {
                str(k): {"n_gt": c.n_gt, "points": [list(p) for p in c.points]}
                for k, c in self.curves.items()
            }
        if self.sub_reports:
            d["sub_reports"] = {k: r.to_dict(include_curves) for k, r in self.sub_reports.items()}
        return d


def evaluate_image(dets, gts, iou_threshold):
    """Per-image work unit: matches plus non-difficult GT counts by class."""
    matches = match_detections(dets, gts, iou_threshold)
    counts: dict = {}
    for g in gts:
        if not g.difficult:
            counts[g.class_id] = counts.get(g.class_id, 0) + 1
    scored = [(dets[m.det_index].score, dets[m.det_index].class_id, m.det_index, m.is_tp) for m in matches]
    return scored, counts, {g.class_id for g in gts}


def reduce_images(image_ids, per_image, iou_threshold, ap_mode, config=None) -> EvalReport:
    """Fold per-image results (in any order) into one report.

    Images are visited in sorted-id order so the PR sweep does not depend
    on how the caller enumerated or scheduled them.
    """
    ap_mode = normalize_ap_mode(ap_mode)
    by_id = dict(zip(image_ids, per_image))
    rows = []
    n_gt: dict = {}
    classes: set = set()
    for rank, image_id in enumerate(sorted(by_id, key=str)):
        scored, counts, gt_classes = by_id[image_id]
        classes |= gt_classes
        for c, k in counts.items():
            n_gt[c] = n_gt.get(c, 0) + k
        for score, class_id, det_index, is_tp in scored:
            classes.add(class_id)
            rows.append((-score, rank, det_index, class_id, is_tp))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    per_class: dict = {}
    curves: dict = {}
    for c in sorted(classes, key=class_sort_key):
        seq = [(-r[0], r[4]) for r in rows if r[3] == c]
        curve = precision_recall_curve(seq, n_gt.get(c, 0), c)
        curves[c] = curve
        per_class[c] = average_precision(curve, ap_mode)
    defined = {c: ap for c, ap in per_class.items() if ap is not None}
    return EvalReport(
        per_class_ap=defined,
        map=mean_ap(defined),
        n_images=len(by_id),
        n_gt=sum(n_gt.values()),
        iou_threshold=iou_threshold,
        ap_mode=ap_mode,
        curves=curves,
        config=dict(config or {}),
    )


def evaluate(
    images: Mapping[Hashable, tuple[Sequence[Detection], Sequence[GroundTruth]]],
    iou_threshold: float = 0.5,
    ap_mode: str = "all_points",
    config: dict | None = None,
) -> EvalReport:
    """Evaluate ``{image_id: (detections, ground_truths)}``."""
    iou_threshold = check_threshold("iou_threshold", iou_threshold)
    ids = list(images)
    per_image = [evaluate_image(*images[i], iou_threshold) for i in ids]
    return reduce_images(ids, per_image, iou_threshold, ap_mode, config)


def category_report(evals: Mapping[str, EvalReport]) -> EvalReport:
    """Combine per-condition reports; one condition is returned unchanged.

    The combined mAP and per-class AP are means over the conditions.
    """
    if not evals:
        raise ConfigError("category_report needs at least one condition")
    if len(evals) == 1:
        return next(iter(evals.values()))
    reports = list(evals.values())
    classes = sorted({c for r in reports for c in r.per_class_ap}, key=class_sort_key)
    per_class = {}
    for c in classes:
        vals = [r.per_class_ap[c] for r in reports if c in r.per_class_ap]
        per_class[c] = float(sum(vals) / len(vals))
    first = reports[0]
    return EvalReport(
        per_class_ap=per_class,
        map=float(sum(r.map for r in reports) / len(reports)),
        n_images=sum(r.n_images for r in reports),
        n_gt=sum(r.n_gt for r in reports),
        iou_threshold=first.iou_threshold,
        ap_mode=first.ap_mode,
        config=dict(first.config),
        sub_reports=dict(evals),
    )


def with_config(report: EvalReport, config: dict) -> EvalReport:
    return replace(report, config=dict(config))
