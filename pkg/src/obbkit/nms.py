"""Greedy rotated non-maximum suppression."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

from .errors import ConfigError
from .geometry import OrientedBox, boxes_to_array, iou_matrix


@dataclass(frozen=True)
class Detection:
    box: OrientedBox
    class_id: Hashable
    score: float

    def __post_init__(self):
        score = float(self.score)
        if not (math.isfinite(score) and 0.0 <= score <= 1.0):
            raise ConfigError(f"detection score must lie in [0, 1], got {self.score}")
        object.__setattr__(self, "score", score)


def check_threshold(name: str, value: float) -> float:
    value = float(value)
    if not (math.isfinite(value) and 0.0 <= value <= 1.0):
        raise ConfigError(f"{name} must lie in [0, 1], got {value}")
    return value


def score_order(dets: Sequence[Detection]) -> list[int]:
    """Indices by descending score; equal scores keep input order."""
    return sorted(range(len(dets)), key=lambda i: -dets[i].score)


def rotated_nms(
    dets: Sequence[Detection],
    iou_threshold: float = 0.5,
    score_threshold: float = 0.0,
    class_aware: bool = True,
) -> list[Detection]:
    """Keep the highest-scoring detections, dropping any whose IoU with a kept
    detection (of the same class when ``class_aware``) exceeds ``iou_threshold``.

    Detections scoring below ``score_threshold`` are discarded first. The
    result is sorted by descending score.
    """
    iou_threshold = check_threshold("iou_threshold", iou_threshold)
    score_threshold = check_threshold("score_threshold", score_threshold)
    cand = [d for d in dets if d.score >= score_threshold]
    order = score_order(cand)
    cand = [cand[i] for i in order]
    if not cand:
        return []
    ious = iou_matrix(boxes_to_array([d.box for d in cand]), boxes_to_array([d.box for d in cand]))
    if class_aware:
        codes: dict = {}
        labels = np.array([codes.setdefault(d.class_id, len(codes)) for d in cand])
        same = labels[:, None] == labels[None, :]
    else:
        same = np.ones((len(cand), len(cand)), dtype=bool)
    suppressed = np.zeros(len(cand), dtype=bool)
    keep = []
    for i in range(len(cand)):
        if suppressed[i]:
            continue
        keep.append(cand[i])
        suppressed |= same[i] & (ious[i] > iou_threshold)
    return keep
