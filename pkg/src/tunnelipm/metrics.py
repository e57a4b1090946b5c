"""Detection scoring: IoU, greedy matching and all-points average precision."""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from .dataset import Annotation, BBox, SectionMap, filter_by_section
from .errors import MissingConfidence

DEFAULT_IOU = 0.5
CSV_FIELDS = ("section", "ap", "tp", "fp", "fn", "gt_count")


def iou(a: BBox, b: BBox) -> float:
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


@dataclass(frozen=True)
class Matching:
    """Result of matching detections against ground truth.

    ``labels`` holds ``(confidence, is_tp)`` in processing order, i.e. by
    descending confidence with ties kept in input order.
    """

    labels: Tuple[Tuple[float, bool], ...]
    fn: int
    gt_count: int

    @property
    def tp(self) -> int:
        return sum(1 for _, hit in self.labels if hit)

    @property
    def fp(self) -> int:
        return len(self.labels) - self.tp


def _ranked(dets: Sequence[Annotation]) -> List[int]:
    for d in dets:
        if d.confidence is None:
            raise MissingConfidence(f"detection on image {d.image_id!r} has no confidence")
    return sorted(range(len(dets)), key=lambda i: -dets[i].confidence)


def match_detections(dets: Sequence[Annotation], gts: Sequence[Annotation], iou_threshold: float = DEFAULT_IOU) -> Matching:
    """Greedy confidence-ranked matching within each image.

    Each detection takes the still-unmatched ground-truth box of highest IoU
    on its image; it is a true positive when that IoU reaches the threshold.
    """
    dets = list(dets)
    gt_by_image = defaultdict(list)
    for g in gts:
        gt_by_image[g.image_id].append(g)
    used = {k: [False] * len(v) for k, v in gt_by_image.items()}
    labels = []
    for i in _ranked(dets):
        det = dets[i]
        best, best_iou = -1, 0.0
        for j, g in enumerate(gt_by_image.get(det.image_id, ())):
            if used[det.image_id][j]:
                continue
            o = iou(det.bbox, g.bbox)
            if o > best_iou:
                best, best_iou = j, o
        hit = best >= 0 and best_iou >= iou_threshold
        if hit:
            used[det.image_id][best] = True
        labels.append((det.confidence, hit))
    matched = sum(sum(flags) for flags in used.values())
    return Matching(tuple(labels), len(gts) - matched, len(gts))


def precision_recall(labels: Sequence[Tuple[float, bool]], gt_count: int):
    """Cumulative precision and recall along ranked detections."""
    hits = np.array([hit for _, hit in labels], dtype=float)
    tp = np.cumsum(hits)
    fp = np.cumsum(1.0 - hits)
    precision = tp / np.maximum(tp + fp, 1.0)
    recall = tp / gt_count if gt_count > 0 else np.zeros_like(tp)
    return precision, recall


def average_precision(labels: Sequence[Tuple[float, bool]], gt_count: int) -> float:
    """All-points interpolated AP over ranked ``(confidence, is_tp)`` labels.

    Labels are re-sorted by descending confidence (stable). With no ground
    truth the AP is 1 when there are also no detections, 0 otherwise.
    """
    labels = sorted(labels, key=lambda lab: -lab[0])
    if gt_count == 0:
        return 1.0 if not labels else 0.0
    if not labels:
        return 0.0
    precision, _ = precision_recall(labels, gt_count)
    # envelope: best precision at any recall >= this one
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    # recall rises by exactly 1/gt_count at each hit and stays flat otherwise
    hits = np.array([hit for _, hit in labels], dtype=bool)
    return float(np.sum(envelope[hits]) / gt_count)


@dataclass(frozen=True)
class SectionResult:
    section: int
    ap: float
    tp: int
    fp: int
    fn: int
    gt_count: int


@dataclass(frozen=True)
class EvalResult:
    sections: Tuple[SectionResult, ...]
    overall: SectionResult

    @property
    def aps(self) -> List[float]:
        return [s.ap for s in self.sections]

    def rows(self):
        out = [(str(s.section + 1), s.ap, s.tp, s.fp, s.fn, s.gt_count) for s in self.sections]
        o = self.overall
        out.append(("all", o.ap, o.tp, o.fp, o.fn, o.gt_count))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        for row in self.rows():
            writer.writerow([row[0], repr(row[1])] + list(row[2:]))
        return buf.getvalue()

    def to_table(self) -> str:
        lines = [f"{'section':>8} {'AP':>8} {'TP':>6} {'FP':>6} {'FN':>6} {'GT':>6}"]
        for label, ap, tp, fp, fn, gt in self.rows():
            lines.append(f"{label:>8} {ap:8.4f} {tp:6d} {fp:6d} {fn:6d} {gt:6d}")
        return "\n".join(lines)


def read_eval_csv(path) -> dict:
    """Read an evaluation CSV back as ``{section label: row dict}``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_FIELDS:
            raise ValueError(f"{path}: expected columns {','.join(CSV_FIELDS)}")
        return {
            row["section"]: {
                "ap": float(row["ap"]),
                **{k: int(row[k]) for k in ("tp", "fp", "fn", "gt_count")},
            }
            for row in reader
        }


def _score(section: int, dets, gts, iou_threshold) -> SectionResult:
    m = match_detections(dets, gts, iou_threshold)
    return SectionResult(section, average_precision(m.labels, m.gt_count), m.tp, m.fp, m.fn, m.gt_count)


def evaluate_by_section(gts: Iterable[Annotation], dets: Iterable[Annotation], m: SectionMap, iou_threshold: float = DEFAULT_IOU) -> EvalResult:
    """AP per distance section; boxes outside a section are left out of its score.

    Both ground truth and detections are binned with the same section map
    before matching. ``overall`` pools everything without binning.
    """
    gts = list(gts)
    dets = list(dets)
    sections = tuple(
        _score(k, filter_by_section(dets, m, k), filter_by_section(gts, m, k), iou_threshold)
        for k in range(m.section_count)
    )
    return EvalResult(sections, _score(-1, dets, gts, iou_threshold))
