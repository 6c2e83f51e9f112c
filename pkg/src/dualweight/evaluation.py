"""
Inference-side evaluation: score filtering, greedy NMS, rank-order matching
and COCO-style average precision over IoU thresholds 0.50:0.05:0.95.
"""

from dataclasses import dataclass, field

import numpy as np

from .geometry import as_boxes, iou, pairwise_iou

IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * k, 2) for k in range(10))
# exact k/100 grid; linspace yields 0.7000000000000001 and misses recall 7/10
RECALL_POINTS = np.arange(101) / 100


@dataclass
class Detection:
    box: tuple
    score: float
    category: int = 0

    def __post_init__(self):
        if not 0 <= self.score <= 1:
            raise ValueError(f"score {self.score} outside [0, 1]")


@dataclass
class MatchResult:
    tp: np.ndarray
    matched_gt: np.ndarray
    threshold: float

    @property
    def fp(self) -> np.ndarray:
        return ~self.tp


@dataclass
class ApReport:
    thresholds: tuple
    ap: list
    num_gts: int
    num_dets: int
    empty: bool = False
    extras: dict = field(default_factory=dict)

    @property
    def mean(self) -> float:
        return float(np.mean(self.ap)) if self.ap else 0.0

    def at(self, threshold: float) -> float:
        return self.ap[self.thresholds.index(round(threshold, 2))]

    @property
    def ap50(self) -> float:
        return self.at(0.5)

    @property
    def ap75(self) -> float:
        return self.at(0.75)

    def to_dict(self) -> dict:
        return {
            "AP": self.mean,
            "AP50": self.ap50,
            "AP75": self.ap75,
            "per_threshold": {f"{t:.2f}": a for t, a in zip(self.thresholds, self.ap)},
            "num_gts": self.num_gts,
            "num_dets": self.num_dets,
            "empty": self.empty,
        }


def nms(boxes, scores, iou_threshold: float) -> np.ndarray:
    """Greedy NMS. Returns kept indices in descending score order.

    Equal scores keep their input order.
    """
    boxes = as_boxes(boxes).reshape(-1, 4)
    order = np.argsort(-np.asarray(scores, dtype=float), kind="stable")
    keep = []
    while order.size:
        top = order[0]
        keep.append(top)
        rest = order[1:]
        ov = iou(boxes[top], boxes[rest])
        order = rest[ov <= iou_threshold]
    return np.array(keep, dtype=int)


def filter_and_nms(boxes, scores, categories=None, score_thresh: float = 0.05, nms_iou: float = 0.6,
                   max_dets: int | None = 100) -> np.ndarray:
    """Indices of surviving detections, sorted by descending score.

    NMS runs per category; boxes scoring below ``score_thresh`` are dropped
    first. At most ``max_dets`` indices are returned.
    """
    scores = np.asarray(scores, dtype=float).reshape(-1)
    boxes = as_boxes(boxes).reshape(-1, 4)
    cats = np.zeros(len(scores), dtype=int) if categories is None else np.asarray(categories).reshape(-1)
    cand = np.flatnonzero(scores >= score_thresh)
    kept = []
    for c in np.unique(cats[cand]):
        idx = cand[cats[cand] == c]
        kept.append(idx[nms(boxes[idx], scores[idx], nms_iou)])
    if not kept:
        return np.zeros(0, dtype=int)
    kept = np.concatenate(kept)
    kept = kept[np.lexsort((kept, -scores[kept]))]
    return kept if max_dets is None else kept[:max_dets]


def match_detections(det_boxes, gt_boxes, threshold: float, ious=None) -> MatchResult:
    """Label rank-ordered detections as TP/FP at IoU ``threshold``.

    Each detection takes its best still-unmatched GT (lowest index on IoU
    ties) and is a TP only if that IoU exceeds ``threshold``. A precomputed
    ``(det, gt)`` IoU matrix may be passed as ``ious``.
    """
    det_boxes = as_boxes(det_boxes).reshape(-1, 4)
    gt_boxes = as_boxes(gt_boxes).reshape(-1, 4)
    nd, ng = len(det_boxes), len(gt_boxes)
    tp = np.zeros(nd, dtype=bool)
    matched = np.full(nd, -1)
    if nd == 0 or ng == 0:
        return MatchResult(tp, matched, threshold)
    ov = pairwise_iou(det_boxes, gt_boxes) if ious is None else ious
    free = np.ones(ng, dtype=bool)
    for d in range(nd):
        cand = np.where(free, ov[d], -1.0)
        g = int(np.argmax(cand))
        if free[g] and cand[g] > threshold:
            tp[d] = True
            matched[d] = g
            free[g] = False
    return MatchResult(tp, matched, threshold)


def average_precision(tp, num_gts: int, method: str = "coco101") -> float:
    """AP of a rank-ordered TP/FP sequence.

    ``coco101`` samples the monotone precision envelope at 101 recall
    points; ``continuous`` integrates the envelope exactly. With no GTs
    the result is 0.
    """
    tp = np.asarray(tp, dtype=bool).reshape(-1)
    if num_gts == 0 or tp.size == 0:
        return 0.0
    ctp = np.cumsum(tp)
    cfp = np.cumsum(~tp)
    recall = ctp / num_gts
    precision = ctp / (ctp + cfp)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    if method == "coco101":
        pos = np.searchsorted(recall, RECALL_POINTS, side="left")
        sampled = np.zeros(len(RECALL_POINTS))
        ok = pos < len(recall)
        sampled[ok] = envelope[pos[ok]]
        return float(np.mean(sampled))
    if method == "continuous":
        steps = np.diff(np.concatenate([[0.0], recall]))
        return float(np.sum(steps * envelope))
    raise ValueError(f"unknown AP method {method!r}")


def coco_ap(det_boxes, det_scores, gt_boxes, det_cats=None, gt_cats=None, max_dets: int | None = 100,
            method: str = "coco101") -> ApReport:
    """AP at the ten COCO IoU thresholds, averaged over GT categories.

    Categories with detections but no GTs are ignored, as COCO does. A scene
    with no GTs scores 0; when it also has no detections the report is
    flagged ``empty``.
    """
    det_boxes = as_boxes(det_boxes).reshape(-1, 4)
    gt_boxes = as_boxes(gt_boxes).reshape(-1, 4)
    det_scores = np.asarray(det_scores, dtype=float).reshape(-1)
    det_cats = np.zeros(len(det_boxes), dtype=int) if det_cats is None else np.asarray(det_cats).reshape(-1)
    gt_cats = np.zeros(len(gt_boxes), dtype=int) if gt_cats is None else np.asarray(gt_cats).reshape(-1)
    nd, ng = len(det_boxes), len(gt_boxes)
    if ng == 0:
        return ApReport(IOU_THRESHOLDS, [0.0] * len(IOU_THRESHOLDS), 0, nd, empty=nd == 0)
    per_cat = []
    for c in np.unique(gt_cats):
        d_idx = np.flatnonzero(det_cats == c)
        d_idx = d_idx[np.argsort(-det_scores[d_idx], kind="stable")]
        if max_dets is not None:
            d_idx = d_idx[:max_dets]
        g = gt_boxes[gt_cats == c]
        d = det_boxes[d_idx]
        ov = pairwise_iou(d, g)
        per_cat.append([
            average_precision(match_detections(d, g, th, ov).tp, len(g), method) for th in IOU_THRESHOLDS
        ])
    ap = np.mean(np.array(per_cat), axis=0)
    return ApReport(IOU_THRESHOLDS, [float(a) for a in ap], ng, nd)
