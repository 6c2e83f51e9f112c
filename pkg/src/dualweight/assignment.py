"""
Candidate bags and per-anchor weight assignment.

Each ground-truth object collects a bag of nearby anchors (the center
prior). Bag members receive a ``(w_pos, w_neg, w_reg)`` triple from the
configured weighting scheme, with positive weights normalized inside the
bag; everything else is a plain negative handled by the focal term.
"""

from dataclasses import dataclass

import numpy as np

from .geometry import AnchorPoint, as_boxes, box_area, pairwise_iou
from .structures import Predictions, Scene
from .weighting import SchemeConfig, finish_bag, scheme_weights

PRIOR_KINDS = ("threshold", "topk", "soft")


@dataclass(frozen=True)
class CenterPriorStrategy:
    """How a bag is cut from the anchors around a GT center.

    * ``threshold``: stride-normalized distance ``r < value``
    * ``topk``: the ``value`` nearest anchors on each stride level
    * ``soft``: every anchor inside the GT box, with weight ``exp(-r**2)``
    """

    kind: str = "soft"
    value: float | None = None

    def __post_init__(self):
        if self.kind not in PRIOR_KINDS:
            raise ValueError(f"unknown center prior {self.kind!r}")
        if self.kind == "threshold" and not (self.value is not None and self.value > 0):
            raise ValueError("threshold prior needs r_max > 0")
        if self.kind == "topk" and not (self.value is not None and int(self.value) == self.value and self.value >= 1):
            raise ValueError("topk prior needs an integer k >= 1")

    @classmethod
    def parse(cls, text: str) -> "CenterPriorStrategy":
        """Parse ``threshold:R``, ``topk:K`` or ``soft``."""
        kind, _, arg = text.partition(":")
        if kind == "soft":
            if arg:
                raise ValueError("soft prior takes no argument")
            return cls("soft")
        if kind not in ("threshold", "topk") or not arg:
            raise ValueError(f"bad center prior {text!r}; expected threshold:R, topk:K or soft")
        try:
            value = float(arg)
        except ValueError:
            raise ValueError(f"bad center prior argument {arg!r}") from None
        return cls(kind, value)

    def __str__(self):
        if self.kind == "soft":
            return "soft"
        v = int(self.value) if self.kind == "topk" else self.value
        return f"{self.kind}:{v}"


@dataclass
class CandidateBag:
    gt_index: int
    members: np.ndarray
    distances: np.ndarray
    prior_weight: np.ndarray

    def __len__(self):
        return len(self.members)


@dataclass
class AssignmentResult:
    """Per-anchor assignment. Outside anchors have ``gt_index == -1`` and zero weights."""

    gt_index: np.ndarray
    w_pos: np.ndarray
    w_neg: np.ndarray
    w_reg: np.ndarray
    iou: np.ndarray
    consistency: np.ndarray
    bags: list

    @property
    def inside(self) -> np.ndarray:
        return self.gt_index >= 0

    @property
    def outside(self) -> np.ndarray:
        return np.flatnonzero(self.gt_index < 0)

    @property
    def num_inside(self) -> int:
        return int(np.count_nonzero(self.gt_index >= 0))

    @property
    def num_outside(self) -> int:
        return int(np.count_nonzero(self.gt_index < 0))


def center_distance(anchor: AnchorPoint, gt) -> np.ndarray:
    """Distance from the anchor to the GT center, in units of the anchor's stride."""
    g = as_boxes(gt)
    cx = 0.5 * (g[..., 0] + g[..., 2])
    cy = 0.5 * (g[..., 1] + g[..., 3])
    xy = anchor.xy
    return np.hypot(xy[..., 0] - cx, xy[..., 1] - cy) / np.asarray(anchor.stride, dtype=float)


def build_bag(anchors: AnchorPoint, gt, strategy: CenterPriorStrategy, gt_index: int = 0) -> CandidateBag:
    r = np.atleast_1d(center_distance(anchors, gt))
    n = len(r)
    if n == 0:
        raise ValueError("anchor set is empty")
    if strategy.kind == "threshold":
        members = np.flatnonzero(r < strategy.value)
    elif strategy.kind == "topk":
        k = int(strategy.value)
        strides = np.broadcast_to(np.asarray(anchors.stride, dtype=float), r.shape)
        picked = []
        for s in np.unique(strides):
            level = np.flatnonzero(strides == s)
            # stable sort keeps lower anchor index first on ties
            picked.append(level[np.argsort(r[level], kind="stable")[:k]])
        members = np.sort(np.concatenate(picked))
    else:
        g = as_boxes(gt)
        xy = np.atleast_2d(anchors.xy)
        inside = (xy[:, 0] >= g[0]) & (xy[:, 0] <= g[2]) & (xy[:, 1] >= g[1]) & (xy[:, 1] <= g[3])
        members = np.flatnonzero(inside)
    dist = r[members]
    weight = np.exp(-(dist**2)) if strategy.kind == "soft" else np.ones_like(dist)
    return CandidateBag(gt_index, members, dist, weight)


def build_bags(scene: Scene, strategy: CenterPriorStrategy) -> list:
    return [build_bag(scene.anchors, g, strategy, gi) for gi, g in enumerate(scene.gt_boxes)]


def assign(
    scene: Scene,
    predictions: Predictions,
    cfg: SchemeConfig,
    prior: CenterPriorStrategy,
    bags: list | None = None,
) -> AssignmentResult:
    """Build bags, resolve shared anchors and weight every bag member.

    An anchor claimed by several bags goes to the GT with the highest
    consistency for it; ties go to the smaller GT, then the lower index.
    ``bags`` may be passed in to reuse :func:`build_bags` output, which only
    depends on the scene.
    """
    n = scene.num_anchors
    if len(predictions) != n:
        raise ValueError(f"{len(predictions)} predictions for {n} anchors")
    gt_index = np.full(n, -1)
    w_pos = np.zeros(n)
    w_neg = np.zeros(n)
    ious = np.zeros(n)
    cons = np.zeros(n)
    g = scene.num_gts
    if g == 0:
        return AssignmentResult(gt_index, w_pos, w_neg, w_pos.copy(), ious, cons, [])
    if bags is None:
        bags = build_bags(scene, prior)

    s = predictions.scores
    overlap = pairwise_iou(scene.gt_boxes, predictions.boxes)
    t_all = s[None, :] * overlap ** cfg.dw.beta
    claimed = np.zeros((g, n), dtype=bool)
    prior_w = np.zeros((g, n))
    for bag in bags:
        claimed[bag.gt_index, bag.members] = True
        prior_w[bag.gt_index, bag.members] = bag.prior_weight

    n_claims = claimed.sum(axis=0)
    owner = np.where(n_claims > 0, np.argmax(claimed, axis=0), -1)
    shared = np.flatnonzero(n_claims > 1)
    if len(shared):
        areas = box_area(scene.gt_boxes)
        t_sh = np.where(claimed[:, shared], t_all[:, shared], -np.inf)
        best = t_sh == t_sh.max(axis=0, keepdims=True)
        area_key = np.where(best, areas[:, None], np.inf)
        owner[shared] = np.argmin(area_key, axis=0)

    resolved = []
    for gi in range(g):
        members = np.flatnonzero(owner == gi)
        if len(members) == 0:
            resolved.append(CandidateBag(gi, members, np.zeros(0), np.zeros(0)))
            continue
        iou_m = overlap[gi, members]
        raw = scheme_weights(cfg, s[members], iou_m)
        pw = prior_w[gi, members]
        wt = finish_bag(cfg, raw, pw)
        gt_index[members] = gi
        w_pos[members] = wt.w_pos
        w_neg[members] = wt.w_neg
        ious[members] = iou_m
        cons[members] = t_all[gi, members]
        orig = bags[gi]
        dist = orig.distances[np.searchsorted(orig.members, members)]
        resolved.append(CandidateBag(gi, members, dist, pw))
    return AssignmentResult(gt_index, w_pos, w_neg, w_pos.copy(), ious, cons, resolved)
