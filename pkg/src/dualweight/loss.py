"""
Detection loss: weighted cross-entropy inside bags, focal loss outside,
and a GIoU regression term weighted by the positive weight.

``total = cls_inside + cls_outside + balance * reg``
"""

from dataclasses import asdict, dataclass

import numpy as np

from .assignment import AssignmentResult
from .geometry import giou
from .structures import Predictions, Scene
from .weighting import WeightTriple

EPS = 1e-6


@dataclass(frozen=True)
class FocalParams:
    gamma: float = 2.0
    alpha: float = 0.25

    def __post_init__(self):
        if not self.gamma >= 0:
            raise ValueError("focal gamma must be >= 0")
        if not 0 < self.alpha <= 1:
            raise ValueError("focal alpha must lie in (0, 1]")


@dataclass(frozen=True)
class LossBreakdown:
    cls_inside: float
    cls_outside: float
    reg: float
    total: float
    balance: float

    def to_dict(self) -> dict:
        return asdict(self)

    def is_finite(self) -> bool:
        return all(np.isfinite(v) for v in (self.cls_inside, self.cls_outside, self.reg, self.total))


def _clamp(s):
    return np.clip(np.asarray(s, dtype=float), EPS, 1 - EPS)


def cls_loss_term(s, w: WeightTriple) -> np.ndarray:
    """``-w_pos * ln(s) - w_neg * ln(1 - s)`` with ``s`` clamped away from 0 and 1."""
    s = _clamp(s)
    return -w.w_pos * np.log(s) - w.w_neg * np.log1p(-s)


def cls_loss_grad(s, w: WeightTriple) -> np.ndarray:
    """Derivative of :func:`cls_loss_term` with respect to ``s``."""
    s = _clamp(s)
    return -w.w_pos / s + w.w_neg / (1 - s)


def focal_neg(s, p: FocalParams = FocalParams()) -> np.ndarray:
    """Focal loss against target 0: ``(1 - alpha) * s**gamma * -ln(1 - s)``."""
    raw = np.asarray(s, dtype=float)
    s = np.clip(raw, 0.0, 1 - EPS)
    return (1 - p.alpha) * s**p.gamma * -np.log1p(-s)


def focal_neg_grad(s, p: FocalParams = FocalParams()) -> np.ndarray:
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1 - EPS)
    log_term = -np.log1p(-s)
    if p.gamma == 0:
        ds_pow = np.zeros_like(s)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            ds_pow = np.where(s > 0, p.gamma * s ** (p.gamma - 1), 0.0)
    return (1 - p.alpha) * (ds_pow * log_term + s**p.gamma / (1 - s))


def giou_loss(pred_boxes, gt_boxes) -> np.ndarray:
    """``1 - giou``, in ``[0, 2]``."""
    return 1.0 - giou(pred_boxes, gt_boxes)


def total_loss(
    scene: Scene,
    predictions: Predictions,
    assignment: AssignmentResult,
    balance: float = 5.0,
    focal: FocalParams = FocalParams(),
) -> LossBreakdown:
    """Sum the detection loss over every anchor of one scene.

    Raises:
        ValueError: if the assignment does not match the predictions.
    """
    n = len(predictions)
    if len(assignment.gt_index) != n or n != scene.num_anchors:
        raise ValueError("assignment, predictions and scene anchors disagree in size")
    if np.any(assignment.gt_index >= scene.num_gts):
        raise ValueError("assignment refers to a ground truth the scene does not have")
    s = predictions.scores
    inside = np.flatnonzero(assignment.gt_index >= 0)
    outside = np.flatnonzero(assignment.gt_index < 0)
    w = WeightTriple(assignment.w_pos[inside], assignment.w_neg[inside], assignment.w_reg[inside])
    cls_in = float(np.sum(cls_loss_term(s[inside], w)))
    cls_out = float(np.sum(focal_neg(s[outside], focal)))
    if len(inside):
        gt = scene.gt_boxes[assignment.gt_index[inside]]
        reg = float(np.sum(w.w_reg * giou_loss(predictions.boxes[inside], gt)))
    else:
        reg = 0.0
    return LossBreakdown(cls_in, cls_out, reg, cls_in + cls_out + balance * reg, float(balance))
