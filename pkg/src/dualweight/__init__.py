"""Dual-weighting label assignment for dense object detection."""

from .assignment import AssignmentResult, CandidateBag, CenterPriorStrategy, assign, build_bag, center_distance
from .evaluation import ApReport, coco_ap, filter_and_nms, match_detections, average_precision, nms
from .geometry import AnchorPoint, BoundaryDeltas, Box, OffsetVector, decode_box, encode_offsets, giou, iou
from .loss import FocalParams, LossBreakdown, cls_loss_grad, cls_loss_term, focal_neg, total_loss
from .structures import Predictions, Scene
from .weighting import DwParams, SchemeConfig, WeightTriple, consistency, neg_prob, neg_weight_dw, scheme_weights

__version__ = "0.1.0"
