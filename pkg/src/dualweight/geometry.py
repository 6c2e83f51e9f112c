"""
Box geometry
============

Boxes are stored as ``(..., 4)`` arrays in ``(x1, y1, x2, y2)`` pixel order.
Anchor points live on a feature grid and are addressed as ``(row j, col i)``;
pixel position is ``(i * stride, j * stride)``. Offsets follow the FCOS
``(left, top, right, bottom)`` convention, measured in grid units.

All functions broadcast over leading dimensions.
"""

from typing import NamedTuple

import numpy as np
from scipy import ndimage

_SIDES = ("left", "top", "right", "bottom")
REFINE_SIGNS = ("paper", "derived")


class Box(NamedTuple):
    x1: float
    y1: float
    x2: float
    y2: float

    @property
    def area(self) -> float:
        return max(self.x2 - self.x1, 0.0) * max(self.y2 - self.y1, 0.0)

    @property
    def center(self) -> tuple:
        return (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))

    def is_valid(self) -> bool:
        return self.x1 <= self.x2 and self.y1 <= self.y2


class AnchorPoint(NamedTuple):
    """Grid location ``(j, i)`` with its stride. Fields may be arrays."""

    j: float
    i: float
    stride: float = 1.0

    @property
    def xy(self) -> np.ndarray:
        """Pixel coordinates, shape ``(..., 2)`` as ``(x, y)``."""
        s = np.asarray(self.stride, dtype=float)
        return np.stack(np.broadcast_arrays(np.asarray(self.i) * s, np.asarray(self.j) * s), axis=-1)


class OffsetVector(NamedTuple):
    left: float
    top: float
    right: float
    bottom: float


class BoundaryDeltas(NamedTuple):
    """Eight outputs of the refinement module, in this channel order."""

    xl: float
    yl: float
    xt: float
    yt: float
    xr: float
    yr: float
    xb: float
    yb: float


def as_boxes(boxes) -> np.ndarray:
    b = np.asarray(boxes, dtype=float)
    if b.shape[-1:] != (4,):
        raise ValueError(f"boxes must have a trailing dimension of 4, got shape {b.shape}")
    return b


def box_area(boxes) -> np.ndarray:
    b = as_boxes(boxes)
    return np.maximum(b[..., 2] - b[..., 0], 0.0) * np.maximum(b[..., 3] - b[..., 1], 0.0)


def _overlap(a: np.ndarray, b: np.ndarray):
    lt = np.maximum(a[..., :2], b[..., :2])
    rb = np.minimum(a[..., 2:], b[..., 2:])
    wh = np.maximum(rb - lt, 0.0)
    inter = wh[..., 0] * wh[..., 1]
    union = box_area(a) + box_area(b) - inter
    return inter, union


def iou(a, b) -> np.ndarray:
    """Elementwise intersection over union of broadcastable box arrays.

    A zero-area union yields 0.
    """
    a, b = as_boxes(a), as_boxes(b)
    inter, union = _overlap(a, b)
    # NaN boxes must stay NaN so the trainer can detect divergence
    empty = union == 0
    return np.where(empty, 0.0, inter / np.where(empty, 1.0, union))


def giou(a, b) -> np.ndarray:
    """Elementwise generalized IoU, in ``[-1, 1]``.

    IoU minus the fraction of the enclosing hull not covered by the union.
    When the hull itself has zero area the penalty is taken as 0.
    """
    a, b = as_boxes(a), as_boxes(b)
    inter, union = _overlap(a, b)
    empty = union == 0
    ratio = np.where(empty, 0.0, inter / np.where(empty, 1.0, union))
    hull_wh = np.maximum(np.maximum(a[..., 2:], b[..., 2:]) - np.minimum(a[..., :2], b[..., :2]), 0.0)
    hull = hull_wh[..., 0] * hull_wh[..., 1]
    flat = hull == 0
    penalty = np.where(flat, 0.0, (hull - union) / np.where(flat, 1.0, hull))
    return ratio - penalty


def pairwise_iou(a, b) -> np.ndarray:
    """``(N, 4) x (M, 4) -> (N, M)`` IoU matrix."""
    a, b = as_boxes(a), as_boxes(b)
    return iou(a[:, None, :], b[None, :, :])


def pairwise_giou(a, b) -> np.ndarray:
    a, b = as_boxes(a), as_boxes(b)
    return giou(a[:, None, :], b[None, :, :])


def decode_box(anchor: AnchorPoint, offsets) -> np.ndarray:
    """Turn ``(l, t, r, b)`` grid-unit distances into a pixel box.

    Raises:
        ValueError: if any offset is negative.
    """
    o = np.asarray(offsets, dtype=float)
    if np.any(o < 0):
        raise ValueError("offsets must be non-negative")
    return _decode(anchor, o)


def _decode(anchor: AnchorPoint, o: np.ndarray) -> np.ndarray:
    j = np.asarray(anchor.j, dtype=float)
    i = np.asarray(anchor.i, dtype=float)
    s = np.asarray(anchor.stride, dtype=float)
    return np.stack(
        [(i - o[..., 0]) * s, (j - o[..., 1]) * s, (i + o[..., 2]) * s, (j + o[..., 3]) * s], axis=-1
    )


def encode_offsets(anchor: AnchorPoint, box) -> np.ndarray:
    """Inverse of :func:`decode_box`.

    Raises:
        ValueError: if the anchor point lies outside the box.
    """
    b = as_boxes(box)
    j = np.asarray(anchor.j, dtype=float)
    i = np.asarray(anchor.i, dtype=float)
    s = np.asarray(anchor.stride, dtype=float)
    x, y = i * s, j * s
    o = np.stack([x - b[..., 0], y - b[..., 1], b[..., 2] - x, b[..., 3] - y], axis=-1) / s[..., None]
    if np.any(o < 0):
        raise ValueError("anchor point lies outside the box")
    return o


def boundary_points(anchor: AnchorPoint, offsets, deltas) -> np.ndarray:
    """Locate the four boundary points of a coarse box on the grid.

    Args:
        anchor: grid location ``(j, i)``.
        offsets: ``(..., 4)`` coarse distances ``(l, t, r, b)``.
        deltas: ``(..., 8)`` refinement outputs in :class:`BoundaryDeltas` order.

    Returns:
        ``(..., 4, 2)`` array of ``(row, col)`` points for the left, top,
        right and bottom sides. Points are not clipped to the map.
    """
    j = np.asarray(anchor.j, dtype=float)
    i = np.asarray(anchor.i, dtype=float)
    o = np.asarray(offsets, dtype=float)
    d = np.asarray(deltas, dtype=float)
    lead = np.broadcast_shapes(j.shape, i.shape, o.shape[:-1], d.shape[:-1])
    j, i = np.broadcast_to(j, lead), np.broadcast_to(i, lead)
    o = np.broadcast_to(o, lead + (4,))
    d = np.broadcast_to(d, lead + (8,))
    rows = np.stack([j + d[..., 1], j - o[..., 1] + d[..., 3], j + d[..., 5], j + o[..., 3] + d[..., 7]], axis=-1)
    cols = np.stack([i - o[..., 0] + d[..., 0], i + d[..., 2], i + o[..., 2] + d[..., 4], i + d[..., 6]], axis=-1)
    return np.stack([rows, cols], axis=-1)


def sample_map(offset_map, points, channel) -> np.ndarray:
    """Bilinearly read ``offset_map[..., channel]`` at fractional ``(row, col)`` points.

    Coordinates beyond the map are clamped to its border.
    """
    m = np.asarray(offset_map, dtype=float)
    p = np.asarray(points, dtype=float)
    coords = np.moveaxis(p.reshape(-1, 2), -1, 0)
    out = ndimage.map_coordinates(m[..., channel], coords, order=1, mode="nearest")
    return out.reshape(p.shape[:-1])


def refine_offsets(offset_map, deltas_map, at: AnchorPoint, sign: str = "paper") -> np.ndarray:
    """Refined ``(l, t, r, b)`` at integer grid locations ``at``.

    Each side adds the coarse distance, the boundary point's displacement
    along that side's axis, and the map value read at the boundary point.
    With ``sign="paper"`` the left/top displacements are added as written
    in the original update rule; ``sign="derived"`` subtracts them, which is
    what a distance measured from the anchor would give.
    """
    m = np.asarray(offset_map, dtype=float)
    dm = np.asarray(deltas_map, dtype=float)
    if m.shape[:2] != dm.shape[:2] or m.shape[-1] != 4 or dm.shape[-1] != 8:
        raise ValueError(f"offset map {m.shape} and deltas map {dm.shape} do not align")
    rows = np.asarray(at.j).astype(int)
    cols = np.asarray(at.i).astype(int)
    return refine_at(m, AnchorPoint(rows, cols), m[rows, cols], dm[rows, cols], sign)


def refine_at(offset_map, anchor: AnchorPoint, offsets, deltas, sign: str = "paper") -> np.ndarray:
    """Refinement for explicit per-anchor ``offsets``/``deltas`` against a fixed map.

    Used directly by the trainer so that the anchor's own parameters can be
    perturbed while the sampled map stays fixed.
    """
    if sign not in REFINE_SIGNS:
        raise ValueError(f"sign must be one of {REFINE_SIGNS}, got {sign!r}")
    o = np.asarray(offsets, dtype=float)
    d = np.asarray(deltas, dtype=float)
    pts = boundary_points(anchor, o, d)
    sampled = np.stack([sample_map(offset_map, pts[..., c, :], c) for c in range(4)], axis=-1)
    step = np.stack([d[..., 0], d[..., 3], d[..., 4], d[..., 7]], axis=-1)
    if sign == "derived":
        step = step * np.array([-1.0, -1.0, 1.0, 1.0])
    return o + step + sampled


def refine_offset_map(offset_map, deltas_map, sign: str = "paper") -> np.ndarray:
    """Apply :func:`refine_offsets` at every cell, returning an ``(H, W, 4)`` map."""
    m = np.asarray(offset_map, dtype=float)
    rows, cols = np.indices(m.shape[:2])
    return refine_offsets(m, deltas_map, AnchorPoint(rows, cols), sign)
