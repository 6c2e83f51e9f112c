"""Scene and prediction containers shared by assignment, loss and the simulator."""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import AnchorPoint, as_boxes


def grid_anchors(image_size, stride: float) -> tuple:
    """Row-major anchor grid covering an ``(H, W)`` image.

    Returns ``(AnchorPoint of arrays, (rows, cols))``.
    """
    h, w = image_size
    rows, cols = math.ceil(h / stride), math.ceil(w / stride)
    jj, ii = np.indices((rows, cols))
    anchors = AnchorPoint(jj.ravel().astype(float), ii.ravel().astype(float), np.full(rows * cols, float(stride)))
    return anchors, (rows, cols)


@dataclass
class Scene:
    image_size: tuple
    stride: float
    gt_boxes: np.ndarray
    gt_cats: np.ndarray
    seed: int | None = None
    anchors: AnchorPoint = field(init=False, repr=False)
    grid_shape: tuple = field(init=False)

    def __post_init__(self):
        self.image_size = tuple(int(v) for v in self.image_size)
        self.gt_boxes = as_boxes(np.asarray(self.gt_boxes, dtype=float).reshape(-1, 4))
        self.gt_cats = np.asarray(self.gt_cats, dtype=int).reshape(-1)
        if len(self.gt_cats) != len(self.gt_boxes):
            raise ValueError("gt_boxes and gt_cats differ in length")
        if not self.stride > 0:
            raise ValueError("stride must be > 0")
        b = self.gt_boxes
        if np.any(b[:, 2] < b[:, 0]) or np.any(b[:, 3] < b[:, 1]):
            raise ValueError("ground-truth boxes must satisfy x1 <= x2 and y1 <= y2")
        self.anchors, self.grid_shape = grid_anchors(self.image_size, self.stride)

    @property
    def num_anchors(self) -> int:
        return len(self.anchors.j)

    @property
    def num_gts(self) -> int:
        return len(self.gt_boxes)

    def to_dict(self) -> dict:
        return {
            "image": list(self.image_size),
            "stride": self.stride,
            "objects": [{"box": [float(v) for v in b], "cat": int(c)} for b, c in zip(self.gt_boxes, self.gt_cats)],
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scene":
        try:
            objects = d.get("objects", [])
            return cls(
                image_size=d["image"],
                stride=d["stride"],
                gt_boxes=[o["box"] for o in objects],
                gt_cats=[o.get("cat", 0) for o in objects],
                seed=d.get("seed"),
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed scene: missing or bad field {exc}") from exc

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "Scene":
        text = Path(path).read_text()
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}:{exc.lineno}: {exc.msg}") from exc
        return cls.from_dict(d)


@dataclass
class Predictions:
    """Per-anchor scores in (0, 1) and pixel boxes, aligned with ``scene.anchors``."""

    scores: np.ndarray
    boxes: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=float).reshape(-1)
        self.boxes = as_boxes(np.asarray(self.boxes, dtype=float).reshape(-1, 4))
        if len(self.scores) != len(self.boxes):
            raise ValueError("scores and boxes differ in length")

    def __len__(self):
        return len(self.scores)
