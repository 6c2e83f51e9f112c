"""
Desk-scale training harness.

A scene is a handful of ground-truth boxes on a single-level anchor grid.
The toy detector gives every anchor its own parameters (a score logit,
four raw offsets and eight boundary deltas), so the only thing that shapes
what it learns is the label assignment. Training is plain SGD on the
detection loss: analytic gradients for the logits, central finite
differences for the box parameters.
"""

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .assignment import CenterPriorStrategy, assign, build_bags
from .evaluation import ApReport, coco_ap, filter_and_nms
from .geometry import AnchorPoint, REFINE_SIGNS, _decode, giou, pairwise_iou, refine_at
from .loss import FocalParams, LossBreakdown, cls_loss_grad, focal_neg_grad, total_loss
from .structures import Predictions, Scene
from .weighting import SchemeConfig, WeightTriple


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, breakdown: LossBreakdown | None):
        what = "predictions" if breakdown is None else f"loss {breakdown}"
        super().__init__(f"non-finite {what} at step {step}")
        self.step = step
        self.breakdown = breakdown


@dataclass(frozen=True)
class SceneConfig:
    image_size: tuple = (64, 64)
    stride: float = 8.0
    min_objects: int = 1
    max_objects: int = 3
    min_size: float = 16.0
    max_size: float = 40.0
    max_overlap: float = 0.4
    max_tries: int = 1000

    def __post_init__(self):
        h, w = self.image_size
        if not (h > 0 and w > 0 and self.stride > 0):
            raise ValueError("image size and stride must be positive")
        if not 0 <= self.min_objects <= self.max_objects:
            raise ValueError("need 0 <= min_objects <= max_objects")
        if not 0 < self.min_size <= self.max_size <= min(h, w):
            raise ValueError("need 0 < min_size <= max_size <= image side")
        if not 0 <= self.max_overlap <= 1:
            raise ValueError("max_overlap must lie in [0, 1]")


def generate_scene(seed: int, cfg: SceneConfig = SceneConfig()) -> Scene:
    """Place objects uniformly at random, rejecting any that overlap an
    earlier one by more than ``cfg.max_overlap`` IoU.

    Raises:
        ValueError: if the objects cannot be placed within ``cfg.max_tries``.
    """
    rng = np.random.default_rng(seed)
    h, w = cfg.image_size
    n = int(rng.integers(cfg.min_objects, cfg.max_objects + 1))
    boxes = np.zeros((0, 4))
    tries = 0
    while len(boxes) < n:
        tries += 1
        if tries > cfg.max_tries:
            raise ValueError(f"could not place {n} objects with max_overlap={cfg.max_overlap}")
        bw, bh = rng.uniform(cfg.min_size, cfg.max_size, size=2)
        x1 = rng.uniform(0, w - bw)
        y1 = rng.uniform(0, h - bh)
        box = np.array([[x1, y1, x1 + bw, y1 + bh]])
        if len(boxes) and pairwise_iou(box, boxes).max() > cfg.max_overlap:
            continue
        boxes = np.concatenate([boxes, box])
    return Scene(cfg.image_size, cfg.stride, boxes, np.zeros(n, dtype=int), seed)


def softplus(x):
    return np.logaddexp(0.0, x)


def inverse_softplus(y):
    y = np.asarray(y, dtype=float)
    return y + np.log(-np.expm1(-y))


def logistic(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=float)))


@dataclass
class ToyModel:
    logits: np.ndarray
    offset_params: np.ndarray
    deltas: np.ndarray
    lr: float = 0.1
    refine: bool = False
    refine_sign: str = "paper"
    momentum: float = 0.0
    _velocity: list = field(default=None, repr=False)

    def __post_init__(self):
        if self.refine_sign not in REFINE_SIGNS:
            raise ValueError(f"refine_sign must be one of {REFINE_SIGNS}")

    @property
    def scores(self) -> np.ndarray:
        return logistic(self.logits)

    @property
    def offsets(self) -> np.ndarray:
        return softplus(self.offset_params)

    def copy(self) -> "ToyModel":
        v = None if self._velocity is None else [a.copy() for a in self._velocity]
        return replace(self, logits=self.logits.copy(), offset_params=self.offset_params.copy(),
                       deltas=self.deltas.copy(), _velocity=v)

    def state(self) -> tuple:
        return (self.logits.copy(), self.offset_params.copy(), self.deltas.copy())


@dataclass(frozen=True)
class ModelInit:
    """Initial predictions: a low prior score and log-normally jittered box sizes."""

    prior_prob: float = 0.01
    logit_noise: float = 0.5
    offset_scale: float | None = None
    offset_noise: float = 0.5
    lr: float = 0.1
    refine: bool = False
    refine_sign: str = "paper"
    momentum: float = 0.0


def init_model(scene: Scene, seed: int, cfg: ModelInit = ModelInit()) -> ToyModel:
    """Random initial head for ``scene``.

    Offsets are drawn around ``offset_scale`` grid units (default: a quarter
    of the mean image side) with multiplicative noise.
    """
    rng = np.random.default_rng(seed)
    n = scene.num_anchors
    prior_logit = math.log(cfg.prior_prob / (1 - cfg.prior_prob))
    logits = prior_logit + cfg.logit_noise * rng.standard_normal(n)
    scale = cfg.offset_scale
    if scale is None:
        scale = 0.25 * float(np.mean(scene.image_size)) / scene.stride
    offsets = scale * np.exp(cfg.offset_noise * rng.standard_normal((n, 4)))
    return ToyModel(logits, inverse_softplus(offsets), np.zeros((n, 8)), cfg.lr, cfg.refine, cfg.refine_sign,
                    cfg.momentum)


def _boxes_from(scene: Scene, anchors: AnchorPoint, offsets, deltas, offset_map, refine: bool, sign: str):
    if refine:
        offsets = np.maximum(refine_at(offset_map, anchors, offsets, deltas, sign), 0.0)
    return _decode(anchors, offsets)


def forward(model: ToyModel, scene: Scene) -> Predictions:
    """Scores and decoded (optionally refined) boxes for every anchor."""
    if len(model.logits) != scene.num_anchors:
        raise ValueError("model does not match the scene's anchor grid")
    offsets = model.offsets
    omap = offsets.reshape(*scene.grid_shape, 4)
    boxes = _boxes_from(scene, scene.anchors, offsets, model.deltas, omap, model.refine, model.refine_sign)
    return Predictions(model.scores, boxes)


@dataclass(frozen=True)
class TrainConfig:
    scheme: SchemeConfig = field(default_factory=SchemeConfig)
    prior: CenterPriorStrategy = field(default_factory=CenterPriorStrategy)
    steps: int = 300
    focal: FocalParams = field(default_factory=FocalParams)
    fd_step: float = 1e-3
    score_thresh: float = 0.05
    nms_iou: float = 0.6
    max_dets: int = 100

    @property
    def balance(self) -> float:
        return self.scheme.dw.beta


@dataclass
class TrainTrace:
    records: list = field(default_factory=list)
    final: ApReport | None = None

    def __len__(self):
        return len(self.records)

    def top_consistency(self) -> np.ndarray:
        return np.array([r["top_consistency"] for r in self.records])

    def to_jsonl(self) -> str:
        lines = [json.dumps(r, sort_keys=True) for r in self.records]
        if self.final is not None:
            lines.append(json.dumps({"final": self.final.to_dict()}, sort_keys=True))
        return "".join(line + "\n" for line in lines)


def logit_gradient(scores, assignment, focal: FocalParams) -> np.ndarray:
    """d(total loss)/d(logit) for every anchor."""
    inside = assignment.gt_index >= 0
    w = WeightTriple(assignment.w_pos, assignment.w_neg, assignment.w_reg)
    ds = np.where(inside, cls_loss_grad(scores, w), focal_neg_grad(scores, focal))
    return ds * scores * (1 - scores)


def box_gradient(model: ToyModel, scene: Scene, assignment, balance: float, h: float):
    """Central finite differences of the regression term over box parameters.

    Each anchor's regression loss depends only on its own parameters once
    the weights and the sampled offset map are held fixed, so one pair of
    evaluations per parameter slot covers every anchor at once.
    """
    n = scene.num_anchors
    g_off = np.zeros((n, 4))
    g_del = np.zeros((n, 8))
    idx = np.flatnonzero((assignment.gt_index >= 0) & (assignment.w_reg > 0))
    if len(idx) == 0:
        return g_off, g_del
    anchors = AnchorPoint(scene.anchors.j[idx], scene.anchors.i[idx], scene.anchors.stride[idx])
    gt = scene.gt_boxes[assignment.gt_index[idx]]
    coef = balance * assignment.w_reg[idx]
    raw = model.offset_params[idx]
    dl = model.deltas[idx]
    omap = model.offsets.reshape(*scene.grid_shape, 4) if model.refine else None

    def reg(raw_, dl_):
        boxes = _boxes_from(scene, anchors, softplus(raw_), dl_, omap, model.refine, model.refine_sign)
        return coef * (1.0 - giou(boxes, gt))

    # all +h/-h perturbations of one block are evaluated in a single batch
    eye4 = h * np.eye(4)[:, None, :]
    batch = np.concatenate([raw[None] + eye4, raw[None] - eye4])
    vals = reg(batch, dl[None])
    g_off[idx] = ((vals[:4] - vals[4:]) / (2 * h)).T
    if model.refine:
        eye8 = h * np.eye(8)[:, None, :]
        batch = np.concatenate([dl[None] + eye8, dl[None] - eye8])
        vals = reg(raw[None], batch)
        g_del[idx] = ((vals[:8] - vals[8:]) / (2 * h)).T
    return g_off, g_del


def _top_consistency(scores, assignment) -> float:
    vals = []
    for bag in assignment.bags:
        if len(bag.members):
            top = bag.members[np.argmax(scores[bag.members])]
            vals.append(assignment.consistency[top])
    return float(np.mean(vals)) if vals else float("nan")


def sgd_step(model: ToyModel, grads):
    params = (model.logits, model.offset_params, model.deltas)
    if model.momentum:
        if model._velocity is None:
            model._velocity = [np.zeros_like(p) for p in params]
        for p, v, g in zip(params, model._velocity, grads):
            v *= model.momentum
            v += g
            p -= model.lr * v
    else:
        for p, g in zip(params, grads):
            p -= model.lr * g


def evaluate(model: ToyModel, scene: Scene, cfg: TrainConfig = TrainConfig()) -> ApReport:
    pred = forward(model, scene)
    keep = filter_and_nms(pred.boxes, pred.scores, None, cfg.score_thresh, cfg.nms_iou, cfg.max_dets)
    return coco_ap(pred.boxes[keep], pred.scores[keep], scene.gt_boxes, max_dets=cfg.max_dets)


def train(model: ToyModel, scene: Scene, cfg: TrainConfig = TrainConfig()) -> TrainTrace:
    """Run ``cfg.steps`` SGD steps in place and return the per-step trace.

    Raises:
        TrainingDiverged: when the loss stops being finite.
    """
    if cfg.steps < 0:
        raise ValueError("steps must be >= 0")
    trace = TrainTrace()
    if cfg.steps == 0:
        return trace
    bags = build_bags(scene, cfg.prior)
    for step in range(cfg.steps):
        pred = forward(model, scene)
        if not (np.all(np.isfinite(pred.boxes)) and np.all(np.isfinite(pred.scores))):
            raise TrainingDiverged(step, None)
        res = assign(scene, pred, cfg.scheme, cfg.prior, bags)
        br = total_loss(scene, pred, res, cfg.balance, cfg.focal)
        if not br.is_finite():
            raise TrainingDiverged(step, br)
        g_logit = logit_gradient(pred.scores, res, cfg.focal)
        g_off, g_del = box_gradient(model, scene, res, cfg.balance, cfg.fd_step)
        trace.records.append({"step": step, "loss": br.to_dict(), "top_consistency": _top_consistency(pred.scores, res)})
        sgd_step(model, (g_logit, g_off, g_del))
    trace.final = evaluate(model, scene, cfg)
    return trace


# --- multi-scene comparison -------------------------------------------------

ABLATION_SCHEMES = ("dw", "dw-none", "dw-one-minus-pos")

# Fixed ablation suite. A finer grid gives each object several competing
# anchors, and wide logit noise makes early scores a poor guide to box
# quality, which is the situation the negative weights are meant to fix.
SUITE_SCENE = SceneConfig(stride=4.0, max_objects=4, max_overlap=0.7)
SUITE_MODEL = ModelInit(prior_prob=0.05, logit_noise=2.0)
SUITE_STEPS = 300


def suite_scenes(n_scenes: int, cfg: SceneConfig = SceneConfig(), base_seed: int = 0) -> list:
    return [generate_scene(base_seed + k, cfg) for k in range(n_scenes)]


def compare(
    schemes=ABLATION_SCHEMES,
    seeds=(0, 1, 2),
    n_scenes: int = 20,
    steps: int = SUITE_STEPS,
    scene_cfg: SceneConfig = SUITE_SCENE,
    model_cfg: ModelInit = SUITE_MODEL,
    prior: CenterPriorStrategy = CenterPriorStrategy(),
    dw=None,
    jobs: int = 1,
) -> dict:
    """Train every scheme on the same scenes and initializations; report mean AP.

    A run that diverges is recorded and left out of the statistics.
    """
    if not seeds:
        raise ValueError("need at least one seed")
    scenes = suite_scenes(n_scenes, scene_cfg)
    tasks = [(name, seed, k) for name in schemes for seed in seeds for k in range(n_scenes)]
    args = [(name, seed, scenes[k], k, steps, model_cfg, prior, dw) for name, seed, k in tasks]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(jobs) as ex:
            results = list(ex.map(_run_one, args))
    else:
        results = [_run_one(a) for a in args]

    report = {"config": {
        "schemes": list(schemes), "seeds": list(seeds), "n_scenes": n_scenes, "steps": steps,
        "center_prior": str(prior), "refine": model_cfg.refine, "refine_sign": model_cfg.refine_sign,
    }, "schemes": {}}
    for name in schemes:
        rows = [r for (n_, _, _), r in zip(tasks, results) if n_ == name]
        ok = [r for r in rows if r["ap"] is not None]
        aps = np.array([r["ap"]["AP"] for r in ok])
        report["schemes"][name] = {
            "mean_ap": float(aps.mean()) if len(aps) else None,
            "std_ap": float(aps.std()) if len(aps) else None,
            "mean_ap50": float(np.mean([r["ap"]["AP50"] for r in ok])) if ok else None,
            "mean_ap75": float(np.mean([r["ap"]["AP75"] for r in ok])) if ok else None,
            "runs": len(rows),
            "diverged": [{"seed": r["seed"], "scene": r["scene"], "error": r["error"]} for r in rows if r["error"]],
        }
    scored = [n for n in schemes if report["schemes"][n]["mean_ap"] is not None]
    report["ranking"] = sorted(scored, key=lambda n: (-report["schemes"][n]["mean_ap"], n))
    return report


def _run_one(args) -> dict:
    name, seed, scene, k, steps, model_cfg, prior, dw = args
    scheme = SchemeConfig.from_name(name, dw)
    model = init_model(scene, int(np.random.SeedSequence([seed, k]).generate_state(1)[0]), model_cfg)
    cfg = TrainConfig(scheme=scheme, prior=prior, steps=steps)
    try:
        trace = train(model, scene, cfg)
    except TrainingDiverged as exc:
        return {"seed": seed, "scene": k, "ap": None, "error": str(exc)}
    return {"seed": seed, "scene": k, "ap": trace.final.to_dict(), "error": None}
