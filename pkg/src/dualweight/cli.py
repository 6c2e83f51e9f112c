"""
Command-line front end.

    dw curves  [--gamma1 1 2 3 4 5] [--resolution 46]
    dw weights [--scene S.json --predictions P.jsonl] [--scheme dw]
    dw train   [--scene S.json | --seed N] [--steps 300] [--refine on]
    dw compare [--schemes dw dw-none ...] [--seeds 0 1 2] [--scenes 20]
    dw eval    --detections D.jsonl --scene S.json

Every failure exits nonzero after writing exactly one line to stderr of the
form ``error: <kind>: <message>``.
"""

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .assignment import CenterPriorStrategy, assign
from .evaluation import coco_ap
from .geometry import REFINE_SIGNS, _decode
from .sim import (
    ABLATION_SCHEMES,
    SUITE_MODEL,
    SUITE_SCENE,
    SUITE_STEPS,
    TrainConfig,
    TrainingDiverged,
    compare,
    generate_scene,
    init_model,
    train,
)
from .structures import Predictions, Scene
from .weighting import NEG_MODES, SCHEMES, DwParams, SchemeConfig, neg_prob_curves

SCHEME_NAMES = SCHEMES + tuple(f"dw-{m.replace('_', '-')}" for m in NEG_MODES if m != "full")
WEIGHT_COLUMNS = ("anchor_j", "anchor_i", "gt", "s", "iou", "t", "w_pos", "w_neg")


class CliError(Exception):
    def __init__(self, kind: str, message: str, status: int = 1):
        super().__init__(message)
        self.kind = kind
        self.status = status


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message, status=2)


@dataclass(frozen=True)
class RunConfig:
    """Validated options shared by the subcommands."""

    command: str
    scheme: SchemeConfig = field(default_factory=SchemeConfig)
    prior: CenterPriorStrategy = field(default_factory=CenterPriorStrategy)
    seeds: tuple = (0,)
    steps: int = SUITE_STEPS
    out: str | None = None
    fmt: str = "csv"
    refine: bool = False
    refine_sign: str = "paper"

    @classmethod
    def from_args(cls, ns) -> "RunConfig":
        try:
            dw = DwParams(
                beta=getattr(ns, "beta", 5.0), mu=getattr(ns, "mu", 5.0),
                gamma1=getattr(ns, "dw_gamma1", 2.0), gamma2=getattr(ns, "gamma2", 2.0),
            )
            scheme = SchemeConfig.from_name(getattr(ns, "scheme", "dw"), dw)
            prior = CenterPriorStrategy.parse(getattr(ns, "center_prior", "soft"))
        except ValueError as exc:
            raise CliError("config", str(exc)) from exc
        seeds = getattr(ns, "seeds", None) or (0,)
        steps = getattr(ns, "steps", SUITE_STEPS)
        if steps < 0:
            raise CliError("config", "--steps must be >= 0")
        return cls(ns.command, scheme, prior, tuple(seeds), steps, getattr(ns, "out", None),
                   getattr(ns, "format", "csv"), getattr(ns, "refine", "off") == "on",
                   getattr(ns, "refine_sign", "paper"))


def bundled(name: str) -> Path:
    """Path of a data file shipped with the package."""
    return Path(str(resources.files("dualweight") / "data" / name))


# --- input files ---------------------------------------------------------------

def load_scene(path) -> Scene:
    try:
        return Scene.load(path)
    except OSError as exc:
        raise CliError("io", f"{path}: {exc.strerror}") from exc
    except ValueError as exc:
        raise CliError("parse", str(exc)) from exc


def _jsonl(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError("io", f"{path}: {exc.strerror}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CliError("parse", f"{path}:{lineno}: {exc.msg}") from exc
        if not isinstance(rec, dict):
            raise CliError("parse", f"{path}:{lineno}: expected a JSON object")
        yield lineno, rec


def _box(path, lineno, rec):
    box = rec.get("box")
    if not (isinstance(box, list) and len(box) == 4 and all(isinstance(v, (int, float)) for v in box)):
        raise CliError("parse", f"{path}:{lineno}: 'box' must be four numbers")
    if box[2] < box[0] or box[3] < box[1]:
        raise CliError("parse", f"{path}:{lineno}: box corners out of order")
    return [float(v) for v in box]


def _score(path, lineno, rec):
    s = rec.get("score")
    if not isinstance(s, (int, float)) or not 0 <= s <= 1:
        raise CliError("parse", f"{path}:{lineno}: 'score' must be a number in [0, 1]")
    return float(s)


def read_predictions(path, scene: Scene) -> list:
    """Parse ``{"anchor": [j, i], "score": s, "box": [...]}`` lines.

    Returns ``(anchor index, score, box)`` tuples in file order.
    """
    rows, cols = scene.grid_shape
    seen = set()
    out = []
    for lineno, rec in _jsonl(path):
        a = rec.get("anchor")
        if not (isinstance(a, list) and len(a) == 2 and all(isinstance(v, int) for v in a)):
            raise CliError("parse", f"{path}:{lineno}: 'anchor' must be [j, i] integers")
        j, i = a
        if not (0 <= j < rows and 0 <= i < cols):
            raise CliError("parse", f"{path}:{lineno}: anchor {a} outside the {rows}x{cols} grid")
        idx = j * cols + i
        if idx in seen:
            raise CliError("parse", f"{path}:{lineno}: anchor {a} listed twice")
        seen.add(idx)
        out.append((idx, _score(path, lineno, rec), _box(path, lineno, rec)))
    return out


def read_detections(path) -> tuple:
    boxes, scores, cats = [], [], []
    for lineno, rec in _jsonl(path):
        boxes.append(_box(path, lineno, rec))
        scores.append(_score(path, lineno, rec))
        c = rec.get("cat", 0)
        if not isinstance(c, int):
            raise CliError("parse", f"{path}:{lineno}: 'cat' must be an integer")
        cats.append(c)
    return np.array(boxes, dtype=float).reshape(-1, 4), np.array(scores), np.array(cats, dtype=int)


# --- commands -----------------------------------------------------------------

def weights_table(scene: Scene, entries, scheme: SchemeConfig, prior: CenterPriorStrategy) -> list:
    """Per-anchor weights for the listed predictions.

    Anchors without a prediction get score 0 and a point box, which gives
    them zero consistency so they do not shift any bag's normalization.
    """
    n = scene.num_anchors
    scores = np.zeros(n)
    boxes = _decode(scene.anchors, np.zeros((n, 4)))
    for idx, s, box in entries:
        scores[idx] = s
        boxes[idx] = box
    res = assign(scene, Predictions(scores, boxes), scheme, prior)
    cols = scene.grid_shape[1]
    table = []
    for idx, s, _ in entries:
        table.append({
            "anchor_j": idx // cols, "anchor_i": idx % cols, "gt": int(res.gt_index[idx]),
            "s": s, "iou": float(res.iou[idx]), "t": float(res.consistency[idx]),
            "w_pos": float(res.w_pos[idx]), "w_neg": float(res.w_neg[idx]),
        })
    return table


def _table_text(rows, columns, fmt) -> str:
    if fmt == "json":
        return json.dumps(rows, indent=2) + "\n"
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def cmd_curves(ns, cfg: RunConfig) -> str:
    if any(g <= 0 for g in ns.gamma1):
        raise CliError("range", "every --gamma1 must be > 0")
    if ns.resolution < 2:
        raise CliError("range", "--resolution must be >= 2")
    rows = [dict(zip(("iou", "gamma1", "p_neg"), r)) for r in neg_prob_curves(ns.gamma1, ns.resolution)]
    return _table_text(rows, ("iou", "gamma1", "p_neg"), cfg.fmt)


def cmd_weights(ns, cfg: RunConfig) -> str:
    if (ns.scene is None) != (ns.predictions is None):
        raise CliError("usage", "--scene and --predictions go together", status=2)
    scene_path = ns.scene or bundled("fig1_scene.json")
    pred_path = ns.predictions or bundled("fig1_predictions.jsonl")
    scene = load_scene(scene_path)
    rows = weights_table(scene, read_predictions(pred_path, scene), cfg.scheme, cfg.prior)
    return _table_text(rows, WEIGHT_COLUMNS, cfg.fmt)


def _model_init(cfg: RunConfig, lr=None):
    m = replace(SUITE_MODEL, refine=cfg.refine, refine_sign=cfg.refine_sign)
    return m if lr is None else replace(m, lr=lr)


def cmd_train(ns, cfg: RunConfig) -> str:
    seed = cfg.seeds[0]
    scene = load_scene(ns.scene) if ns.scene else generate_scene(seed, SUITE_SCENE)
    model = init_model(scene, seed, _model_init(cfg, ns.lr))
    try:
        trace = train(model, scene, TrainConfig(scheme=cfg.scheme, prior=cfg.prior, steps=cfg.steps))
    except TrainingDiverged as exc:
        raise CliError("diverged", str(exc)) from exc
    return trace.to_jsonl()


def cmd_compare(ns, cfg: RunConfig) -> str:
    jobs = 1 if os.environ.get("DW_DETERMINISTIC") == "1" else ns.jobs
    if jobs < 1:
        raise CliError("config", "--jobs must be >= 1")
    if ns.scenes < 1:
        raise CliError("config", "--scenes must be >= 1")
    if len(set(ns.schemes)) != len(ns.schemes):
        raise CliError("config", "--schemes lists a scheme twice")
    report = compare(tuple(ns.schemes), cfg.seeds, ns.scenes, cfg.steps, SUITE_SCENE, _model_init(cfg),
                     cfg.prior, cfg.scheme.dw, jobs)
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def cmd_eval(ns, cfg: RunConfig) -> str:
    scene = load_scene(ns.scene)
    boxes, scores, cats = read_detections(ns.detections)
    report = coco_ap(boxes, scores, scene.gt_boxes, cats, scene.gt_cats, max_dets=ns.max_dets)
    text = json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    if ns.out:
        Path(ns.out).write_text(text)
    if cfg.fmt == "json":
        return text
    return f"AP {report.mean:.4f}\nAP50 {report.ap50:.4f}\nAP75 {report.ap75:.4f}\n"


# --- parser -----------------------------------------------------------------

def _add_scheme_flags(p):
    p.add_argument("--scheme", default="dw", choices=SCHEME_NAMES)
    p.add_argument("--center-prior", default="soft", metavar="{threshold:R|topk:K|soft}")
    p.add_argument("--beta", type=float, default=5.0)
    p.add_argument("--mu", type=float, default=5.0)
    p.add_argument("--gamma1", dest="dw_gamma1", type=float, default=2.0)
    p.add_argument("--gamma2", type=float, default=2.0)


def _add_refine_flags(p):
    p.add_argument("--refine", choices=("on", "off"), default="off")
    p.add_argument("--refine-sign", choices=REFINE_SIGNS, default="paper")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dw", description="Dual-weighting label assignment tools.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("curves", help="negative-probability curves as a table")
    p.add_argument("--gamma1", type=float, nargs="+", default=[1.0, 2.0, 3.0, 4.0, 5.0])
    p.add_argument("--resolution", type=int, default=46)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out")

    p = sub.add_parser("weights", help="per-anchor weight table (bundled fixture by default)")
    p.add_argument("--scene")
    p.add_argument("--predictions")
    _add_scheme_flags(p)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out")

    p = sub.add_parser("train", help="train the toy detector and print a JSON-lines trace")
    p.add_argument("--scene")
    p.add_argument("--seed", dest="seeds", type=int, nargs=1, default=[0])
    p.add_argument("--steps", type=int, default=SUITE_STEPS)
    p.add_argument("--lr", type=float)
    _add_scheme_flags(p)
    _add_refine_flags(p)
    p.add_argument("--out")

    p = sub.add_parser("compare", help="train several schemes on a fixed suite and rank them")
    p.add_argument("--schemes", nargs="+", choices=SCHEME_NAMES, default=list(ABLATION_SCHEMES))
    p.add_argument("--seed", "--seeds", dest="seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--scenes", type=int, default=20)
    p.add_argument("--steps", type=int, default=SUITE_STEPS)
    p.add_argument("--jobs", type=int, default=1)
    _add_scheme_flags(p)
    _add_refine_flags(p)
    p.add_argument("--format", choices=("json",), default="json")
    p.add_argument("--out")

    p = sub.add_parser("eval", help="COCO-style AP of a detections file against a scene")
    p.add_argument("--detections", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--max-dets", type=int, default=100)
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--out", help="also write the JSON report here")
    return parser


COMMANDS = {"curves": cmd_curves, "weights": cmd_weights, "train": cmd_train, "compare": cmd_compare,
            "eval": cmd_eval}


def main(argv=None) -> int:
    try:
        ns = build_parser().parse_args(argv)
        cfg = RunConfig.from_args(ns)
        text = COMMANDS[ns.command](ns, cfg)
        if cfg.out and ns.command != "eval":
            Path(cfg.out).write_text(text)
        else:
            sys.stdout.write(text)
    except CliError as exc:
        msg = " ".join(str(exc).split())
        print(f"error: {exc.kind}: {msg}", file=sys.stderr)
        return exc.status
    except OSError as exc:
        print(f"error: io: {' '.join(str(exc).split())}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
