"""
Loss-weighting functions for soft label assignment.

The dual-weighting (DW) scheme sets positive and negative weights
separately: the positive weight grows with the consistency ``t = s * IoU**beta``
and the negative weight is the product of a localization-driven probability
of being negative and a score-driven importance. The GFL, VFL, TOOD and MuSu
weightings are kept alongside for comparison.

Weights are plain arrays. Nothing here is differentiated through.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

NEG_LOW = 0.5
NEG_HIGH = 0.95

SCHEMES = ("dw", "gfl", "vfl", "tood", "musu")
# Ablations of the DW negative weight.
NEG_MODES = ("full", "none", "p_neg", "i_neg", "one_minus_pos")


class WeightTriple(NamedTuple):
    w_pos: np.ndarray
    w_neg: np.ndarray
    w_reg: np.ndarray


@dataclass(frozen=True)
class DwParams:
    """Hyper-parameters of the DW weighting.

    ``beta`` also serves as the regression balance in the detection loss.
    ``k`` and ``b`` are derived so that the negative-probability curve runs
    through ``(0.5, 1)`` and ``(0.95, 0)``.
    """

    beta: float = 5.0
    mu: float = 5.0
    gamma1: float = 2.0
    gamma2: float = 2.0
    k: float = field(init=False)
    b: float = field(init=False)

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if not self.mu >= 0:
            raise ValueError(f"mu must be >= 0, got {self.mu}")
        if not (self.gamma1 > 0 and self.gamma2 > 0):
            raise ValueError("gamma1 and gamma2 must be > 0")
        k, b = solve_neg_coefficients(self.gamma1)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "b", b)


@dataclass(frozen=True)
class SchemeConfig:
    """Which weighting to apply, plus its knobs.

    ``neg_mode`` only affects ``scheme="dw"``:

    * ``full``: ``P_neg * I_neg``
    * ``none``: positive weights only
    * ``p_neg`` / ``i_neg``: keep just that factor
    * ``one_minus_pos``: ``1 - w_pos`` after bag normalization

    ``t_score_exp``/``t_iou_exp`` define the consistency target used by TOOD
    and MuSu as ``s**a * IoU**b``. This is an approximation; neither method's
    exact target is reproduced.
    """

    scheme: str = "dw"
    dw: DwParams = field(default_factory=DwParams)
    neg_mode: str = "full"
    t_score_exp: float = 0.5
    t_iou_exp: float = 0.5

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.neg_mode not in NEG_MODES:
            raise ValueError(f"unknown neg_mode {self.neg_mode!r}; expected one of {NEG_MODES}")
        if self.neg_mode != "full" and self.scheme != "dw":
            raise ValueError("neg_mode ablations apply to the dw scheme only")

    @property
    def name(self) -> str:
        if self.scheme == "dw" and self.neg_mode != "full":
            return f"dw-{self.neg_mode.replace('_', '-')}"
        return self.scheme

    @classmethod
    def from_name(cls, name: str, dw: DwParams | None = None) -> "SchemeConfig":
        """Parse ``dw``, ``gfl``, ... or an ablation such as ``dw-one-minus-pos``."""
        dw = dw or DwParams()
        if name.startswith("dw-"):
            return cls("dw", dw, name[3:].replace("-", "_"))
        return cls(name, dw)


def solve_neg_coefficients(gamma1: float) -> tuple:
    """Solve ``-k x + b = y`` through ``(0.5**g, 1)`` and ``(0.95**g, 0)``."""
    lo, hi = NEG_LOW**gamma1, NEG_HIGH**gamma1
    k, b = np.linalg.solve(np.array([[-lo, 1.0], [-hi, 1.0]]), np.array([1.0, 0.0]))
    return float(k), float(b)


def _check_unit(name, x):
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > 1)) or np.any(np.isnan(x)):
        raise ValueError(f"{name} must lie in [0, 1]")
    return x


def consistency(s, iou, beta: float) -> np.ndarray:
    """``t = s * iou**beta``."""
    s = _check_unit("score", s)
    iou = _check_unit("iou", iou)
    return s * iou**beta


def pos_weight_raw(t, mu: float) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return np.exp(mu * t) * t


def normalize_pos_weights(raw) -> np.ndarray:
    """Normalize one bag's positive weights to sum to one.

    An all-zero bag is returned as zeros.

    Raises:
        ValueError: for an empty bag.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.size == 0:
        raise ValueError("cannot normalize an empty bag")
    total = raw.sum()
    if total <= 0:
        return np.zeros_like(raw)
    return raw / total


def neg_prob(iou, gamma1: float, k: float, b: float) -> np.ndarray:
    """Probability that a box is a negative, from its IoU alone.

    1 below IoU 0.5, 0 above 0.95, and ``-k * iou**gamma1 + b`` in between.
    """
    iou = np.asarray(iou, dtype=float)
    mid = np.clip(-k * iou**gamma1 + b, 0.0, 1.0)
    return np.where(iou < NEG_LOW, 1.0, np.where(iou > NEG_HIGH, 0.0, mid))


def neg_importance(s, gamma2: float) -> np.ndarray:
    return np.asarray(s, dtype=float) ** gamma2


def neg_weight_dw(s, iou, params: DwParams) -> np.ndarray:
    return neg_prob(iou, params.gamma1, params.k, params.b) * neg_importance(s, params.gamma2)


def scheme_weights(cfg: SchemeConfig, s, iou) -> WeightTriple:
    """Raw (un-normalized) weights for anchors with score ``s`` and ``iou``.

    For ``neg_mode="one_minus_pos"`` the negative weight depends on the
    normalized positive weight, so it is left at zero here and filled in by
    :func:`finish_bag`.
    """
    s = _check_unit("score", s)
    iou = _check_unit("iou", iou)
    if cfg.scheme == "dw":
        p = cfg.dw
        w_pos = pos_weight_raw(s * iou**p.beta, p.mu)
        if cfg.neg_mode == "full":
            w_neg = neg_weight_dw(s, iou, p)
        elif cfg.neg_mode == "p_neg":
            w_neg = neg_prob(iou, p.gamma1, p.k, p.b) * np.ones_like(s)
        elif cfg.neg_mode == "i_neg":
            w_neg = neg_importance(s, p.gamma2) * np.ones_like(iou)
        else:
            w_neg = np.zeros(np.broadcast(s, iou).shape)
    elif cfg.scheme == "vfl":
        t = iou * np.ones_like(s)
        w_pos, w_neg = t * t, t * (1 - t)
    else:
        if cfg.scheme == "gfl":
            t = iou * np.ones_like(s)
        else:
            t = s**cfg.t_score_exp * iou**cfg.t_iou_exp
        w_pos = (s - t) ** 2 * t
        if cfg.scheme == "musu":
            w_neg = s**2 * (1 - t) ** 4
        else:
            w_neg = (s - t) ** 2 * (1 - t)
    w_pos = np.asarray(w_pos, dtype=float)
    return WeightTriple(w_pos, np.asarray(w_neg, dtype=float), w_pos)


def finish_bag(cfg: SchemeConfig, raw: WeightTriple, prior_weight=1.0) -> WeightTriple:
    """Apply the soft-center multiplier and per-bag normalization to one bag."""
    w_pos = normalize_pos_weights(np.asarray(raw.w_pos) * prior_weight)
    w_neg = raw.w_neg
    if cfg.scheme == "dw" and cfg.neg_mode == "one_minus_pos":
        w_neg = 1.0 - w_pos
    return WeightTriple(w_pos, np.asarray(w_neg, dtype=float), w_pos)


def neg_prob_curves(gamma1s=(1, 2, 3, 4, 5), resolution: int = 46):
    """Rows ``(iou, gamma1, p_neg)`` over a uniform IoU grid on [0.5, 0.95]."""
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    grid = np.linspace(NEG_LOW, NEG_HIGH, resolution)
    rows = []
    for g in gamma1s:
        if not g > 0:
            raise ValueError(f"gamma1 must be > 0, got {g}")
        k, b = solve_neg_coefficients(g)
        for x, p in zip(grid, neg_prob(grid, g, k, b)):
            rows.append((float(x), float(g), float(p)))
    return rows
