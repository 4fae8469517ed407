"""Pixel-wise detection metrics pooled across a dataset.

Probability masks and binary truth masks are compared with pooled confusion
counts (not per-image averages): the operating point is picked on the pooled
ROC at a target false-alarm probability, which is only meaningful against the
combined negative population.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .backproject import BpImage
from .errors import DegenerateLabelsError, ShapeMismatchError
from .phantom import Contour

BCE_CLIP = 1e-7


@dataclass
class MaskPair:
    prob: np.ndarray                     # probabilities in [0, 1]
    truth: np.ndarray                    # binary {0, 1}

    def __post_init__(self):
        self.prob = np.asarray(self.prob, dtype=float)
        self.truth = np.asarray(self.truth)
        if self.prob.shape != self.truth.shape:
            raise ShapeMismatchError(
                f"prob {self.prob.shape} vs truth {self.truth.shape}")
        if not np.all(np.isfinite(self.prob)):
            raise ValueError("probabilities must be finite")
        if self.prob.min() < 0.0 or self.prob.max() > 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
        if not np.isin(self.truth, (0, 1)).all():
            raise ValueError("truth mask must be binary")
        self.truth = self.truth.astype(np.uint8)


@dataclass
class RocCurve:
    """Sweep of (threshold, P_FA, P_D), thresholds strictly decreasing.

    A pixel counts as detected when its probability is strictly greater than
    the threshold; the anchor rows (1, 0, 0) and (0, 1, 1) close the sweep at
    predict-nothing and predict-everything.
    """

    thresholds: np.ndarray
    pfa: np.ndarray
    pd: np.ndarray

    def __post_init__(self):
        self.thresholds = np.asarray(self.thresholds, dtype=float)
        self.pfa = np.asarray(self.pfa, dtype=float)
        self.pd = np.asarray(self.pd, dtype=float)
        if not (len(self.thresholds) == len(self.pfa) == len(self.pd)):
            raise ValueError("curve columns must have equal length")
        if np.any(np.diff(self.thresholds) >= 0):
            raise ValueError("thresholds must be strictly decreasing")
        if np.any(np.diff(self.pfa) < 0) or np.any(np.diff(self.pd) < 0):
            raise ValueError("P_FA and P_D must be non-decreasing")

    def __len__(self) -> int:
        return len(self.thresholds)

    def auc(self) -> float:
        return float(np.trapezoid(self.pd, self.pfa))


def _pooled(pairs: Iterable[MaskPair]) -> tuple[np.ndarray, np.ndarray]:
    pairs = list(pairs)
    if not pairs:
        raise ValueError("empty dataset")
    probs = np.concatenate([p.prob.ravel() for p in pairs])
    truth = np.concatenate([p.truth.ravel() for p in pairs])
    return probs, truth


def bce_loss(pairs: Iterable[MaskPair]) -> float:
    """Mean binary cross entropy over all pixels, probabilities clipped at 1e-7."""
    probs, truth = _pooled(pairs)
    p = np.clip(probs, BCE_CLIP, 1.0 - BCE_CLIP)
    y = truth.astype(float)
    return float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))))


def roc_curve(pairs: Iterable[MaskPair]) -> RocCurve:
    """Pooled ROC over every unique probability value (ties move together)."""
    probs, truth = _pooled(pairs)
    n_pos = int(truth.sum())
    n_neg = int(len(truth) - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabelsError(
            f"need both classes present (got {n_pos} positive, {n_neg} negative)")

    order = np.argsort(-probs, kind="stable")
    sp = probs[order]
    st = truth[order]
    cum_tp = np.cumsum(st)
    cum_fp = np.cumsum(1 - st)
    # last index of each group of tied scores: counts with "score > threshold"
    # at threshold sp[k] are the cumulative counts just above the group
    last = np.nonzero(np.diff(sp) != 0)[0]
    starts = np.concatenate([last, [len(sp) - 1]])
    uniq = sp[starts]
    tp_above = np.concatenate([[0], cum_tp[last]])
    fp_above = np.concatenate([[0], cum_fp[last]])

    interior = (uniq < 1.0) & (uniq > 0.0)
    thr = np.concatenate([[1.0], uniq[interior], [0.0]])
    pfa = np.concatenate([[0.0], fp_above[interior] / n_neg, [1.0]])
    pd = np.concatenate([[0.0], tp_above[interior] / n_pos, [1.0]])
    return RocCurve(thresholds=thr, pfa=pfa, pd=pd)


@dataclass(frozen=True)
class OperatingPoint:
    threshold: float
    pfa: float
    pd: float


def threshold_at_pfa(curve: RocCurve, target_pfa: float) -> OperatingPoint:
    """Smallest threshold (hence largest P_D) with achieved P_FA <= target.

    The predict-nothing anchor always qualifies, so an infeasible interior
    target degrades to threshold 1 with zero detections.
    """
    if not (0.0 < target_pfa < 1.0):
        raise ValueError("target P_FA must lie in (0, 1)")
    ok = np.nonzero(curve.pfa <= target_pfa)[0]
    k = int(ok[-1])
    return OperatingPoint(threshold=float(curve.thresholds[k]),
                          pfa=float(curve.pfa[k]), pd=float(curve.pd[k]))


def _as_mask_list(x) -> list[np.ndarray]:
    if isinstance(x, np.ndarray):
        return [x]
    return [np.asarray(m) for m in x]


def _pooled_counts(pred: Sequence[np.ndarray] | np.ndarray,
                   truth: Sequence[np.ndarray] | np.ndarray):
    pred = _as_mask_list(pred)
    truth = _as_mask_list(truth)
    if len(pred) != len(truth):
        raise ShapeMismatchError("pred/truth dataset sizes differ")
    tp = fp = fn = 0
    for p, t in zip(pred, truth):
        if p.shape != t.shape:
            raise ShapeMismatchError(f"mask shapes differ: {p.shape} vs {t.shape}")
        pb = p.astype(bool)
        tb = t.astype(bool)
        tp += int(np.sum(pb & tb))
        fp += int(np.sum(pb & ~tb))
        fn += int(np.sum(~pb & tb))
    return tp, fp, fn


def f1_score(pred, truth) -> float:
    """Pooled F1 = TP / (TP + 0.5 (FP + FN)); 0 when the denominator vanishes."""
    tp, fp, fn = _pooled_counts(pred, truth)
    denom = tp + 0.5 * (fp + fn)
    return tp / denom if denom > 0 else 0.0


def iou_score(pred, truth) -> float:
    """Pooled IoU = TP / (TP + FP + FN); 0 when the denominator vanishes."""
    tp, fp, fn = _pooled_counts(pred, truth)
    denom = tp + fp + fn
    return tp / denom if denom > 0 else 0.0


def threshold_detector(img: BpImage, contour: Contour, q: float = 0.95,
                       hard: bool = False) -> np.ndarray:
    """Non-learned detector: image intensity masked to the contour interior.

    Returns the soft probability mask (intensity inside the contour, zero
    outside). With ``hard=True``, thresholds at the q-quantile of the
    inside-contour intensities instead (q = 0 degenerates to the full
    interior).
    """
    if img.normalization != "minmax":
        raise ValueError("detector expects a min/max normalized image")
    if not (0.0 <= q < 1.0):
        raise ValueError("quantile must lie in [0, 1)")
    X, Y = img.grid.centers()
    inside = contour.contains(X, Y)
    prob = np.where(inside, img.pixels, 0.0)
    if not hard:
        return prob
    if not inside.any():
        return np.zeros(img.pixels.shape)
    level = np.quantile(img.pixels[inside], q)
    return ((img.pixels >= level) & inside).astype(float)
