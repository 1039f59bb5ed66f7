"""Pixel-level F1 and image-level AUC / accuracy."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import DegenerateLabels, LengthMismatch, ShapeMismatch
from .localization import Heatmap

__all__ = [
    "EvalReport",
    "ImageResult",
    "pixel_f1",
    "best_threshold_f1",
    "roc_auc",
    "image_accuracy",
    "build_report",
]


def _values(h) -> np.ndarray:
    return h.values if isinstance(h, Heatmap) else np.asarray(h, dtype=np.float64)


def _check_pair(h, gt):
    values = _values(h)
    gt = np.asarray(gt, dtype=bool)
    if values.shape != gt.shape:
        raise ShapeMismatch(f"heatmap {values.shape} and mask {gt.shape} differ")
    return values, gt


def _f1(tp, fp, fn):
    denom = 2 * tp + fp + fn
    return np.where(denom > 0, 2 * tp / np.maximum(denom, 1), 0.0)


def pixel_f1(h, gt, threshold: float = 0.5) -> float:
    """F1 of ``h >= threshold`` against ``gt``; 0 when both are empty."""
    values, gt = _check_pair(h, gt)
    pred = values >= threshold
    tp = int((pred & gt).sum())
    fp = int((pred & ~gt).sum())
    fn = int((~pred & gt).sum())
    return float(_f1(tp, fp, fn))


def best_threshold_f1(h, gt) -> tuple[float, float]:
    """Best F1 over thresholds at every distinct heatmap value plus 0 and 1.

    Returns ``(f1, threshold)``; ties resolve to the lowest threshold.
    """
    values, gt = _check_pair(h, gt)
    flat, pos = values.ravel(), gt.ravel()
    candidates, inverse = np.unique(np.concatenate([flat, [0.0, 1.0]]), return_inverse=True)
    inverse = inverse[:flat.size]
    pos_per = np.bincount(inverse, weights=pos, minlength=candidates.size)
    all_per = np.bincount(inverse, minlength=candidates.size)
    # prediction at candidate j is every pixel with value >= candidates[j]
    tp = np.cumsum(pos_per[::-1])[::-1]
    predicted = np.cumsum(all_per[::-1])[::-1]
    fp = predicted - tp
    fn = pos.sum() - tp
    scores = _f1(tp, fp, fn)
    j = int(np.argmax(scores))
    return float(scores[j]), float(candidates[j])


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC; tied positive/negative pairs count one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape:
        raise LengthMismatch(f"{scores.size} scores vs {labels.size} labels")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels("AUC needs at least one positive and one negative label")
    ranks = rankdata(scores)
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def image_accuracy(scores, labels, threshold: float = 0.5) -> float:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape:
        raise LengthMismatch(f"{scores.size} scores vs {labels.size} labels")
    if scores.size == 0:
        return 0.0
    return float(((scores >= threshold) == labels).mean())


@dataclass(frozen=True)
class ImageResult:
    id: str
    label: int
    score: float
    f1_fixed: float | None = None
    f1_best: float | None = None
    best_threshold: float | None = None


@dataclass
class EvalReport:
    f1_fixed: float
    f1_best: float
    best_threshold: float
    auc: float | None
    accuracy: float
    n_images: int
    n_tampered: int
    per_image: list = field(default_factory=list)
    skipped: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def build_report(results, skipped=()) -> EvalReport:
    """Aggregate per-image results.

    Localization metrics average over tampered images only; AUC and accuracy
    use every image. ``best_threshold`` is the mean of the per-image optima.
    """
    results = sorted(results, key=lambda r: r.id)
    tampered = [r for r in results if r.label == 1]
    scores = [r.score for r in results]
    labels = [r.label for r in results]
    try:
        auc = roc_auc(scores, labels)
    except DegenerateLabels:
        auc = None

    def mean(xs):
        return float(np.mean(xs)) if xs else 0.0

    return EvalReport(
        f1_fixed=mean([r.f1_fixed for r in tampered]),
        f1_best=mean([r.f1_best for r in tampered]),
        best_threshold=mean([r.best_threshold for r in tampered]),
        auc=auc,
        accuracy=image_accuracy(scores, labels),
        n_images=len(results),
        n_tampered=len(tampered),
        per_image=[asdict(r) for r in results],
        skipped=sorted(skipped),
    )
