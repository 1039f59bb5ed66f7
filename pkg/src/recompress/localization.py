"""Heatmaps from coefficient instability, heatmap fusion and image scoring."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .block_codec import RecompressionTrace, change_mask, to_blocks
from .errors import ShapeMismatch

__all__ = [
    "Heatmap",
    "block_instability",
    "instability_heatmap",
    "adaptive_aggregate",
    "binarize",
    "image_level_score",
    "heatmap_to_image",
    "save_heatmap",
    "save_mask",
    "load_heatmap",
    "load_mask",
]


@dataclass(frozen=True, eq=False)
class Heatmap:
    values: np.ndarray
    origin: str = "external"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ShapeMismatch(f"heatmap must be 2-D, got shape {values.shape}")
        if values.size and (values.min() < 0 or values.max() > 1 or not np.isfinite(values).all()):
            raise ValueError("heatmap values must lie in [0, 1]")
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def crop(self, height: int, width: int) -> "Heatmap":
        return Heatmap(self.values[:height, :width], self.origin)


def block_instability(trace: RecompressionTrace) -> np.ndarray:
    """Fraction of coefficients per block that changed, averaged over the trace steps."""
    changed = sum(change_mask(p, c).astype(np.int64) for p, c in zip(trace.planes, trace.planes[1:]))
    per_block = to_blocks(changed).sum(axis=(2, 3))
    return per_block / (64.0 * trace.k)


def instability_heatmap(trace: RecompressionTrace) -> Heatmap:
    raw = block_instability(trace)
    lo, hi = raw.min(), raw.max()
    if hi == lo:
        norm = np.zeros_like(raw)
    else:
        norm = (raw - lo) / (hi - lo)
    return Heatmap(np.kron(norm, np.ones((8, 8))), origin="instability")


def adaptive_aggregate(h_a: Heatmap, h_b: Heatmap) -> Heatmap:
    """Soft selection: the map with the stronger peak weights itself by that peak."""
    if h_a.shape != h_b.shape:
        raise ShapeMismatch(f"heatmap shapes differ: {h_a.shape} vs {h_b.shape}")
    if h_b.values.max() > h_a.values.max():
        main, second = h_b.values, h_a.values
    else:
        main, second = h_a.values, h_b.values
    w = main.max()
    h = w * main + (1.0 - w) * second
    # clip only absorbs floating-point overshoot at the [0, 1] boundary
    return Heatmap(np.clip(h, 0.0, 1.0), origin="aggregate")


def binarize(h: Heatmap, threshold: float = 0.5) -> np.ndarray:
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    return h.values >= threshold


def image_level_score(h: Heatmap) -> float:
    return float(h.values.max()) if h.values.size else 0.0


def heatmap_to_image(values: np.ndarray) -> np.ndarray:
    """[0, 1] -> uint8 with round-half-up."""
    return np.floor(np.asarray(values, dtype=np.float64) * 255.0 + 0.5).astype(np.uint8)


def save_heatmap(h: Heatmap, path) -> None:
    Image.fromarray(heatmap_to_image(h.values)).save(Path(path), format="PNG")


def save_mask(mask: np.ndarray, path) -> None:
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8)).save(Path(path), format="PNG")


def load_heatmap(path) -> Heatmap:
    with Image.open(path) as img:
        return Heatmap(np.asarray(img.convert("L"), dtype=np.float64) / 255.0)


def load_mask(path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("L")) >= 128
