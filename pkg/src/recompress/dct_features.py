"""Histogram-style features over quantized DCT planes."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .block_codec import CoefficientPlane, to_blocks
from .errors import NotBlockAligned, PositionOutOfRange, ShapeMismatch

__all__ = [
    "DEFAULT_T",
    "BinaryVolume",
    "CoefficientHistogram",
    "FeatureVolumeSet",
    "clip_coeffs",
    "binary_volume",
    "coefficient_histogram",
    "feature_volume_set",
    "block_to_channel_reshape",
    "channel_to_block_reshape",
    "interior_empty_bins",
]

DEFAULT_T = 20


def _coeffs(plane) -> np.ndarray:
    if isinstance(plane, CoefficientPlane):
        return plane.coeffs
    return np.asarray(plane)


def _check_t(T: int) -> int:
    T = int(T)
    if T < 1:
        raise ValueError(f"clip threshold must be >= 1, got {T}")
    return T


def clip_coeffs(plane, T: int = DEFAULT_T) -> np.ndarray:
    T = _check_t(T)
    return np.clip(_coeffs(plane), -T, T)


@dataclass(frozen=True)
class BinaryVolume:
    """One-hot encoding of clipped coefficient magnitude, shape ``(T+1, H, W)``."""

    data: np.ndarray
    T: int

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


def binary_volume(plane, T: int = DEFAULT_T) -> BinaryVolume:
    T = _check_t(T)
    mag = np.abs(clip_coeffs(plane, T))
    channels = np.arange(T + 1)[:, None, None]
    return BinaryVolume((mag[None] == channels).astype(np.uint8), T)


@dataclass(frozen=True)
class CoefficientHistogram:
    """Signed counts of one frequency position over all blocks.

    ``counts[i]`` is the number of blocks whose coefficient equals
    ``values[i]``; ``overflow`` counts blocks with ``|c| > T``.
    """

    position: tuple[int, int]
    values: np.ndarray
    counts: np.ndarray
    total: int
    overflow: int

    def count(self, value: int) -> int:
        T = (len(self.values) - 1) // 2
        if abs(value) > T:
            raise PositionOutOfRange(f"value {value} outside [-{T}, {T}]")
        return int(self.counts[value + T])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["value", "count"])
        writer.writerows(zip(self.values.tolist(), self.counts.tolist()))
        return buf.getvalue()


def coefficient_histogram(plane, position: tuple[int, int] = (0, 1), T: int = DEFAULT_T) -> CoefficientHistogram:
    T = _check_t(T)
    u, v = (int(p) for p in position)
    if not (0 <= u < 8 and 0 <= v < 8):
        raise PositionOutOfRange(f"position {position} outside the 8x8 block")
    samples = to_blocks(_coeffs(plane))[:, :, u, v].ravel()
    inside = np.abs(samples) <= T
    counts = np.bincount(samples[inside] + T, minlength=2 * T + 1)
    return CoefficientHistogram(
        position=(u, v),
        values=np.arange(-T, T + 1),
        counts=counts,
        total=int(samples.size),
        overflow=int((~inside).sum()),
    )


def interior_empty_bins(hist: CoefficientHistogram) -> int:
    """Zero-count bins strictly between the smallest and largest occupied value."""
    occupied = np.flatnonzero(hist.counts)
    if occupied.size == 0:
        return 0
    inner = hist.counts[occupied[0]:occupied[-1] + 1]
    return int((inner == 0).sum())


@dataclass(frozen=True)
class FeatureVolumeSet:
    quantized: np.ndarray
    dequantized: np.ndarray
    residual_guided: np.ndarray

    def concatenated(self) -> np.ndarray:
        """Channel-stacked block features, shape ``(H/8, W/8, 3 * (T+1) * 64)``."""
        parts = []
        for vol in (self.dequantized, self.quantized, self.residual_guided):
            parts.extend(block_to_channel_reshape(ch) for ch in vol)
        return np.concatenate(parts, axis=-1)


def feature_volume_set(V: BinaryVolume, q, R, signed: bool = False) -> FeatureVolumeSet:
    """Scale the one-hot volume by the tiled Q-matrix and by the residual map.

    ``signed=True`` multiplies by ``R`` itself instead of ``|R|``.
    """
    data = V.data
    h, w = data.shape[1:]
    q = np.asarray(q)
    R = np.asarray(R, dtype=np.float64)
    if q.shape == (8, 8):
        if h % 8 or w % 8:
            raise ShapeMismatch(f"cannot tile an 8x8 Q-matrix over a {h}x{w} volume")
        q = np.tile(q, (h // 8, w // 8))
    if q.shape != (h, w) or R.shape != (h, w):
        raise ShapeMismatch(f"volume is {h}x{w}, q is {q.shape}, R is {R.shape}")
    guide = R if signed else np.abs(R)
    quantized = data.astype(np.float64)
    return FeatureVolumeSet(
        quantized=quantized,
        dequantized=quantized * q[None],
        residual_guided=quantized * guide[None],
    )


def block_to_channel_reshape(plane) -> np.ndarray:
    """``H x W`` -> ``(H/8, W/8, 64)`` with channel ``8*row + col`` inside each block."""
    plane = np.asarray(plane)
    if plane.ndim != 2 or plane.shape[0] % 8 or plane.shape[1] % 8:
        raise NotBlockAligned(f"plane shape {plane.shape} is not a multiple of 8")
    blocks = to_blocks(plane)
    return blocks.reshape(blocks.shape[0], blocks.shape[1], 64)


def channel_to_block_reshape(tensor) -> np.ndarray:
    tensor = np.asarray(tensor)
    if tensor.ndim != 3 or tensor.shape[2] != 64:
        raise ShapeMismatch(f"expected (H/8, W/8, 64), got {tensor.shape}")
    hb, wb = tensor.shape[:2]
    return tensor.reshape(hb, wb, 8, 8).swapaxes(1, 2).reshape(hb * 8, wb * 8)
