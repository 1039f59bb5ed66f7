"""Block-domain JPEG arithmetic and the repeated-recompression chain.

Coefficient planes are stored in the "DCT map" layout: an ``H x W`` integer
array whose 8x8 tiles are the quantized blocks in natural (row-major)
frequency order. All transforms below operate on arrays whose trailing two
axes are 8x8 blocks, so a whole plane is processed in one vectorised call.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidK, NotBlockAligned, QFOutOfRange, ShapeMismatch

__all__ = [
    "STD_LUMA_QTABLE",
    "CoefficientPlane",
    "RecompressionTrace",
    "quality_to_qmatrix",
    "fdct_block",
    "idct_block",
    "quantize",
    "dequantize",
    "round_truncate",
    "to_blocks",
    "from_blocks",
    "compress_pixels",
    "decompress_coeffs",
    "recompress_once",
    "recompression_trace",
    "residual_map",
    "change_mask",
    "change_counts",
]

MAX_K = 16

# ITU-T T.81 Annex K.1 luminance table, natural order.
STD_LUMA_QTABLE = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.int32,
)


def _dct_matrix() -> np.ndarray:
    n = np.arange(8)
    c = np.cos((2 * n[None, :] + 1) * n[:, None] * np.pi / 16) / 2.0
    c[0, :] /= np.sqrt(2.0)
    return c


# Orthonormal 8-point DCT-II basis: row u holds C(u)/2 * cos((2x+1)u*pi/16).
_DCT = _dct_matrix()


def quality_to_qmatrix(qf: int, base: np.ndarray = STD_LUMA_QTABLE) -> np.ndarray:
    """IJG quality scaling of ``base`` (libjpeg ``jpeg_set_quality``, baseline-clamped)."""
    qf = int(qf)
    if not 1 <= qf <= 100:
        raise QFOutOfRange(f"quality factor must be in [1, 100], got {qf}")
    scale = 5000 // qf if qf < 50 else 200 - 2 * qf
    q = (np.asarray(base, dtype=np.int64) * scale + 50) // 100
    return np.clip(q, 1, 255).astype(np.int32)


def fdct_block(pixels: np.ndarray) -> np.ndarray:
    """Forward 2-D DCT of level-shifted 8x8 block(s); a constant ``c`` block gives DC ``8c``."""
    x = np.asarray(pixels, dtype=np.float64)
    return _DCT @ x @ _DCT.T


def idct_block(coeffs: np.ndarray) -> np.ndarray:
    x = np.asarray(coeffs, dtype=np.float64)
    return _DCT.T @ x @ _DCT


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize(D: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Divide by the quantization matrix and round to nearest, ties away from zero."""
    return _round_half_away(np.asarray(D, dtype=np.float64) / q).astype(np.int32)


def dequantize(Q: np.ndarray, q: np.ndarray) -> np.ndarray:
    return np.asarray(Q, dtype=np.float64) * q


def round_truncate(B: np.ndarray, clamp: bool = True) -> np.ndarray:
    """Map level-shifted IDCT output back to 8-bit samples.

    With ``clamp=False`` samples are only rounded, which can leave values
    outside [0, 255]; this exists for sensitivity experiments.
    """
    samples = _round_half_away(np.asarray(B, dtype=np.float64) + 128.0)
    if clamp:
        samples = np.clip(samples, 0, 255)
    return samples.astype(np.int32)


def to_blocks(plane: np.ndarray) -> np.ndarray:
    """``H x W`` -> ``(H/8, W/8, 8, 8)`` view of the 8x8 tiles."""
    plane = np.asarray(plane)
    if plane.ndim != 2:
        raise ShapeMismatch(f"expected a 2-D plane, got shape {plane.shape}")
    h, w = plane.shape
    if h % 8 or w % 8:
        raise NotBlockAligned(f"plane shape {plane.shape} is not a multiple of 8")
    return plane.reshape(h // 8, 8, w // 8, 8).swapaxes(1, 2)


def from_blocks(blocks: np.ndarray) -> np.ndarray:
    blocks = np.asarray(blocks)
    hb, wb = blocks.shape[:2]
    return blocks.swapaxes(1, 2).reshape(hb * 8, wb * 8)


@dataclass(frozen=True, eq=False)
class CoefficientPlane:
    """Quantized coefficients in DCT-map layout plus the 8x8 table that produced them."""

    coeffs: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=np.int32)
        q = np.asarray(self.q, dtype=np.int32)
        if q.shape != (8, 8):
            raise ShapeMismatch(f"quantization matrix must be 8x8, got {q.shape}")
        if (q < 1).any():
            raise ValueError("quantization matrix entries must be >= 1")
        to_blocks(coeffs)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "q", q)

    @property
    def shape(self) -> tuple[int, int]:
        return self.coeffs.shape

    @property
    def blocks(self) -> np.ndarray:
        return to_blocks(self.coeffs)

    def __eq__(self, other):
        if not isinstance(other, CoefficientPlane):
            return NotImplemented
        return np.array_equal(self.coeffs, other.coeffs) and np.array_equal(self.q, other.q)


def compress_pixels(pixels: np.ndarray, q: np.ndarray) -> np.ndarray:
    """8-bit samples (``H x W``) -> quantized coefficients in DCT-map layout."""
    blocks = to_blocks(np.asarray(pixels, dtype=np.float64) - 128.0)
    return from_blocks(quantize(fdct_block(blocks), q))


def decompress_coeffs(coeffs: np.ndarray, q: np.ndarray, clamp: bool = True) -> np.ndarray:
    blocks = to_blocks(coeffs)
    return from_blocks(round_truncate(idct_block(dequantize(blocks, q)), clamp=clamp))


def recompress_once(plane: CoefficientPlane, clamp: bool = True) -> CoefficientPlane:
    """One decompress / recompress cycle with the plane's own table."""
    pixels = decompress_coeffs(plane.coeffs, plane.q, clamp=clamp)
    return CoefficientPlane(compress_pixels(pixels, plane.q), plane.q)


@dataclass(frozen=True)
class RecompressionTrace:
    planes: list = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.planes) - 1

    @property
    def q(self) -> np.ndarray:
        return self.planes[0].q


def recompression_trace(plane: CoefficientPlane, k: int = 7, clamp: bool = True) -> RecompressionTrace:
    if not 1 <= int(k) <= MAX_K:
        raise InvalidK(f"k must be in [1, {MAX_K}], got {k}")
    planes = [plane]
    for _ in range(int(k)):
        prev = planes[-1]
        # fixed point: the chain is deterministic, so stop computing once stable
        if len(planes) > 1 and planes[-2] == prev:
            planes.append(prev)
        else:
            planes.append(recompress_once(prev, clamp=clamp))
    return RecompressionTrace(planes)


def residual_map(trace: RecompressionTrace) -> np.ndarray:
    """Mean successive difference of the quantized planes over the trace."""
    if trace.k < 1:
        raise InvalidK("trace must contain at least one recompression")
    total = np.zeros(trace.planes[0].shape, dtype=np.int64)
    for prev, cur in zip(trace.planes, trace.planes[1:]):
        total += cur.coeffs.astype(np.int64) - prev.coeffs
    return total / trace.k


def change_mask(a: CoefficientPlane | np.ndarray, b: CoefficientPlane | np.ndarray) -> np.ndarray:
    a = a.coeffs if isinstance(a, CoefficientPlane) else np.asarray(a)
    b = b.coeffs if isinstance(b, CoefficientPlane) else np.asarray(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"plane shapes differ: {a.shape} vs {b.shape}")
    return (a != b).astype(np.uint8)


def change_counts(trace: RecompressionTrace) -> list[int]:
    """Number of coefficients that changed at each recompression step."""
    return [int(change_mask(p, c).sum()) for p, c in zip(trace.planes, trace.planes[1:])]
