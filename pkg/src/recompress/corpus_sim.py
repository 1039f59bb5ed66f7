"""Block-domain generator of same-QF spliced double-compression samples.

Instead of writing JPEG files, "saving as JPEG" is simulated as level shift,
forward DCT and quantization with the IJG table for the chosen quality;
"opening" is the inverse chain with rounding and clamping to 8 bits. The
quantization physics that recompression probes is therefore exact, without
an entropy coder.
"""
from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .block_codec import (
    CoefficientPlane,
    compress_pixels,
    decompress_coeffs,
    quality_to_qmatrix,
    to_blocks,
)
from .errors import IOFailure, NotBlockAligned, SpecInvalid
from .jpeg_parser import write_coef_dump
from .localization import save_mask

__all__ = [
    "TEXTURES",
    "ForgerySpec",
    "LabeledSample",
    "synth_texture",
    "simulate_single",
    "simulate_double",
    "simulate_spliced_double",
    "simulate_authentic",
    "random_spec",
    "generate_corpus",
    "read_manifest",
    "MANIFEST_FIELDS",
]

TEXTURES = ("noise", "gradient", "mixed")
DETAIL_CONTRAST = (80.0, 100.0)
MANIFEST_FIELDS = ["id", "label", "qf", "width", "height", "coeff_path", "mask_path"]


@dataclass(frozen=True)
class ForgerySpec:
    """One synthetic splice. ``splice_rect`` is ``(x0, y0, x1, y1)`` in pixels, half-open."""

    width: int = 256
    height: int = 256
    qf: int = 80
    splice_rect: tuple[int, int, int, int] | None = None
    seed: int = 0
    texture: str = "mixed"

    def validate(self) -> None:
        if self.width <= 0 or self.height <= 0 or self.width % 8 or self.height % 8:
            raise SpecInvalid(f"image size {self.width}x{self.height} must be positive multiples of 8")
        if not 1 <= self.qf <= 100:
            raise SpecInvalid(f"qf {self.qf} outside [1, 100]")
        if self.texture not in TEXTURES:
            raise SpecInvalid(f"unknown texture {self.texture!r}; expected one of {TEXTURES}")
        if self.splice_rect is not None:
            x0, y0, x1, y1 = self.splice_rect
            if any(v % 8 for v in self.splice_rect):
                raise SpecInvalid(f"splice rectangle {self.splice_rect} is not block aligned")
            if not (0 <= x0 <= x1 <= self.width and 0 <= y0 <= y1 <= self.height):
                raise SpecInvalid(f"splice rectangle {self.splice_rect} is outside the image")

    @property
    def mask(self) -> np.ndarray:
        mask = np.zeros((self.height, self.width), dtype=bool)
        if self.splice_rect is not None:
            x0, y0, x1, y1 = self.splice_rect
            mask[y0:y1, x0:x1] = True
        return mask

    @property
    def area_fraction(self) -> float:
        return float(self.mask.mean())


@dataclass(frozen=True, eq=False)
class LabeledSample:
    coeffs: CoefficientPlane
    gt_mask: np.ndarray
    label: str
    qf: int


def synth_texture(height: int, width: int, kind: str, rng: np.random.Generator,
                  detail: tuple[float, float] = DETAIL_CONTRAST) -> np.ndarray:
    """Synthetic 8-bit luminance content.

    Every texture carries fine, high-contrast detail that clips at 0 or 255
    in scattered spots (about one pixel in six by default), the way specular
    highlights and deep shadows do in photographs. Clamping in the decoder is
    what keeps same-quality recompression from being idempotent, so content
    that never touches the rails shows no instability at all.

    ``detail`` is the range the detail standard deviation is drawn from; pass
    something like ``(20, 40)`` for clip-free content.
    """
    if kind not in TEXTURES:
        raise SpecInvalid(f"unknown texture {kind!r}")
    noise = gaussian_filter(rng.normal(0.0, 1.0, (height, width)), rng.uniform(0.6, 1.2))
    field = noise * rng.uniform(*detail) / (noise.std() + 1e-12)
    if kind in ("gradient", "mixed"):
        yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
        angle = rng.uniform(0, 2 * np.pi)
        ramp = np.cos(angle) * (xx / width - 0.5) + np.sin(angle) * (yy / height - 0.5)
        span = rng.uniform(20.0, 60.0) * (2.0 if kind == "gradient" else 1.0)
        field += span * ramp
    # sensor grain
    field += rng.normal(0.0, rng.uniform(2.0, 5.0), (height, width))
    field += 128.0 + rng.uniform(-10.0, 10.0)
    return np.clip(np.rint(field), 0, 255).astype(np.int32)


def simulate_single(pixels: np.ndarray, qf: int) -> CoefficientPlane:
    pixels = np.asarray(pixels)
    if pixels.ndim != 2 or pixels.shape[0] % 8 or pixels.shape[1] % 8:
        raise NotBlockAligned(f"pixel plane {pixels.shape} is not 8-aligned")
    q = quality_to_qmatrix(qf)
    return CoefficientPlane(compress_pixels(pixels, q), q)


def simulate_double(pixels: np.ndarray, qf: int) -> CoefficientPlane:
    """Compress, decode to 8-bit pixels, and compress again at the same quality."""
    first = simulate_single(pixels, qf)
    return simulate_single(decompress_coeffs(first.coeffs, first.q), qf)


def _content(spec: ForgerySpec):
    seq = np.random.SeedSequence(spec.seed)
    bg_rng, splice_rng = (np.random.default_rng(s) for s in seq.spawn(2))
    background = synth_texture(spec.height, spec.width, spec.texture, bg_rng)
    donor = synth_texture(spec.height, spec.width, spec.texture, splice_rng)
    return background, donor


def simulate_spliced_double(spec: ForgerySpec) -> LabeledSample:
    """Background saved twice at ``qf``; the pasted region only by the final save."""
    spec.validate()
    background, donor = _content(spec)
    q = quality_to_qmatrix(spec.qf)
    once = decompress_coeffs(compress_pixels(background, q), q)
    mask = spec.mask
    frame = np.where(mask, donor, once)
    coeffs = CoefficientPlane(compress_pixels(frame, q), q)
    label = "single" if mask.all() else "double"
    return LabeledSample(coeffs, mask, label, spec.qf)


def simulate_authentic(spec: ForgerySpec) -> LabeledSample:
    """The untouched original, saved once at ``qf``."""
    spec.validate()
    background, _ = _content(spec)
    plane = simulate_single(background, spec.qf)
    return LabeledSample(plane, np.zeros((spec.height, spec.width), dtype=bool), "single", spec.qf)


def random_spec(rng: np.random.Generator, qf: int, width: int = 256, height: int = 256,
                max_area: float = 0.015, seed: int | None = None) -> ForgerySpec:
    """Draw a block-aligned splice covering at most ``max_area`` of the frame."""
    wb, hb = width // 8, height // 8
    max_blocks = max(1, int(max_area * wb * hb))
    area = int(rng.integers(max(1, max_blocks // 3), max_blocks + 1))
    bw = int(rng.integers(1, min(area, wb) + 1))
    bh = max(1, min(area // bw, hb))
    bx = int(rng.integers(0, wb - bw + 1))
    by = int(rng.integers(0, hb - bh + 1))
    texture = TEXTURES[int(rng.integers(0, len(TEXTURES)))]
    if seed is None:
        seed = int(rng.integers(0, 2**32))
    return ForgerySpec(width, height, int(qf), (8 * bx, 8 * by, 8 * (bx + bw), 8 * (by + bh)), seed, texture)


def _sample_specs(n: int, qf_range: tuple[int, int], seed: int, width: int, height: int, max_area: float):
    qf_lo, qf_hi = qf_range
    specs = []
    for i, child in enumerate(np.random.SeedSequence(seed).spawn(n)):
        rng = np.random.default_rng(child)
        qf = int(rng.integers(qf_lo, qf_hi + 1))
        specs.append((i, random_spec(rng, qf, width, height, max_area)))
    return specs


def _write_pair(args):
    i, spec, out_dir = args
    out_dir = Path(out_dir)
    rows = []
    for prefix, sample in (("t", simulate_spliced_double(spec)), ("a", simulate_authentic(spec))):
        sid = f"{prefix}{i:05d}"
        coeff_name, mask_name = f"{sid}.coef", f"{sid}_mask.png"
        write_coef_dump(out_dir / coeff_name, to_blocks(sample.coeffs.coeffs), sample.coeffs.q,
                        spec.width, spec.height)
        save_mask(sample.gt_mask, out_dir / mask_name)
        rows.append({
            "id": sid,
            "label": "tampered" if prefix == "t" else "authentic",
            "qf": spec.qf,
            "width": spec.width,
            "height": spec.height,
            "coeff_path": coeff_name,
            "mask_path": mask_name,
        })
    return rows


def generate_corpus(out_dir, n: int, qf_range: tuple[int, int] = (50, 99), seed: int = 0,
                    width: int = 256, height: int = 256, max_area: float = 0.015,
                    jobs: int = 1) -> Path:
    """Write ``n`` tampered/authentic pairs plus ``manifest.csv``; returns the manifest path.

    Each pair draws its quality uniformly from ``qf_range`` (inclusive) using
    an RNG stream derived from ``seed`` and the pair index, so output does not
    depend on ``jobs``.
    """
    if n < 1:
        raise SpecInvalid(f"corpus size must be >= 1, got {n}")
    qf_lo, qf_hi = (int(v) for v in qf_range)
    if not 1 <= qf_lo <= qf_hi <= 100:
        raise SpecInvalid(f"invalid quality range {qf_range}")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        tasks = [(i, spec, str(out_dir))
                 for i, spec in _sample_specs(n, (qf_lo, qf_hi), seed, width, height, max_area)]
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_write_pair, tasks))
        else:
            results = [_write_pair(t) for t in tasks]
        rows = sorted((row for pair in results for row in pair), key=lambda r: r["id"])
        manifest = out_dir / "manifest.csv"
        tmp = manifest.with_suffix(".csv.tmp")
        with tmp.open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=MANIFEST_FIELDS, lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)
        os.replace(tmp, manifest)
    except OSError as exc:
        raise IOFailure(f"could not write corpus to {out_dir}: {exc}") from exc
    return manifest


def read_manifest(path) -> list[dict]:
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise IOFailure(f"cannot read manifest {path}: {exc}") from exc
    for row in rows:
        for key in ("qf", "width", "height"):
            row[key] = int(row[key])
    return rows
