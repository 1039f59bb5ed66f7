"""Forward-only numpy versions of the multi-scale fusion operators.

Feature tensors are ``H x W x C`` float arrays. Parameters are plain arrays so
they can be filled from exported weights (see :func:`load_weights`).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ShapeMismatch

__all__ = [
    "AttentionParams",
    "ASPPParams",
    "sigmoid",
    "conv1x1",
    "dilated_conv3x3",
    "channel_gate",
    "channel_attention",
    "spatial_gate",
    "spatial_attention",
    "aspp_forward",
    "bilinear_upsample",
    "interactive_attention",
    "save_weights",
    "load_weights",
]


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    # split form avoids overflow in exp for large |x|
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _as_feature(F, name="feature") -> np.ndarray:
    F = np.asarray(F, dtype=np.float64)
    if F.ndim != 3 or F.shape[2] < 1:
        raise ShapeMismatch(f"{name} must be H x W x C, got shape {F.shape}")
    return F


@dataclass
class AttentionParams:
    """Weights for one channel-attention block and one spatial-attention block.

    Linear maps are stored as ``(in, out)`` matrices so ``x @ w + b`` applies them.
    """

    proj_w: np.ndarray | None = None
    proj_b: np.ndarray | None = None
    down_w: np.ndarray | None = None
    down_b: np.ndarray | None = None
    up_w: np.ndarray | None = None
    up_b: np.ndarray | None = None
    spatial_w: np.ndarray = field(default_factory=lambda: np.zeros(2))
    spatial_b: float = 0.0
    r: int = 4

    def __post_init__(self):
        if self.proj_w is None:
            return
        c_in, c_out = np.shape(self.proj_w)
        if c_out % self.r:
            raise ShapeMismatch(f"reduction {self.r} does not divide {c_out} channels")
        hidden = c_out // self.r
        if self.proj_b is None:
            self.proj_b = np.zeros(c_out)
        if self.down_b is None:
            self.down_b = np.zeros(hidden)
        if self.up_b is None:
            self.up_b = np.zeros(c_out)
        expected = {
            "proj_b": (c_out,),
            "down_w": (c_out, hidden),
            "down_b": (hidden,),
            "up_w": (hidden, c_out),
            "up_b": (c_out,),
        }
        for name, shape in expected.items():
            if np.shape(getattr(self, name)) != shape:
                raise ShapeMismatch(f"{name} has shape {np.shape(getattr(self, name))}, expected {shape}")
        if np.shape(self.spatial_w) != (2,):
            raise ShapeMismatch("spatial_w must hold 2 weights (max, avg)")

    @classmethod
    def zeros(cls, c_in: int, c_out: int, r: int = 4) -> "AttentionParams":
        hidden = c_out // r
        return cls(np.zeros((c_in, c_out)), None, np.zeros((c_out, hidden)), None,
                   np.zeros((hidden, c_out)), None, np.zeros(2), 0.0, r)

    @classmethod
    def random(cls, c_in: int, c_out: int, r: int = 4, rng=None, scale: float = 0.5) -> "AttentionParams":
        rng = np.random.default_rng(rng)
        hidden = c_out // r
        return cls(
            proj_w=rng.normal(0, scale, (c_in, c_out)),
            proj_b=rng.normal(0, scale, c_out),
            down_w=rng.normal(0, scale, (c_out, hidden)),
            down_b=rng.normal(0, scale, hidden),
            up_w=rng.normal(0, scale, (hidden, c_out)),
            up_b=rng.normal(0, scale, c_out),
            spatial_w=rng.normal(0, scale, 2),
            spatial_b=float(rng.normal(0, scale)),
            r=r,
        )

    @classmethod
    def from_weights(cls, weights: dict, prefix: str, r: int = 4) -> "AttentionParams":
        def get(name):
            return weights.get(f"{prefix}.{name}")

        spatial_b = get("spatial_b")
        return cls(get("proj_w"), get("proj_b"), get("down_w"), get("down_b"),
                   get("up_w"), get("up_b"),
                   np.zeros(2) if get("spatial_w") is None else get("spatial_w"),
                   0.0 if spatial_b is None else float(np.ravel(spatial_b)[0]), r)

    def to_weights(self, prefix: str) -> dict:
        out = {f"{prefix}.spatial_w": np.asarray(self.spatial_w),
               f"{prefix}.spatial_b": np.array([self.spatial_b])}
        for name in ("proj_w", "proj_b", "down_w", "down_b", "up_w", "up_b"):
            value = getattr(self, name)
            if value is not None:
                out[f"{prefix}.{name}"] = np.asarray(value)
        return out


def conv1x1(F, w, b=None) -> np.ndarray:
    out = _as_feature(F) @ np.asarray(w, dtype=np.float64)
    return out if b is None else out + b


def channel_gate(F_hi, p: AttentionParams) -> np.ndarray:
    """Per-channel gate in (0, 1): project, squeeze, excite, sigmoid."""
    F_hi = _as_feature(F_hi, "F_hi")
    if p.proj_w is None:
        raise ShapeMismatch("channel attention needs projection weights")
    if F_hi.shape[2] != p.proj_w.shape[0]:
        raise ShapeMismatch(f"F_hi has {F_hi.shape[2]} channels, projection expects {p.proj_w.shape[0]}")
    squeezed = conv1x1(F_hi, p.proj_w, p.proj_b).mean(axis=(0, 1))
    hidden = np.maximum(squeezed @ p.down_w + p.down_b, 0.0)
    return sigmoid(hidden @ p.up_w + p.up_b)


def channel_attention(F_hi, F_lo, p: AttentionParams) -> np.ndarray:
    F_lo = _as_feature(F_lo, "F_lo")
    gate = channel_gate(F_hi, p)
    if gate.shape[0] != F_lo.shape[2]:
        raise ShapeMismatch(f"gate has {gate.shape[0]} channels, F_lo has {F_lo.shape[2]}")
    return F_lo * gate[None, None, :]


def spatial_gate(F_prev, p: AttentionParams) -> np.ndarray:
    F_prev = _as_feature(F_prev, "F_prev")
    pooled = np.stack([F_prev.max(axis=2), F_prev.mean(axis=2)], axis=-1)
    return sigmoid(pooled @ np.asarray(p.spatial_w, dtype=np.float64) + p.spatial_b)


def spatial_attention(F_prev, F_cur, p: AttentionParams) -> np.ndarray:
    F_prev = _as_feature(F_prev, "F_prev")
    F_cur = _as_feature(F_cur, "F_cur")
    if F_prev.shape[:2] != F_cur.shape[:2]:
        raise ShapeMismatch(f"spatial sizes differ: {F_prev.shape[:2]} vs {F_cur.shape[:2]}")
    return F_cur * spatial_gate(F_prev, p)[:, :, None]


def dilated_conv3x3(F, w, b, rate: int) -> np.ndarray:
    """3x3 convolution with dilation ``rate`` and zero 'same' padding; ``w`` is (3, 3, C_in, C_out)."""
    F = _as_feature(F)
    w = np.asarray(w, dtype=np.float64)
    if w.shape[:3] != (3, 3, F.shape[2]):
        raise ShapeMismatch(f"kernel shape {w.shape} does not match {F.shape[2]} input channels")
    h, wd = F.shape[:2]
    padded = np.pad(F, ((rate, rate), (rate, rate), (0, 0)))
    out = np.zeros((h, wd, w.shape[3]))
    for i in range(3):
        for j in range(3):
            out += padded[i * rate:i * rate + h, j * rate:j * rate + wd] @ w[i, j]
    return out + b


@dataclass
class ASPPParams:
    branch_w: list
    branch_b: list
    gap_w: np.ndarray
    gap_b: np.ndarray
    proj_w: np.ndarray
    proj_b: np.ndarray
    rates: tuple = (2, 4, 8)

    def __post_init__(self):
        if len(set(self.rates)) != len(self.rates) or min(self.rates) < 1:
            raise ValueError(f"dilation rates must be distinct positive integers, got {self.rates}")
        if not len(self.branch_w) == len(self.branch_b) == len(self.rates):
            raise ShapeMismatch("one kernel and bias per dilation rate is required")
        c_branch = sum(np.shape(w)[3] for w in self.branch_w) + np.shape(self.gap_w)[1]
        if np.shape(self.proj_w)[0] != c_branch:
            raise ShapeMismatch(f"projection expects {np.shape(self.proj_w)[0]} channels, branches give {c_branch}")

    @classmethod
    def random(cls, c_in: int, c_branch: int, c_out: int, rates=(2, 4, 8), rng=None, scale: float = 0.3):
        rng = np.random.default_rng(rng)
        n = len(rates)
        return cls(
            branch_w=[rng.normal(0, scale, (3, 3, c_in, c_branch)) for _ in range(n)],
            branch_b=[rng.normal(0, scale, c_branch) for _ in range(n)],
            gap_w=rng.normal(0, scale, (c_in, c_branch)),
            gap_b=rng.normal(0, scale, c_branch),
            proj_w=rng.normal(0, scale, ((n + 1) * c_branch, c_out)),
            proj_b=rng.normal(0, scale, c_out),
            rates=tuple(rates),
        )


def aspp_forward(F, params: ASPPParams) -> np.ndarray:
    """Three dilated branches plus a pooled branch, concatenated and projected."""
    F = _as_feature(F)
    h, w = F.shape[:2]
    branches = [dilated_conv3x3(F, bw, bb, rate)
                for bw, bb, rate in zip(params.branch_w, params.branch_b, params.rates)]
    pooled = F.mean(axis=(0, 1)) @ params.gap_w + params.gap_b
    branches.append(np.broadcast_to(pooled, (h, w, pooled.shape[0])))
    return conv1x1(np.concatenate(branches, axis=-1), params.proj_w, params.proj_b)


def _upsample_axis(F: np.ndarray, factor: int, axis: int) -> np.ndarray:
    n = F.shape[axis]
    src = (np.arange(n * factor) + 0.5) / factor - 0.5
    src = np.maximum(src, 0.0)
    i0 = np.minimum(np.floor(src).astype(int), n - 1)
    i1 = np.minimum(i0 + 1, n - 1)
    lam = src - i0
    shape = [1, 1, 1]
    shape[axis] = -1
    lam = lam.reshape(shape)
    return np.take(F, i0, axis=axis) * (1 - lam) + np.take(F, i1, axis=axis) * lam


def bilinear_upsample(F, factor: int) -> np.ndarray:
    """Integer-factor bilinear resize, half-pixel centres (align_corners=False)."""
    F = _as_feature(F)
    factor = int(factor)
    if factor < 1:
        raise ValueError(f"upsampling factor must be >= 1, got {factor}")
    if factor == 1:
        return F.copy()
    return _upsample_axis(_upsample_axis(F, factor, 0), factor, 1)


def interactive_attention(features, channel_params, spatial_params):
    """Bottom-up channel gating then top-down spatial gating across scales.

    ``features`` is ordered finest first (``F_1 ... F_N``). Channel attention
    updates ``F_n`` for ``n = 1 .. N-1`` from ``F_{n+1}``; after upsampling to
    the finest resolution, spatial attention updates ``F_m`` for
    ``m = 2 .. N`` from ``F_{m-1}``. Returns the concatenated features and the
    list of per-scale outputs.
    """
    F = [_as_feature(f) for f in features]
    n = len(F)
    if n < 2:
        raise ShapeMismatch("interactive attention needs at least two scales")
    if len(channel_params) != n - 1 or len(spatial_params) != n - 1:
        raise ShapeMismatch(f"{n} scales need {n - 1} channel and {n - 1} spatial parameter sets")

    channel_targets = list(range(n - 2, -1, -1))
    assert [i + 1 for i in sorted(channel_targets)] == list(range(1, n))
    for i in channel_targets:
        F[i] = channel_attention(F[i + 1], F[i], channel_params[i])

    h0, w0 = F[0].shape[:2]
    for i in range(1, n):
        h, w = F[i].shape[:2]
        if h0 % h or w0 % w or h0 // h != w0 // w:
            raise ShapeMismatch(f"scale {i + 1} ({h}x{w}) is not an integer fraction of {h0}x{w0}")
        F[i] = bilinear_upsample(F[i], h0 // h)

    spatial_targets = list(range(1, n))
    assert [i + 1 for i in spatial_targets] == list(range(2, n + 1))
    for i in spatial_targets:
        F[i] = spatial_attention(F[i - 1], F[i], spatial_params[i - 1])
    return np.concatenate(F, axis=-1), F


def save_weights(path, weights: dict) -> None:
    """Write ``<path>.bin`` (little-endian float32, concatenated) and ``<path>.json``."""
    path = Path(path)
    entries = []
    chunks = []
    offset = 0
    for name in sorted(weights):
        arr = np.ascontiguousarray(weights[name], dtype="<f4")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
        chunks.append(arr.tobytes())
        offset += arr.size
    path.with_suffix(".bin").write_bytes(b"".join(chunks))
    sidecar = {"dtype": "float32", "byteorder": "little", "tensors": entries}
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def load_weights(path) -> dict:
    path = Path(path)
    sidecar = json.loads(path.with_suffix(".json").read_text())
    flat = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype="<f4")
    out = {}
    for entry in sidecar["tensors"]:
        start, count = entry["offset"], entry["count"]
        if start + count > flat.size:
            raise ShapeMismatch(f"tensor {entry['name']} runs past the end of the weight file")
        out[entry["name"]] = flat[start:start + count].astype(np.float64).reshape(entry["shape"])
    return out
