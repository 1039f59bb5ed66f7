"""Baseline JPEG reader that stops at the quantized DCT coefficients.

Only the first frame component (luma) is kept; the other components are
entropy-decoded so the scan position stays correct, then dropped. Nothing is
inverse-transformed.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .block_codec import CoefficientPlane, from_blocks, quality_to_qmatrix
from .errors import CorruptStream, JPEGError, LengthMismatch, MissingTable, UnsupportedFormat

__all__ = [
    "ZIGZAG",
    "CoefficientImage",
    "dezigzag",
    "zigzag",
    "parse_jpeg",
    "read_jpeg",
    "estimate_quality",
    "write_coef_dump",
    "read_coef_dump",
    "load_coefficients",
]

# ZIGZAG[i] is the natural (row-major) index of the i-th zigzag coefficient.
ZIGZAG = np.array(
    [
        0, 1, 8, 16, 9, 2, 3, 10,
        17, 24, 32, 25, 18, 11, 4, 5,
        12, 19, 26, 33, 40, 48, 41, 34,
        27, 20, 13, 6, 7, 14, 21, 28,
        35, 42, 49, 56, 57, 50, 43, 36,
        29, 22, 15, 23, 30, 37, 44, 51,
        58, 59, 52, 45, 38, 31, 39, 46,
        53, 60, 61, 54, 47, 55, 62, 63,
    ],
    dtype=np.intp,
)
_ZIGZAG_LIST = ZIGZAG.tolist()

COEFF_LIMIT = 2048

_SOF_UNSUPPORTED = {
    0xC1: "extended sequential",
    0xC2: "progressive",
    0xC3: "lossless",
    0xC5: "differential sequential",
    0xC6: "differential progressive",
    0xC7: "differential lossless",
    0xC9: "arithmetic sequential",
    0xCA: "arithmetic progressive",
    0xCB: "arithmetic lossless",
    0xCD: "arithmetic differential sequential",
    0xCE: "arithmetic differential progressive",
    0xCF: "arithmetic differential lossless",
}


def dezigzag(zz) -> np.ndarray:
    """Reorder a 64-vector from interchange (zigzag) order into an 8x8 grid."""
    zz = np.asarray(zz)
    if zz.size != 64:
        raise LengthMismatch(f"expected 64 entries, got {zz.size}")
    out = np.empty(64, dtype=zz.dtype)
    out[ZIGZAG] = zz.ravel()
    return out.reshape(8, 8)


def zigzag(block) -> np.ndarray:
    block = np.asarray(block)
    if block.size != 64:
        raise LengthMismatch(f"expected 64 entries, got {block.size}")
    return block.ravel()[ZIGZAG]


@dataclass(frozen=True, eq=False)
class CoefficientImage:
    """Luma coefficients of one JPEG file.

    ``y_coeffs`` has shape ``(H_b, W_b, 8, 8)`` and includes the MCU padding
    blocks the encoder emitted; ``valid_blocks`` gives the ``(rows, cols)``
    of blocks that overlap real pixels.
    """

    y_coeffs: np.ndarray
    q_luma: np.ndarray
    pixel_width: int
    pixel_height: int
    sampling: str
    source_path: str = ""
    valid_blocks: tuple[int, int] | None = None

    def __post_init__(self):
        if self.valid_blocks is None:
            object.__setattr__(self, "valid_blocks", tuple(self.y_coeffs.shape[:2]))

    @property
    def block_shape(self) -> tuple[int, int]:
        return tuple(self.y_coeffs.shape[:2])

    @property
    def padded(self) -> bool:
        return tuple(self.valid_blocks) != self.block_shape

    def to_plane(self) -> CoefficientPlane:
        return CoefficientPlane(from_blocks(self.y_coeffs), self.q_luma)


# --------------------------------------------------------------------------
# Huffman decoding


class _HuffmanTable:
    __slots__ = ("lookup",)

    def __init__(self, counts: list[int], symbols: bytes):
        # 16-bit lookahead: lookup[peek16] = (code length << 8) | symbol, 0 if invalid
        lookup = [0] * 65536
        code = 0
        k = 0
        for length in range(1, 17):
            for _ in range(counts[length - 1]):
                if code >= (1 << length):
                    raise CorruptStream("Huffman table overflows its code space")
                span = 1 << (16 - length)
                start = code << (16 - length)
                entry = (length << 8) | symbols[k]
                lookup[start:start + span] = [entry] * span
                code += 1
                k += 1
            code <<= 1
        self.lookup = lookup


class _BitReader:
    """MSB-first reader over one unstuffed entropy-coded segment."""

    __slots__ = ("buf", "pos", "acc", "nbits", "pad")

    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0
        self.acc = 0
        self.nbits = 0
        self.pad = 0

    def _fill(self, n: int) -> None:
        buf = self.buf
        while self.nbits < n:
            if self.pos < len(buf):
                self.acc = (self.acc << 8) | buf[self.pos]
                self.pos += 1
            else:
                self.acc <<= 8
                self.pad += 8
            self.nbits += 8

    def _consume(self, n: int) -> None:
        self.nbits -= n
        self.acc &= (1 << self.nbits) - 1
        if self.nbits < self.pad:
            raise CorruptStream("entropy-coded data ends inside a block")

    def decode(self, table: _HuffmanTable) -> int:
        if self.nbits < 16:
            self._fill(16)
        entry = table.lookup[(self.acc >> (self.nbits - 16)) & 0xFFFF]
        if not entry:
            raise CorruptStream("invalid Huffman code")
        self._consume(entry >> 8)
        return entry & 0xFF

    def receive_extend(self, s: int) -> int:
        if self.nbits < s:
            self._fill(s)
        v = (self.acc >> (self.nbits - s)) & ((1 << s) - 1)
        self._consume(s)
        if v < (1 << (s - 1)):
            v -= (1 << s) - 1
        return v


# --------------------------------------------------------------------------
# marker-level parsing


@dataclass
class _Component:
    cid: int
    h: int
    v: int
    tq: int
    width_in_blocks: int = 0
    height_in_blocks: int = 0


@dataclass
class _Frame:
    width: int
    height: int
    components: list
    hmax: int
    vmax: int


def _u16(data: bytes, pos: int) -> int:
    if pos + 2 > len(data):
        raise CorruptStream("unexpected end of data in marker segment")
    return (data[pos] << 8) | data[pos + 1]


def _segment(data: bytes, pos: int) -> tuple[bytes, int]:
    """Return the payload of the length-prefixed segment starting at ``pos``."""
    length = _u16(data, pos)
    if length < 2 or pos + length > len(data):
        raise CorruptStream("marker segment length runs past end of data")
    return data[pos + 2:pos + length], pos + length


def _parse_dqt(payload: bytes, qtables: dict) -> None:
    i = 0
    while i < len(payload):
        pq, tq = payload[i] >> 4, payload[i] & 15
        i += 1
        if pq not in (0, 1) or tq > 3:
            raise CorruptStream(f"bad DQT header (Pq={pq}, Tq={tq})")
        n = 64 * (pq + 1)
        if i + n > len(payload):
            raise CorruptStream("truncated DQT segment")
        if pq == 0:
            entries = np.frombuffer(payload, dtype=np.uint8, count=64, offset=i)
        else:
            entries = np.frombuffer(payload, dtype=">u2", count=64, offset=i)
        i += n
        table = dezigzag(entries.astype(np.int32))
        if (table < 1).any():
            raise CorruptStream("quantization table contains a zero entry")
        if (table > 255).any():
            raise UnsupportedFormat("quantization entries above 255 are not baseline")
        qtables[tq] = table


def _parse_dht(payload: bytes, dc: dict, ac: dict) -> None:
    i = 0
    while i < len(payload):
        if i + 17 > len(payload):
            raise CorruptStream("truncated DHT segment")
        tc, th = payload[i] >> 4, payload[i] & 15
        counts = list(payload[i + 1:i + 17])
        total = sum(counts)
        i += 17
        if tc > 1 or th > 3 or total > 256 or i + total > len(payload):
            raise CorruptStream("bad DHT segment")
        table = _HuffmanTable(counts, payload[i:i + total])
        i += total
        (dc if tc == 0 else ac)[th] = table


def _parse_sof(payload: bytes) -> _Frame:
    if len(payload) < 6:
        raise CorruptStream("truncated SOF segment")
    precision, height, width, nf = struct.unpack(">BHHB", payload[:6])
    if precision != 8:
        raise UnsupportedFormat(f"{precision}-bit samples are not supported")
    if height == 0:
        raise UnsupportedFormat("DNL-defined image height is not supported")
    if width == 0 or nf == 0 or len(payload) < 6 + 3 * nf:
        raise CorruptStream("bad SOF segment")
    comps = []
    for j in range(nf):
        cid, hv, tq = payload[6 + 3 * j:9 + 3 * j]
        h, v = hv >> 4, hv & 15
        if not (1 <= h <= 4 and 1 <= v <= 4) or tq > 3:
            raise CorruptStream(f"bad component {cid} in SOF")
        comps.append(_Component(cid, h, v, tq))
    hmax = max(c.h for c in comps)
    vmax = max(c.v for c in comps)
    for c in comps:
        c.width_in_blocks = math.ceil(width * c.h / (hmax * 8))
        c.height_in_blocks = math.ceil(height * c.v / (vmax * 8))
    return _Frame(width, height, comps, hmax, vmax)


def _sampling_name(frame: _Frame) -> str:
    comps = frame.components
    if len(comps) == 1:
        return "gray"
    factors = [(c.h, c.v) for c in comps]
    if len(comps) == 3 and factors[1] == factors[2] == (1, 1):
        named = {(1, 1): "4:4:4", (2, 1): "4:2:2", (2, 2): "4:2:0", (1, 2): "4:4:0", (4, 1): "4:1:1"}
        if factors[0] in named:
            return named[factors[0]]
    return ",".join(f"{h}x{v}" for h, v in factors)


def _split_entropy_data(data: bytes, pos: int) -> tuple[list[tuple[int | None, bytes]], int]:
    """Cut the entropy-coded data after an SOS header into restart intervals.

    Returns ``[(rst_index_or_None, unstuffed_bytes), ...]`` and the offset of
    the first non-RST marker that ends the scan.
    """
    segments = []
    start = pos
    rst = None
    n = len(data)
    i = pos
    while True:
        i = data.find(b"\xff", i)
        if i < 0 or i + 1 >= n:
            raise CorruptStream("scan data is truncated (no terminating marker)")
        nxt = data[i + 1]
        if nxt == 0x00:
            i += 2
            continue
        if nxt == 0xFF:
            # fill byte preceding a marker
            j = i + 1
            while j < n and data[j] == 0xFF:
                j += 1
            if j >= n:
                raise CorruptStream("scan data is truncated (no terminating marker)")
            if data[j] == 0x00:
                i = j + 1
                continue
            nxt = data[j]
            end, i = i, j - 1
        else:
            end = i
        segments.append((rst, data[start:end].replace(b"\xff\x00", b"\xff")))
        if 0xD0 <= nxt <= 0xD7:
            rst = nxt - 0xD0
            i += 2
            start = i
            continue
        return segments, i


def _decode_scan(data, pos, frame, scan_comps, dc_tables, ac_tables, restart_interval, y_out):
    segments, end = _split_entropy_data(data, pos)
    ns = len(scan_comps)
    if ns == 1:
        c = scan_comps[0][0]
        mcus_x, mcus_y = c.width_in_blocks, c.height_in_blocks
        layout = [(0, 0, 0)]
    else:
        mcus_x = math.ceil(frame.width / (8 * frame.hmax))
        mcus_y = math.ceil(frame.height / (8 * frame.vmax))
        layout = [(j, v, h) for j, (c, _, _) in enumerate(scan_comps)
                  for v in range(c.v) for h in range(c.h)]
    total = mcus_x * mcus_y
    interval = restart_interval or total
    n_intervals = math.ceil(total / interval)
    if len(segments) < n_intervals:
        raise CorruptStream(f"expected {n_intervals} restart intervals, found {len(segments)}")
    if len(segments) > n_intervals and any(seg for _, seg in segments[n_intervals:]):
        raise CorruptStream("unexpected data after the last restart interval")
    for idx in range(1, n_intervals):
        if segments[idx][0] != (idx - 1) % 8:
            raise CorruptStream("restart marker out of sequence")

    is_luma = [c is frame.components[0] for c, _, _ in scan_comps]
    dcs = [dc_tables[td] for _, td, _ in scan_comps]
    acs = [ac_tables[ta] for _, _, ta in scan_comps]
    zz = _ZIGZAG_LIST
    limit = COEFF_LIMIT

    mcu = 0
    for idx in range(n_intervals):
        reader = _BitReader(segments[idx][1])
        decode = reader.decode
        receive = reader.receive_extend
        pred = [0] * ns
        for _ in range(min(interval, total - mcu)):
            my, mx = divmod(mcu, mcus_x)
            for j, v, h in layout:
                comp = scan_comps[j][0]
                t = decode(dcs[j])
                if t > 11:
                    raise CorruptStream("DC magnitude category out of range")
                if t:
                    pred[j] += receive(t)
                block = [0] * 64
                block[0] = pred[j]
                ac = acs[j]
                k = 1
                while k < 64:
                    rs = decode(ac)
                    s = rs & 15
                    r = rs >> 4
                    if s == 0:
                        if r != 15:
                            break
                        k += 16
                        continue
                    k += r
                    if k > 63 or s > 10:
                        raise CorruptStream("AC coefficient run exceeds block")
                    block[zz[k]] = receive(s)
                    k += 1
                if k > 64:
                    raise CorruptStream("AC zero run exceeds block")
                if is_luma[j]:
                    if abs(pred[j]) > limit:
                        raise CorruptStream("DC coefficient out of range")
                    by = my * comp.v + v if ns > 1 else my
                    bx = mx * comp.h + h if ns > 1 else mx
                    y_out[by, bx] = np.reshape(block, (8, 8))
            mcu += 1
    return end


def parse_jpeg(data: bytes, source_path: str = "") -> CoefficientImage:
    """Decode the luma quantized DCT coefficients of a baseline JPEG stream."""
    data = bytes(data)
    try:
        return _parse(data, source_path)
    except JPEGError:
        raise
    except (IndexError, ValueError, KeyError, struct.error) as exc:
        raise CorruptStream(f"malformed JPEG stream: {exc}") from exc


def _parse(data: bytes, source_path: str) -> CoefficientImage:
    if len(data) < 4 or data[:2] != b"\xff\xd8":
        raise CorruptStream("missing SOI marker")
    qtables: dict[int, np.ndarray] = {}
    dc_tables: dict = {}
    ac_tables: dict = {}
    frame: _Frame | None = None
    y_out = None
    q_luma = None
    restart_interval = 0
    luma_done = False

    pos = 2
    n = len(data)
    while True:
        if pos >= n:
            break
        if data[pos] != 0xFF:
            raise CorruptStream(f"expected marker at offset {pos}")
        while pos < n and data[pos] == 0xFF:
            pos += 1
        if pos >= n:
            raise CorruptStream("data ends inside a marker")
        marker = data[pos]
        pos += 1
        if marker == 0xD9:
            break
        if marker in (0x01,) or 0xD0 <= marker <= 0xD7:
            continue
        if marker == 0xD8 or marker == 0x00:
            raise CorruptStream(f"unexpected marker 0xFF{marker:02X}")
        payload, pos = _segment(data, pos)
        if marker == 0xC0:
            if frame is not None:
                raise CorruptStream("multiple frames in one file")
            frame = _parse_sof(payload)
            luma = frame.components[0]
            rows = math.ceil(luma.height_in_blocks / luma.v) * luma.v
            cols = math.ceil(luma.width_in_blocks / luma.h) * luma.h
            y_out = np.zeros((rows, cols, 8, 8), dtype=np.int32)
        elif marker in _SOF_UNSUPPORTED:
            raise UnsupportedFormat(f"{_SOF_UNSUPPORTED[marker]} JPEG is not supported")
        elif marker == 0xCC:
            raise UnsupportedFormat("arithmetic coding is not supported")
        elif marker == 0xDB:
            _parse_dqt(payload, qtables)
        elif marker == 0xC4:
            _parse_dht(payload, dc_tables, ac_tables)
        elif marker == 0xDD:
            if len(payload) != 2:
                raise CorruptStream("bad DRI segment")
            restart_interval = _u16(payload, 0)
        elif marker == 0xDA:
            if frame is None:
                raise CorruptStream("SOS before SOF")
            scan_comps = _parse_sos(payload, frame, dc_tables, ac_tables)
            if any(c is frame.components[0] for c, _, _ in scan_comps):
                if frame.components[0].tq not in qtables:
                    raise MissingTable(f"quantization table {frame.components[0].tq} is undefined")
                q_luma = qtables[frame.components[0].tq].copy()
                luma_done = True
            pos = _decode_scan(data, pos, frame, scan_comps, dc_tables, ac_tables,
                               restart_interval, y_out)

    if frame is None:
        raise CorruptStream("no SOF0 frame header")
    if not luma_done:
        raise CorruptStream("no scan contains the luma component")
    luma = frame.components[0]
    return CoefficientImage(
        y_coeffs=y_out,
        q_luma=q_luma,
        pixel_width=frame.width,
        pixel_height=frame.height,
        sampling=_sampling_name(frame),
        source_path=source_path,
        valid_blocks=(luma.height_in_blocks, luma.width_in_blocks),
    )


def _parse_sos(payload, frame, dc_tables, ac_tables):
    if not payload:
        raise CorruptStream("empty SOS segment")
    ns = payload[0]
    if not 1 <= ns <= 4 or len(payload) != 4 + 2 * ns:
        raise CorruptStream("bad SOS segment")
    by_id = {c.cid: c for c in frame.components}
    scan = []
    for j in range(ns):
        cid, tables = payload[1 + 2 * j], payload[2 + 2 * j]
        if cid not in by_id:
            raise CorruptStream(f"scan references unknown component {cid}")
        td, ta = tables >> 4, tables & 15
        if td not in dc_tables or ta not in ac_tables:
            raise MissingTable(f"scan references undefined Huffman table (DC {td}, AC {ta})")
        scan.append((by_id[cid], td, ta))
    ss, se, a = payload[1 + 2 * ns], payload[2 + 2 * ns], payload[3 + 2 * ns]
    if ss != 0 or se != 63 or a != 0:
        raise UnsupportedFormat("spectral selection / successive approximation in baseline scan")
    if ns > 1 and sum(c.h * c.v for c, _, _ in scan) > 10:
        raise CorruptStream("too many blocks per MCU")
    return scan


def read_jpeg(path) -> CoefficientImage:
    path = Path(path)
    return parse_jpeg(path.read_bytes(), source_path=str(path))


def estimate_quality(q) -> int:
    """QF whose IJG-scaled standard luminance table is closest in L1 to ``q``.

    Ties go to the higher quality.
    """
    q = np.asarray(q, dtype=np.int64)
    best_qf, best_dist = 100, None
    for qf in range(100, 0, -1):
        dist = int(np.abs(quality_to_qmatrix(qf) - q).sum())
        if best_dist is None or dist < best_dist:
            best_qf, best_dist = qf, dist
    return best_qf


# --------------------------------------------------------------------------
# text coefficient dumps: "bx by c0..c63" per block, natural order, with
# "# size", "# blocks" and "# q" header lines


def write_coef_dump(path, blocks: np.ndarray, q: np.ndarray, width: int, height: int) -> None:
    blocks = np.asarray(blocks)
    hb, wb = blocks.shape[:2]
    lines = [
        f"# size {width} {height}",
        f"# blocks {wb} {hb}",
        "# q " + " ".join(str(int(v)) for v in np.asarray(q).ravel()),
    ]
    flat = blocks.reshape(hb, wb, 64)
    for by in range(hb):
        for bx in range(wb):
            lines.append(f"{bx} {by} " + " ".join(map(str, flat[by, bx].tolist())))
    Path(path).write_text("\n".join(lines) + "\n")


def read_coef_dump(path) -> CoefficientImage:
    path = Path(path)
    header = {}
    rows = []
    try:
        for line in path.read_text().splitlines():
            if not line.strip():
                continue
            if line.startswith("#"):
                key, *vals = line[1:].split()
                header[key] = [int(v) for v in vals]
            else:
                rows.append([int(v) for v in line.split()])
        width, height = header["size"]
        wb, hb = header["blocks"]
        q = np.array(header["q"], dtype=np.int32).reshape(8, 8)
    except (KeyError, ValueError) as exc:
        raise CorruptStream(f"malformed coefficient dump {path}: {exc}") from exc
    blocks = np.zeros((hb, wb, 8, 8), dtype=np.int32)
    for row in rows:
        if len(row) != 66:
            raise CorruptStream(f"coefficient dump line has {len(row)} fields, expected 66")
        bx, by = row[0], row[1]
        if not (0 <= bx < wb and 0 <= by < hb):
            raise CorruptStream(f"block ({bx}, {by}) outside the {wb}x{hb} grid")
        blocks[by, bx] = np.reshape(row[2:], (8, 8))
    return CoefficientImage(
        y_coeffs=blocks,
        q_luma=q,
        pixel_width=width,
        pixel_height=height,
        sampling="gray",
        source_path=str(path),
        valid_blocks=(math.ceil(height / 8), math.ceil(width / 8)),
    )


def load_coefficients(path) -> CoefficientImage:
    """Read either a JPEG file or a text coefficient dump, sniffing the SOI marker."""
    path = Path(path)
    with path.open("rb") as fh:
        head = fh.read(2)
    if head == b"\xff\xd8":
        return read_jpeg(path)
    if head[:1] == b"#":
        return read_coef_dump(path)
    raise CorruptStream(f"{path} is neither a JPEG stream nor a coefficient dump")
