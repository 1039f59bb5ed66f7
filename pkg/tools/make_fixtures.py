"""Regenerate the JPEG parser fixtures.

Encodes baseline JPEGs with Pillow and dumps their luma coefficients with
the libjpeg-based ``jpeg_coef_dump`` helper (built from jpeg_coef_dump.c).
Run from the repository root::

    gcc -O2 -o /tmp/jpeg_coef_dump tools/jpeg_coef_dump.c -ljpeg
    python tools/make_fixtures.py /tmp/jpeg_coef_dump
"""
from __future__ import annotations

import subprocess
import sys
from pathlib import Path

import numpy as np
from PIL import Image
from skimage import data

OUT = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "jpeg"

SUBSAMPLING = {"444": 0, "422": 1, "420": 2}


def _crop(img: np.ndarray, h: int, w: int, y: int, x: int) -> np.ndarray:
    return np.ascontiguousarray(img[y:y + h, x:x + w])


def cases():
    astro = data.astronaut()
    coffee = data.coffee()
    camera = data.camera()
    rng = np.random.default_rng(20231016)

    yield "gray_mid_8x8_q50", Image.new("L", (8, 8), 128), dict(quality=50)
    yield "gray_mid_8x8_q90", Image.new("L", (8, 8), 128), dict(quality=90)
    yield "photo_16x16_q75", Image.fromarray(_crop(camera, 16, 16, 200, 220)), dict(quality=75)
    yield "gray_std_q50", Image.fromarray(_crop(camera, 32, 32, 100, 100)), dict(quality=50)

    sizes = [(16, 16), (24, 40), (17, 33), (48, 64), (70, 50)]
    qfs = list(range(50, 101, 5))
    n = 0
    for i, qf in enumerate(qfs):
        h, w = sizes[i % len(sizes)]
        y, x = int(rng.integers(0, 400)), int(rng.integers(0, 400))
        yield (f"gray_{w}x{h}_q{qf}", Image.fromarray(_crop(camera, h, w, y, x)),
               dict(quality=qf))
        for sub in ("444", "422", "420"):
            h, w = sizes[(i + n) % len(sizes)]
            n += 1
            src = astro if n % 2 else coffee
            y, x = int(rng.integers(0, 300)), int(rng.integers(0, 300))
            opts = dict(quality=qf, subsampling=SUBSAMPLING[sub])
            tag = ""
            if n % 3 == 0:
                opts["optimize"] = True
                tag = "_opt"
            elif n % 3 == 1:
                opts["restart_marker_blocks"] = 1 + n % 4
                tag = "_rst"
            yield (f"rgb{sub}_{w}x{h}_q{qf}{tag}",
                   Image.fromarray(_crop(src, h, w, y, x)), opts)
    for qf in (51, 63, 77, 88, 97):
        yield (f"gray_rows_rst_40x24_q{qf}",
               Image.fromarray(_crop(camera, 24, 40, 300, qf)),
               dict(quality=qf, restart_marker_rows=1))


def main(dump_tool: str) -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    count = 0
    for name, img, opts in cases():
        path = OUT / f"{name}.jpg"
        img.save(path, "JPEG", **opts)
        dump = subprocess.run([dump_tool, str(path)], check=True,
                              capture_output=True, text=True).stdout
        (OUT / f"{name}.coef").write_text(dump)
        count += 1
    # negative fixture: progressive stream
    Image.fromarray(_crop(data.camera(), 16, 16, 0, 0)).save(
        OUT.parent / "progressive_16x16.jpg", "JPEG", quality=80, progressive=True)
    print(f"wrote {count} fixtures to {OUT}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "jpeg_coef_dump")
