"""Command line entry point: ``recompress {inspect,analyze,histogram,simulate,evaluate}``.

Exit codes: 0 success, 1 usage, 2 bad input format, 3 I/O failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .block_codec import change_counts, recompression_trace, residual_map
from .corpus_sim import generate_corpus, read_manifest
from .dct_features import DEFAULT_T, coefficient_histogram
from .errors import IOFailure, ManifestEmpty, RecompressError
from .evaluation import ImageResult, best_threshold_f1, build_report, pixel_f1
from .jpeg_parser import estimate_quality, load_coefficients
from .localization import (
    binarize,
    image_level_score,
    instability_heatmap,
    load_heatmap,
    load_mask,
    save_heatmap,
    save_mask,
)

log = logging.getLogger("recompress")

EXIT_OK, EXIT_USAGE, EXIT_FORMAT, EXIT_IO = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _jobs(flag: int | None) -> int:
    env = os.environ.get("RECOMPRESS_JOBS")
    if env:
        return max(1, int(env))
    if flag:
        return max(1, flag)
    return os.cpu_count() or 1


def _map(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _emit(payload, out: str | None = None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if out:
        _write_atomic(Path(out), text)
    else:
        sys.stdout.write(text)


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _position(text: str) -> tuple[int, int]:
    try:
        u, v = (int(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"position must look like 'u,v', got {text!r}")
    return u, v


# --------------------------------------------------------------------------


def cmd_inspect(args) -> int:
    img = load_coefficients(args.path)
    _emit({
        "source": str(args.path),
        "width": img.pixel_width,
        "height": img.pixel_height,
        "sampling": img.sampling,
        "blocks": list(img.block_shape),
        "valid_blocks": list(img.valid_blocks),
        "padded": img.padded,
        "q_luma": img.q_luma.tolist(),
        "estimated_qf": estimate_quality(img.q_luma),
    })
    return EXIT_OK


def analyze_file(path, k: int = 7, T: int = DEFAULT_T, out_dir=None, threshold: float = 0.5) -> dict:
    """Run the recompression analysis on one file and write its artefacts."""
    start = time.perf_counter()
    path = Path(path)
    img = load_coefficients(path)
    plane = img.to_plane()
    trace = recompression_trace(plane, k)
    heatmap = instability_heatmap(trace).crop(img.pixel_height, img.pixel_width)
    mask = binarize(heatmap, threshold)
    R = residual_map(trace)

    out_dir = Path(out_dir) if out_dir else path.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = path.stem
    heatmap_path = out_dir / f"{stem}_heatmap.png"
    mask_path = out_dir / f"{stem}_mask.png"
    hist_path = out_dir / f"{stem}_hist01.csv"
    save_heatmap(heatmap, heatmap_path)
    save_mask(mask, mask_path)
    _write_atomic(hist_path, coefficient_histogram(plane, (0, 1), T).to_csv())

    report = {
        "source": str(path),
        "estimated_qf": estimate_quality(img.q_luma),
        "k": k,
        "t": T,
        "per_step_change_counts": change_counts(trace),
        "mean_abs_residual": float(np.abs(R).mean()),
        "image_score": image_level_score(heatmap),
        "heatmap_path": str(heatmap_path),
        "mask_path": str(mask_path),
        "histogram_path": str(hist_path),
        "timing_ms": int(round((time.perf_counter() - start) * 1000)),
    }
    _write_atomic(out_dir / f"{stem}_report.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


def cmd_analyze(args) -> int:
    _emit(analyze_file(args.path, args.k, args.t, args.out_dir, args.threshold))
    return EXIT_OK


def cmd_histogram(args) -> int:
    plane = load_coefficients(args.path).to_plane()
    text = coefficient_histogram(plane, args.pos, args.t).to_csv()
    if args.out:
        _write_atomic(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.qf_min > args.qf_max:
        raise ValueError(f"--qf-min {args.qf_min} exceeds --qf-max {args.qf_max}")
    manifest = generate_corpus(args.out_dir, args.n, (args.qf_min, args.qf_max), args.seed,
                               width=args.width, height=args.height, max_area=args.max_area,
                               jobs=_jobs(args.jobs))
    rows = read_manifest(manifest)
    _emit({
        "manifest": str(manifest),
        "n_tampered": sum(r["label"] == "tampered" for r in rows),
        "n_authentic": sum(r["label"] == "authentic" for r in rows),
        "seed": args.seed,
        "qf_range": [args.qf_min, args.qf_max],
    })
    return EXIT_OK


def _score_row(task) -> dict:
    row, base, pred_dir, k = task
    coeff_path = base / row["coeff_path"]
    mask_path = base / row["mask_path"]
    if pred_dir is None:
        if not coeff_path.exists():
            return {"id": row["id"], "missing": "coefficients"}
        img = load_coefficients(coeff_path)
        heatmap = instability_heatmap(recompression_trace(img.to_plane(), k))
        heatmap = heatmap.crop(img.pixel_height, img.pixel_width)
    else:
        pred = next((p for p in (pred_dir / f"{row['id']}.png", pred_dir / f"{row['id']}_heatmap.png")
                     if p.exists()), None)
        if pred is None:
            return {"id": row["id"], "missing": "prediction"}
        heatmap = load_heatmap(pred)
    if not mask_path.exists():
        return {"id": row["id"], "missing": "mask"}
    gt = load_mask(mask_path)
    label = 1 if row["label"] == "tampered" else 0
    result = {"id": row["id"], "label": label, "score": image_level_score(heatmap)}
    if label:
        best, thr = best_threshold_f1(heatmap, gt)
        result.update(f1_fixed=pixel_f1(heatmap, gt, 0.5), f1_best=best, best_threshold=thr)
    return result


def cmd_evaluate(args) -> int:
    manifest = Path(args.manifest)
    rows = read_manifest(manifest)
    pred_dir = None if args.self_run else Path(args.pred_dir)
    tasks = [(row, manifest.parent, pred_dir, args.k) for row in rows]
    outcomes = _map(_score_row, tasks, _jobs(args.jobs))
    skipped = []
    results = []
    for out in outcomes:
        if "missing" in out:
            log.warning("ItemSkipped: %s (missing %s)", out["id"], out["missing"])
            skipped.append(out["id"])
        else:
            results.append(ImageResult(**out))
    if skipped:
        log.warning("skipped %d of %d manifest entries", len(skipped), len(rows))
    if not results:
        raise ManifestEmpty("no manifest entry has both a prediction and a ground-truth mask")
    report = build_report(results, skipped)
    if args.csv:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["id", "label", "score", "f1_fixed", "f1_best", "best_threshold"])
        for r in report.per_image:
            writer.writerow([r["id"], r["label"], r["score"], r["f1_fixed"], r["f1_best"], r["best_threshold"]])
        _write_atomic(Path(args.csv), buf.getvalue())
    _emit(report.to_dict(), args.out)
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="recompress", description="Same-quality JPEG recompression forensics.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("inspect", help="print geometry, Q-matrix and estimated quality as JSON")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("analyze", help="recompression trace, heatmap, mask and report")
    p.add_argument("path")
    p.add_argument("--k", type=int, default=7)
    p.add_argument("--t", type=int, default=DEFAULT_T)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("histogram", help="signed coefficient histogram at one frequency as CSV")
    p.add_argument("path")
    p.add_argument("--pos", type=_position, default=(0, 1))
    p.add_argument("--t", type=int, default=DEFAULT_T)
    p.add_argument("--out")
    p.set_defaults(func=cmd_histogram)

    p = sub.add_parser("simulate", help="generate a paired spliced/authentic corpus")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--qf-min", type=int, default=50)
    p.add_argument("--qf-max", type=int, default=99)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--height", type=int, default=256)
    p.add_argument("--max-area", type=float, default=0.015)
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="pixel F1, AUC and accuracy over a manifest")
    p.add_argument("--manifest", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--pred-dir")
    src.add_argument("--self-run", action="store_true")
    p.add_argument("--k", type=int, default=7)
    p.add_argument("--out")
    p.add_argument("--csv")
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, IOFailure) as exc:
        print(f"recompress: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (RecompressError, ValueError) as exc:
        print(f"recompress: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FORMAT


if __name__ == "__main__":
    sys.exit(main())
