"""Exit criteria, each at its stated tolerance and time budget."""
import json
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_RESULTS
from recompress import cli
from recompress.block_codec import (
    CoefficientPlane,
    change_counts,
    compress_pixels,
    decompress_coeffs,
    fdct_block,
    idct_block,
    quality_to_qmatrix,
    recompression_trace,
    residual_map,
)
from recompress.corpus_sim import TEXTURES, random_spec, simulate_double, simulate_single, simulate_spliced_double, synth_texture
from recompress.dct_features import coefficient_histogram, interior_empty_bins
from recompress.evaluation import best_threshold_f1, pixel_f1, roc_auc
from recompress.fusion_ops import (
    ASPPParams,
    AttentionParams,
    aspp_forward,
    bilinear_upsample,
    channel_attention,
    channel_gate,
    spatial_attention,
    spatial_gate,
)
from recompress.jpeg_parser import estimate_quality, load_coefficients, read_jpeg
from recompress.localization import Heatmap, adaptive_aggregate, instability_heatmap

pytestmark = pytest.mark.acceptance

FIXTURE_DIR = Path(__file__).parent / "fixtures" / "jpeg"


def record(n, ok, detail, elapsed, budget):
    ok = bool(ok) and (budget is None or elapsed < budget)
    limit = "no time budget" if budget is None else f"budget {budget}s"
    ACCEPTANCE_RESULTS[n] = (ok, f"{detail} ({elapsed:.2f}s, {limit})")
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail} ({elapsed:.2f}s)")
    return ok


# -- oracles --------------------------------------------------------------

def brute_fdct(x):
    out = np.zeros((8, 8))
    for u in range(8):
        for v in range(8):
            cu = np.sqrt(0.5) if u == 0 else 1.0
            cv = np.sqrt(0.5) if v == 0 else 1.0
            s = 0.0
            for i in range(8):
                for j in range(8):
                    s += x[i, j] * np.cos((2 * i + 1) * u * np.pi / 16) * np.cos((2 * j + 1) * v * np.pi / 16)
            out[u, v] = 0.25 * cu * cv * s
    return out


def oracle_sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def oracle_channel_attention(F_hi, F_lo, p):
    H, W, _ = F_hi.shape
    C = p.proj_w.shape[1]
    pooled = [0.0] * C
    for c in range(C):
        acc = 0.0
        for y in range(H):
            for x in range(W):
                v = p.proj_b[c]
                for i in range(F_hi.shape[2]):
                    v += F_hi[y, x, i] * p.proj_w[i, c]
                acc += v
        pooled[c] = acc / (H * W)
    hidden = []
    for j in range(p.down_w.shape[1]):
        v = p.down_b[j] + sum(pooled[c] * p.down_w[c, j] for c in range(C))
        hidden.append(max(v, 0.0))
    gate = [oracle_sigmoid(p.up_b[c] + sum(hidden[j] * p.up_w[j, c] for j in range(len(hidden))))
            for c in range(C)]
    out = np.empty_like(F_lo)
    for y in range(F_lo.shape[0]):
        for x in range(F_lo.shape[1]):
            for c in range(C):
                out[y, x, c] = F_lo[y, x, c] * gate[c]
    return out, np.array(gate)


def oracle_spatial_attention(F_prev, F_cur, p):
    out = np.empty_like(F_cur)
    gate = np.empty(F_prev.shape[:2])
    for y in range(F_prev.shape[0]):
        for x in range(F_prev.shape[1]):
            vals = list(F_prev[y, x])
            g = oracle_sigmoid(p.spatial_w[0] * max(vals) + p.spatial_w[1] * sum(vals) / len(vals) + p.spatial_b)
            gate[y, x] = g
            for c in range(F_cur.shape[2]):
                out[y, x, c] = F_cur[y, x, c] * g
    return out, gate


def oracle_dilated(F, w, b, rate):
    H, W, Cin = F.shape
    out = np.zeros((H, W, w.shape[3]))
    for y in range(H):
        for x in range(W):
            for o in range(w.shape[3]):
                v = b[o]
                for i in range(3):
                    for j in range(3):
                        yy, xx = y + (i - 1) * rate, x + (j - 1) * rate
                        if 0 <= yy < H and 0 <= xx < W:
                            for c in range(Cin):
                                v += F[yy, xx, c] * w[i, j, c, o]
                out[y, x, o] = v
    return out


def oracle_aspp(F, p):
    H, W, Cin = F.shape
    branches = [oracle_dilated(F, bw, bb, r) for bw, bb, r in zip(p.branch_w, p.branch_b, p.rates)]
    mean = [sum(F[y, x, c] for y in range(H) for x in range(W)) / (H * W) for c in range(Cin)]
    g = [p.gap_b[o] + sum(mean[c] * p.gap_w[c, o] for c in range(Cin)) for o in range(p.gap_w.shape[1])]
    branches.append(np.tile(np.array(g), (H, W, 1)))
    cat = np.concatenate(branches, axis=-1)
    out = np.zeros((H, W, p.proj_w.shape[1]))
    for y in range(H):
        for x in range(W):
            for o in range(p.proj_w.shape[1]):
                out[y, x, o] = p.proj_b[o] + sum(cat[y, x, c] * p.proj_w[c, o] for c in range(cat.shape[2]))
    return out


def oracle_bilinear(F, s):
    H, W, C = F.shape
    out = np.zeros((H * s, W * s, C))
    for Y in range(H * s):
        sy = max((Y + 0.5) / s - 0.5, 0.0)
        y0 = min(int(np.floor(sy)), H - 1)
        y1 = min(y0 + 1, H - 1)
        ly = sy - y0
        for X in range(W * s):
            sx = max((X + 0.5) / s - 0.5, 0.0)
            x0 = min(int(np.floor(sx)), W - 1)
            x1 = min(x0 + 1, W - 1)
            lx = sx - x0
            for c in range(C):
                out[Y, X, c] = ((1 - ly) * (1 - lx) * F[y0, x0, c] + (1 - ly) * lx * F[y0, x1, c]
                                + ly * (1 - lx) * F[y1, x0, c] + ly * lx * F[y1, x1, c])
    return out


def oracle_f1(h, gt, t):
    tp = fp = fn = 0
    for v, g in zip(np.ravel(h), np.ravel(gt)):
        p = v >= t
        tp += p and g
        fp += p and not g
        fn += (not p) and g
    return 0.0 if 2 * tp + fp + fn == 0 else 2 * tp / (2 * tp + fp + fn)


def oracle_auc(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l]
    neg = [s for s, l in zip(scores, labels) if not l]
    total = 0.0
    for a in pos:
        for b in neg:
            total += 1.0 if a > b else 0.5 if a == b else 0.0
    return total / (len(pos) * len(neg))


# -- criteria -------------------------------------------------------------

def test_criterion_1_parser_fidelity():
    start = time.perf_counter()
    jpegs = sorted(FIXTURE_DIR.glob("*.jpg"))
    qfs = set()
    mismatches = []
    for path in jpegs:
        img = read_jpeg(path)
        ref = load_coefficients(path.with_suffix(".coef"))
        qfs.add(estimate_quality(img.q_luma))
        if not (np.array_equal(img.y_coeffs, ref.y_coeffs) and np.array_equal(img.q_luma, ref.q_luma)):
            mismatches.append(path.name)
    elapsed = time.perf_counter() - start
    ok = len(jpegs) >= 50 and not mismatches and min(qfs) <= 50 and max(qfs) >= 100
    record(1, ok, f"{len(jpegs)} fixtures, QF {min(qfs)}-{max(qfs)}, {len(mismatches)} mismatches", elapsed, 10)
    assert len(jpegs) >= 50
    assert min(qfs) <= 50 and max(qfs) >= 100
    assert not mismatches
    assert elapsed < 10


def test_criterion_2_codec_correctness():
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    x = rng.uniform(-128, 127, (1000, 8, 8))
    roundtrip = float(np.abs(idct_block(fdct_block(x)) - x).max())
    brute = max(float(np.abs(fdct_block(b) - brute_fdct(b)).max()) for b in x[:20])
    residual_ok = True
    for i in range(100):
        qf = int(rng.integers(30, 100))
        plane = simulate_single(rng.integers(0, 256, (16, 24)), qf)
        trace = recompression_trace(plane, int(rng.integers(1, 10)))
        expected = (trace.planes[-1].coeffs.astype(np.int64) - trace.planes[0].coeffs) / trace.k
        residual_ok &= np.array_equal(residual_map(trace), expected)
    elapsed = time.perf_counter() - start
    ok = roundtrip < 1e-9 and brute < 1e-10 and residual_ok
    record(2, ok, f"roundtrip {roundtrip:.1e}, brute {brute:.1e}, residual exact={residual_ok}", elapsed, 5)
    assert roundtrip < 1e-9
    assert brute < 1e-10
    assert residual_ok
    assert elapsed < 5


def test_criterion_3_monotone_instability():
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    steps = monotone = 0
    for i in range(100):
        qf = int(rng.integers(50, 96))
        px = synth_texture(128, 128, TEXTURES[i % 3], rng)
        counts = change_counts(recompression_trace(simulate_double(px, qf), 7))
        for a, b in zip(counts, counts[1:]):
            steps += 1
            monotone += b <= a
    frac = monotone / steps
    elapsed = time.perf_counter() - start
    record(3, frac >= 0.95, f"non-increasing in {frac:.3f} of steps", elapsed, 60)
    assert frac >= 0.95
    assert elapsed < 60


def test_criterion_4_single_double_auc():
    start = time.perf_counter()
    rng = np.random.default_rng(4)
    scores, labels = [], []
    for i in range(100):
        qf = int(rng.integers(50, 96))
        px = synth_texture(128, 128, TEXTURES[i % 3], rng)
        for label, plane in ((1, simulate_single(px, qf)), (0, simulate_double(px, qf))):
            scores.append(change_counts(recompression_trace(plane, 1))[0])
            labels.append(label)
    auc = roc_auc(scores, labels)
    elapsed = time.perf_counter() - start
    record(4, auc >= 0.80, f"AUC {auc:.3f}", elapsed, 60)
    assert auc >= 0.80
    assert elapsed < 60


def test_criterion_5_localization_signal():
    start = time.perf_counter()
    rng = np.random.default_rng(5)
    f1s, baselines, inside_wins = [], [], 0
    for _ in range(20):
        qf = int(rng.integers(50, 91))
        spec = random_spec(rng, qf, max_area=0.05)
        sample = simulate_spliced_double(spec)
        h = instability_heatmap(recompression_trace(sample.coeffs, 7))
        gt = sample.gt_mask
        assert 0 < gt.mean() <= 0.05
        f1s.append(best_threshold_f1(h, gt)[0])
        p = gt.mean()
        baselines.append(2 * p / (p + 1))
        inside_wins += h.values[gt].mean() > h.values[~gt].mean()
    mean_f1, mean_base = float(np.mean(f1s)), float(np.mean(baselines))
    elapsed = time.perf_counter() - start
    ok = mean_f1 >= 2 * mean_base and inside_wins >= 16
    record(5, ok, f"F1 {mean_f1:.3f} vs baseline {mean_base:.3f}, in>out on {inside_wins}/20", elapsed, 120)
    assert mean_f1 >= 2 * mean_base
    assert inside_wins >= 16
    assert elapsed < 120


def test_criterion_6_histogram_gaps():
    start = time.perf_counter()
    q60, q90 = quality_to_qmatrix(60), quality_to_qmatrix(90)
    wins = 0
    for seed in range(10):
        px = synth_texture(256, 256, TEXTURES[seed % 3], np.random.default_rng(seed), detail=(20.0, 40.0))
        single = CoefficientPlane(compress_pixels(px, q90), q90)
        double = CoefficientPlane(compress_pixels(decompress_coeffs(compress_pixels(px, q60), q60), q90), q90)
        gaps_double = interior_empty_bins(coefficient_histogram(double, (0, 1), 20))
        gaps_single = interior_empty_bins(coefficient_histogram(single, (0, 1), 20))
        wins += gaps_double > gaps_single
    elapsed = time.perf_counter() - start
    record(6, wins >= 9, f"more gaps after 60->90 on {wins}/10", elapsed, 30)
    assert wins >= 9
    assert elapsed < 30


def test_criterion_7_fusion_parity():
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = 0.0
    gates_ok = True
    for _ in range(50):
        H, W = int(rng.integers(2, 6)), int(rng.integers(2, 6))
        cin, cout = int(rng.integers(1, 4)), 4 * int(rng.integers(1, 3))
        p = AttentionParams.random(cin, cout, rng=rng)
        F_hi = rng.normal(size=(H, W, cin))
        F_lo = rng.normal(size=(H, W, cout))
        got = channel_attention(F_hi, F_lo, p)
        want, gate = oracle_channel_attention(F_hi, F_lo, p)
        worst = max(worst, float(np.abs(got - want).max()), float(np.abs(channel_gate(F_hi, p) - gate).max()))
        g = channel_gate(F_hi, p)
        gates_ok &= bool(((g > 0) & (g < 1)).all())

        got = spatial_attention(F_lo, F_hi, p)
        want, gate = oracle_spatial_attention(F_lo, F_hi, p)
        worst = max(worst, float(np.abs(got - want).max()))
        g = spatial_gate(F_lo, p)
        gates_ok &= bool(((g > 0) & (g < 1)).all())

        ap = ASPPParams.random(cin, 2, 3, rates=(1, 2, 3), rng=rng)
        worst = max(worst, float(np.abs(aspp_forward(F_hi, ap) - oracle_aspp(F_hi, ap)).max()))

        s = int(rng.integers(1, 5))
        worst = max(worst, float(np.abs(bilinear_upsample(F_hi, s) - oracle_bilinear(F_hi, s)).max()))

    convex = True
    for _ in range(1000):
        a = Heatmap(rng.uniform(0, 1, (4, 4)) ** rng.uniform(0.2, 3))
        b = Heatmap(rng.uniform(0, 1, (4, 4)) * rng.uniform(0, 1))
        h = adaptive_aggregate(a, b).values
        lo, hi = np.minimum(a.values, b.values), np.maximum(a.values, b.values)
        convex &= bool(((h >= lo - 1e-12) & (h <= hi + 1e-12)).all())
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-8 and gates_ok and convex
    record(7, ok, f"max oracle diff {worst:.1e}, gates in (0,1)={gates_ok}, convex={convex}", elapsed, 10)
    assert worst <= 1e-8
    assert gates_ok and convex
    assert elapsed < 10


def test_criterion_8_metric_suite():
    start = time.perf_counter()
    rng = np.random.default_rng(8)
    exact = dominance = True
    for _ in range(200):
        shape = (int(rng.integers(1, 9)), int(rng.integers(1, 9)))
        h = np.round(rng.uniform(0, 1, shape), int(rng.integers(1, 3)))
        gt = rng.uniform(size=shape) < rng.uniform(0, 1)
        t = float(rng.choice([0.0, 0.25, 0.5, 0.75, 1.0]))
        exact &= pixel_f1(h, gt, t) == oracle_f1(h, gt, t)

        best, thr = best_threshold_f1(h, gt)
        cands = sorted(set(np.ravel(h).tolist()) | {0.0, 1.0})
        ref = [oracle_f1(h, gt, c) for c in cands]
        exact &= best == max(ref) and thr == cands[ref.index(max(ref))]
        dominance &= best >= pixel_f1(h, gt, 0.5)

        n = int(rng.integers(2, 30))
        scores = np.round(rng.uniform(size=n), 1)
        labels = np.arange(n) % 2 == 0
        rng.shuffle(labels)
        exact &= abs(roc_auc(scores, labels) - oracle_auc(scores, labels)) == 0.0
    elapsed = time.perf_counter() - start
    record(8, exact and dominance, f"oracle-exact={exact}, f1_best>=f1_fixed={dominance}", elapsed, 5)
    assert exact and dominance
    assert elapsed < 5


def test_criterion_9_end_to_end_determinism(tmp_path):
    start = time.perf_counter()
    outputs = []
    for run in ("a", "b"):
        corpus = tmp_path / run
        report = tmp_path / f"{run}.json"
        assert cli.main(["simulate", "--n", "4", "--seed", "9", "--out-dir", str(corpus),
                         "--width", "64", "--height", "64", "--max-area", "0.05", "--jobs", "2"]) == 0
        assert cli.main(["evaluate", "--manifest", str(corpus / "manifest.csv"), "--self-run",
                         "--out", str(report), "--jobs", "2"]) == 0
        outputs.append(report.read_bytes())
    json.loads(outputs[0])
    elapsed = time.perf_counter() - start
    same = outputs[0] == outputs[1]
    record(9, same, f"byte-identical={same}", elapsed, None)
    assert same
