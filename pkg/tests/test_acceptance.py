"""Acceptance criteria, one test each.

Every test records a single ``PASS``/``FAIL`` line which is printed in the
"acceptance criteria" section of the pytest summary. Run the file directly
(``python3 tests/test_acceptance.py``) to get only those lines.
"""

import statistics
import time
from dataclasses import replace

import numpy as np
import pytest

from centerpercept import decoder, encoder, losses
from centerpercept.core import GridSpec
from centerpercept.decoder import decode_boxes, decode_lanes, extract_peaks
from centerpercept.losses import HeatmapLossParams, count_peaks, sigmoid, weighted_l2_grad, weighted_l2_loss
from centerpercept.metrics import average_precision, default_lane_width, lane_mask_iou, min_weight_matching, rasterize_lanes
from centerpercept.neck import ConvParams, FusionConvs, FusionWeights, bifpn_fuse, bilinear_kernel, conv2d_ref, transposed_conv2d_ref
from centerpercept.oracles import (
    bilinear_upsample_2x,
    central_difference,
    exhaustive_ap,
    naive_conv2d,
    permutation_matching,
    scan_peaks,
)
from centerpercept.synth import SceneConfig, generate_scene, ideal_outputs

try:
    from conftest import ACCEPTANCE_LINES
except ImportError:  # run as a script
    ACCEPTANCE_LINES = {}

# tolerances as stated by the criteria
AC1_SCENES, AC1_CORNER_TOL, AC1_TIME_LIMIT = 1000, 1e-3, 30.0
AC2_SCENES, AC2_COUNT_RATE, AC2_MIN_IOU = 1000, 0.99, 0.95
AC3_TENSORS, AC3_SIZE, AC3_H, AC3_REL_TOL = 100, 32, 1e-3, 1e-3
AC4_AP_SCENES, AC4_AP_TOL, AC4_MATRICES, AC4_MAX_N, AC4_MAPS = 200, 1e-9, 100, 7, 100
AC5_TOL = 1e-5
AC6_SIGMOID, AC6_SIGMOID_TOL = 0.990, 5e-4
AC7_FRAMES, AC7_MEDIAN_MS = 200, 5.0


def record(key: str, title: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {key} {title}: {detail}"
    ACCEPTANCE_LINES[key] = line
    print(line)


def _box_key(b):
    return (b.class_id, round(b.x1, 2), round(b.y1, 2), round(b.x2, 2))


def test_ac1_box_round_trip():
    cfg = SceneConfig(n_lanes=(0, 0))
    worst, mismatches = 0.0, 0
    elapsed = 0.0
    for seed in range(AC1_SCENES):
        scene = generate_scene(replace(cfg, seed=seed))
        t0 = time.perf_counter()
        t = encoder.encode_detections(scene.boxes, cfg.grid)
        out = decode_boxes(t["det_heatmaps"], t["det_offsets"], t["occlusion"], cfg.grid)
        elapsed += time.perf_counter() - t0
        if len(out) != len(scene.boxes):
            mismatches += 1
            continue
        for got, want in zip(sorted(out, key=_box_key), sorted(scene.boxes, key=_box_key)):
            if got.class_id != want.class_id or got.occluded != want.occluded:
                mismatches += 1
            err = max(abs(got.x1 - want.x1), abs(got.y1 - want.y1), abs(got.x2 - want.x2), abs(got.y2 - want.y2))
            worst = max(worst, err)
    ok = mismatches == 0 and worst <= AC1_CORNER_TOL and elapsed < AC1_TIME_LIMIT
    record("AC1", "box round trip", ok,
           f"{AC1_SCENES} scenes, max corner error {worst:.2e} px (tol {AC1_CORNER_TOL}), "
           f"{mismatches} class/flag/count mismatches, encode+decode {elapsed:.1f} s (limit {AC1_TIME_LIMIT:.0f} s)")
    assert ok


def test_ac2_lane_round_trip():
    cfg = SceneConfig(n_boxes=(0, 0), n_lanes=(1, 3), midpoint_sep=4 * decoder.DEFAULT_CLUSTER_DIST)
    width = default_lane_width(cfg.width)
    exact, ious = 0, []
    for seed in range(AC2_SCENES):
        scene = generate_scene(replace(cfg, seed=seed))
        t = ideal_outputs(scene)
        res = decode_lanes(t.lane_heatmaps, t.lane_offsets, cfg.grid)
        exact += len(res.lanes) == len(scene.lanes)
        drawn = [p if p is not None else lane for lane, p in zip(res.lanes, res.polynomials)]
        pm = rasterize_lanes(drawn, cfg.width, cfg.height, width)
        gm = rasterize_lanes(scene.lanes, cfg.width, cfg.height, width)
        ious.append(lane_mask_iou(pm, gm))
    rate = exact / AC2_SCENES
    ious = np.array(ious)
    ok_count = rate >= AC2_COUNT_RATE
    ok_iou = bool(np.all(ious >= AC2_MIN_IOU))
    record("AC2", "lane round trip", ok_count and ok_iou,
           f"instance count exact on {rate:.1%} (need {AC2_COUNT_RATE:.0%}); "
           f"mask IoU at {width} px: min {ious.min():.3f}, median {np.median(ious):.3f}, "
           f"{np.mean(ious >= AC2_MIN_IOU):.1%} of scenes >= {AC2_MIN_IOU} (need all)")
    assert ok_count
    assert ok_iou


def test_ac3_loss_exactness():
    hand = (
        weighted_l2_loss([[1.0]], [[1.0]]),
        weighted_l2_loss([[0.0]], [[1.0]]),
        weighted_l2_loss([[1.0]], [[0.0]]),
    )
    hand_ok = hand == (0.0, 4.0, 16.0)
    worst, checked, total = 0.0, 0, 0
    for seed in range(AC3_TENSORS):
        rng = np.random.Generator(np.random.PCG64(seed))
        target = rng.random((AC3_SIZE, AC3_SIZE))
        pred = rng.random((AC3_SIZE, AC3_SIZE))
        params = HeatmapLossParams(n_k=count_peaks(target))
        ana = weighted_l2_grad(target, pred, params)
        num = central_difference(lambda p: weighted_l2_loss(target, p, params), pred, AC3_H)
        # tie cells: the difference stencil straddles the switch between the two weights
        wt = (1 + target) ** params.alpha
        keep = ((wt >= (1 + pred - AC3_H) ** params.beta) == (wt >= (1 + pred + AC3_H) ** params.beta))
        keep &= np.abs(wt - (1 + pred) ** params.beta) >= 1e-6
        checked += int(keep.sum())
        total += keep.size
        worst = max(worst, float(np.max(np.abs(ana - num)[keep]) / np.max(np.abs(num[keep]))))
    ok = hand_ok and worst < AC3_REL_TOL
    record("AC3", "loss exactness", ok,
           f"hand values {hand} (want (0, 4, 16)); max relative gradient error {worst:.2e} "
           f"(tol {AC3_REL_TOL}) over {AC3_TENSORS} tensors, {checked}/{total} cells outside ties")
    assert ok


def _random_det_scene(rng):
    n_gt = int(rng.integers(1, 8))
    gts = []
    for _ in range(n_gt):
        x, y = rng.uniform(0, 200, 2)
        gts.append((x, y, x + rng.uniform(10, 60), y + rng.uniform(10, 60)))
    preds = []
    for g in gts:
        for _ in range(int(rng.integers(0, 3))):
            j = rng.normal(0, 6, 4)
            x1, y1 = g[0] + j[0], g[1] + j[1]
            preds.append((x1, y1, max(g[2] + j[2], x1 + 1), max(g[3] + j[3], y1 + 1)))
    for _ in range(int(rng.integers(0, 4))):
        x, y = rng.uniform(0, 200, 2)
        preds.append((x, y, x + rng.uniform(10, 60), y + rng.uniform(10, 60)))
    scores = rng.random(len(preds))
    if rng.random() < 0.3:
        scores = np.round(scores * 3) / 3
    return [p + (float(s),) for p, s in zip(preds, scores)], gts


def test_ac4_metric_oracles():
    from centerpercept.core import BoundingBoxAnn

    rng = np.random.Generator(np.random.PCG64(2024))
    ap_err = 0.0
    for _ in range(AC4_AP_SCENES):
        preds, gts = _random_det_scene(rng)
        got = average_precision(
            [BoundingBoxAnn(*p[:4], 0, False, p[4]) for p in preds],
            [BoundingBoxAnn(*g, 0) for g in gts],
        ).per_class[0]
        ap_err = max(ap_err, abs(got - exhaustive_ap(preds, gts)))

    match_bad = 0
    for i in range(AC4_MATRICES):
        n = 1 + i % AC4_MAX_N
        m = n if i % 3 else int(rng.integers(1, AC4_MAX_N + 1))
        cost = rng.random((n, m))
        pairs = min_weight_matching(cost)
        total, _ = permutation_matching(cost)
        if len(pairs) != min(n, m) or abs(sum(cost[a, b] for a, b in pairs) - total) > 1e-12:
            match_bad += 1

    peak_bad = 0
    for i in range(AC4_MAPS):
        heat = rng.random((80, 160)).astype(np.float32)
        if i % 2:
            heat = np.round(heat * 5) / 5
        if {p.cell for p in extract_peaks(heat, decoder.DEFAULT_THRESHOLD)} != scan_peaks(heat, decoder.DEFAULT_THRESHOLD):
            peak_bad += 1

    ok = ap_err <= AC4_AP_TOL and match_bad == 0 and peak_bad == 0
    record("AC4", "metric oracle equivalence", ok,
           f"AP max |diff| {ap_err:.1e} over {AC4_AP_SCENES} scenes (tol {AC4_AP_TOL}); "
           f"matching {AC4_MATRICES - match_bad}/{AC4_MATRICES} optimal (n <= {AC4_MAX_N}); "
           f"peaks {AC4_MAPS - peak_bad}/{AC4_MAPS} maps identical")
    assert ok


def test_ac5_neck_ops():
    rng = np.random.Generator(np.random.PCG64(5))
    x = rng.standard_normal((8, 16, 16)).astype(np.float32)
    w = rng.standard_normal((6, 8, 3, 3)).astype(np.float32)
    b = rng.standard_normal(6).astype(np.float32)
    conv_err = 0.0
    for stride, pad in ((1, 1), (2, 1), (1, 0)):
        got = conv2d_ref(x, ConvParams(w, b, stride, pad))
        conv_err = max(conv_err, float(np.max(np.abs(got - naive_conv2d(x, w, b, stride, pad)))))

    img = rng.standard_normal((3, 12, 20)).astype(np.float32)
    up = transposed_conv2d_ref(img, bilinear_kernel(3))
    bil_err = 0.0
    for c in range(3):
        ref = bilinear_upsample_2x(img[c])
        valid = ~np.isnan(ref)
        bil_err = max(bil_err, float(np.max(np.abs(up[c][valid] - ref[valid]))))

    feats = {s: rng.standard_normal((4, 128 // s, 256 // s)).astype(np.float32) for s in (4, 8, 16, 32)}
    fused = bifpn_fuse(feats, FusionWeights.constant(feats, 0.0), FusionConvs.identity(feats, 4))
    exact = all(np.array_equal(fused[s], feats[s]) for s in feats)

    ok = conv_err <= AC5_TOL and bil_err <= AC5_TOL and exact
    record("AC5", "neck ops", ok,
           f"conv max error {conv_err:.1e}, bilinear interior max error {bil_err:.1e} (tol {AC5_TOL}); "
           f"zero-weight BiFPN bit-exact: {exact}")
    assert ok


def test_ac6_constants():
    s = float(sigmoid(decoder.HEATMAP_BIAS_INIT))
    grid = GridSpec(640, 320)
    checks = {
        "sigmoid(4.6)": abs(s - AC6_SIGMOID) <= AC6_SIGMOID_TOL,
        "threshold 0.25": decoder.DEFAULT_THRESHOLD == 0.25,
        "lane sigma 2": encoder.DEFAULT_LANE_SIGMA == 2.0,
        "alpha 4": losses.DEFAULT_ALPHA == 4.0 and HeatmapLossParams().alpha == 4.0,
        "beta 2": losses.DEFAULT_BETA == 2.0 and HeatmapLossParams().beta == 2.0,
        "grid 80x160": grid.stride == 4 and grid.shape == (80, 160),
    }
    ok = all(checks.values())
    record("AC6", "constants", ok,
           f"sigmoid(4.6) = {s:.6f}; " + ", ".join(f"{k}: {'ok' if v else 'WRONG'}" for k, v in checks.items()))
    assert ok


def test_ac7_decode_speed():
    cfg = SceneConfig(n_lanes=(1, 3))
    grid = cfg.grid
    bundles = [ideal_outputs(generate_scene(replace(cfg, seed=s))) for s in range(20)]
    times = []
    for i in range(AC7_FRAMES):
        t = bundles[i % len(bundles)]
        t0 = time.perf_counter()
        decode_boxes(t.det_heatmaps, t.det_offsets, t.occlusion, grid)
        decode_lanes(t.lane_heatmaps, t.lane_offsets, grid)
        times.append((time.perf_counter() - t0) * 1e3)
    med = statistics.median(times)
    # soft target: reported, never fails the suite
    record("AC7", "decode speed (soft, not gating)", med < AC7_MEDIAN_MS,
           f"median {med:.2f} ms per 80x160 frame over {AC7_FRAMES} decodes (target < {AC7_MEDIAN_MS} ms)")


if __name__ == "__main__":
    import sys

    failed = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_ac") and callable(fn):
            try:
                fn()
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
