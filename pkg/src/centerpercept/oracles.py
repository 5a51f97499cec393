"""Slow, direct reference computations used to check the fast paths.

Nothing here imports the modules it checks; every routine recomputes its
answer from first principles (loops, enumeration, bisection).
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def box_iou(a, b) -> float:
    """IoU of two (x1, y1, x2, y2) tuples."""
    iw = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    ih = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = iw * ih
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union if union > 0 else 0.0


def corner_radius_bisection(w: float, h: float, min_iou: float, iters: int = 200) -> float:
    """Largest r with IoU >= min_iou for every +-r shift pattern of the four box sides."""

    def worst(r):
        g = (0.0, 0.0, w, h)
        return min(
            box_iou(g, (sx1 * r, sy1 * r, w + sx2 * r, h + sy2 * r))
            for sx1, sy1, sx2, sy2 in itertools.product((-1.0, 1.0), repeat=4)
        )

    lo, hi = 0.0, min(w, h)
    for _ in range(iters):
        mid = (lo + hi) / 2
        if worst(mid) >= min_iou:
            lo = mid
        else:
            hi = mid
    return lo


def scan_peaks(heat, threshold: float) -> set[tuple[int, int]]:
    """Every (x, y) whose value is >= threshold and >= each in-grid 8-neighbour."""
    heat = np.asarray(heat)
    h, w = heat.shape
    out = set()
    for y in range(h):
        for x in range(w):
            v = heat[y, x]
            if v < threshold:
                continue
            ok = True
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    yy, xx = y + dy, x + dx
                    if (dy or dx) and 0 <= yy < h and 0 <= xx < w and heat[yy, xx] > v:
                        ok = False
            if ok:
                out.add((x, y))
    return out


def permutation_matching(cost) -> tuple[float, list[tuple[int, int]]]:
    """Minimum-cost assignment by trying every injection of the smaller side."""
    c = np.asarray(cost, dtype=np.float64)
    n, m = c.shape
    if n == 0 or m == 0:
        return 0.0, []
    best = (math.inf, [])
    if n <= m:
        for cols in itertools.permutations(range(m), n):
            total = sum(c[i, j] for i, j in enumerate(cols))
            if total < best[0]:
                best = (total, [(i, j) for i, j in enumerate(cols)])
    else:
        for rows in itertools.permutations(range(n), m):
            total = sum(c[i, j] for j, i in enumerate(rows))
            if total < best[0]:
                best = (total, sorted((i, j) for j, i in enumerate(rows)))
    return best


def exhaustive_ap(preds, gts, iou_thresh: float = 0.5) -> float:
    """AP for one class from the full PR curve.

    ``preds`` are (x1, y1, x2, y2, score), ``gts`` are (x1, y1, x2, y2). For each
    distinct score threshold the kept predictions are matched from scratch,
    giving one (recall, precision) point; AP sums recall steps times the best
    precision at any equal-or-higher recall.
    """
    if not gts:
        return float("nan")
    if not preds:
        return 0.0
    thresholds = sorted({p[4] for p in preds}, reverse=True)
    points = []
    for t in thresholds:
        kept = [p for p in preds if p[4] >= t]
        # descending score, ties in input order
        kept_order = sorted(range(len(kept)), key=lambda i: -kept[i][4])
        used = set()
        tp = 0
        for i in kept_order:
            best_j, best_iou = None, -1.0
            for j, g in enumerate(gts):
                if j in used:
                    continue
                v = box_iou(kept[i], g)
                if v > best_iou:
                    best_j, best_iou = j, v
            if best_j is not None and best_iou >= iou_thresh:
                used.add(best_j)
                tp += 1
        points.append((tp / len(gts), tp / len(kept)))
    ap = 0.0
    prev_recall = 0.0
    for idx, (rec, _) in enumerate(points):
        best_prec = max(p for r, p in points[idx:])
        ap += (rec - prev_recall) * best_prec
        prev_recall = rec
    return ap


def _sse(points: np.ndarray) -> float:
    c = points.mean(axis=0)
    return float(((points - c) ** 2).sum())


def greedy_ward(points, threshold: float) -> list[frozenset[int]]:
    """Agglomerative Ward clustering recomputed from raw points at every step.

    Merge cost of A and B is ``sqrt(2 * (SSE(A u B) - SSE(A) - SSE(B)))``.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    clusters = [[i] for i in range(len(pts))]
    while len(clusters) > 1:
        best = None
        for a in range(len(clusters)):
            for b in range(a + 1, len(clusters)):
                ia, ib = clusters[a], clusters[b]
                inc = _sse(pts[ia + ib]) - _sse(pts[ia]) - _sse(pts[ib])
                cost = math.sqrt(max(2.0 * inc, 0.0))
                if best is None or cost < best[0]:
                    best = (cost, a, b)
        if best[0] > threshold:
            break
        _, a, b = best
        clusters[a] = clusters[a] + clusters[b]
        del clusters[b]
    return [frozenset(c) for c in clusters]


def set_partitions(items):
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


def min_sse_partition(points, k: int) -> list[frozenset[int]]:
    """Partition into exactly ``k`` groups with the lowest total within-group SSE."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    best = None
    for part in set_partitions(range(len(pts))):
        if len(part) != k:
            continue
        total = sum(_sse(pts[g]) for g in part)
        if best is None or total < best[0] - 1e-12:
            best = (total, part)
    return [frozenset(g) for g in best[1]]


def naive_conv2d(x, weights, bias=None, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Quadruple-loop cross-correlation with zero padding."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    c_in, h, wd = x.shape
    c_out, _, kh, kw = w.shape
    h_out = (h + 2 * padding - kh) // stride + 1
    w_out = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((c_out, h_out, w_out))
    for o in range(c_out):
        for oy in range(h_out):
            for ox in range(w_out):
                acc = 0.0 if bias is None else float(bias[o])
                for c in range(c_in):
                    for i in range(kh):
                        for j in range(kw):
                            iy = oy * stride + i - padding
                            ix = ox * stride + j - padding
                            if 0 <= iy < h and 0 <= ix < wd:
                                acc += x[c, iy, ix] * w[o, c, i, j]
                out[o, oy, ox] = acc
    return out


def zero_stuffed_transposed_conv(x, weights, stride: int, padding: int) -> np.ndarray:
    """Transposed conv as: insert stride-1 zeros, pad by k-1-p, correlate with the flipped kernel."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    c_in, h, wd = x.shape
    _, _, kh, kw = w.shape
    stuffed = np.zeros((c_in, (h - 1) * stride + 1, (wd - 1) * stride + 1))
    stuffed[:, ::stride, ::stride] = x
    flipped = w[:, :, ::-1, ::-1]
    pad_h, pad_w = kh - 1 - padding, kw - 1 - padding
    padded = np.pad(stuffed, ((0, 0), (pad_h, pad_h), (pad_w, pad_w)))
    return naive_conv2d(padded, flipped)


def window_maxpool(x, k: int, stride: int) -> np.ndarray:
    x = np.asarray(x)
    c, h, w = x.shape
    h_out = (h - k) // stride + 1
    w_out = (w - k) // stride + 1
    out = np.empty((c, h_out, w_out), dtype=x.dtype)
    for ch in range(c):
        for i in range(h_out):
            for j in range(w_out):
                out[ch, i, j] = max(
                    x[ch, i * stride + a, j * stride + b] for a in range(k) for b in range(k)
                )
    return out


def bilinear_upsample_2x(img) -> np.ndarray:
    """Half-pixel-centre bilinear 2x upsampling of a 2-D array, evaluated point by point.

    Output pixel ``o`` samples input coordinate ``(o + 0.5) / 2 - 0.5``; only
    valid where that coordinate lies inside the input (interior pixels).
    """
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    out = np.full((2 * h, 2 * w), np.nan)
    for oy in range(2 * h):
        for ox in range(2 * w):
            sy = (oy + 0.5) / 2 - 0.5
            sx = (ox + 0.5) / 2 - 0.5
            if not (0 <= sy <= h - 1 and 0 <= sx <= w - 1):
                continue
            y0, x0 = min(int(math.floor(sy)), h - 2), min(int(math.floor(sx)), w - 2)
            fy, fx = sy - y0, sx - x0
            out[oy, ox] = (
                img[y0, x0] * (1 - fy) * (1 - fx)
                + img[y0, x0 + 1] * (1 - fy) * fx
                + img[y0 + 1, x0] * fy * (1 - fx)
                + img[y0 + 1, x0 + 1] * fy * fx
            )
    return out


def vertical_band_iou(x_a: float, x_b: float, y0: float, y1: float, width: int) -> float:
    """Pixel-count IoU of two vertical strokes drawn with a square brush of ``width``.

    A brush at x covers columns ``floor(x - w/2 + 0.5)`` to that plus ``w - 1``;
    a vertical segment covers the rows its brush sweeps from y0 to y1.
    """

    def pixels(x):
        c0 = math.floor(x - width / 2 + 0.5)
        r0 = math.floor(y0 - width / 2 + 0.5)
        r1 = math.floor(y1 - width / 2 + 0.5) + width - 1
        return {(c, r) for c in range(c0, c0 + width) for r in range(r0, r1 + 1)}

    a, b = pixels(x_a), pixels(x_b)
    return len(a & b) / len(a | b)


def central_difference(f, x, h: float = 1e-3) -> np.ndarray:
    """Element-wise central difference of scalar ``f`` at array ``x``."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f(x)
        flat[i] = orig - h
        down = f(x)
        flat[i] = orig
        g[i] = (up - down) / (2 * h)
    return grad


def f1_from_counts(tp: int, fp: int, fn: int) -> float:
    if tp == 0:
        return 0.0
    p = tp / (tp + fp)
    r = tp / (tp + fn)
    return 2 * p * r / (p + r)
