"""Static overlays written as binary PPM (P6) images."""

from __future__ import annotations

import os

import numpy as np

GT_COLOR = (0, 220, 0)
PRED_COLOR = (255, 60, 60)
PRED_OCCLUDED_COLOR = (255, 170, 0)
LANE_GT_COLOR = (0, 160, 255)
LANE_PRED_COLOR = (255, 0, 255)


def write_ppm(path: str | os.PathLike, rgb: np.ndarray) -> None:
    img = np.ascontiguousarray(np.asarray(rgb, dtype=np.uint8))
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got {img.shape}")
    h, w, _ = img.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(img.tobytes())


def read_ppm(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P6" or int(parts[3]) != 255:
        raise ValueError(f"{path}: not an 8-bit P6 image")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4][: w * h * 3], dtype=np.uint8).reshape(h, w, 3)


def heat_colormap(heat: np.ndarray) -> np.ndarray:
    """Black -> red -> yellow -> white ramp for values in [0, 1]."""
    v = np.clip(np.asarray(heat, dtype=np.float64), 0.0, 1.0)
    r = np.clip(3 * v, 0, 1)
    g = np.clip(3 * v - 1, 0, 1)
    b = np.clip(3 * v - 2, 0, 1)
    return (np.stack([r, g, b], axis=-1) * 255).astype(np.uint8)


def heat_background(heatmaps: np.ndarray, width: int, height: int, stride: int) -> np.ndarray:
    """Max over heatmap channels, nearest-upsampled to image size, dimmed to half."""
    heat = np.asarray(heatmaps)
    if heat.ndim == 3:
        heat = heat.max(axis=0)
    up = np.repeat(np.repeat(heat, stride, axis=0), stride, axis=1)[:height, :width]
    canvas = np.zeros((height, width), dtype=np.float64)
    canvas[: up.shape[0], : up.shape[1]] = up
    return (heat_colormap(canvas).astype(np.float64) * 0.6).astype(np.uint8)


def _plot(img: np.ndarray, xs, ys, color) -> None:
    h, w, _ = img.shape
    xi = np.round(np.asarray(xs)).astype(np.int64)
    yi = np.round(np.asarray(ys)).astype(np.int64)
    keep = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
    img[yi[keep], xi[keep]] = color


def draw_polyline(img: np.ndarray, pts, color, thickness: int = 1) -> None:
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
    for a, b in zip(pts[:-1], pts[1:]):
        n = max(int(np.ceil(np.abs(b - a).max())) * 2, 1)
        t = np.linspace(0.0, 1.0, n + 1)
        xs = a[0] + (b[0] - a[0]) * t
        ys = a[1] + (b[1] - a[1]) * t
        for d in range(-(thickness // 2), thickness - thickness // 2):
            _plot(img, xs + d, ys, color)
            _plot(img, xs, ys + d, color)


def draw_box(img: np.ndarray, box, color, thickness: int = 1) -> None:
    x1, y1, x2, y2 = box.x1, box.y1, box.x2, box.y2
    corners = [(x1, y1), (x2, y1), (x2, y2), (x1, y2), (x1, y1)]
    draw_polyline(img, corners, color, thickness)


def render_overlay(frame, heatmaps=None, stride: int = 4, pred=None) -> np.ndarray:
    """Heatmap background with ground truth and (optionally) predictions drawn on top."""
    if heatmaps is not None:
        img = heat_background(heatmaps, frame.width, frame.height, stride)
    else:
        img = np.zeros((frame.height, frame.width, 3), dtype=np.uint8)
    for lane in frame.lanes:
        draw_polyline(img, lane.as_array(), LANE_GT_COLOR, 1)
    for box in frame.boxes:
        draw_box(img, box, GT_COLOR, 1)
    if pred is not None:
        polys = pred.polynomials or [None] * len(pred.lanes)
        for lane, poly in zip(pred.lanes, polys):
            pts = poly.to_polyline(2.0) if poly is not None else lane.as_array()
            draw_polyline(img, pts, LANE_PRED_COLOR, 2)
        for box in pred.boxes:
            draw_box(img, box, PRED_OCCLUDED_COLOR if box.occluded else PRED_COLOR, 2)
    return img
