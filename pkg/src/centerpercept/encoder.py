"""Ground truth -> output-space training targets."""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .core import (
    NUM_DET_CLASSES,
    NUM_LANE_CLASSES,
    BoundingBoxAnn,
    GridSpec,
    LaneInstance,
    TargetBundle,
    image_to_grid,
)

DEFAULT_MIN_IOU = 0.7
DEFAULT_LANE_SIGMA = 2.0
DEFAULT_LANE_PACE = 10.0
SIGMA_FLOOR = 0.5


@dataclass(frozen=True)
class GaussianSpec:
    cx: float
    cy: float
    sigma: float


def splat_gaussians(keypoints: Sequence[GaussianSpec], grid: GridSpec) -> np.ndarray:
    """Element-wise max of ``exp(-d^2 / sigma^2)`` bumps over the whole grid."""
    heat = np.zeros(grid.shape, dtype=np.float32)
    if not keypoints:
        return heat
    params = np.array([(kp.cx, kp.cy, kp.sigma) for kp in keypoints], dtype=np.float64)
    if not np.all(params[:, 2] > 0):
        raise ValueError(f"sigma must be positive, got {params[:, 2].min()}")
    ys = np.arange(grid.grid_h, dtype=np.float64)
    xs = np.arange(grid.grid_w, dtype=np.float64)
    inv = 1.0 / params[:, 2:3] ** 2
    # the bump factorises into exp(-dx^2/s^2) * exp(-dy^2/s^2)
    gx = np.exp(-((xs[None, :] - params[:, 0:1]) ** 2) * inv)
    gy = np.exp(-((ys[None, :] - params[:, 1:2]) ** 2) * inv)
    for i in range(0, len(params), 32):
        block = gy[i:i + 32, :, None] * gx[i:i + 32, None, :]
        np.maximum(heat, block.max(axis=0).astype(np.float32), out=heat)
    return heat


def corner_radius(box_w: float, box_h: float, min_iou: float) -> float:
    """Largest corner displacement keeping IoU >= ``min_iou`` (same units as the box).

    Smallest positive root over the three displacement patterns: both corners
    shifted together, both moved inwards, both moved outwards.
    """
    w, h, o = box_w, box_h, min_iou
    b = w + h
    # translated box: (w - r)(h - r) / (2wh - (w - r)(h - r)) = o
    r1 = (b - math.sqrt(b * b - 4.0 * w * h * (1.0 - o) / (1.0 + o))) / 2.0
    # shrunk box: (w - 2r)(h - 2r) / wh = o
    r2 = (2.0 * b - math.sqrt(4.0 * b * b - 16.0 * (1.0 - o) * w * h)) / 8.0
    # grown box: wh / ((w + 2r)(h + 2r)) = o
    r3 = (-2.0 * o * b + math.sqrt(4.0 * o * o * b * b + 16.0 * o * (1.0 - o) * w * h)) / (8.0 * o)
    return max(min(r1, r2, r3), 0.0)


def corner_sigma(box_w: float, box_h: float, stride: int, min_iou: float = DEFAULT_MIN_IOU) -> float:
    """Gaussian sigma in grid cells for a box of the given pixel size."""
    if not (box_w > 0 and box_h > 0):
        raise ValueError(f"degenerate box extent {box_w}x{box_h}")
    if not 0 < min_iou <= 1:
        raise ValueError(f"min_iou must be in (0, 1], got {min_iou}")
    if min_iou >= 1:
        return SIGMA_FLOOR
    r = corner_radius(box_w / stride, box_h / stride, min_iou)
    return max(r / 3.0, SIGMA_FLOOR)


def encode_detections(
    boxes: Sequence[BoundingBoxAnn],
    grid: GridSpec,
    min_iou: float = DEFAULT_MIN_IOU,
) -> dict[str, np.ndarray]:
    gh, gw = grid.shape
    s = float(grid.stride)
    per_class: list[list[GaussianSpec]] = [[] for _ in range(NUM_DET_CLASSES)]
    owner: dict[tuple[int, int], BoundingBoxAnn] = {}

    for box in boxes:
        box.validate()
        cx, cy = image_to_grid(box.center, grid)
        sigma = corner_sigma(box.width, box.height, grid.stride, min_iou)
        per_class[box.class_id].append(GaussianSpec(cx, cy, sigma))
        prev = owner.get((cx, cy))
        # larger box keeps the cell; ties keep the earlier box
        if prev is None or box.area > prev.area:
            owner[(cx, cy)] = box

    heat = np.zeros((NUM_DET_CLASSES, gh, gw), dtype=np.float32)
    for k, kps in enumerate(per_class):
        if kps:
            heat[k] = splat_gaussians(kps, grid)

    offsets = np.zeros((4, gh, gw), dtype=np.float32)
    occlusion = np.zeros((1, gh, gw), dtype=np.float32)
    mask = np.zeros((gh, gw), dtype=bool)
    for (cx, cy), box in owner.items():
        offsets[:, cy, cx] = (cx - box.x1 / s, cy - box.y1 / s, cx - box.x2 / s, cy - box.y2 / s)
        occlusion[0, cy, cx] = 1.0 if box.occluded else 0.0
        mask[cy, cx] = True

    return {
        "det_heatmaps": heat,
        "det_offsets": offsets,
        "occlusion": occlusion,
        "center_mask": mask,
    }


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) < 2:
        raise ValueError("need at least 2 points")
    return pts


def _arc_lengths(pts: np.ndarray) -> np.ndarray:
    seg = np.hypot(*np.diff(pts, axis=0).T)
    return np.concatenate([[0.0], np.cumsum(seg)])


def _interp_at(pts: np.ndarray, cum: np.ndarray, s: np.ndarray) -> np.ndarray:
    return np.stack([np.interp(s, cum, pts[:, 0]), np.interp(s, cum, pts[:, 1])], axis=1)


def resample_polyline(points, pace: float = DEFAULT_LANE_PACE) -> np.ndarray:
    """Samples every ``pace`` pixels of arc length, always keeping both endpoints."""
    if not pace > 0:
        raise ValueError(f"pace must be positive, got {pace}")
    pts = _as_points(points)
    cum = _arc_lengths(pts)
    total = cum[-1]
    if total == 0:
        raise ValueError("polyline has zero length")
    n_steps = int(math.floor(total / pace + 1e-9))
    s = np.arange(n_steps + 1, dtype=np.float64) * pace
    # drop an interior sample that would duplicate the endpoint
    if total - s[-1] <= 1e-9 * max(total, 1.0):
        s = s[:-1]
    s = np.append(s, total)
    return _interp_at(pts, cum, s)


def resample_count(points, n: int) -> np.ndarray:
    """``n`` arc-length-uniform samples including both endpoints."""
    pts = _as_points(points)
    cum = _arc_lengths(pts)
    if cum[-1] == 0:
        raise ValueError("polyline has zero length")
    return _interp_at(pts, cum, np.linspace(0.0, cum[-1], max(n, 2)))


def flatten_bezier(control_points, steps: int = 64) -> np.ndarray:
    """Flatten a cubic Bezier (4 control points, or 3k+1 for a chain) into a polyline."""
    ctrl = np.asarray(control_points, dtype=np.float64).reshape(-1, 2)
    if len(ctrl) < 4 or (len(ctrl) - 1) % 3:
        raise ValueError("cubic Bezier needs 3k+1 control points, k >= 1")
    t = np.linspace(0.0, 1.0, steps + 1)[:, None]
    out = []
    for i in range(0, len(ctrl) - 1, 3):
        p0, p1, p2, p3 = ctrl[i:i + 4]
        seg = (
            (1 - t) ** 3 * p0
            + 3 * (1 - t) ** 2 * t * p1
            + 3 * (1 - t) * t ** 2 * p2
            + t ** 3 * p3
        )
        out.append(seg if not out else seg[1:])
    return np.concatenate(out)


def _orient_down(pts: np.ndarray) -> np.ndarray:
    return pts[::-1] if pts[0, 1] > pts[-1, 1] else pts


def merge_lane_edges(edge_a, edge_b, pace: float = DEFAULT_LANE_PACE) -> np.ndarray:
    """Center line of a road marking annotated as its two edges."""
    a = _orient_down(_as_points(edge_a))
    b = _orient_down(_as_points(edge_b))
    n = max(len(resample_polyline(a, pace)), len(resample_polyline(b, pace)))
    ra = resample_count(a, n)
    rb = resample_count(b, n)
    return (ra + rb) / 2.0


def lane_keypoints(
    lane: LaneInstance, grid: GridSpec, pace: float = DEFAULT_LANE_PACE
) -> list[tuple[int, int]]:
    """Output-space keypoints of one lane, in order, without repeated cells."""
    seen = set()
    cells = []
    for p in resample_polyline(lane.points, pace):
        cell = image_to_grid((float(p[0]), float(p[1])), grid)
        if cell not in seen:
            seen.add(cell)
            cells.append(cell)
    return cells


def lane_midpoint_index(n: int) -> int:
    return n // 2


def encode_lanes(
    lanes: Sequence[LaneInstance],
    grid: GridSpec,
    sigma: float = DEFAULT_LANE_SIGMA,
    pace: float = DEFAULT_LANE_PACE,
) -> dict[str, np.ndarray]:
    gh, gw = grid.shape
    per_class: list[list[GaussianSpec]] = [[] for _ in range(NUM_LANE_CLASSES)]
    offsets = np.zeros((2, gh, gw), dtype=np.float32)
    mask = np.zeros((gh, gw), dtype=bool)

    for lane in lanes:
        if not 0 <= lane.class_id < NUM_LANE_CLASSES:
            raise ValueError(f"lane class_id {lane.class_id} outside [0, {NUM_LANE_CLASSES})")
        kps = lane_keypoints(lane, grid, pace)
        mx, my = kps[lane_midpoint_index(len(kps))]
        for x, y in kps:
            per_class[lane.class_id].append(GaussianSpec(x, y, sigma))
            offsets[:, y, x] = (mx - x, my - y)
            mask[y, x] = True

    heat = np.zeros((NUM_LANE_CLASSES, gh, gw), dtype=np.float32)
    for c, kps in enumerate(per_class):
        if kps:
            heat[c] = splat_gaussians(kps, grid)
    return {"lane_heatmaps": heat, "lane_offsets": offsets, "lane_kp_mask": mask}


def encode_frame(
    boxes: Sequence[BoundingBoxAnn],
    lanes: Sequence[LaneInstance],
    grid: GridSpec,
    *,
    min_iou: float = DEFAULT_MIN_IOU,
    lane_sigma: float = DEFAULT_LANE_SIGMA,
    lane_pace: float = DEFAULT_LANE_PACE,
    tags=None,
) -> TargetBundle:
    det = encode_detections(boxes, grid, min_iou)
    lane = encode_lanes(lanes, grid, lane_sigma, lane_pace)
    return TargetBundle(**det, **lane, tags=tags)
