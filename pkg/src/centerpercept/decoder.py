"""Network outputs -> detections and lane instances."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .clustering import ward_clusters
from .core import (
    NUM_DET_CLASSES,
    NUM_LANE_CLASSES,
    BoundingBoxAnn,
    GridSpec,
    LaneInstance,
)

DEFAULT_THRESHOLD = 0.25
DEFAULT_OCCL_THRESHOLD = 0.5
DEFAULT_CLUSTER_DIST = 10.0
DEFAULT_POLY_DEGREE = 3
# bias of the last heatmap conv; sigmoid(4.6) ~= 0.99 keeps early outputs saturated
HEATMAP_BIAS_INIT = 4.6


class Peak(NamedTuple):
    cell: tuple[int, int]
    score: float


@dataclass(frozen=True)
class LanePolynomial:
    """``x = sum(c_i * y**i)`` valid for ``y`` in ``[y_min, y_max]``."""

    class_id: int
    coefficients: tuple[float, ...]
    y_min: float
    y_max: float

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def __call__(self, y):
        return np.polynomial.polynomial.polyval(y, self.coefficients)

    def to_polyline(self, step: float = 1.0) -> np.ndarray:
        n = max(int(np.ceil((self.y_max - self.y_min) / step)), 1)
        ys = np.linspace(self.y_min, self.y_max, n + 1)
        return np.stack([self(ys), ys], axis=1)


class LaneDecodeResult(NamedTuple):
    lanes: list[LaneInstance]
    # aligned with ``lanes``; None where the cluster was too small to fit
    polynomials: list[LanePolynomial | None]


def _neighborhood_max(heat: np.ndarray) -> np.ndarray:
    """3x3 max over the last two axes, ignoring out-of-grid neighbours."""
    pad = [(0, 0)] * (heat.ndim - 2) + [(1, 1), (1, 1)]
    p = np.pad(heat, pad, mode="constant", constant_values=-np.inf)
    rows = np.maximum(np.maximum(p[..., :-2, :], p[..., 1:-1, :]), p[..., 2:, :])
    return np.maximum(np.maximum(rows[..., :-2], rows[..., 1:-1]), rows[..., 2:])


def peak_mask(heat: np.ndarray, threshold: float) -> np.ndarray:
    """Boolean mask of local maxima >= threshold; works on (H, W) or (C, H, W)."""
    heat = np.asarray(heat)
    return (heat >= threshold) & (heat >= _neighborhood_max(heat))


def _sorted_peaks(heat: np.ndarray, mask: np.ndarray) -> list[Peak]:
    ys, xs = np.nonzero(mask)
    scores = heat[ys, xs]
    order = np.lexsort((xs, ys, -scores))
    return [Peak((int(xs[i]), int(ys[i])), float(scores[i])) for i in order]


def extract_peaks(heatmap: np.ndarray, threshold: float = DEFAULT_THRESHOLD) -> list[Peak]:
    """Cells that reach the threshold and are >= all 8 neighbours, best first.

    Plateaus are kept whole: every cell tying its neighbourhood maximum counts.
    """
    heat = np.asarray(heatmap)
    if heat.ndim != 2:
        raise ValueError(f"expected a 2-D heatmap, got shape {heat.shape}")
    return _sorted_peaks(heat, peak_mask(heat, threshold))


def _check_spatial(name: str, arr: np.ndarray, channels: int, grid: GridSpec | None):
    if arr.ndim != 3 or arr.shape[0] != channels:
        raise ValueError(f"{name} must have shape ({channels}, H, W), got {arr.shape}")
    if grid is not None and arr.shape[1:] != grid.shape:
        raise ValueError(f"{name} spatial shape {arr.shape[1:]} does not match grid {grid.shape}")


def decode_boxes(
    det_heatmaps: np.ndarray,
    det_offsets: np.ndarray,
    occlusion: np.ndarray,
    grid: GridSpec,
    threshold: float = DEFAULT_THRESHOLD,
    occl_threshold: float = DEFAULT_OCCL_THRESHOLD,
) -> list[BoundingBoxAnn]:
    heat = np.asarray(det_heatmaps)
    off = np.asarray(det_offsets)
    occ = np.asarray(occlusion)
    if occ.ndim == 2:
        occ = occ[None]
    _check_spatial("det_heatmaps", heat, NUM_DET_CLASSES, grid)
    _check_spatial("det_offsets", off, 4, grid)
    _check_spatial("occlusion", occ, 1, grid)

    s = float(grid.stride)
    ks, ys, xs = np.nonzero(peak_mask(heat, threshold))
    if len(ks) == 0:
        return []
    scores = heat[ks, ys, xs].astype(np.float64)
    o = off[:, ys, xs].astype(np.float64)
    x1 = np.clip((xs - o[0]) * s, 0.0, grid.input_w)
    y1 = np.clip((ys - o[1]) * s, 0.0, grid.input_h)
    x2 = np.clip((xs - o[2]) * s, 0.0, grid.input_w)
    y2 = np.clip((ys - o[3]) * s, 0.0, grid.input_h)
    occluded = occ[0, ys, xs] >= occl_threshold

    order = np.lexsort((xs, ys, ks, -scores))
    out = []
    for i in order:
        if x1[i] >= x2[i] or y1[i] >= y2[i]:
            continue
        out.append(
            BoundingBoxAnn(
                float(x1[i]), float(y1[i]), float(x2[i]), float(y2[i]),
                int(ks[i]), bool(occluded[i]), float(scores[i]),
            )
        )
    return out


def cluster_by_midpoint(keypoints, votes, dist_threshold: float = DEFAULT_CLUSTER_DIST) -> np.ndarray:
    """Group keypoints by clustering the midpoints they vote for."""
    kps = np.asarray(keypoints, dtype=np.float64).reshape(-1, 2)
    v = np.asarray(votes, dtype=np.float64).reshape(-1, 2)
    if len(kps) != len(v):
        raise ValueError(f"{len(kps)} keypoints but {len(v)} votes")
    return ward_clusters(v, dist_threshold)


def fit_polynomial(points, degree: int = DEFAULT_POLY_DEGREE, class_id: int = 0) -> LanePolynomial:
    """Least-squares fit of x as a polynomial in y.

    The degree drops to ``n_distinct_y - 1`` when there are too few rows to pin it.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) < 2:
        raise ValueError("need at least 2 points to fit a lane")
    xs, ys = pts[:, 0], pts[:, 1]
    n_rows = len(np.unique(ys))
    if n_rows < 2:
        raise ValueError("degenerate fit: all points share the same y")
    deg = max(min(degree, n_rows - 1), 0)
    coef = np.polynomial.polynomial.polyfit(ys, xs, deg)
    return LanePolynomial(class_id, tuple(float(c) for c in coef), float(ys.min()), float(ys.max()))


def decode_lanes(
    lane_heatmaps: np.ndarray,
    lane_offsets: np.ndarray,
    grid: GridSpec,
    threshold: float = DEFAULT_THRESHOLD,
    dist_threshold: float = DEFAULT_CLUSTER_DIST,
    poly_degree: int = DEFAULT_POLY_DEGREE,
) -> LaneDecodeResult:
    heat = np.asarray(lane_heatmaps)
    off = np.asarray(lane_offsets)
    _check_spatial("lane_heatmaps", heat, NUM_LANE_CLASSES, grid)
    _check_spatial("lane_offsets", off, 2, grid)

    s = float(grid.stride)
    mask = peak_mask(heat, threshold)
    lanes: list[LaneInstance] = []
    polys: list[LanePolynomial | None] = []
    for c in range(NUM_LANE_CLASSES):
        ys, xs = np.nonzero(mask[c])
        if len(xs) == 0:
            continue
        kps = np.stack([xs, ys], axis=1).astype(np.float64)
        votes = kps + off[:, ys, xs].T.astype(np.float64)
        labels = cluster_by_midpoint(kps, votes, dist_threshold)
        for lab in range(int(labels.max()) + 1):
            members = kps[labels == lab] * s
            members = members[np.lexsort((members[:, 0], members[:, 1]))]
            lanes.append(LaneInstance(c, tuple(map(tuple, members))))
            if len(members) >= poly_degree + 1 and len(np.unique(members[:, 1])) >= 2:
                polys.append(fit_polynomial(members, poly_degree, c))
            else:
                polys.append(None)
    return LaneDecodeResult(lanes, polys)
