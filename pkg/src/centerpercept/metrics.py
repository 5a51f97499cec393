"""Evaluation: box AP, occlusion accuracy over optimal matches, lane mask IoU, tag F1."""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import NUM_DET_CLASSES, BoundingBoxAnn, LaneInstance

DEFAULT_IOU_THRESH = 0.5
# lane stroke width at 1280 px image width; scaled linearly with the image width
LANE_WIDTH_AT_1280 = 8.0


def iou_box(a: BoundingBoxAnn, b: BoundingBoxAnn) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


def iou_matrix(a: Sequence[BoundingBoxAnn], b: Sequence[BoundingBoxAnn]) -> np.ndarray:
    if not a or not b:
        return np.zeros((len(a), len(b)))
    ba = np.array([(x.x1, x.y1, x.x2, x.y2) for x in a], dtype=np.float64)
    bb = np.array([(x.x1, x.y1, x.x2, x.y2) for x in b], dtype=np.float64)
    iw = np.clip(np.minimum(ba[:, None, 2], bb[None, :, 2]) - np.maximum(ba[:, None, 0], bb[None, :, 0]), 0, None)
    ih = np.clip(np.minimum(ba[:, None, 3], bb[None, :, 3]) - np.maximum(ba[:, None, 1], bb[None, :, 1]), 0, None)
    inter = iw * ih
    area_a = (ba[:, 2] - ba[:, 0]) * (ba[:, 3] - ba[:, 1])
    area_b = (bb[:, 2] - bb[:, 0]) * (bb[:, 3] - bb[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    return np.divide(inter, union, out=np.zeros_like(inter), where=union > 0)


# ---------------------------------------------------------------- average precision


def greedy_match(
    preds: Sequence[BoundingBoxAnn], gts: Sequence[BoundingBoxAnn], iou_thresh: float
) -> np.ndarray:
    """TP flag per prediction, visiting predictions by descending score.

    Each prediction takes the unmatched ground truth with the highest IoU, if
    that IoU reaches the threshold. Equal scores keep input order.
    """
    order = sorted(range(len(preds)), key=lambda i: -preds[i].score)
    tp = np.zeros(len(preds), dtype=bool)
    if not gts:
        return tp
    ious = iou_matrix(preds, gts)
    taken = np.zeros(len(gts), dtype=bool)
    for i in order:
        cand = np.where(taken, -1.0, ious[i])
        j = int(np.argmax(cand))
        if cand[j] >= iou_thresh:
            taken[j] = True
            tp[i] = True
    return tp


def pr_curve(scores, tp, n_gt: int) -> tuple[np.ndarray, np.ndarray]:
    """(recall, precision) at every distinct score threshold, prefixed by (0, 1)."""
    scores = np.asarray(scores, dtype=np.float64)
    tp = np.asarray(tp, dtype=bool)
    if len(scores) == 0 or n_gt == 0:
        return np.array([0.0]), np.array([1.0])
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    ctp = np.cumsum(tp[order])
    # last index of each run of equal scores
    ends = np.flatnonzero(np.append(s[1:] != s[:-1], True))
    n_tp = ctp[ends].astype(np.float64)
    n_det = (ends + 1).astype(np.float64)
    return np.concatenate([[0.0], n_tp / n_gt]), np.concatenate([[1.0], n_tp / n_det])


def ap_from_ranked(scores, tp, n_gt: int) -> float:
    """All-point interpolated AP. Tied scores form a single operating point."""
    if n_gt == 0:
        return float("nan")
    if len(scores) == 0:
        return 0.0
    recall, precision = pr_curve(scores, tp, n_gt)
    # precision envelope: best precision at any recall >= r
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    return float(np.sum((recall[1:] - recall[:-1]) * envelope[1:]))


@dataclass
class APResult:
    per_class: np.ndarray
    map: float

    def as_dict(self) -> dict:
        return {
            "map50": self.map,
            "per_class_ap": [None if math.isnan(v) else float(v) for v in self.per_class],
        }


@dataclass
class DetectionAccumulator:
    """Per-class ranked (score, tp) lists and GT counts; merge is associative and commutative."""

    iou_thresh: float = DEFAULT_IOU_THRESH
    n_classes: int = NUM_DET_CLASSES
    scores: list[list[float]] = field(default_factory=list)
    tps: list[list[bool]] = field(default_factory=list)
    n_gt: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.scores:
            self.scores = [[] for _ in range(self.n_classes)]
            self.tps = [[] for _ in range(self.n_classes)]
            self.n_gt = [0] * self.n_classes

    def add(self, preds: Sequence[BoundingBoxAnn], gts: Sequence[BoundingBoxAnn]) -> None:
        for k in range(self.n_classes):
            p = [b for b in preds if b.class_id == k]
            g = [b for b in gts if b.class_id == k]
            self.n_gt[k] += len(g)
            if p:
                self.scores[k].extend(b.score for b in p)
                self.tps[k].extend(greedy_match(p, g, self.iou_thresh).tolist())

    def merge(self, other: DetectionAccumulator) -> DetectionAccumulator:
        out = DetectionAccumulator(self.iou_thresh, self.n_classes)
        for k in range(self.n_classes):
            out.scores[k] = self.scores[k] + other.scores[k]
            out.tps[k] = self.tps[k] + other.tps[k]
            out.n_gt[k] = self.n_gt[k] + other.n_gt[k]
        return out

    def pr_curve(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        return pr_curve(self.scores[k], self.tps[k], self.n_gt[k])

    def result(self) -> APResult:
        per = np.array(
            [ap_from_ranked(self.scores[k], self.tps[k], self.n_gt[k]) for k in range(self.n_classes)]
        )
        valid = ~np.isnan(per)
        return APResult(per, float(per[valid].mean()) if valid.any() else float("nan"))


def average_precision(
    preds: Sequence[BoundingBoxAnn],
    gts: Sequence[BoundingBoxAnn],
    iou_thresh: float = DEFAULT_IOU_THRESH,
    n_classes: int = NUM_DET_CLASSES,
) -> APResult:
    """Per-class AP and their mean over classes with at least one ground truth."""
    acc = DetectionAccumulator(iou_thresh, n_classes)
    acc.add(preds, gts)
    return acc.result()


# ---------------------------------------------------------------- matching / occlusion


def min_weight_matching(cost) -> list[tuple[int, int]]:
    """Minimum total-cost assignment on a (possibly rectangular) cost matrix."""
    c = np.asarray(cost, dtype=np.float64)
    if c.size == 0:
        return []
    rows, cols = linear_sum_assignment(c)
    return [(int(r), int(k)) for r, k in zip(rows, cols)]


def match_min_weight(
    preds: Sequence[BoundingBoxAnn],
    gts: Sequence[BoundingBoxAnn],
    iou_floor: float = DEFAULT_IOU_THRESH,
) -> list[tuple[int, int]]:
    """(pred, gt) index pairs minimising total ``1 - IoU``; weak pairs dropped after."""
    if not preds or not gts:
        return []
    ious = iou_matrix(preds, gts)
    return [(i, j) for i, j in min_weight_matching(1.0 - ious) if ious[i, j] >= iou_floor]


def occlusion_accuracy(matches, pred_flags, gt_flags) -> float:
    """Share of matched pairs whose occlusion flags agree; 1.0 when nothing matched."""
    if not matches:
        return 1.0
    agree = sum(bool(pred_flags[i]) == bool(gt_flags[j]) for i, j in matches)
    return agree / len(matches)


@dataclass
class OcclusionAccumulator:
    agree: int = 0
    matched: int = 0

    def add(self, preds, gts, iou_floor: float = DEFAULT_IOU_THRESH, per_class: bool = True) -> None:
        groups = range(NUM_DET_CLASSES) if per_class else [None]
        for k in groups:
            p = [b for b in preds if k is None or b.class_id == k]
            g = [b for b in gts if k is None or b.class_id == k]
            m = match_min_weight(p, g, iou_floor)
            self.matched += len(m)
            self.agree += sum(p[i].occluded == g[j].occluded for i, j in m)

    def merge(self, other: OcclusionAccumulator) -> OcclusionAccumulator:
        return OcclusionAccumulator(self.agree + other.agree, self.matched + other.matched)

    @property
    def accuracy(self) -> float:
        return self.agree / self.matched if self.matched else 1.0


# ---------------------------------------------------------------- lanes


def default_lane_width(image_w: int) -> int:
    return max(int(round(LANE_WIDTH_AT_1280 * image_w / 1280.0)), 1)


def _dense_polyline(pts: np.ndarray, step: float = 0.25) -> np.ndarray:
    if len(pts) == 1:
        return pts
    out = [pts[:1]]
    for a, b in zip(pts[:-1], pts[1:]):
        n = max(int(np.ceil(np.hypot(*(b - a)) / step)), 1)
        t = np.arange(1, n + 1, dtype=np.float64)[:, None] / n
        out.append(a + (b - a) * t)
    return np.concatenate(out)


def rasterize_lanes(lanes, width: int, height: int, line_width: int) -> np.ndarray:
    """Binary (height, width) mask of lanes drawn with a square brush.

    ``lanes`` holds LaneInstance, LanePolynomial, or (N, 2) point arrays. A brush
    at (x, y) covers columns ``floor(x - w/2 + 0.5) .. + w - 1`` and likewise rows.
    """
    if line_width <= 0:
        raise ValueError(f"line width must be positive, got {line_width}")
    mask = np.zeros((height, width), dtype=bool)
    offs = np.arange(line_width)
    for lane in lanes:
        if isinstance(lane, LaneInstance):
            pts = lane.as_array()
        elif hasattr(lane, "to_polyline"):
            pts = lane.to_polyline(1.0)
        else:
            pts = np.asarray(lane, dtype=np.float64).reshape(-1, 2)
        if len(pts) == 0:
            continue
        dense = _dense_polyline(pts)
        starts = np.floor(dense - line_width / 2.0 + 0.5).astype(np.int64)
        starts = np.unique(starts, axis=0)
        cols = (starts[:, 0:1] + offs[None, :])
        rows = (starts[:, 1:2] + offs[None, :])
        cc = np.broadcast_to(cols[:, None, :], (len(starts), line_width, line_width)).reshape(-1)
        rr = np.broadcast_to(rows[:, :, None], (len(starts), line_width, line_width)).reshape(-1)
        keep = (cc >= 0) & (cc < width) & (rr >= 0) & (rr < height)
        mask[rr[keep], cc[keep]] = True
    return mask


def lane_mask_iou(pred_mask, gt_mask) -> float:
    a = np.asarray(pred_mask, dtype=bool)
    b = np.asarray(gt_mask, dtype=bool)
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


# ---------------------------------------------------------------- tagging


def confusion_matrix(preds, gts, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    for p, g in zip(preds, gts):
        cm[g, p] += 1
    return cm


def f1_multiclass(preds, gts, n_classes: int) -> float:
    """Macro F1 over classes that occur in the ground truth."""
    preds = list(preds)
    gts = list(gts)
    if len(preds) != len(gts):
        raise ValueError("need one prediction per ground-truth label")
    if not gts:
        return float("nan")
    cm = confusion_matrix(preds, gts, n_classes)
    tp = np.diag(cm).astype(np.float64)
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    scores = []
    for k in np.flatnonzero(support):
        p = tp[k] / predicted[k] if predicted[k] else 0.0
        r = tp[k] / support[k]
        scores.append(2 * p * r / (p + r) if p + r > 0 else 0.0)
    return float(np.mean(scores))


# ---------------------------------------------------------------- report


@dataclass
class EvalReport:
    map50: float
    per_class_ap: list[float | None]
    occl_accuracy: float
    occl_matches: int
    lane_iou: float | None
    lane_line_width: int | None
    f1_weather: float | None
    f1_scene: float | None
    f1_tod: float | None
    n_frames: int

    def to_dict(self) -> dict:
        out = asdict(self)
        for key, value in out.items():
            if isinstance(value, float) and math.isnan(value):
                out[key] = None
        return out


def evaluate_frames(pred_frames, gt_frames, line_width: int | None = None, iou_thresh: float = DEFAULT_IOU_THRESH):
    """Score predictions against ground truth, pairing frames by name.

    Returns ``(EvalReport, DetectionAccumulator)``; the accumulator keeps the
    ranked detections for PR plots.
    """
    preds = {f.name: f for f in pred_frames}
    missing = [g.name for g in gt_frames if g.name not in preds]
    if missing:
        raise ValueError(f"no predictions for frames: {', '.join(missing[:5])}")
    det = DetectionAccumulator(iou_thresh)
    occl = OcclusionAccumulator()
    lane_ious = []
    tag_pairs = {"weather": ([], [], 7), "scene": ([], [], 7), "tod": ([], [], 4)}
    widths = set()
    for gt in gt_frames:
        pr = preds[gt.name]
        det.add(pr.boxes, gt.boxes)
        occl.add(pr.boxes, gt.boxes, iou_thresh)
        lw = line_width or default_lane_width(gt.width)
        widths.add(lw)
        polys = pr.polynomials or [None] * len(pr.lanes)
        drawn = [p if p is not None else lane for lane, p in zip(pr.lanes, polys)]
        pm = rasterize_lanes(drawn, gt.width, gt.height, lw)
        gm = rasterize_lanes(gt.lanes, gt.width, gt.height, lw)
        lane_ious.append(lane_mask_iou(pm, gm))
        if gt.tags is not None and pr.tags is not None:
            for key, attr in (("weather", "weather"), ("scene", "scene"), ("tod", "time_of_day")):
                tag_pairs[key][0].append(getattr(pr.tags, attr))
                tag_pairs[key][1].append(getattr(gt.tags, attr))

    def f1(key):
        p, g, n = tag_pairs[key]
        return f1_multiclass(p, g, n) if g else None

    ap = det.result()
    report = EvalReport(
        map50=ap.map,
        per_class_ap=ap.as_dict()["per_class_ap"],
        occl_accuracy=occl.accuracy,
        occl_matches=occl.matched,
        lane_iou=float(np.mean(lane_ious)) if lane_ious else None,
        lane_line_width=widths.pop() if len(widths) == 1 else None,
        f1_weather=f1("weather"),
        f1_scene=f1("scene"),
        f1_tod=f1("tod"),
        n_frames=len(gt_frames),
    )
    return report, det
