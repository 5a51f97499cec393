"""Seeded synthetic scenes for round-trip and property testing.

Randomness comes from numpy's PCG64 bit generator (O'Neill's permuted
congruential generator, 128-bit state), so a seed reproduces the same scene on
every platform.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .core import (
    NUM_DET_CLASSES,
    NUM_LANE_CLASSES,
    NUM_SCENE,
    NUM_TIMEOFDAY,
    NUM_WEATHER,
    BoundingBoxAnn,
    Frame,
    GridSpec,
    LaneInstance,
    SceneTags,
    TargetBundle,
    image_to_grid,
)
from .encoder import DEFAULT_LANE_PACE, encode_frame, lane_keypoints, lane_midpoint_index


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SceneConfig:
    seed: int = 0
    n_boxes: tuple[int, int] = (0, 12)
    n_lanes: tuple[int, int] = (0, 3)
    width: int = 640
    height: int = 320
    stride: int = 4
    # Chebyshev distance between rounded box centers, in grid cells
    min_center_sep: int = 1
    box_size: tuple[float, float] = (8.0, 200.0)
    occluded_prob: float = 0.5
    lane_degree: tuple[int, int] = (1, 3)
    # Euclidean distance between lane midpoint keypoints, in grid cells
    midpoint_sep: float = 40.0
    # closest approach between keypoints of two different lanes, in grid cells
    lane_gap: float = 3.0
    lane_pace: float = DEFAULT_LANE_PACE
    max_retries: int = 200

    def __post_init__(self):
        for name in ("n_boxes", "n_lanes", "box_size", "lane_degree"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise ValueError(f"{name} range {lo}..{hi} is empty or negative")
        if self.min_center_sep < 0 or self.midpoint_sep < 0 or self.lane_gap < 0:
            raise ValueError("separations must be non-negative")
        if self.box_size[0] <= 0:
            raise ValueError("box sizes must be positive")
        GridSpec(self.width, self.height, self.stride)

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.width, self.height, self.stride)

    @classmethod
    def from_dict(cls, d: dict) -> SceneConfig:
        d = dict(d)
        for key in ("n_boxes", "n_lanes", "box_size", "lane_degree"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


Scene = Frame


def _boxes(rng: np.random.Generator, cfg: SceneConfig) -> list[BoundingBoxAnn]:
    grid = cfg.grid
    n = int(rng.integers(cfg.n_boxes[0], cfg.n_boxes[1] + 1))
    lo, hi = cfg.box_size
    boxes: list[BoundingBoxAnn] = []
    cells: list[tuple[int, int]] = []
    for _ in range(n):
        for _attempt in range(cfg.max_retries):
            w = float(rng.uniform(lo, min(hi, cfg.width)))
            h = float(rng.uniform(lo, min(hi, cfg.height)))
            x1 = float(rng.uniform(0.0, cfg.width - w))
            y1 = float(rng.uniform(0.0, cfg.height - h))
            box = BoundingBoxAnn(
                x1, y1, x1 + w, y1 + h,
                int(rng.integers(NUM_DET_CLASSES)),
                bool(rng.random() < cfg.occluded_prob),
            )
            cell = image_to_grid(box.center, grid)
            if cfg.min_center_sep == 0 or all(
                max(abs(cell[0] - c[0]), abs(cell[1] - c[1])) >= cfg.min_center_sep for c in cells
            ):
                boxes.append(box)
                cells.append(cell)
                break
        else:
            raise GenerationError(
                f"could not place box {len(boxes) + 1}/{n} after {cfg.max_retries} tries"
            )
    return boxes


def _random_lane(rng: np.random.Generator, cfg: SceneConfig) -> LaneInstance | None:
    deg = int(rng.integers(cfg.lane_degree[0], cfg.lane_degree[1] + 1))
    y0 = float(rng.uniform(0.0, cfg.height / 3.0))
    y1 = float(rng.uniform(2.0 * cfg.height / 3.0, cfg.height))
    base = float(rng.uniform(0.05 * cfg.width, 0.95 * cfg.width))
    slope = float(rng.uniform(-0.6, 0.6))
    ys_nodes = np.linspace(y0, y1, deg + 1)
    xs_nodes = base + slope * (ys_nodes - y0)
    if deg > 1:
        xs_nodes = xs_nodes + rng.uniform(-0.04, 0.04, deg + 1) * cfg.width
    coef = np.polynomial.polynomial.polyfit(ys_nodes, xs_nodes, deg)
    ys = np.append(np.arange(y0, y1, 4.0), y1)
    xs = np.polynomial.polynomial.polyval(ys, coef)
    if xs.min() < 0 or xs.max() > cfg.width:
        return None
    return LaneInstance(int(rng.integers(NUM_LANE_CLASSES)), tuple(zip(xs.tolist(), ys.tolist())))


def _place_lanes(rng: np.random.Generator, cfg: SceneConfig, n: int) -> list[LaneInstance] | None:
    grid = cfg.grid
    lanes: list[LaneInstance] = []
    mids: list[tuple[int, int]] = []
    placed: list[np.ndarray] = []
    for _ in range(n):
        for _attempt in range(cfg.max_retries):
            lane = _random_lane(rng, cfg)
            if lane is None:
                continue
            kps = lane_keypoints(lane, grid, cfg.lane_pace)
            mid = kps[lane_midpoint_index(len(kps))]
            if any(np.hypot(mid[0] - m[0], mid[1] - m[1]) < cfg.midpoint_sep for m in mids):
                continue
            arr = np.asarray(kps, dtype=np.float64)
            if cfg.lane_gap > 0 and any(
                np.sqrt(((arr[:, None] - other[None]) ** 2).sum(-1)).min() < cfg.lane_gap
                for other in placed
            ):
                continue
            lanes.append(lane)
            mids.append(mid)
            placed.append(arr)
            break
        else:
            return None
    return lanes


def _lanes(rng: np.random.Generator, cfg: SceneConfig) -> list[LaneInstance]:
    n = int(rng.integers(cfg.n_lanes[0], cfg.n_lanes[1] + 1))
    # early lanes can block later ones, so restart the whole layout a few times
    for _restart in range(10):
        lanes = _place_lanes(rng, cfg, n)
        if lanes is not None:
            return lanes
    raise GenerationError(f"could not place {n} lanes within the separation constraints")


def generate_scene(cfg: SceneConfig, name: str | None = None) -> Scene:
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    boxes = _boxes(rng, cfg)
    lanes = _lanes(rng, cfg)
    tags = SceneTags(
        int(rng.integers(NUM_WEATHER)), int(rng.integers(NUM_SCENE)), int(rng.integers(NUM_TIMEOFDAY))
    )
    return Scene(name or f"synth_{cfg.seed:08d}", cfg.width, cfg.height, boxes, lanes, tags)


def generate_scenes(cfg: SceneConfig, n: int) -> list[Scene]:
    """``n`` scenes seeded ``cfg.seed, cfg.seed + 1, ...``."""
    return [generate_scene(replace(cfg, seed=cfg.seed + i)) for i in range(n)]


def ideal_outputs(scene: Scene, grid: GridSpec | None = None, **encode_kwargs) -> TargetBundle:
    """What a perfect network would emit for ``scene``: the encoder targets."""
    grid = grid or GridSpec(scene.width, scene.height)
    return encode_frame(scene.boxes, scene.lanes, grid, tags=scene.tags, **encode_kwargs)
