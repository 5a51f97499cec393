"""Domain types and image/grid coordinate conventions.

Tensors are plain ``numpy`` float32 arrays in channel-major (C, H, W) row-major
order. Image-space coordinates are pixels with ``x`` to the right and ``y``
down; grid coordinates are integer cell indices ``(gx, gy)`` where cell ``gx``
covers image x in ``[(gx - 0.5) * S, (gx + 0.5) * S)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

NUM_DET_CLASSES = 10
NUM_LANE_CLASSES = 8
NUM_WEATHER = 7
NUM_SCENE = 7
NUM_TIMEOFDAY = 4

DET_CLASSES = (
    "pedestrian", "rider", "car", "truck", "bus",
    "train", "motorcycle", "bicycle", "traffic light", "traffic sign",
)
LANE_CLASSES = (
    "crosswalk", "double other", "double white", "double yellow",
    "road curb", "single other", "single white", "single yellow",
)
WEATHER_CLASSES = (
    "rainy", "snowy", "clear", "overcast", "undefined", "partly cloudy", "foggy",
)
SCENE_CLASSES = (
    "tunnel", "residential", "parking lot", "undefined", "city street",
    "gas stations", "highway",
)
TIMEOFDAY_CLASSES = ("daytime", "night", "dawn/dusk", "undefined")


@dataclass(frozen=True)
class GridSpec:
    input_w: int
    input_h: int
    stride: int = 4

    def __post_init__(self):
        if self.stride <= 0:
            raise ValueError(f"stride must be positive, got {self.stride}")
        if self.input_w % self.stride or self.input_h % self.stride:
            raise ValueError(
                f"stride {self.stride} must divide input size {self.input_w}x{self.input_h}"
            )
        if self.input_w < self.stride or self.input_h < self.stride:
            raise ValueError("grid must have at least one cell per axis")

    @property
    def grid_w(self) -> int:
        return self.input_w // self.stride

    @property
    def grid_h(self) -> int:
        return self.input_h // self.stride

    @property
    def shape(self) -> tuple[int, int]:
        """(grid_h, grid_w), the spatial shape of every output tensor."""
        return self.grid_h, self.grid_w

    @classmethod
    def from_grid(cls, grid_h: int, grid_w: int, stride: int = 4) -> GridSpec:
        return cls(grid_w * stride, grid_h * stride, stride)


@dataclass(frozen=True)
class BoundingBoxAnn:
    x1: float
    y1: float
    x2: float
    y2: float
    class_id: int
    occluded: bool = False
    score: float = 1.0

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return max(self.x2 - self.x1, 0.0) * max(self.y2 - self.y1, 0.0)

    @property
    def center(self) -> tuple[float, float]:
        return (self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0

    def validate(self, width: float | None = None, height: float | None = None) -> None:
        if not 0 <= self.class_id < NUM_DET_CLASSES:
            raise ValueError(f"box class_id {self.class_id} outside [0, {NUM_DET_CLASSES})")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(f"degenerate box ({self.x1}, {self.y1}, {self.x2}, {self.y2})")
        if width is not None and (self.x1 < 0 or self.x2 > width):
            raise ValueError(f"box x-range [{self.x1}, {self.x2}] outside image width {width}")
        if height is not None and (self.y1 < 0 or self.y2 > height):
            raise ValueError(f"box y-range [{self.y1}, {self.y2}] outside image height {height}")


@dataclass(frozen=True)
class LaneInstance:
    class_id: int
    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "points", tuple((float(x), float(y)) for x, y in self.points)
        )

    def validate(self, width: float | None = None, height: float | None = None) -> None:
        if not 0 <= self.class_id < NUM_LANE_CLASSES:
            raise ValueError(f"lane class_id {self.class_id} outside [0, {NUM_LANE_CLASSES})")
        if len(self.points) < 2:
            raise ValueError("a lane needs at least 2 points")
        if width is not None and height is not None:
            for x, y in self.points:
                if not (0 <= x <= width and 0 <= y <= height):
                    raise ValueError(f"lane point ({x}, {y}) outside {width}x{height} image")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=np.float64).reshape(-1, 2)


@dataclass(frozen=True)
class SceneTags:
    weather: int
    scene: int
    time_of_day: int

    def validate(self) -> None:
        for name, value, n in (
            ("weather", self.weather, NUM_WEATHER),
            ("scene", self.scene, NUM_SCENE),
            ("time_of_day", self.time_of_day, NUM_TIMEOFDAY),
        ):
            if not 0 <= value < n:
                raise ValueError(f"{name} label {value} outside [0, {n})")


@dataclass
class TargetBundle:
    """All output-space targets for one frame.

    Spatial tensors are ``(C, grid_h, grid_w)`` float32, masks ``(grid_h, grid_w)`` bool.
    """

    det_heatmaps: np.ndarray
    det_offsets: np.ndarray
    occlusion: np.ndarray
    center_mask: np.ndarray
    lane_heatmaps: np.ndarray
    lane_offsets: np.ndarray
    lane_kp_mask: np.ndarray
    tags: SceneTags | None = field(default=None)

    # names used for the per-head tensor files
    HEADS = (
        "det_heatmaps", "det_offsets", "occlusion", "center_mask",
        "lane_heatmaps", "lane_offsets", "lane_kp_mask",
    )

    def heads(self) -> dict[str, np.ndarray]:
        """Every head as a float32 array; masks become 0/1 values."""
        return {name: np.asarray(getattr(self, name), dtype=np.float32) for name in self.HEADS}


@dataclass
class Frame:
    """One annotated (or predicted) image: geometry only, pixels are never loaded."""

    name: str
    width: int
    height: int
    boxes: list[BoundingBoxAnn] = field(default_factory=list)
    lanes: list[LaneInstance] = field(default_factory=list)
    tags: SceneTags | None = None
    # fitted curves aligned with ``lanes`` (None where absent); predictions only
    polynomials: list | None = None


def round_half_away(v: float) -> int:
    return int(math.copysign(math.floor(abs(v) + 0.5), v))


def image_to_grid(p: tuple[float, float], grid: GridSpec) -> tuple[int, int]:
    """Map an image-space point to the nearest grid cell, clamped into the grid."""
    gx = round_half_away(p[0] / grid.stride)
    gy = round_half_away(p[1] / grid.stride)
    gx = min(max(gx, 0), grid.grid_w - 1)
    gy = min(max(gy, 0), grid.grid_h - 1)
    return gx, gy


def grid_to_image(cell: tuple[float, float], grid: GridSpec) -> tuple[float, float]:
    return cell[0] * grid.stride, cell[1] * grid.stride
