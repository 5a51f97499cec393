"""Reading and writing frame annotation / prediction JSON files."""

from __future__ import annotations

import json
import os
from functools import lru_cache
from importlib import resources

import jsonschema

from .core import (
    DET_CLASSES,
    LANE_CLASSES,
    SCENE_CLASSES,
    TIMEOFDAY_CLASSES,
    WEATHER_CLASSES,
    BoundingBoxAnn,
    Frame,
    LaneInstance,
    SceneTags,
)
from .decoder import LanePolynomial


class SchemaError(ValueError):
    """Invalid annotation file; the message names the line or JSON path."""


@lru_cache(maxsize=1)
def annotation_schema() -> dict:
    text = resources.files("centerpercept").joinpath("schema/annotation.schema.json").read_text()
    return json.loads(text)


def _path(parts) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def parse_frames(text: str, source: str = "<string>") -> list[Frame]:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"{source}:{e.lineno}:{e.colno} (byte {e.pos}): {e.msg}") from None
    try:
        jsonschema.validate(data, annotation_schema())
    except jsonschema.ValidationError as e:
        raise SchemaError(f"{source}: {_path(e.absolute_path)}: {e.message}") from None

    frames = []
    for i, raw in enumerate(data):
        where = f"{source}: $[{i}]"
        w, h = raw["width"], raw["height"]
        boxes = []
        for j, b in enumerate(raw.get("boxes", [])):
            box = BoundingBoxAnn(
                float(b["x1"]), float(b["y1"]), float(b["x2"]), float(b["y2"]),
                DET_CLASSES.index(b["category"]),
                bool(b.get("occluded", False)),
                float(b.get("score", 1.0)),
            )
            try:
                box.validate(w, h)
            except ValueError as e:
                raise SchemaError(f"{where}.boxes[{j}]: {e}") from None
            boxes.append(box)
        lanes, polys = [], []
        for j, ln in enumerate(raw.get("lanes", [])):
            lane = LaneInstance(LANE_CLASSES.index(ln["category"]), tuple(map(tuple, ln["points"])))
            try:
                lane.validate(w, h)
            except ValueError as e:
                raise SchemaError(f"{where}.lanes[{j}]: {e}") from None
            lanes.append(lane)
            poly = ln.get("poly")
            polys.append(
                None if poly is None else LanePolynomial(
                    lane.class_id, tuple(poly["coefficients"]), poly["y_min"], poly["y_max"]
                )
            )
        tags = None
        if "tags" in raw:
            t = raw["tags"]
            tags = SceneTags(
                WEATHER_CLASSES.index(t["weather"]),
                SCENE_CLASSES.index(t["scene"]),
                TIMEOFDAY_CLASSES.index(t["timeofday"]),
            )
        frames.append(Frame(raw["name"], w, h, boxes, lanes, tags, polys if any(polys) else None))
    names = [f.name for f in frames]
    if len(set(names)) != len(names):
        raise SchemaError(f"{source}: frame names must be unique")
    return frames


def load_frames(path: str | os.PathLike) -> list[Frame]:
    with open(path, encoding="utf-8") as f:
        return parse_frames(f.read(), str(path))


def frame_to_dict(frame: Frame, with_scores: bool = False) -> dict:
    out = {"name": frame.name, "width": frame.width, "height": frame.height}
    if frame.tags is not None:
        out["tags"] = {
            "weather": WEATHER_CLASSES[frame.tags.weather],
            "scene": SCENE_CLASSES[frame.tags.scene],
            "timeofday": TIMEOFDAY_CLASSES[frame.tags.time_of_day],
        }
    boxes = []
    for b in frame.boxes:
        d = {
            "x1": b.x1, "y1": b.y1, "x2": b.x2, "y2": b.y2,
            "category": DET_CLASSES[b.class_id], "occluded": b.occluded,
        }
        if with_scores:
            d["score"] = b.score
        boxes.append(d)
    out["boxes"] = boxes
    polys = frame.polynomials or [None] * len(frame.lanes)
    lanes = []
    for lane, poly in zip(frame.lanes, polys):
        d = {"category": LANE_CLASSES[lane.class_id], "points": [list(p) for p in lane.points]}
        if poly is not None:
            d["poly"] = {"coefficients": list(poly.coefficients), "y_min": poly.y_min, "y_max": poly.y_max}
        lanes.append(d)
    out["lanes"] = lanes
    return out


def dump_frames(frames, path: str | os.PathLike, with_scores: bool = False) -> None:
    data = [frame_to_dict(f, with_scores) for f in frames]
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=1)
        f.write("\n")
