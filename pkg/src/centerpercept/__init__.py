"""Encoding, decoding, losses, neck reference ops and metrics for center-based driving perception."""

from .core import (
    BoundingBoxAnn,
    Frame,
    GridSpec,
    LaneInstance,
    SceneTags,
    TargetBundle,
    image_to_grid,
)
from .decoder import decode_boxes, decode_lanes, extract_peaks
from .encoder import encode_detections, encode_frame, encode_lanes

__version__ = "0.1.0"

__all__ = [
    "BoundingBoxAnn",
    "Frame",
    "GridSpec",
    "LaneInstance",
    "SceneTags",
    "TargetBundle",
    "image_to_grid",
    "decode_boxes",
    "decode_lanes",
    "extract_peaks",
    "encode_detections",
    "encode_frame",
    "encode_lanes",
]
