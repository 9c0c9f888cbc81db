"""Synthetic seed-image datasets plus tools to score detectors and measure seeds."""

__version__ = "0.1.0"

from .geometry import (  # noqa: E402
    AlignedBox, RotatedRect, bbox_iou, connected_components, convex_hull,
    mask_iou, min_area_rect, shoelace_area, trace_boundary,
)
