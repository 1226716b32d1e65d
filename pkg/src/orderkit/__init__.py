"""Occlusion and depth order tooling: data model, parsers, metrics, losses, baselines, statistics."""

from orderkit.errors import OrderError
from orderkit.model import (
    Depth,
    DepthRelation,
    EdgeTag,
    ImageAnnotation,
    InstanceRef,
    OcclusionMode,
    OcclusionRelation,
    OrderGraph,
    PairOrder,
    RangeKind,
    build_order_graph,
    canonicalize,
    check_depth_consistency,
    occlusion_mode_project,
)

__all__ = [
    "Depth",
    "DepthRelation",
    "EdgeTag",
    "ImageAnnotation",
    "InstanceRef",
    "OcclusionMode",
    "OcclusionRelation",
    "OrderError",
    "OrderGraph",
    "PairOrder",
    "RangeKind",
    "build_order_graph",
    "canonicalize",
    "check_depth_consistency",
    "occlusion_mode_project",
]

__version__ = "0.1.0"
