"""Panoramic cubic-field engine.

Represents a 360-degree scene as six cube-face multi-plane images sharing
one inverse-depth plane set, fit to posed panoramas by differentiable volume
rendering, and synthesizes novel-view panoramas, cubemaps and depth maps.

The commonly used entry points are re-exported here; the submodules hold the
full surface (geometry, rendering, losses, optimizer, blending, metrics, io,
synthetic, service, cli).
"""

from .blending import BlendWeights, blend_pipeline, load_blend_weights, save_blend_weights
from .errors import DataError, NumericError, UsageError
from .field import (
    CubicField,
    DepthPlaneSet,
    Mpi,
    field_from_stack,
    load_field,
    make_depth_planes,
    save_field,
)
from .geometry import FACES, cubemap_to_erp, erp_to_cubemap
from .losses import LossWeights, total_loss
from .metrics import DepthEvalConfig, DepthMetrics, depth_metrics, metrics_report
from .optimizer import FitConfig, FitResult, PosedView, extract_depth, fit, loss_gradient
from .rendering import (
    Pose,
    RenderOutput,
    composite,
    ray_cube_intersect,
    render_novel_cubemap,
    render_novel_panorama,
)
from .synthetic import BoxRoom, RoomScene, make_room_scene, render_room_pano

__version__ = "0.1.0"

__all__ = [
    "BlendWeights",
    "BoxRoom",
    "CubicField",
    "DataError",
    "DepthEvalConfig",
    "DepthMetrics",
    "DepthPlaneSet",
    "FACES",
    "FitConfig",
    "FitResult",
    "LossWeights",
    "Mpi",
    "NumericError",
    "Pose",
    "PosedView",
    "RenderOutput",
    "RoomScene",
    "UsageError",
    "blend_pipeline",
    "composite",
    "cubemap_to_erp",
    "depth_metrics",
    "erp_to_cubemap",
    "extract_depth",
    "field_from_stack",
    "fit",
    "load_blend_weights",
    "load_field",
    "loss_gradient",
    "make_depth_planes",
    "make_room_scene",
    "metrics_report",
    "ray_cube_intersect",
    "render_novel_cubemap",
    "render_novel_panorama",
    "render_room_pano",
    "save_blend_weights",
    "save_field",
    "total_loss",
    "__version__",
]
