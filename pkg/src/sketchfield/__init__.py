"""Sketch-conditioned 3D generation and editing on voxel radiance fields.

A desk-scale engine: differentiable voxel rendering, analytic score models in
place of pretrained diffusion backbones, score-distillation losses, depth
guided sketch warping, and mask-based coarse-to-fine editing, plus a small
job service exposing the pipeline over HTTP.

The usual entry points:

- :func:`generate` / :func:`edit` / :func:`turntable` run whole jobs from a
  config mapping or JSON file.
- :func:`render` / :func:`render_backward` are the differentiable renderer.
- :func:`extract_sketch` / :func:`extract_silhouette` turn renders into
  sketch-space images; :func:`warp_sketch` moves them between views.
- :mod:`sketchfield.service` hosts the same jobs over HTTP.
"""

__version__ = "0.1.0"

from .cameras import (
    CameraPose,
    DepthMap,
    make_camera,
    reproject,
    sample_orthogonal_views,
    warp_sketch,
)
from .editing import (
    EditRequest,
    coarse_edit,
    fine_edit,
    lift_mask_to_cylinder,
    render_mask,
)
from .errors import ConfigError, NothingToEditError
from .losses import WeightSchedule, rgb_preserve_loss
from .pipeline import (
    EditConfig,
    GenerationConfig,
    blob_field,
    edit,
    generate,
    load_edit_config,
    load_generation_config,
    turntable,
)
from .sketchops import extract_silhouette, extract_sketch
from .volume import (
    RenderConfig,
    VoxelRadianceField,
    load_field,
    render,
    render_backward,
    save_field,
)

__all__ = [
    "CameraPose",
    "ConfigError",
    "DepthMap",
    "EditConfig",
    "EditRequest",
    "GenerationConfig",
    "NothingToEditError",
    "RenderConfig",
    "VoxelRadianceField",
    "WeightSchedule",
    "blob_field",
    "coarse_edit",
    "edit",
    "extract_silhouette",
    "extract_sketch",
    "fine_edit",
    "generate",
    "lift_mask_to_cylinder",
    "load_edit_config",
    "load_field",
    "load_generation_config",
    "make_camera",
    "render",
    "render_backward",
    "render_mask",
    "reproject",
    "rgb_preserve_loss",
    "sample_orthogonal_views",
    "save_field",
    "turntable",
    "warp_sketch",
    "__version__",
]
