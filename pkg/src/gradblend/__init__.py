"""Gradient-domain image blending by direct pixel optimization."""

from .image import BlendInstance, ImageTensor, Mask, align, composite, downsample_mask, laplacian
from .imgio import load_image, save_image
from .losses import GradVariant, LossWeights, histogram_match
from .poisson import GuidanceMode, assemble_system, cg_solve, gauss_seidel_solve, poisson_blend
from .pipeline import RunConfig, StageConfig, run, run_from_manifest, stage_one, stage_two

__all__ = [
    "BlendInstance",
    "ImageTensor",
    "Mask",
    "align",
    "composite",
    "downsample_mask",
    "laplacian",
    "load_image",
    "save_image",
    "GradVariant",
    "LossWeights",
    "histogram_match",
    "GuidanceMode",
    "assemble_system",
    "cg_solve",
    "gauss_seidel_solve",
    "poisson_blend",
    "RunConfig",
    "StageConfig",
    "run",
    "run_from_manifest",
    "stage_one",
    "stage_two",
]
