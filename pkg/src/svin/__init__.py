"""Spatiotemporal volumetric interpolation between ED and ES cardiac phases.

The package splits into a differentiable grid toolkit (:mod:`svin.grid`,
:mod:`svin.pyramid`), closed-form field synthesis (:mod:`svin.synthesis`),
two networks (:mod:`svin.motion`, :mod:`svin.interp`), a phantom generator
with its file format (:mod:`svin.phantom`, :mod:`svin.fileio`) and metrics.
"""
from .exceptions import (
    DomainError,
    FormatError,
    HeaderError,
    MagicError,
    PayloadSizeError,
    ShapeError,
    SVINError,
    TrainingError,
    TruncatedError,
    ValidationError,
)
from .grid import Volume, VectorField, resample_field, resample_volume, spatial_gradient, warp, warp_field
from .interp import InterpConfig, InterpNet, infer_sequence, interp_forward, linear_blend_sequence, train_interp
from .losses import LossWeights, loss_bidirectional, loss_regression, loss_similar, loss_total, smoothness_loss
from .metrics import MetricReport, dice, mse, nrmse, psnr, ssim
from .motion import MotionConfig, MotionNet, motion_forward, train_motion
from .phantom import PhantomSpec, PhaseSample, generate_phantom, phantom_dataset, preprocess
from .pyramid import build_pyramid, upsample_field_to_next
from .synthesis import (
    WeightMap,
    blend_linear,
    blend_weighted,
    consistent_intermediate_fields,
    intensity_blend,
    linear_intermediate_fields,
)

__version__ = "0.1.0"

__all__ = [
    "DomainError",
    "FormatError",
    "HeaderError",
    "MagicError",
    "PayloadSizeError",
    "ShapeError",
    "SVINError",
    "TrainingError",
    "TruncatedError",
    "ValidationError",
    "Volume",
    "VectorField",
    "resample_field",
    "resample_volume",
    "spatial_gradient",
    "warp",
    "warp_field",
    "InterpConfig",
    "InterpNet",
    "infer_sequence",
    "interp_forward",
    "linear_blend_sequence",
    "train_interp",
    "LossWeights",
    "loss_bidirectional",
    "loss_regression",
    "loss_similar",
    "loss_total",
    "smoothness_loss",
    "MetricReport",
    "dice",
    "mse",
    "nrmse",
    "psnr",
    "ssim",
    "MotionConfig",
    "MotionNet",
    "motion_forward",
    "train_motion",
    "PhantomSpec",
    "PhaseSample",
    "generate_phantom",
    "phantom_dataset",
    "preprocess",
    "build_pyramid",
    "upsample_field_to_next",
    "WeightMap",
    "blend_linear",
    "blend_weighted",
    "consistent_intermediate_fields",
    "intensity_blend",
    "linear_intermediate_fields",
]
