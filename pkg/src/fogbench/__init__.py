"""Fog physics toolkit: Koschmieder-law fog synthesis, visibility estimation,
fog-model inversion, training losses and evaluation metrics."""

from fogbench.estimate import EstimationConfig, classify, image_visibility, pixel_visibility
from fogbench.invert import FitOptions, FitResult, fit_uniform_fog
from fogbench.physics import (
    DEFAULT_EPS,
    Airlight,
    MaskedField,
    beta_from_visibility,
    contrast,
    defog,
    synthesize,
    transmission_from_depth,
    visibility_from_beta,
    visibility_map,
)

__all__ = [
    "DEFAULT_EPS",
    "Airlight",
    "EstimationConfig",
    "FitOptions",
    "FitResult",
    "MaskedField",
    "beta_from_visibility",
    "classify",
    "contrast",
    "defog",
    "fit_uniform_fog",
    "image_visibility",
    "pixel_visibility",
    "synthesize",
    "transmission_from_depth",
    "visibility_from_beta",
    "visibility_map",
]
__version__ = "0.1.0"
