"""Pixel-wise and image-wise visibility from transmission and depth maps."""

from __future__ import annotations

import bisect
from dataclasses import dataclass

import numpy as np

from fogbench.errors import ConfigError, DomainError, ShapeError
from fogbench.physics import DEFAULT_EPS, MaskedField, as_scalar_field, check_eps, visibility_map

CLASS_EDGES = (200.0, 400.0, 600.0, 800.0)


@dataclass(frozen=True)
class EstimationConfig:
    """Thresholds for turning a visibility map into one number.

    ``t_min`` drops sky-like pixels, ``v_max`` drops implausibly large
    visibilities, and ``v_min`` is returned when nothing survives.
    """

    eps: float = DEFAULT_EPS
    t_min: float = 1e-2
    v_max: float = 1e5
    v_min: float = 10.0

    def __post_init__(self):
        check_eps(self.eps)
        if not (0.0 < self.t_min < 1.0):
            raise ConfigError(f"t_min must lie in (0, 1), got {self.t_min}")
        if not (self.v_max > self.v_min > 0.0):
            raise ConfigError(f"need v_max > v_min > 0, got v_max={self.v_max}, v_min={self.v_min}")


def pixel_visibility(t_est, d_est, eps: float = DEFAULT_EPS) -> MaskedField:
    """Visibility map from estimated transmission and depth maps."""
    return visibility_map(d_est, t_est, eps)


def estimation_mask(v_est, t_est, cfg: EstimationConfig) -> np.ndarray:
    """Pixels kept by the image-wise average: ``T > t_min`` and ``V < v_max``.

    ``v_est`` may be a :class:`MaskedField`; its invalid pixels never pass.
    """
    if isinstance(v_est, MaskedField):
        values, valid = v_est
    else:
        values = as_scalar_field(v_est, "v_est")
        valid = np.isfinite(values)
    t = as_scalar_field(t_est, "t_est")
    if t.shape != values.shape:
        raise ShapeError(f"v_est {values.shape} and t_est {t.shape} differ")
    return valid & (t > cfg.t_min) & (values < cfg.v_max)


def image_visibility(v_est, t_est, cfg: EstimationConfig | None = None) -> float:
    """Masked mean of the visibility map, or ``cfg.v_min`` if the mask is empty."""
    cfg = cfg or EstimationConfig()
    mask = estimation_mask(v_est, t_est, cfg)
    if not mask.any():
        return float(cfg.v_min)
    values = v_est.values if isinstance(v_est, MaskedField) else np.asarray(v_est, dtype=np.float64)
    return float(np.mean(values[mask]))


def classify(visibility: float) -> int:
    """Visibility class 0-4 with bins [0,200), [200,400), [400,600), [600,800), [800,inf)."""
    if not visibility >= 0:
        raise DomainError(f"visibility must be >= 0, got {visibility}")
    return bisect.bisect_right(CLASS_EDGES, float(visibility))
