"""Koschmieder's law and its algebraic consequences.

Conventions used throughout the package:

* scalar fields (depth in metres, transmission, disparity, visibility) are
  ``float64`` arrays of shape ``(H, W)``;
* RGB images are ``float64`` arrays of shape ``(H, W, 3)`` with channels in
  ``[0, 1]``;
* the airlight is a single RGB triple, constant over the image;
* derived fields that can be undefined at some pixels come back as a
  :class:`MaskedField` whose ``valid`` mask is authoritative. Values at
  invalid pixels are filled with ``0.0`` and carry no meaning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from fogbench.errors import ConfigError, DomainError, ShapeError

DEFAULT_EPS = 0.05


class MaskedField(NamedTuple):
    values: np.ndarray
    valid: np.ndarray


@dataclass(frozen=True)
class Airlight:
    """Spatially constant airlight colour, each channel in [0, 1]."""

    r: float
    g: float
    b: float

    def __post_init__(self):
        for name in ("r", "g", "b"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise DomainError(f"airlight channel {name}={v!r} outside [0, 1]")

    @classmethod
    def from_array(cls, rgb) -> "Airlight":
        r, g, b = (float(c) for c in np.asarray(rgb, dtype=np.float64).reshape(3))
        return cls(r, g, b)

    def as_array(self) -> np.ndarray:
        return np.array([self.r, self.g, self.b], dtype=np.float64)

    def to_list(self) -> list[float]:
        return [self.r, self.g, self.b]


def check_eps(eps: float) -> float:
    eps = float(eps)
    if not (0.0 < eps < 1.0):
        raise ConfigError(f"contrast threshold eps must lie in (0, 1), got {eps}")
    return eps


def as_scalar_field(values, name: str = "field") -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    return arr


def as_rgb_image(values, name: str = "image") -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"{name} must have shape (H, W, 3), got {arr.shape}")
    return arr


def _airlight_array(airlight) -> np.ndarray:
    if isinstance(airlight, Airlight):
        return airlight.as_array()
    return Airlight.from_array(airlight).as_array()


def _check_same_hw(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape[:2] != b.shape[:2]:
        raise ShapeError(f"{what}: dimensions {a.shape[:2]} and {b.shape[:2]} differ")


def transmission_from_depth(depth, beta: float) -> np.ndarray:
    """Transmission ``exp(-beta * depth)``; infinite depth (sky) maps to 0."""
    depth = as_scalar_field(depth, "depth")
    beta = float(beta)
    if not beta >= 0.0:
        raise DomainError(f"extinction coefficient must be >= 0, got {beta}")
    if np.isnan(depth).any() or (depth < 0).any():
        raise DomainError("depth must be non-negative")
    sky = np.isinf(depth)
    with np.errstate(invalid="ignore", over="ignore"):
        t = np.exp(-beta * np.where(sky, 0.0, depth))
    t[sky] = 0.0
    return t


def synthesize(fogless, transmission, airlight) -> np.ndarray:
    """Compose a foggy image ``I = J*T + A*(1 - T)``.

    The result is a convex combination of the fogless pixel and the airlight;
    it is clipped to that segment so rounding never leaves it.
    """
    j = as_rgb_image(fogless, "fogless")
    t = as_scalar_field(transmission, "transmission")
    _check_same_hw(j, t, "synthesize")
    if np.isnan(t).any() or (t < 0).any() or (t > 1).any():
        raise DomainError("transmission must lie in [0, 1]")
    a = _airlight_array(airlight)
    t3 = t[..., None]
    out = j * t3 + a * (1.0 - t3)
    return np.clip(out, np.minimum(j, a), np.maximum(j, a))


def defog(foggy, airlight, transmission, t_floor: float = 0.01) -> MaskedField:
    """Invert the scattering model, ``J = (I - A) / T + A``, clamped to [0, 1].

    Pixels with ``T < t_floor`` cannot be reconstructed reliably; they are
    flagged invalid and keep the foggy input value.
    """
    t_floor = float(t_floor)
    if not t_floor > 0.0:
        raise ConfigError(f"t_floor must be > 0, got {t_floor}")
    i = as_rgb_image(foggy, "foggy")
    t = as_scalar_field(transmission, "transmission")
    _check_same_hw(i, t, "defog")
    a = _airlight_array(airlight)
    valid = t >= t_floor
    t3 = np.where(valid, t, 1.0)[..., None]
    # (I - A(1-T)) / T is algebraically (I-A)/T + A but exact at T = 1
    j = (i - a * (1.0 - t3)) / t3
    j = np.clip(j, 0.0, 1.0)
    j = np.where(valid[..., None], j, i)
    return MaskedField(j, valid)


def contrast(object_luminance: float, background_luminance: float) -> float:
    """Relative luminance of an object against its background."""
    if background_luminance == 0:
        raise DomainError("background luminance must be non-zero")
    return (object_luminance - background_luminance) / background_luminance


def visibility_map(depth, transmission, eps: float = DEFAULT_EPS) -> MaskedField:
    """Pixel-wise visibility ``ln(eps) * D / ln(T)`` in metres.

    Valid where ``0 < T < 1`` and the depth is finite and positive. ``T = 1``
    (no fog on the path) and ``T = 0`` (sky) are reported through the mask.
    """
    eps = check_eps(eps)
    d = as_scalar_field(depth, "depth")
    t = as_scalar_field(transmission, "transmission")
    _check_same_hw(d, t, "visibility_map")
    valid = (t > 0.0) & (t < 1.0) & np.isfinite(d) & (d > 0.0)
    out = np.zeros_like(d)
    out[valid] = math.log(eps) * d[valid] / np.log(t[valid])
    return MaskedField(out, valid)


def visibility_from_beta(beta: float, eps: float = DEFAULT_EPS) -> float:
    eps = check_eps(eps)
    if not beta > 0:
        raise DomainError(f"extinction coefficient must be > 0, got {beta}")
    return float(-math.log(eps) / beta)


def beta_from_visibility(visibility: float, eps: float = DEFAULT_EPS) -> float:
    eps = check_eps(eps)
    if not visibility > 0:
        raise DomainError(f"visibility must be > 0, got {visibility}")
    return float(-math.log(eps) / visibility)
