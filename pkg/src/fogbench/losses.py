"""Training losses for airlight, transmission, disparity, defogging and visibility.

The losses take plain numpy arrays so they can be checked against
finite differences. Analytic gradients are provided for the terms that are
smooth almost everywhere; :func:`numeric_gradient` is the independent check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from fogbench.errors import ConfigError, ShapeError
from fogbench.physics import Airlight, as_rgb_image, as_scalar_field, defog

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
_K1, _K2 = 0.01, 0.03


@dataclass(frozen=True)
class LossWeights:
    lambda_a: float = 1.0
    lambda_t: float = 1.0
    lambda_d: float = 0.8
    lambda_defog: float = 1e-6
    lambda_vis: float = 1.0
    lambda_l1: float = 0.15
    lambda_ssim: float = 0.85
    lambda_smooth: float = 1e-3

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not value >= 0:
                raise ConfigError(f"{name} must be non-negative, got {value}")


class LossTerms(NamedTuple):
    airlight: float
    transmission: float
    disparity: float
    defog: float
    visibility: float


def _vec(a) -> np.ndarray:
    if isinstance(a, Airlight):
        return a.as_array()
    return np.asarray(a, dtype=np.float64).reshape(3)


def _rmse(diff: np.ndarray) -> float:
    return math.sqrt(float(np.mean(diff * diff)))


def _rmse_grad(diff: np.ndarray) -> np.ndarray:
    value = _rmse(diff)
    if value == 0.0:
        return np.zeros_like(diff)
    return diff / (diff.size * value)


def _same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"shapes {a.shape} and {b.shape} differ")


# ---------------------------------------------------------------------------
# Airlight and transmission
# ---------------------------------------------------------------------------

def loss_airlight(a_est, a_gt) -> float:
    """RMSE over the three channels."""
    return _rmse(_vec(a_est) - _vec(a_gt))


def grad_loss_airlight(a_est, a_gt) -> np.ndarray:
    return _rmse_grad(_vec(a_est) - _vec(a_gt))


def loss_transmission(t_est, t_gt) -> float:
    """RMSE over pixels."""
    t_est, t_gt = as_scalar_field(t_est, "t_est"), as_scalar_field(t_gt, "t_gt")
    _same_shape(t_est, t_gt)
    return _rmse(t_est - t_gt)


def grad_loss_transmission(t_est, t_gt) -> np.ndarray:
    t_est, t_gt = as_scalar_field(t_est, "t_est"), as_scalar_field(t_gt, "t_gt")
    _same_shape(t_est, t_gt)
    return _rmse_grad(t_est - t_gt)


# ---------------------------------------------------------------------------
# SSIM and disparity
# ---------------------------------------------------------------------------

def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    w = np.outer(g, g)
    return w / w.sum()


def ssim_map(x, y, win_size: int = SSIM_WINDOW, data_range: float = 1.0) -> np.ndarray:
    """Local SSIM at every position where the window fits entirely (no padding)."""
    x, y = as_scalar_field(x, "x"), as_scalar_field(y, "y")
    _same_shape(x, y)
    if x.shape[0] < win_size or x.shape[1] < win_size:
        raise ShapeError(f"field {x.shape} is smaller than the {win_size}x{win_size} SSIM window")
    w = gaussian_window(win_size)

    def filt(f):
        return np.tensordot(sliding_window_view(f, (win_size, win_size)), w, axes=([2, 3], [0, 1]))

    c1 = (_K1 * data_range) ** 2
    c2 = (_K2 * data_range) ** 2
    mx, my = filt(x), filt(y)
    sxx = filt(x * x) - mx * mx
    syy = filt(y * y) - my * my
    sxy = filt(x * y) - mx * my
    return ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2))


def ssim(x, y, win_size: int = SSIM_WINDOW, data_range: float = 1.0) -> float:
    """Mean structural similarity of two scalar fields (Gaussian 11x11, sigma 1.5)."""
    return float(np.mean(ssim_map(x, y, win_size, data_range)))


def _forward_dx(f: np.ndarray) -> np.ndarray:
    out = np.zeros_like(f)
    out[:, :-1] = f[:, 1:] - f[:, :-1]
    return out


def _forward_dy(f: np.ndarray) -> np.ndarray:
    out = np.zeros_like(f)
    out[:-1] = f[1:] - f[:-1]
    return out


def edge_weights(fogless) -> tuple[np.ndarray, np.ndarray]:
    """``exp(-|dJ|)`` along x and y, with |dJ| averaged over RGB."""
    j = as_rgb_image(fogless, "fogless")
    gx = np.mean(np.abs(np.stack([_forward_dx(j[..., c]) for c in range(3)])), axis=0)
    gy = np.mean(np.abs(np.stack([_forward_dy(j[..., c]) for c in range(3)])), axis=0)
    return np.exp(-gx), np.exp(-gy)


def smoothness(dbar_est, fogless) -> float:
    """Edge-aware first-order smoothness of a disparity map, per pixel."""
    d = as_scalar_field(dbar_est, "dbar_est")
    wx, wy = edge_weights(fogless)
    _same_shape(d, wx)
    total = np.sum(wx * np.abs(_forward_dx(d))) + np.sum(wy * np.abs(_forward_dy(d)))
    return float(total / d.size)


def l1_disparity(dbar_est, dbar_gt) -> float:
    d, g = as_scalar_field(dbar_est, "dbar_est"), as_scalar_field(dbar_gt, "dbar_gt")
    _same_shape(d, g)
    return float(np.mean(np.abs(d - g)))


def grad_l1_disparity(dbar_est, dbar_gt) -> np.ndarray:
    d, g = as_scalar_field(dbar_est, "dbar_est"), as_scalar_field(dbar_gt, "dbar_gt")
    _same_shape(d, g)
    return np.sign(d - g) / d.size


def loss_disparity(
    dbar_est, dbar_gt, fogless, w: LossWeights | None = None, win_size: int = SSIM_WINDOW
) -> float:
    """L1 + SSIM + edge-aware smoothness on raw (unnormalised) disparity."""
    w = w or LossWeights()
    return (
        w.lambda_l1 * l1_disparity(dbar_est, dbar_gt)
        + w.lambda_ssim * (1.0 - ssim(dbar_est, dbar_gt, win_size)) / 2.0
        + w.lambda_smooth * smoothness(dbar_est, fogless)
    )


# ---------------------------------------------------------------------------
# Defogging and visibility
# ---------------------------------------------------------------------------

def loss_defog(j_est, j_gt, valid=None) -> float:
    """RMSE between a defogged image and the true fog-free image.

    ``valid`` restricts the comparison to reconstructable pixels.
    """
    j_est, j_gt = as_rgb_image(j_est, "j_est"), as_rgb_image(j_gt, "j_gt")
    _same_shape(j_est, j_gt)
    diff = j_est - j_gt
    if valid is not None:
        diff = diff[np.asarray(valid, dtype=bool)]
        if diff.size == 0:
            return 0.0
    return _rmse(diff)


def grad_loss_defog(j_est, j_gt) -> np.ndarray:
    j_est, j_gt = as_rgb_image(j_est, "j_est"), as_rgb_image(j_gt, "j_gt")
    _same_shape(j_est, j_gt)
    return _rmse_grad(j_est - j_gt)


def loss_defog_from_estimates(foggy, a_est, t_est, j_gt, t_floor: float = 0.01) -> float:
    """Defog with estimated airlight and transmission, then score against ``j_gt``."""
    j_est, valid = defog(foggy, a_est, t_est, t_floor)
    return loss_defog(j_est, j_gt, valid)


def _vis_residual(dbar_est, t_est, dbar_gt, t_gt):
    fields = [as_scalar_field(f, n) for f, n in
              ((dbar_est, "dbar_est"), (t_est, "t_est"), (dbar_gt, "dbar_gt"), (t_gt, "t_gt"))]
    for f in fields[1:]:
        _same_shape(fields[0], f)
    de, te, dg, tg = fields
    valid = (te > 0) & (tg > 0)
    r = np.zeros_like(de)
    r[valid] = de[valid] * np.log(te[valid]) - dg[valid] * np.log(tg[valid])
    return r, valid, de, te


def loss_visibility(dbar_est, t_est, dbar_gt, t_gt) -> float:
    """Mean absolute difference of ``disparity * ln(T)`` over pixels with T > 0."""
    r, valid, _, _ = _vis_residual(dbar_est, t_est, dbar_gt, t_gt)
    n = int(valid.sum())
    return float(np.sum(np.abs(r[valid])) / n) if n else 0.0


def grad_loss_visibility(dbar_est, t_est, dbar_gt, t_gt) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of :func:`loss_visibility` w.r.t. ``dbar_est`` and ``t_est``."""
    r, valid, de, te = _vis_residual(dbar_est, t_est, dbar_gt, t_gt)
    n = int(valid.sum())
    g_d, g_t = np.zeros_like(de), np.zeros_like(te)
    if n:
        s = np.sign(r[valid]) / n
        g_d[valid] = s * np.log(te[valid])
        g_t[valid] = s * de[valid] / te[valid]
    return g_d, g_t


# ---------------------------------------------------------------------------
# Combination and gradient check
# ---------------------------------------------------------------------------

def total_loss(terms, w: LossWeights | None = None) -> float:
    """Weighted sum of the five terms."""
    w = w or LossWeights()
    t = LossTerms(*terms)
    return (
        w.lambda_a * t.airlight
        + w.lambda_t * t.transmission
        + w.lambda_d * t.disparity
        + w.lambda_defog * t.defog
        + w.lambda_vis * t.visibility
    )


def numeric_gradient(fn: Callable[[np.ndarray], float], x, h: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of ``fn`` at ``x``, element by element."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + h
        fp = fn(x)
        x[idx] = orig - h
        fm = fn(x)
        x[idx] = orig
        grad[idx] = (fp - fm) / (2.0 * h)
    return grad
