"""Recover airlight and extinction coefficient from an observed foggy image.

Given the fog-free image ``J``, its depth ``D`` and the foggy observation
``I``, :func:`fit_uniform_fog` minimises

    sum_{p,c} (J_pc t_p + A_c (1 - t_p) - I_pc)^2,   t_p = exp(-beta D_p)

over ``A in [0,1]^3`` and ``beta > 0``. The problem is separable: for a fixed
``beta`` the model is linear in ``A`` and each channel has a closed-form
optimum, so only the scalar ``beta`` needs a nonlinear search (variable
projection). The profiled objective is scanned on a log-spaced grid,
bracketed, narrowed by golden-section search and polished with Newton steps.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from fogbench.errors import ConfigError, DomainError, IdentifiabilityError, ShapeError
from fogbench.physics import (
    DEFAULT_EPS,
    Airlight,
    MaskedField,
    as_rgb_image,
    as_scalar_field,
    check_eps,
    visibility_from_beta,
)

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0
_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class FitOptions:
    eps: float = DEFAULT_EPS
    v_range: tuple[float, float] = (10.0, 1000.0)
    widen: float = 2.0
    grid_points: int = 64
    tol: float = 1e-8
    max_iter: int = 200
    newton_steps: int = 5
    sky_t: float = 1e-3

    def __post_init__(self):
        check_eps(self.eps)
        lo, hi = self.v_range
        if not (0 < lo < hi):
            raise ConfigError(f"bad visibility range {self.v_range}")
        if self.widen < 1 or self.grid_points < 3 or self.tol <= 0 or self.max_iter < 1:
            raise ConfigError("invalid fit options")

    def beta_bracket(self) -> tuple[float, float]:
        k = -math.log(self.eps)
        return k / self.v_range[1] / self.widen, k / self.v_range[0] * self.widen


@dataclass
class FitResult:
    airlight: Airlight
    beta: float
    visibility: float
    residual_rms: float
    iterations: int
    converged: bool
    n_pixels: int = 0
    objective_history: list[float] = field(default_factory=list, repr=False)

    def to_json(self) -> dict:
        out = asdict(self)
        out["airlight"] = self.airlight.to_list()
        del out["objective_history"]
        return out


class _Problem:
    """Flattened pixels of one fit plus the profiled objective."""

    def __init__(self, foggy: np.ndarray, fogless: np.ndarray, depth: np.ndarray, mask: np.ndarray):
        self.i = foggy[mask]
        self.j = fogless[mask]
        self.d = depth[mask]
        self.evals = 0

    def restrict(self, keep: np.ndarray) -> None:
        self.i, self.j, self.d = self.i[keep], self.j[keep], self.d[keep]

    @property
    def n(self) -> int:
        return self.d.size

    def airlight(self, beta: float) -> np.ndarray:
        t = np.exp(-beta * self.d)[:, None]
        u = 1.0 - t
        uu = float(np.sum(u * u))
        if uu == 0.0:
            raise IdentifiabilityError("no fog on any fitted pixel; airlight is unobservable")
        a = np.sum((self.i - self.j * t) * u, axis=0) / uu
        return np.clip(a, 0.0, 1.0)

    def objective(self, beta: float) -> float:
        self.evals += 1
        t = np.exp(-beta * self.d)[:, None]
        a = self.airlight(beta)
        r = self.j * t + a * (1.0 - t) - self.i
        return float(np.sum(r * r))


def solve_airlight(foggy, fogless, depth, beta: float) -> Airlight:
    """Closed-form least-squares airlight for a fixed extinction coefficient."""
    i, j, d, mask = _prepare(foggy, fogless, depth)
    return Airlight.from_array(_Problem(i, j, d, mask).airlight(beta))


def _prepare(foggy, fogless, depth):
    i = as_rgb_image(foggy, "foggy")
    j = as_rgb_image(fogless, "fogless")
    d = as_scalar_field(depth, "depth")
    if i.shape != j.shape or i.shape[:2] != d.shape:
        raise ShapeError(f"shapes differ: foggy {i.shape}, fogless {j.shape}, depth {d.shape}")
    mask = np.isfinite(d) & (d >= 0)
    if not mask.any():
        raise DomainError("depth is not finite on any pixel")
    return i, j, d, mask


def _golden(f, a: float, b: float, tol: float, max_iter: int, history: list[float]):
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    it = 0
    while b - a > tol and it < max_iter:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
        it += 1
        history.append(min(fc, fd))
    x, fx = (c, fc) if fc <= fd else (d, fd)
    return x, fx, it, b - a <= tol


def _newton(f, x: float, fx: float, steps: int, lo: float, hi: float):
    for _ in range(steps):
        h = max(1e-6 * x, 1e-12)
        fp, fm = f(x + h), f(x - h)
        g = (fp - fm) / (2 * h)
        curv = (fp - 2 * fx + fm) / (h * h)
        if not curv > 0:
            break
        x_new = min(max(x - g / curv, lo), hi)
        f_new = f(x_new)
        if not f_new < fx:
            break
        converged = abs(x_new - x) <= 1e-15 * x
        x, fx = x_new, f_new
        if converged:
            break
    return x, fx


def fit_uniform_fog(foggy, fogless, depth, opts: FitOptions | None = None) -> FitResult:
    """Least-squares fit of ``(A, beta)`` for a uniformly fogged image.

    Raises :class:`IdentifiabilityError` when the residual does not depend
    on ``beta`` (e.g. the fog-free image already equals the airlight).
    """
    opts = opts or FitOptions()
    i, j, d, mask = _prepare(foggy, fogless, depth)
    prob = _Problem(i, j, d, mask)
    lo, hi = opts.beta_bracket()
    grid = np.geomspace(lo, hi, opts.grid_points)

    values = np.array([prob.objective(b) for b in grid])
    spread = values.max() - values.min()
    if spread <= 1e-8 * values.max() + 1e-20 * prob.n:
        raise IdentifiabilityError("residual is flat in beta; fog-free image indistinguishable from airlight")

    # drop sky-like pixels: no extinction information left in them
    t0 = np.exp(-grid[int(np.argmin(values))] * prob.d)
    keep = t0 >= opts.sky_t
    if keep.any() and not keep.all():
        prob.restrict(keep)
        values = np.array([prob.objective(b) for b in grid])

    k = int(np.argmin(values))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    history: list[float] = [float(values[k])]
    beta, fbest, iters, converged = _golden(prob.objective, a, b, opts.tol, opts.max_iter, history)
    beta, fbest = _newton(prob.objective, beta, fbest, opts.newton_steps, lo, hi)

    airlight = prob.airlight(beta)
    return FitResult(
        airlight=Airlight.from_array(airlight),
        beta=float(beta),
        visibility=visibility_from_beta(beta, opts.eps),
        residual_rms=math.sqrt(fbest / (3 * prob.n)),
        iterations=iters,
        converged=bool(converged),
        n_pixels=prob.n,
        objective_history=history,
    )


def transmission_from_images(foggy, fogless, airlight, contrast_floor: float = 0.05) -> MaskedField:
    """Per-pixel transmission ``(I - A) / (J - A)`` pooled over channels.

    Channels are weighted by ``(J - A)^2``; channels whose fog-free value is
    within ``contrast_floor`` of the airlight carry no information and are
    skipped. Pixels with no usable channel are invalid.
    """
    i = as_rgb_image(foggy, "foggy")
    j = as_rgb_image(fogless, "fogless")
    if i.shape != j.shape:
        raise ShapeError(f"foggy {i.shape} and fogless {j.shape} differ")
    a = airlight.as_array() if isinstance(airlight, Airlight) else Airlight.from_array(airlight).as_array()
    dj = j - a
    use = np.abs(dj) > contrast_floor
    num = np.sum(np.where(use, (i - a) * dj, 0.0), axis=2)
    den = np.sum(np.where(use, dj * dj, 0.0), axis=2)
    valid = use.any(axis=2)
    t = np.zeros(den.shape)
    t[valid] = np.clip(num[valid] / den[valid], 0.0, 1.0)
    return MaskedField(t, valid)


def estimate_airlight_bright(foggy, percentile: float = 1.0) -> Airlight:
    """Mean colour of the brightest ``percentile`` percent of pixels (by luma)."""
    if not (0.0 < percentile <= 100.0):
        raise ConfigError(f"percentile must lie in (0, 100], got {percentile}")
    i = as_rgb_image(foggy, "foggy").reshape(-1, 3)
    k = max(1, int(math.ceil(i.shape[0] * percentile / 100.0)))
    luma = i @ _LUMA
    order = np.argsort(-luma, kind="stable")[:k]
    return Airlight.from_array(np.clip(i[order].mean(axis=0), 0.0, 1.0))
