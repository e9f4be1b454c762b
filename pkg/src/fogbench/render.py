"""False-colour visibility maps and visibility histograms."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from fogbench import io

COLORMAP_NAME = "fogbench-vis5"
# low visibility (dense fog) is red, clear air is blue; linear between stops
_STOPS = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
_COLORS = np.array(
    [
        [0.70, 0.00, 0.00],
        [1.00, 0.55, 0.00],
        [1.00, 0.95, 0.20],
        [0.30, 0.80, 0.35],
        [0.10, 0.30, 0.85],
    ]
)
INVALID_RGB = (0.0, 0.0, 0.0)
HIST_BINS = 50


def colorize(values: np.ndarray, valid: np.ndarray, vmin: float, vmax: float) -> np.ndarray:
    span = max(vmax - vmin, 1e-12)
    x = np.clip((np.asarray(values, dtype=np.float64) - vmin) / span, 0.0, 1.0)
    rgb = np.stack([np.interp(x, _STOPS, _COLORS[:, c]) for c in range(3)], axis=-1)
    rgb[~valid] = INVALID_RGB
    return rgb


def histogram(values: np.ndarray, mask: np.ndarray, v_min: float, v_max: float, bins: int = HIST_BINS):
    """Counts of masked visibilities in uniform bins over ``[v_min, min(v_max, max)]``."""
    picked = np.asarray(values, dtype=np.float64)[mask]
    hi = min(v_max, float(picked.max())) if picked.size else v_min
    if hi <= v_min:
        hi = v_min + 1.0
    counts, edges = np.histogram(picked, bins=bins, range=(v_min, hi))
    return counts, edges


def write_histogram_csv(path, counts: np.ndarray, edges: np.ndarray) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["bin_left", "bin_right", "count"])
        for k, c in enumerate(counts):
            writer.writerow([repr(float(edges[k])), repr(float(edges[k + 1])), int(c)])


def write_visibility_png(path, values, valid, vmin: float, vmax: float) -> None:
    """Write the false-colour map and a ``<name>.json`` sidecar with its scale."""
    path = Path(path)
    io.write_png(path, colorize(values, valid, vmin, vmax))
    io.write_json(
        path.with_suffix(".json"),
        {
            "colormap": COLORMAP_NAME,
            "stops": _STOPS.tolist(),
            "colors": _COLORS.tolist(),
            "vmin_m": float(vmin),
            "vmax_m": float(vmax),
            "invalid_rgb": list(INVALID_RGB),
        },
    )
