"""File formats: PFM float maps, 8-bit PNG images, and JSON documents."""

from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np
from PIL import Image

_PFM_HEADER = re.compile(rb"^\s*(\d+)\s+(\d+)\s*$")


def read_pfm(path) -> np.ndarray:
    """Read a portable float map.

    Returns ``(H, W)`` for ``Pf`` files and ``(H, W, 3)`` for ``PF`` files,
    in top-to-bottom row order, as ``float32``.
    """
    with open(path, "rb") as f:
        tag = f.readline().strip()
        if tag == b"PF":
            channels = 3
        elif tag == b"Pf":
            channels = 1
        else:
            raise ValueError(f"{path}: not a PFM file (tag {tag!r})")
        dims = _PFM_HEADER.match(f.readline())
        if dims is None:
            raise ValueError(f"{path}: malformed PFM dimensions line")
        width, height = int(dims.group(1)), int(dims.group(2))
        scale = float(f.readline().strip())
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.fromfile(f, dtype=dtype, count=width * height * channels)
    if data.size != width * height * channels:
        raise ValueError(f"{path}: truncated PFM payload")
    shape = (height, width, 3) if channels == 3 else (height, width)
    # PFM stores rows bottom-to-top
    return np.flipud(data.reshape(shape)).astype(np.float32)


def write_pfm(path, data) -> None:
    """Write a little-endian PFM (``Pf`` for 2-D, ``PF`` for RGB)."""
    arr = np.asarray(data)
    if arr.ndim == 2:
        tag = b"Pf"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        tag = b"PF"
    else:
        raise ValueError(f"cannot write array of shape {arr.shape} as PFM")
    height, width = arr.shape[:2]
    payload = np.ascontiguousarray(np.flipud(arr), dtype="<f4")
    with open(path, "wb") as f:
        f.write(tag + b"\n")
        f.write(f"{width} {height}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(payload.tobytes())


def to_uint8(image) -> np.ndarray:
    """Unit-interval image to 8-bit, round to nearest."""
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    return np.rint(arr * 255.0).astype(np.uint8)


def quantize(image) -> np.ndarray:
    """Snap a unit-interval image onto the 8-bit grid, staying in floats."""
    return to_uint8(image).astype(np.float64) / 255.0


def read_png(path) -> np.ndarray:
    """Read an RGB PNG as a float64 ``(H, W, 3)`` array in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def write_png(path, image) -> None:
    """Write a float image in [0, 1] (``(H, W)``, ``(H, W, 3)`` or ``(H, W, 4)``)."""
    arr = to_uint8(image)
    if arr.ndim == 3 and arr.shape[2] not in (3, 4):
        raise ValueError(f"cannot write array of shape {arr.shape} as PNG")
    Image.fromarray(arr).save(path, format="PNG")


def write_json(path, obj) -> None:
    Path(path).write_text(
        json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8"
    )


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))
