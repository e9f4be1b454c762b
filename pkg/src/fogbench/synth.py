"""Foggy dataset generation from fog-free images and depth maps.

Each (scene, variant) pair draws from its own random stream derived from
``(seed, scene_index, variant_id)``, so samples can be generated in any order
or in parallel and still come out identical. Within a stream the draws are
consumed in a fixed order: visibility, then airlight B, G, R.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from fogbench import io
from fogbench.errors import ConfigError, ShapeError, SplitError
from fogbench.physics import (
    DEFAULT_EPS,
    Airlight,
    as_rgb_image,
    as_scalar_field,
    beta_from_visibility,
    check_eps,
    synthesize,
    transmission_from_depth,
)

VISIBILITY_RANGE = (10.0, 1000.0)
SPLIT_RATIO = (7, 2, 1)
DEFAULT_SIZE = (288, 512)
NATIVE_SIZE = (576, 1024)

# leading words of the seed sequences, keep the streams apart
_SAMPLE_STREAM = 1
_SPLIT_STREAM = 2
_SCENE_STREAM = 3


def sample_rng(seed: int, scene_index: int, variant_id: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), _SAMPLE_STREAM, int(scene_index), int(variant_id)])


def sample_airlight(rng: np.random.Generator) -> Airlight:
    """Draw a slightly blue-tinted grey airlight.

    On the 0-255 scale: ``B ~ U(180, 255)``, ``G ~ min(U(B-5, B+2), 255)``,
    ``R ~ min(U((B+G)/2 - 5, (B+G)/2 + 2), 255)``.
    """
    b = rng.uniform(180.0, 255.0)
    g = min(rng.uniform(b - 5.0, b + 2.0), 255.0)
    mid = (b + g) / 2.0
    r = min(rng.uniform(mid - 5.0, mid + 2.0), 255.0)
    return Airlight(r / 255.0, g / 255.0, b / 255.0)


@dataclass
class FogSample:
    scene_id: str
    variant_id: int
    fogless: np.ndarray
    depth: np.ndarray
    visibility: float
    airlight: Airlight
    transmission: np.ndarray
    foggy: np.ndarray
    eps: float = DEFAULT_EPS
    seed: int | None = None

    @property
    def name(self) -> str:
        return sample_dir_name(self.scene_id, self.variant_id)

    @property
    def beta(self) -> float:
        return beta_from_visibility(self.visibility, self.eps)

    def meta(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "variant_id": self.variant_id,
            "visibility_m": self.visibility,
            "airlight_rgb": self.airlight.to_list(),
            "epsilon": self.eps,
            "seed": self.seed,
        }

    def digest(self) -> str:
        """SHA-256 over every stored field; equal digests mean identical samples."""
        h = hashlib.sha256()
        h.update(repr(sorted(self.meta().items())).encode())
        for arr in (self.fogless, self.depth, self.transmission, self.foggy):
            h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
        return h.hexdigest()


def sample_dir_name(scene_id: str, variant_id: int) -> str:
    return f"{scene_id}_v{variant_id:02d}"


def make_sample(
    fogless,
    depth,
    rng: np.random.Generator,
    *,
    scene_id: str = "scene",
    variant_id: int = 0,
    eps: float = DEFAULT_EPS,
    seed: int | None = None,
) -> FogSample:
    """Generate one uniform-fog variant of a fog-free scene."""
    eps = check_eps(eps)
    j = as_rgb_image(fogless, "fogless")
    d = as_scalar_field(depth, "depth")
    if j.shape[:2] != d.shape:
        raise ShapeError(f"fogless {j.shape[:2]} and depth {d.shape} differ in size")
    visibility = float(rng.uniform(*VISIBILITY_RANGE))
    t = transmission_from_depth(d, beta_from_visibility(visibility, eps))
    airlight = sample_airlight(rng)
    foggy = synthesize(j, t, airlight)
    return FogSample(scene_id, int(variant_id), j, d, visibility, airlight, t, foggy, eps, seed)


@dataclass
class SplitManifest:
    train: list[tuple[str, int]] = field(default_factory=list)
    val: list[tuple[str, int]] = field(default_factory=list)
    test: list[tuple[str, int]] = field(default_factory=list)

    def to_json(self) -> dict:
        return {k: [[s, v] for s, v in getattr(self, k)] for k in ("train", "val", "test")}

    @classmethod
    def from_json(cls, obj: dict) -> "SplitManifest":
        return cls(**{k: [(str(s), int(v)) for s, v in obj[k]] for k in ("train", "val", "test")})

    def lists(self) -> dict[str, list[tuple[str, int]]]:
        return {"train": self.train, "val": self.val, "test": self.test}


def split_counts(n_scenes: int) -> tuple[int, int, int]:
    if n_scenes < 10:
        raise SplitError(f"a 7:2:1 scene split needs at least 10 scenes, got {n_scenes}")
    total = sum(SPLIT_RATIO)
    n_val = int(math.floor(n_scenes * SPLIT_RATIO[1] / total + 0.5))
    n_test = int(math.floor(n_scenes * SPLIT_RATIO[2] / total + 0.5))
    return n_scenes - n_val - n_test, n_val, n_test


def split_scenes(scene_ids: Sequence[str], seed: int) -> tuple[list[str], list[str], list[str]]:
    """Shuffle scenes and cut them 7:2:1. All variants of a scene stay together."""
    ids = list(scene_ids)
    if len(set(ids)) != len(ids):
        raise SplitError("scene ids must be unique")
    n_train, n_val, _ = split_counts(len(ids))
    order = np.random.default_rng([int(seed), _SPLIT_STREAM]).permutation(len(ids))
    shuffled = [ids[k] for k in order]
    return shuffled[:n_train], shuffled[n_train:n_train + n_val], shuffled[n_train + n_val:]


def build_manifest(scene_ids: Sequence[str], variants_per_scene: int, seed: int) -> SplitManifest:
    if variants_per_scene < 1:
        raise ConfigError("variants_per_scene must be >= 1")
    train, val, test = split_scenes(scene_ids, seed)
    expand = lambda ids: [(s, v) for s in ids for v in range(variants_per_scene)]  # noqa: E731
    return SplitManifest(expand(train), expand(val), expand(test))


def build_dataset(
    scenes: Sequence[tuple[np.ndarray, np.ndarray]],
    variants_per_scene: int,
    seed: int,
    *,
    scene_ids: Sequence[str] | None = None,
    eps: float = DEFAULT_EPS,
) -> tuple[list[FogSample], SplitManifest]:
    """Expand every ``(fogless, depth)`` scene into ``variants_per_scene`` foggy samples."""
    if scene_ids is None:
        scene_ids = [scene_name(k) for k in range(len(scenes))]
    if len(scene_ids) != len(scenes):
        raise ConfigError("one scene id per scene is required")
    manifest = build_manifest(scene_ids, variants_per_scene, seed)
    samples = [
        make_sample(
            j, d, sample_rng(seed, k, v), scene_id=sid, variant_id=v, eps=eps, seed=seed
        )
        for k, (sid, (j, d)) in enumerate(zip(scene_ids, scenes))
        for v in range(variants_per_scene)
    ]
    return samples, manifest


# ---------------------------------------------------------------------------
# Procedural scenes
# ---------------------------------------------------------------------------

def scene_name(index: int) -> str:
    return f"scene_{index:03d}"


def procedural_scene(index: int, seed: int, size: tuple[int, int] = DEFAULT_SIZE):
    """A synthetic street-like scene: ``(fogless RGB, depth in metres)``.

    Depth comes from a ground plane receding from ~2 m at the bottom row to the
    horizon, with box-shaped objects in front of it. Above the horizon there is
    either open sky (infinite depth) or a distant backdrop. Texture cycles
    through gradients, checkerboards, and flat patches. The fogless image sits
    on the 8-bit grid and the depth is float32-representable, so the sample
    round-trips through PNG/PFM without loss.
    """
    h, w = size
    if h < 4 or w < 4:
        raise ConfigError(f"scene size must be at least 4x4, got {h}x{w}")
    rng = np.random.default_rng([int(seed), _SCENE_STREAM, int(index)])
    rows = np.arange(h, dtype=np.float64)[:, None]
    cols = np.arange(w, dtype=np.float64)[None, :]

    horizon = int(rng.integers(h // 5, h // 2))
    near, far = rng.uniform(1.5, 3.0), rng.uniform(400.0, 1500.0)
    frac = np.clip((rows - horizon) / max(h - 1 - horizon, 1), 0.0, 1.0)
    ground = far * (near / far) ** frac
    has_sky = bool(rng.random() < 0.5)
    above = np.inf if has_sky else rng.uniform(1500.0, 3000.0)
    depth = np.where(rows < horizon, above, np.broadcast_to(ground, (h, w))).astype(np.float64)

    kind = index % 3
    if kind == 0:
        base = rng.uniform(0.1, 0.9, 3) + rng.uniform(-0.4, 0.4, 3) * (cols / w)[..., None]
        image = np.broadcast_to(base, (h, w, 3)) + 0.2 * (rows / h)[..., None]
    elif kind == 1:
        cell = int(rng.integers(4, 16))
        check = ((rows // cell + cols // cell) % 2)[..., None]
        c0, c1 = rng.uniform(0.0, 1.0, 3), rng.uniform(0.0, 1.0, 3)
        image = c0 * (1 - check) + c1 * check
    else:
        image = np.broadcast_to(rng.uniform(0.2, 0.8, 3), (h, w, 3)).copy()
    image = np.array(image, dtype=np.float64)

    for _ in range(int(rng.integers(2, 6))):
        bh, bw = int(rng.integers(h // 8 + 1, h // 2 + 2)), int(rng.integers(w // 10 + 1, w // 3 + 2))
        top = int(rng.integers(max(horizon - bh // 2, 0), h - 1))
        left = int(rng.integers(0, w - 1))
        box = (slice(top, min(top + bh, h)), slice(left, min(left + bw, w)))
        bottom = min(top + bh, h) - 1
        # stand the box on the ground at its bottom edge
        d_box = float(ground[bottom, 0]) if bottom >= horizon else rng.uniform(50.0, 400.0)
        depth[box] = np.minimum(depth[box], d_box)
        image[box] = rng.uniform(0.0, 1.0, 3)

    if has_sky:
        image[np.isinf(depth)] = rng.uniform(0.6, 0.95)

    fogless = io.quantize(np.clip(image, 0.0, 1.0))
    depth = depth.astype(np.float32).astype(np.float64)
    return fogless, depth


def procedural_scenes(n: int, seed: int, size: tuple[int, int] = DEFAULT_SIZE):
    return [procedural_scene(k, seed, size) for k in range(n)]


# ---------------------------------------------------------------------------
# On-disk layout
# ---------------------------------------------------------------------------

def write_sample(sample: FogSample, root) -> Path:
    """Write one sample into ``root/<scene>_vNN/``.

    ``foggy.pfm`` keeps the unquantized foggy image next to the 8-bit
    ``foggy.png`` so inversion can be checked without 8-bit rounding noise.
    """
    out = Path(root) / sample.name
    out.mkdir(parents=True, exist_ok=True)
    io.write_png(out / "fogless.png", sample.fogless)
    io.write_pfm(out / "depth.pfm", sample.depth)
    io.write_pfm(out / "transmission.pfm", sample.transmission)
    io.write_png(out / "foggy.png", sample.foggy)
    io.write_pfm(out / "foggy.pfm", sample.foggy)
    io.write_json(out / "meta.json", sample.meta())
    return out


def read_sample(path) -> FogSample:
    path = Path(path)
    meta = io.read_json(path / "meta.json")
    foggy_pfm = path / "foggy.pfm"
    foggy = io.read_pfm(foggy_pfm) if foggy_pfm.exists() else io.read_png(path / "foggy.png")
    return FogSample(
        scene_id=meta["scene_id"],
        variant_id=int(meta["variant_id"]),
        fogless=io.read_png(path / "fogless.png"),
        depth=io.read_pfm(path / "depth.pfm").astype(np.float64),
        visibility=float(meta["visibility_m"]),
        airlight=Airlight.from_array(meta["airlight_rgb"]),
        transmission=io.read_pfm(path / "transmission.pfm").astype(np.float64),
        foggy=np.asarray(foggy, dtype=np.float64),
        eps=float(meta.get("epsilon", DEFAULT_EPS)),
        seed=meta.get("seed"),
    )


def write_manifest(manifest: SplitManifest, root) -> None:
    io.write_json(Path(root) / "split.json", manifest.to_json())


def read_manifest(root) -> SplitManifest:
    return SplitManifest.from_json(io.read_json(Path(root) / "split.json"))
