"""Command-line front end.

    fogbench synthesize --output DATA --scenes 100 --variants 30 --seed 7
    fogbench estimate   --input DATA [--source oracle|fit|maps]
    fogbench invert     --input DATA [--noise 0.01]
    fogbench evaluate   --input DATA --split test
    fogbench defog      --input DATA

Exit codes: 0 success, 2 validation error, 3 numeric/identifiability error.
``FOGBENCH_SEED`` overrides ``--seed`` when set.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import zlib
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from fogbench import io, render, synth
from fogbench.errors import FogbenchError, IdentifiabilityError
from fogbench.estimate import EstimationConfig, classify, estimation_mask, image_visibility, pixel_visibility
from fogbench.invert import FitOptions, fit_uniform_fog, transmission_from_images
from fogbench.metrics import image_report, regression_metrics
from fogbench.physics import Airlight, defog, visibility_map

log = logging.getLogger("fogbench")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC = 0, 2, 3
_NOISE_STREAM = 4


def parse_size(text: str) -> tuple[int, int]:
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like HxW, got {text!r}") from None
    if h < 4 or w < 4:
        raise argparse.ArgumentTypeError("size must be at least 4x4")
    return h, w


def resolve_seed(seed: int) -> int:
    env = os.environ.get("FOGBENCH_SEED")
    return int(env) if env not in (None, "") else seed


def _map(fn, tasks, workers: int):
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


def list_samples(root: Path, split: str = "all") -> list[Path]:
    dirs = sorted(p for p in root.iterdir() if (p / "meta.json").is_file())
    if split == "all":
        return dirs
    manifest = synth.read_manifest(root)
    wanted = {synth.sample_dir_name(s, v) for s, v in manifest.lists()[split]}
    return [p for p in dirs if p.name in wanted]


def _out_dir(args, sample: Path) -> Path:
    out = Path(args.output) / sample.name if args.output else sample
    out.mkdir(parents=True, exist_ok=True)
    return out


def _read_foggy(sample: Path, prefer_png: bool = False) -> np.ndarray:
    pfm = sample / "foggy.pfm"
    if pfm.exists() and not prefer_png:
        return np.clip(io.read_pfm(pfm).astype(np.float64), 0.0, 1.0)
    return io.read_png(sample / "foggy.png")


# ---------------------------------------------------------------------------
# synthesize
# ---------------------------------------------------------------------------

def _load_scene(task):
    kind, ref, seed, size = task
    if kind == "procedural":
        return synth.procedural_scene(ref, seed, size)
    d = Path(ref)
    return io.read_png(d / "fogless.png"), io.read_pfm(d / "depth.pfm").astype(np.float64)


def _synthesize_scene(task) -> list[str]:
    index, scene_id, source, seed, size, variants, eps, out = task
    fogless, depth = _load_scene((source[0], source[1], seed, size))
    names = []
    for v in range(variants):
        sample = synth.make_sample(
            fogless, depth, synth.sample_rng(seed, index, v),
            scene_id=scene_id, variant_id=v, eps=eps, seed=seed,
        )
        synth.write_sample(sample, out)
        names.append(sample.name)
    return names


def cmd_synthesize(args) -> int:
    seed = resolve_seed(args.seed)
    out = Path(args.output)
    if args.input:
        scene_dirs = sorted(
            p for p in Path(args.input).iterdir()
            if (p / "fogless.png").is_file() and (p / "depth.pfm").is_file()
        )
        if not scene_dirs:
            raise FileNotFoundError(f"no fogless.png + depth.pfm scenes under {args.input}")
        scene_ids = [p.name for p in scene_dirs]
        sources = [("dir", str(p)) for p in scene_dirs]
    else:
        scene_ids = [synth.scene_name(k) for k in range(args.scenes)]
        sources = [("procedural", k) for k in range(args.scenes)]
    manifest = synth.build_manifest(scene_ids, args.variants, seed)
    out.mkdir(parents=True, exist_ok=True)
    tasks = [
        (k, sid, src, seed, args.size, args.variants, args.eps, str(out))
        for k, (sid, src) in enumerate(zip(scene_ids, sources))
    ]
    written = sum(len(names) for names in _map(_synthesize_scene, tasks, args.workers))
    synth.write_manifest(manifest, out)
    log.info("wrote %d samples (%d/%d/%d) to %s", written,
             len(manifest.train), len(manifest.val), len(manifest.test), out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# estimate
# ---------------------------------------------------------------------------

def _estimation_inputs(sample: Path, source: str):
    """Transmission, depth and an extra validity mask for the chosen source."""
    if source == "oracle":
        t = io.read_pfm(sample / "transmission.pfm").astype(np.float64)
        d = io.read_pfm(sample / "depth.pfm").astype(np.float64)
        return t, d, np.ones(t.shape, bool)
    if source == "maps":
        t = io.read_pfm(sample / "transmission_est.pfm").astype(np.float64)
        dbar = io.read_pfm(sample / "disparity_est.pfm").astype(np.float64)
        with np.errstate(divide="ignore"):
            d = np.where(dbar > 0, 1.0 / dbar, np.inf)
        return np.clip(t, 0.0, 1.0), d, dbar > 0
    # fit: airlight from the least-squares fit, transmission per pixel
    foggy = _read_foggy(sample)
    fogless = io.read_png(sample / "fogless.png")
    d = io.read_pfm(sample / "depth.pfm").astype(np.float64)
    fit = fit_uniform_fog(foggy, fogless, d)
    t, ok = transmission_from_images(foggy, fogless, fit.airlight)
    return t, d, ok


def _estimate_one(task) -> dict:
    sample, out, source, cfg = task
    sample, out = Path(sample), Path(out)
    t, d, ok = _estimation_inputs(sample, source)
    vis = pixel_visibility(t, d, cfg.eps)
    vis = vis._replace(valid=vis.valid & ok)
    mask = estimation_mask(vis, t, cfg)
    v_img = image_visibility(vis, t, cfg)

    io.write_pfm(out / "visibility_map.pfm", vis.values)
    io.write_png(out / "visibility_mask.png", vis.valid.astype(np.float64))
    counts, edges = render.histogram(vis.values, mask, cfg.v_min, cfg.v_max)
    render.write_histogram_csv(out / "histogram.csv", counts, edges)
    render.write_visibility_png(out / "visibility_map.png", vis.values, vis.valid, edges[0], edges[-1])
    result = {
        "image_visibility_m": v_img,
        "valid_fraction": float(mask.mean()),
        "class": classify(v_img),
        "source": source,
    }
    io.write_json(out / "estimate.json", result)
    return result


def cmd_estimate(args) -> int:
    cfg = EstimationConfig(eps=args.eps, t_min=args.t_min, v_max=args.v_max, v_min=args.v_min)
    samples = list_samples(Path(args.input), args.split)
    tasks = [(str(s), str(_out_dir(args, s)), args.source, cfg) for s in samples]
    results = _map(_estimate_one, tasks, args.workers)
    log.info("estimated visibility for %d samples", len(results))
    return EXIT_OK


# ---------------------------------------------------------------------------
# invert
# ---------------------------------------------------------------------------

def _invert_one(task) -> dict:
    sample, out, noise, seed, eps, prefer_png = task
    sample, out = Path(sample), Path(out)
    foggy = _read_foggy(sample, prefer_png)
    fogless = io.read_png(sample / "fogless.png")
    depth = io.read_pfm(sample / "depth.pfm").astype(np.float64)
    if noise > 0:
        rng = np.random.default_rng([seed, _NOISE_STREAM, zlib.crc32(sample.name.encode())])
        foggy = np.clip(foggy + rng.normal(0.0, noise, foggy.shape), 0.0, 1.0)
    record: dict = {"noise_sigma": noise}
    try:
        fit = fit_uniform_fog(foggy, fogless, depth, FitOptions(eps=eps))
    except IdentifiabilityError as exc:
        record.update(status="identifiability_error", error=str(exc))
    else:
        record.update(fit.to_json(), status="ok")
    meta_path = sample / "meta.json"
    if meta_path.exists():
        meta = io.read_json(meta_path)
        record["visibility_gt"] = meta["visibility_m"]
        record["airlight_gt"] = meta["airlight_rgb"]
        if record["status"] == "ok":
            record["abs_rel_visibility"] = abs(record["visibility"] - meta["visibility_m"]) / meta["visibility_m"]
    io.write_json(out / "fit.json", record)
    return record


def cmd_invert(args) -> int:
    seed = resolve_seed(args.seed)
    samples = list_samples(Path(args.input), args.split)
    tasks = [(str(s), str(_out_dir(args, s)), args.noise, seed, args.eps, args.use_png) for s in samples]
    records = _map(_invert_one, tasks, args.workers)
    failed = [r for r in records if r["status"] != "ok"]
    errs = [r["abs_rel_visibility"] for r in records if "abs_rel_visibility" in r]
    if errs:
        log.info("inverted %d samples, mean visibility AbsRel %.3g", len(errs), float(np.mean(errs)))
    if failed:
        log.error("%d sample(s) not identifiable", len(failed))
        return EXIT_NUMERIC
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def cmd_evaluate(args) -> int:
    root = Path(args.input)
    pred_root = Path(args.predictions) if args.predictions else root
    samples = list_samples(root, args.split)
    if not samples:
        raise ValueError(f"no samples in split {args.split!r}")
    preds, gts = [], []
    pix_pred, pix_gt = [], []
    for s in samples:
        meta = io.read_json(s / "meta.json")
        est = io.read_json(pred_root / s.name / "estimate.json")
        preds.append(float(est["image_visibility_m"]))
        gts.append(float(meta["visibility_m"]))
        if args.granularity == "pixel":
            v_pred = io.read_pfm(pred_root / s.name / "visibility_map.pfm").astype(np.float64)
            ok_pred = io.read_png(pred_root / s.name / "visibility_mask.png")[..., 0] > 0.5
            t = io.read_pfm(s / "transmission.pfm").astype(np.float64)
            d = io.read_pfm(s / "depth.pfm").astype(np.float64)
            gt_map = visibility_map(d, t, meta.get("epsilon", args.eps))
            keep = ok_pred & gt_map.valid & (v_pred > 0)
            # predictions went through a float32 PFM; compare at that precision
            gt_values = gt_map.values.astype(np.float32).astype(np.float64)
            pix_pred.append(v_pred[keep])
            pix_gt.append(gt_values[keep])
    report = image_report(preds, gts)
    if args.granularity == "pixel":
        accuracy = report.accuracy
        report = regression_metrics(np.concatenate(pix_pred), np.concatenate(pix_gt))
        report.accuracy = accuracy
    out = Path(args.output) if args.output else root / "metrics.json"
    if out.suffix != ".json":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "metrics.json"
    doc = report.to_json()
    io.write_json(out, doc)
    print(" ".join(f"{k}={v}" for k, v in doc.items()))
    return EXIT_OK


# ---------------------------------------------------------------------------
# defog
# ---------------------------------------------------------------------------

def _defog_one(task) -> dict:
    sample, out, source, t_floor = task
    sample, out = Path(sample), Path(out)
    foggy = _read_foggy(sample)
    fogless = io.read_png(sample / "fogless.png")
    if source == "oracle":
        airlight = Airlight.from_array(io.read_json(sample / "meta.json")["airlight_rgb"])
        t = io.read_pfm(sample / "transmission.pfm").astype(np.float64)
    else:
        depth = io.read_pfm(sample / "depth.pfm").astype(np.float64)
        fit = fit_uniform_fog(foggy, fogless, depth)
        airlight = fit.airlight
        t, _ = transmission_from_images(foggy, fogless, airlight)
    j, valid = defog(foggy, airlight, t, t_floor)
    # alpha channel carries validity: opaque where T >= t_floor
    io.write_png(out / "defog.png", np.concatenate([j, valid[..., None].astype(np.float64)], axis=2))
    diff = (j - fogless)[valid]
    mse = float(np.mean(diff * diff)) if diff.size else None
    psnr = None if not mse else 10.0 * math.log10(1.0 / mse)
    record = {
        "psnr_db": psnr,
        "mse": mse,
        "valid_fraction": float(valid.mean()),
        "t_floor": t_floor,
        "source": source,
    }
    io.write_json(out / "defog.json", record)
    return record


def cmd_defog(args) -> int:
    samples = list_samples(Path(args.input), args.split)
    tasks = [(str(s), str(_out_dir(args, s)), args.source, args.t_floor) for s in samples]
    _map(_defog_one, tasks, args.workers)
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", help="input dataset (or scene) directory")
    common.add_argument("--output", help="output directory (defaults to the input dataset)")
    common.add_argument("--seed", type=int, default=0, help="64-bit seed; FOGBENCH_SEED overrides")
    common.add_argument("--size", type=parse_size, default=synth.DEFAULT_SIZE, metavar="HxW",
                        help="procedural scene size (default 288x512)")
    common.add_argument("--eps", type=float, default=0.05, help="contrast threshold")
    common.add_argument("--t-min", type=float, default=1e-2)
    common.add_argument("--v-max", type=float, default=1e5)
    common.add_argument("--v-min", type=float, default=10.0)
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--noise", type=float, default=0.0, help="Gaussian noise sigma added to I")
    common.add_argument("--split", choices=("all", "train", "val", "test"), default="all")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="fogbench", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", parents=[common], help="generate a foggy dataset")
    p.add_argument("--scenes", type=int, default=100)
    p.add_argument("--variants", type=int, default=30)
    p.set_defaults(func=cmd_synthesize, needs_output=True)

    p = sub.add_parser("estimate", parents=[common], help="pixel- and image-wise visibility")
    p.add_argument("--source", choices=("oracle", "fit", "maps"), default="oracle",
                   help="oracle: stored T and D; fit: least-squares airlight + per-pixel T; "
                        "maps: transmission_est.pfm + disparity_est.pfm")
    p.set_defaults(func=cmd_estimate, needs_input=True)

    p = sub.add_parser("invert", parents=[common], help="fit airlight and extinction coefficient")
    p.add_argument("--use-png", action="store_true", help="fit the 8-bit foggy.png instead of foggy.pfm")
    p.set_defaults(func=cmd_invert, needs_input=True)

    p = sub.add_parser("evaluate", parents=[common], help="score estimates against ground truth")
    p.add_argument("--predictions", help="directory holding per-sample estimate.json (defaults to input)")
    p.add_argument("--granularity", choices=("image", "pixel"), default="image")
    p.set_defaults(func=cmd_evaluate, needs_input=True)

    p = sub.add_parser("defog", parents=[common], help="remove fog with known or fitted parameters")
    p.add_argument("--source", choices=("oracle", "fit"), default="oracle")
    p.add_argument("--t-floor", type=float, default=0.01)
    p.set_defaults(func=cmd_defog, needs_input=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "needs_input", False) and not args.input:
        log.error("--input is required for %s", args.command)
        return EXIT_VALIDATION
    if getattr(args, "needs_output", False) and not args.output:
        log.error("--output is required for %s", args.command)
        return EXIT_VALIDATION
    try:
        return args.func(args)
    except (IdentifiabilityError, ArithmeticError) as exc:
        log.error("%s", exc)
        return EXIT_NUMERIC
    except (FogbenchError, ValueError, OSError, KeyError) as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
