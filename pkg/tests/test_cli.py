import csv
import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from fogbench import io, synth
from fogbench.cli import main
from fogbench.estimate import classify
from fogbench.physics import Airlight, beta_from_visibility, synthesize, transmission_from_depth


def tree_digest(root: Path) -> str:
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def write_fixed_sample(root: Path, name: str, visibility: float, depth=None, size=(24, 32), airlight=None):
    j, d = synth.procedural_scene(3, seed=1, size=size)
    if depth is not None:
        d = np.broadcast_to(depth, size).astype(np.float64)
    a = airlight or Airlight(0.9, 0.88, 0.86)
    t = transmission_from_depth(d, beta_from_visibility(visibility))
    s = synth.FogSample(name, 0, j, d, visibility, a, t, synthesize(j, t, a), seed=0)
    return synth.write_sample(s, root)


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    assert main(["synthesize", "--output", str(root), "--scenes", "10", "--variants", "3",
                 "--size", "32x40", "--seed", "7"]) == 0
    return root


def test_synthesize_layout(dataset):
    dirs = [p for p in dataset.iterdir() if p.is_dir()]
    assert len(dirs) == 30
    split = io.read_json(dataset / "split.json")
    assert [len(split[k]) for k in ("train", "val", "test")] == [21, 6, 3]
    meta = io.read_json(dirs[0] / "meta.json")
    assert set(meta) == {"scene_id", "variant_id", "visibility_m", "airlight_rgb", "epsilon", "seed"}
    assert meta["seed"] == 7 and 10 <= meta["visibility_m"] <= 1000
    assert io.read_png(dirs[0] / "fogless.png").shape == (32, 40, 3)


def test_synthesize_minimal_split(tmp_path):
    assert main(["synthesize", "--output", str(tmp_path), "--scenes", "10", "--variants", "1", "--size", "8x8"]) == 0
    split = io.read_json(tmp_path / "split.json")
    assert [len(split[k]) for k in ("train", "val", "test")] == [7, 2, 1]


def test_synthesize_is_byte_identical(tmp_path):
    args = ["synthesize", "--scenes", "10", "--variants", "2", "--size", "16x16", "--seed", "3"]
    assert main(args + ["--output", str(tmp_path / "a")]) == 0
    assert main(args + ["--output", str(tmp_path / "b"), "--workers", "2"]) == 0
    assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")
    assert main(["synthesize", "--scenes", "10", "--variants", "2", "--size", "16x16", "--seed", "4",
                 "--output", str(tmp_path / "c")]) == 0
    assert tree_digest(tmp_path / "a") != tree_digest(tmp_path / "c")


def test_seed_environment_override(tmp_path, monkeypatch):
    args = ["synthesize", "--scenes", "10", "--variants", "1", "--size", "8x8"]
    assert main(args + ["--seed", "5", "--output", str(tmp_path / "a")]) == 0
    monkeypatch.setenv("FOGBENCH_SEED", "5")
    assert main(args + ["--seed", "999", "--output", str(tmp_path / "b")]) == 0
    assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")


def test_synthesize_from_scene_directory(tmp_path):
    scenes = tmp_path / "scenes"
    for k in range(10):
        j, d = synth.procedural_scene(k, seed=2, size=(12, 12))
        (scenes / f"street{k}").mkdir(parents=True)
        io.write_png(scenes / f"street{k}" / "fogless.png", j)
        io.write_pfm(scenes / f"street{k}" / "depth.pfm", d)
    out = tmp_path / "out"
    assert main(["synthesize", "--input", str(scenes), "--output", str(out), "--variants", "2"]) == 0
    assert (out / "street3_v01" / "foggy.png").exists()
    s = synth.read_sample(out / "street3_v01")
    assert np.array_equal(s.fogless, synth.procedural_scene(3, seed=2, size=(12, 12))[0])


def test_estimate_oracle_recovers_visibility(tmp_path):
    write_fixed_sample(tmp_path, "v500", 500.0)
    assert main(["estimate", "--input", str(tmp_path)]) == 0
    est = io.read_json(tmp_path / "v500_v00" / "estimate.json")
    assert abs(est["image_visibility_m"] - 500.0) <= 0.5
    assert est["class"] == classify(est["image_visibility_m"]) == 2
    out = tmp_path / "v500_v00"
    assert io.read_pfm(out / "visibility_map.pfm").shape == (24, 32)
    assert io.read_png(out / "visibility_map.png").shape == (24, 32, 3)
    side = io.read_json(out / "visibility_map.json")
    assert side["colormap"] == "fogbench-vis5" and side["vmin_m"] == 10.0
    with open(out / "histogram.csv") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["bin_left", "bin_right", "count"] and len(rows) == 51
    mask_count = round(est["valid_fraction"] * 24 * 32)
    assert sum(int(r[2]) for r in rows[1:]) == mask_count


def test_estimate_all_sky_falls_back(tmp_path):
    write_fixed_sample(tmp_path, "sky", 300.0, depth=np.inf)
    assert main(["estimate", "--input", str(tmp_path)]) == 0
    est = io.read_json(tmp_path / "sky_v00" / "estimate.json")
    assert est["image_visibility_m"] == 10.0 and est["valid_fraction"] == 0.0 and est["class"] == 0


def test_estimate_from_external_maps(tmp_path):
    path = write_fixed_sample(tmp_path, "maps", 250.0)
    s = synth.read_sample(path)
    io.write_pfm(path / "transmission_est.pfm", s.transmission)
    io.write_pfm(path / "disparity_est.pfm", 1.0 / s.depth)
    assert main(["estimate", "--input", str(tmp_path), "--source", "maps"]) == 0
    est = io.read_json(path / "estimate.json")
    assert est["image_visibility_m"] == pytest.approx(250.0, rel=1e-4)


def test_estimate_fit_source(dataset, tmp_path):
    assert main(["estimate", "--input", str(dataset), "--source", "fit", "--output", str(tmp_path)]) == 0
    for p in tmp_path.iterdir():
        est = io.read_json(p / "estimate.json")
        meta = io.read_json(dataset / p.name / "meta.json")
        assert est["image_visibility_m"] == pytest.approx(meta["visibility_m"], rel=1e-3)


def test_estimate_rejects_bad_thresholds(dataset, tmp_path):
    assert main(["estimate", "--input", str(dataset), "--t-min", "2", "--output", str(tmp_path)]) == 2
    assert main(["estimate", "--input", str(dataset), "--v-min", "1e6", "--output", str(tmp_path)]) == 2


def test_invert_noise_free(dataset, tmp_path):
    assert main(["invert", "--input", str(dataset), "--output", str(tmp_path)]) == 0
    for p in tmp_path.iterdir():
        fit = io.read_json(p / "fit.json")
        assert fit["status"] == "ok"
        assert fit["abs_rel_visibility"] < 1e-4
        assert {"airlight", "beta", "visibility", "residual_rms", "iterations", "converged"} <= set(fit)


def test_invert_with_noise(tmp_path):
    ds = tmp_path / "ds"
    assert main(["synthesize", "--output", str(ds), "--scenes", "10", "--variants", "10",
                 "--size", "32x32", "--seed", "11"]) == 0
    assert main(["invert", "--input", str(ds), "--noise", "0.01", "--seed", "11", "--workers", "4"]) == 0
    errs = [io.read_json(p / "fit.json")["abs_rel_visibility"] for p in ds.iterdir() if p.is_dir()]
    assert len(errs) == 100
    assert np.mean(errs) < 0.05


def test_invert_degenerate_sample(tmp_path):
    # fogless equals airlight; 1.0 survives both png and float32 round trips
    a = Airlight(1.0, 1.0, 1.0)
    d = np.full((8, 8), 50.0)
    d[4:] = 20.0
    j = np.broadcast_to(a.as_array(), (8, 8, 3)).copy()
    t = transmission_from_depth(d, 0.01)
    s = synth.FogSample("flat", 0, j, d, 300.0, a, t, synthesize(j, t, a))
    synth.write_sample(s, tmp_path)
    assert main(["invert", "--input", str(tmp_path)]) == 3
    fit = io.read_json(tmp_path / "flat_v00" / "fit.json")
    assert fit["status"] == "identifiability_error"


def test_evaluate_perfect_and_scaled_predictions(dataset, tmp_path):
    for p in (d for d in dataset.iterdir() if d.is_dir()):
        v = io.read_json(p / "meta.json")["visibility_m"]
        (tmp_path / "perfect" / p.name).mkdir(parents=True)
        (tmp_path / "scaled" / p.name).mkdir(parents=True)
        io.write_json(tmp_path / "perfect" / p.name / "estimate.json", {"image_visibility_m": v})
        io.write_json(tmp_path / "scaled" / p.name / "estimate.json", {"image_visibility_m": v * 1.1})
    out = tmp_path / "m1.json"
    assert main(["evaluate", "--input", str(dataset), "--predictions", str(tmp_path / "perfect"),
                 "--output", str(out)]) == 0
    m = io.read_json(out)
    assert max(m["abs_rel"], m["sq_rel"], m["rmse"], m["rmse_log"]) < 1e-6
    assert m["accuracy"] == 1.0 and m["valid_count"] == 30
    out = tmp_path / "m2.json"
    assert main(["evaluate", "--input", str(dataset), "--predictions", str(tmp_path / "scaled"),
                 "--output", str(out)]) == 0
    assert io.read_json(out)["abs_rel"] == pytest.approx(0.1, abs=1e-12)


def test_evaluate_oracle_estimates(dataset, tmp_path):
    pred = tmp_path / "pred"
    assert main(["estimate", "--input", str(dataset), "--output", str(pred)]) == 0
    out = tmp_path / "m.json"
    assert main(["evaluate", "--input", str(dataset), "--predictions", str(pred), "--output", str(out)]) == 0
    m = io.read_json(out)
    assert m["abs_rel"] < 1e-6 and m["rmse_log"] < 1e-6 and m["accuracy"] == 1.0
    assert main(["evaluate", "--input", str(dataset), "--predictions", str(pred), "--output", str(out),
                 "--granularity", "pixel"]) == 0
    m = io.read_json(out)
    assert max(m["abs_rel"], m["sq_rel"], m["rmse"], m["rmse_log"]) < 1e-6
    assert m["valid_count"] > 30


def test_evaluate_split_filter(dataset, tmp_path):
    pred = tmp_path / "pred"
    assert main(["estimate", "--input", str(dataset), "--output", str(pred), "--split", "test"]) == 0
    assert len(list(pred.iterdir())) == 3
    out = tmp_path / "m.json"
    assert main(["evaluate", "--input", str(dataset), "--predictions", str(pred), "--split", "test",
                 "--output", str(out)]) == 0
    split = io.read_json(dataset / "split.json")
    assert io.read_json(out)["valid_count"] == len(split["test"])
    # other splits have no predictions in this directory
    assert main(["evaluate", "--input", str(dataset), "--predictions", str(pred), "--split", "val",
                 "--output", str(out)]) == 2


def test_defog_oracle(dataset, tmp_path):
    assert main(["defog", "--input", str(dataset), "--output", str(tmp_path)]) == 0
    for p in tmp_path.iterdir():
        rec = io.read_json(p / "defog.json")
        assert rec["psnr_db"] is None or rec["psnr_db"] > 60
        assert (p / "defog.png").exists()


def test_defog_unit_transmission_reproduces_input(tmp_path):
    path = write_fixed_sample(tmp_path, "clear", 500.0, depth=0.0)
    assert main(["defog", "--input", str(tmp_path)]) == 0
    from PIL import Image

    with Image.open(path / "defog.png") as im:
        assert im.mode == "RGBA"
        rgba = np.asarray(im)
    with Image.open(path / "foggy.png") as im:
        foggy = np.asarray(im)
    assert np.array_equal(rgba[..., :3], foggy)
    assert np.all(rgba[..., 3] == 255)


def test_defog_flags_low_transmission(tmp_path):
    d = np.full((8, 8), 10.0)
    d[:3] = np.inf
    path = write_fixed_sample(tmp_path, "lowt", 100.0, depth=d, size=(8, 8))
    assert main(["defog", "--input", str(tmp_path)]) == 0
    from PIL import Image

    with Image.open(path / "defog.png") as im:
        alpha = np.asarray(im)[..., 3]
    assert np.all(alpha[:3] == 0) and np.all(alpha[3:] == 255)
    assert json.loads((path / "defog.json").read_text())["valid_fraction"] == pytest.approx(5 / 8)


@pytest.mark.parametrize("argv", [
    ["synthesize"],
    ["estimate"],
    ["synthesize", "--output", "x", "--size", "3by4"],
    ["bogus"],
])
def test_validation_exit_code(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 2


def test_split_error_exit_code(tmp_path):
    assert main(["synthesize", "--output", str(tmp_path), "--scenes", "5", "--variants", "1", "--size", "8x8"]) == 2
