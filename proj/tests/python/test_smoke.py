import json

import numpy as np
import pytest

import aerolabel as al


def test_version_and_commands():
    assert al.__version__.count(".") == 2
    assert "render" in al.command_names()


def test_raster_round_trip(tmp_path):
    values = np.arange(2 * 3 * 4, dtype=float).reshape(2, 3, 4)
    r = al.Raster(values, (500000.0, 2.0, 0.0, 4649776.0, 0.0, -2.0), epsg=32633, sample_type="uint16")
    al.write_raster(r, tmp_path / "a.tif")
    back = al.read_raster(tmp_path / "a.tif")
    assert back == r
    assert back.epsg == 32633
    assert back.transform[1] == 2.0
    np.testing.assert_array_equal(back.values, values)


def test_bad_raster_raises():
    with pytest.raises(al.DataError):
        al.Raster(np.zeros(4))
    with pytest.raises(al.DataError):
        al.read_raster("/nonexistent/x.tif")


def test_rle_round_trip():
    rng = np.random.default_rng(3)
    mask = (rng.random((7, 5)) > 0.5).astype(np.uint8)
    counts = al.rle_encode(mask)
    assert sum(counts) == mask.size
    np.testing.assert_array_equal(al.rle_decode(counts, 5, 7), mask)


def test_superpixels_refine_and_score():
    img = np.zeros((40, 60), dtype=np.uint8)
    img[:, 30:] = 200
    truth = np.zeros((40, 60), dtype=np.uint16)
    truth[:, 30:] = 1
    projected = truth.copy()
    projected[:, 26:30] = 1
    seg = al.slic(img, n_segments=12)
    assert seg.shape == img.shape and seg.min() == 0
    masks = al.MaskSet.from_segments(seg)
    assert len(masks) == seg.max() + 1
    refined = al.refine(projected, masks)
    before, _ = al.miou(projected, truth, 2)
    after, per_class = al.miou(refined, truth, 2)
    assert after > before
    assert len(per_class) == 2
    assert al.boundary_loss(truth, truth) == 0.0
    assert al.felzenszwalb(img, scale=100).max() >= 1


def test_masks_json(tmp_path):
    seg = np.repeat(np.arange(4, dtype=np.int32), 6).reshape(4, 6)
    masks = al.MaskSet.from_segments(seg)
    masks.save(tmp_path / "m.json")
    back = al.MaskSet.load(tmp_path / "m.json")
    assert back.to_json() == masks.to_json()
    assert json.loads(back.to_json())["width"] == 6
    assert back.mask(0).sum() == 6


def test_crf_refines_logits():
    image = np.zeros((1, 16, 16))
    image[0, :, 8:] = 1.0
    logits = np.zeros((2, 4, 4))
    logits[1, :, 2:] = 1.0
    grid = (0.0, 4.0, 0.0, 16.0, 0.0, -4.0)
    fine = (0.0, 1.0, 0.0, 16.0, 0.0, -1.0)
    lg = al.Raster(logits, grid, epsg=32633)
    im = al.Raster(image, fine, epsg=32633)
    labels, log_q = al.refine_lulc(lg, im, al.CrfParams(theta_beta=[1.0]), exact=True)
    assert labels.values.shape == (1, 16, 16)
    assert log_q.bands == 2
    np.testing.assert_allclose(np.exp(log_q.values).sum(axis=0), 1.0, atol=1e-5)
    assert set(np.unique(labels.values)) <= {0.0, 1.0}


def test_pipeline_commands(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "output_dir": "out", "seed": 5,
        "camera": {"fx": 60, "fy": 60, "cx": 40, "cy": 30, "width": 80, "height": 60},
        "refine": {"slic": {"n_segments": 20}},
        "synth": {"scene": {"size": 64, "coarse_res": 8, "feature_scale": 30},
                  "trajectory": {"frames": 2, "altitude_min": 25, "altitude_max": 30, "radius": 10}},
    }))
    synth = al.run_command("synth", cfg)
    world = synth["directory"] / "config.json"
    assert "frames.csv" in synth["outputs"]
    assert json.loads(al.resolved_config(world, ["tune.budget=2"]))["tune"]["budget"] == 2
    for command in ("render", "refine-labels", "evaluate"):
        result = al.run_command(command, world)
        assert not result["cached"]
    again = al.run_command("evaluate", world)
    assert again["cached"] and again["stage_key"] == result["stage_key"]
    summary = json.loads((again["directory"] / "manifest.json").read_text())["summary"]
    assert 0.0 < summary["dataset_miou"] <= 1.0
    with pytest.raises(al.ConfigError):
        al.run_command("render", world, ["render.unknown=1"])
