import json
import math

import numpy as np
import pytest

import dmlct


def test_wavelet_split_reconstructs():
    rng = np.random.default_rng(3)
    x = rng.uniform(-1000.0, 1000.0, size=(40, 56))
    hf = dmlct.high_freq(x, 3, "db3")
    lf = dmlct.low_freq(x, 3, "db3")
    assert hf.shape == x.shape
    np.testing.assert_allclose(hf + lf, x, atol=1e-8)
    flat = dmlct.high_freq(np.full((32, 32), 700.0), 2, "haar")
    assert np.abs(flat).max() < 1e-8


def test_metric_distance_and_loss():
    z = np.array([1.0, 0.0, 0.0])
    w = np.array([0.0, 1.0, 0.0])
    assert dmlct.metric_distance(z, w, 0.5) == pytest.approx(2.0)
    # one aligned pair: pure pull term
    v = dmlct.normalize_rows(np.array([[3.0, 4.0]]))
    assert dmlct.metric_loss(v, v.copy(), 0.15) == pytest.approx(-math.exp(1.0 / 0.15))


def test_anchor_sampling_is_reproducible():
    a = dmlct.sample_anchor_locations(20, 24, 16, seed=9)
    b = dmlct.sample_anchor_locations(20, 24, 16, seed=9)
    assert a == b
    assert len(set(a)) == 16
    assert all(0 <= r < 20 and 0 <= c < 24 for r, c in a)


def test_quality_metrics():
    a = np.zeros((17, 19))
    assert dmlct.psnr(a, a + 25.5, 255.0) == pytest.approx(20.0)
    assert dmlct.ssim(a + 40.0, a + 40.0, 255.0) == 1.0
    with pytest.raises(ValueError):
        dmlct.psnr(a, a, 0.0)


def test_bad_filter_raises_value_error():
    with pytest.raises(ValueError):
        dmlct.high_freq(np.zeros((16, 16)), 1, "db9")


def test_slice_file_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    x = np.round(rng.uniform(-900.0, 900.0, size=(24, 24)), 1)
    path = str(tmp_path / "s0.cthu")
    dmlct.save_slice(x, path, "ldct")
    y, sid = dmlct.load_slice(path)
    assert sid == "s0"
    np.testing.assert_allclose(y, x, atol=0.05)


def test_end_to_end_pipeline(tmp_path):
    data = str(tmp_path / "data")
    run = str(tmp_path / "run")
    out = str(tmp_path / "out")
    rep = str(tmp_path / "rep")

    s = dmlct.synth(data, n_ld=3, n_hd=2, size=64, sigma_ld=60.0, sigma_hd=10.0,
                    hd_shift=-50.0, seed=9)
    assert (s["n_ld"], s["n_hd"], s["n_clean"]) == (3, 2, 3)
    assert s["achieved_sigma_ld"] > s["achieved_sigma_hd"]

    overrides = [
        "epochs=1", "batch_size=2", "crop=16", "wavelet_level=2",
        "gen_base_channels=4", "gen_rrdb_blocks=1", "gen_growth_channels=3",
        "disc_base_channels=4", "proj_hidden_dim=5", "embed_dim=6",
        "num_anchor_locations=8", "steps_per_epoch=2", "seed=3",
    ]
    cfg = json.loads(dmlct.resolve_config_json(overrides=overrides))
    assert cfg["epochs"] == 1 and cfg["tau"] == pytest.approx(0.15)

    r = dmlct.train([data], run, overrides=overrides)
    assert r["steps"] == 2
    assert math.isfinite(r["final"]["total"])

    ckpt = str(tmp_path / "run" / "ckpt_epoch_0001.bin")
    assert dmlct.denoise(ckpt, data, out) == 3

    d = dmlct.Denoiser(ckpt)
    img, _ = dmlct.load_slice(str(tmp_path / "data" / "ld_0000.cthu"))
    y = d.image(img)
    assert y.shape == img.shape and np.isfinite(y).all()
    assert json.loads(d.config_json)["crop"] == 16

    reports = dmlct.evaluate(out, data, rep, window=(-50.0, 50.0))
    assert len(reports) == 4 and reports[-1]["image_id"] == "aggregate"
    assert all(math.isfinite(r["psnr_db"]) for r in reports if r["psnr_db"] is not None)


def test_eval_pairing_mismatch(tmp_path):
    a = str(tmp_path / "a")
    b = str(tmp_path / "b")
    dmlct.synth(a, n_ld=2, n_hd=1, size=64, seed=1)
    dmlct.synth(b, n_ld=1, n_hd=1, size=64, seed=2)
    with pytest.raises(ValueError, match="pairing"):
        dmlct.evaluate(a, b, str(tmp_path / "r"))
