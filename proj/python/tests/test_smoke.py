import math

import numpy as np
import pytest

import cmcc


def test_model_size_and_round_trip(tmp_path):
    p = cmcc.init_kaiming(3)
    assert p.param_count == 1113
    blob = p.to_bytes()
    assert len(blob) == 4460
    q = cmcc.Params.from_bytes(blob)
    assert q.to_bytes() == blob
    path = tmp_path / "m.cmw"
    p.save(path)
    assert cmcc.Params.load(path).to_bytes() == blob
    shapes = [w.shape for w in p.weights()]
    assert shapes == [(3, 3, 3, 7), (3, 3, 7, 14), (1, 1, 14, 3)]


def test_corrupt_weights_raise():
    blob = bytearray(cmcc.init_kaiming(0).to_bytes())
    with pytest.raises(cmcc.FormatError):
        cmcc.Params.from_bytes(bytes(blob[:100]))


def test_predict_is_unit_and_exposure_invariant():
    p = cmcc.init_kaiming(1)
    img = cmcc.synth(5, 1, width=96, height=64)[0]["pixels"]
    assert img.shape == (64, 96, 3) and img.dtype == np.uint8
    x = cmcc.prepare_input(cmcc.thumbnail(img))
    assert x.shape == (32, 48, 3)
    e, degenerate = cmcc.forward(p, x)
    e2, _ = cmcc.forward(p, (x * 0.5).astype(np.float32))
    if not degenerate:
        assert math.isclose(np.linalg.norm(e), 1.0, abs_tol=1e-6)
        assert cmcc.angular_error(e, e2) < 1e-4
    est, _ = cmcc.predict(p, img)
    assert np.allclose(est, e, atol=1e-6)


def test_baselines():
    img = np.ones((4, 4, 3), np.float32) * np.array([0.2, 0.4, 0.4], np.float32)
    gw = cmcc.gray_world(img)
    assert cmcc.angular_error(gw, (1, 2, 2)) < 1e-9
    assert cmcc.angular_error(cmcc.shades_of_gray(img, 1.0), gw) < 1e-9
    assert cmcc.angular_error(cmcc.white_patch(img), gw) < 1e-9
    _, fallback = cmcc.gray_edge(img, order=1, p=1.0)
    assert fallback  # a flat image has no edges
    with pytest.raises(cmcc.ShapeError):
        cmcc.gray_world(np.ones((4, 4), np.float32))


def test_metrics():
    assert cmcc.angular_error((1, 0, 0), (0, 1, 0)) == pytest.approx(90.0)
    s = cmcc.error_stats([1.0, 2.0, 3.0, 4.0])
    assert s["mean"] == pytest.approx(2.5)
    assert s["median"] == pytest.approx(2.5)
    assert s["n"] == 4


def test_dataset_round_trip(tmp_path):
    data = cmcc.synth(2, 3, width=48, height=32)
    cmcc.save_dataset(tmp_path, data)
    back = cmcc.load_dataset(tmp_path)
    assert [d["id"] for d in back] == [d["id"] for d in data]
    for a, b in zip(data, back):
        assert np.array_equal(a["pixels"], b["pixels"])
        assert np.allclose(a["gt"], b["gt"], atol=1e-6)
    with pytest.raises(cmcc.DataError):
        cmcc.load_dataset(tmp_path / "missing")


def test_short_training_run():
    data = cmcc.synth(7, 24, width=96, height=64)
    seen = []
    out = cmcc.train(data[:16], data[16:], epochs=3, batch=8, seed=1,
                     on_epoch=lambda e, loss, err: seen.append(e))
    assert seen == [1, 2, 3]
    assert len(out["history"]) == 3
    assert 1 <= out["selected_epoch"] <= 3
    errs = cmcc.evaluate(out["params"], data[16:], jobs=2)
    assert len(errs) == 8
    assert all(0.0 <= e <= 180.0 for e in errs)
    with pytest.raises(ValueError):
        cmcc.train(data, variant="nope")
