import itertools

import numpy as np
import pytest

import fusionnet as fn


def pair_rand(pred, truth):
    # ordered pairs over truth > 0, prediction-0 pixels as singletons
    idx = np.flatnonzero(truth.ravel() > 0)
    p, t = pred.ravel()[idx], truth.ravel()[idx]
    same_p = (p[:, None] == p[None, :]) & (p[:, None] > 0) | np.eye(len(idx), dtype=bool)
    same_t = t[:, None] == t[None, :]
    both = (same_p & same_t).sum()
    prec, rec = both / same_p.sum(), both / same_t.sum()
    return 2 * prec * rec / (prec + rec)


def test_network_shapes_and_names():
    net = fn.Network(levels=2, base_features=4, input_size=32, seed=1)
    out = net.predict(np.full((32, 32), 0.5, dtype=np.float32), tta=False)
    assert out.shape == (32, 32)
    assert np.all((out >= 0) & (out <= 1))
    assert "head.conv.bias" in net.parameter_names
    rows = fn.full_network().trace_shapes(640, 640)
    assert rows[5][0] == "bridge"
    assert rows[5][2] == [(40, 40, 1024)]
    with pytest.raises(ValueError):
        net.predict(np.zeros((30, 31), dtype=np.float32), tta=False)


def test_rand_matches_pair_counting():
    rng = np.random.default_rng(0)
    for _ in range(200):
        pred = rng.integers(0, 4, size=(3, 4)).astype(np.int32)
        truth = rng.integers(0, 4, size=(3, 4)).astype(np.int32)
        if not (truth > 0).any():
            continue
        assert fn.rand_fscore(pred, truth) == pytest.approx(pair_rand(pred, truth), abs=1e-12)


def test_info_and_dice():
    a = np.array([[1, 1, 2, 2]], dtype=np.int32)
    assert fn.info_fscore(a, a) == pytest.approx(1.0)
    m = np.array([[1, 1, 0, 0]], dtype=np.uint8)
    assert fn.dice(m, m) == 1.0
    assert fn.dice(m, 1 - m) == 0.0
    assert fn.dice(m, np.array([[0, 1, 1, 0]], dtype=np.uint8)) == 0.5


def test_components_and_evaluate():
    mask = np.array([[1, 0], [0, 1]], dtype=np.uint8)
    assert fn.connected_components(mask, 4).max() == 2
    assert fn.connected_components(mask, 8).max() == 1
    image, label = fn.synthetic_cells(seed=3)
    truth = fn.labels_from_boundary(label)
    report = fn.evaluate(label, truth, median_radius=0)
    assert report["v_rand"] == pytest.approx(1.0)
    assert report["v_info"] == pytest.approx(1.0)
    assert report["total_pixels"] == 64 * 64


def test_d4_group_and_padding():
    img = np.arange(16, dtype=np.float32).reshape(4, 4)
    assert np.array_equal(fn.d4_apply(img, 1), np.rot90(img))
    assert np.array_equal(fn.d4_apply(img, 4), img[:, ::-1])
    variants = {fn.d4_apply(img, k).tobytes() for k in range(8)}
    assert len(variants) == 8
    padded = fn.mirror_pad(img, 2)
    assert np.array_equal(padded, np.pad(img, 2, mode="reflect"))
    assert np.array_equal(fn.crop_center(padded, 2), img)
    images, labels = fn.enrich([img], [img])
    assert len(images) == 8 and len(labels) == 8


def test_warp_and_noise():
    image, label = fn.synthetic_cells(size=32, seed=1)
    w_img, w_lab = fn.elastic_warp(image, label, amplitude=0.0, seed=5)
    assert np.array_equal(w_img, image) and np.array_equal(w_lab, label)
    w_img, w_lab = fn.elastic_warp(image, label, amplitude=4.0, seed=5)
    assert set(np.unique(w_lab)) <= {0.0, 1.0}
    noisy = fn.add_gaussian_noise(np.full((128, 128), 0.5, dtype=np.float32), 0.1, seed=2)
    assert noisy.std() == pytest.approx(0.1, abs=0.005)


def test_gradient_suite_passes():
    results = fn.gradient_suite(seed=3, trials=3)
    assert results and all(r["passed"] for r in results)


def test_train_round_trip(tmp_path):
    pairs = [fn.synthetic_cells(size=16, cells=3, membrane_width=2.0, seed=s) for s in range(3)]
    images, labels = [p[0] for p in pairs], [p[1] for p in pairs]
    config = """
[network]
levels = 1
base_features = 2
input_height = 16
input_width = 16
[optimizer]
learning_rate = 0.01
[training]
epochs = 2
batch_size = 3
seed = 1
folds = 1
[augmentation]
enrich = false
pad_radius = 0
noise_sigma = 0
elastic_amplitude = 0
"""
    path = tmp_path / "model.fnet"
    net, losses, diverged = fn.train(config, images, labels, str(path))
    assert len(losses) == 2 and not diverged
    again, losses2, _ = fn.train(config, images, labels)
    assert losses == losses2
    loaded = fn.Network.load(str(path))
    for tta in (False, True):
        assert np.array_equal(loaded.predict(images[0], tta=tta), net.predict(images[0], tta=tta))
