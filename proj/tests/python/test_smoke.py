"""Smoke tests for the Python bindings."""

import numpy as np
import pytest

import ctxot


@pytest.fixture(scope="module")
def retina():
    return ctxot.generate_retina(size=32, seed=7)


def test_generate_retina_shape_and_range(retina):
    assert retina.shape == (32, 32, 3)
    assert retina.min() >= 0.0
    assert retina.max() <= 1.0
    again = ctxot.generate_retina(size=32, seed=7)
    np.testing.assert_array_equal(retina, again)


def test_degrade_is_seeded_and_lowers_psnr(retina):
    noisy, applied = ctxot.degrade(retina, seed=3)
    noisy2, _ = ctxot.degrade(retina, seed=3)
    np.testing.assert_array_equal(noisy, noisy2)
    assert "illumination.applied = true" in applied
    assert ctxot.psnr(retina, noisy) < np.inf
    assert noisy.min() >= 0.0 and noisy.max() <= 1.0


def test_metrics_identities(retina):
    assert ctxot.psnr(retina, retina) == np.inf
    assert ctxot.ssim(retina, retina) == 1.0
    noisy, _ = ctxot.degrade(retina, seed=5)
    assert ctxot.ssim(retina, noisy) == ctxot.ssim(noisy, retina)


def test_encode_unit_rows(retina):
    feats = ctxot.encode(retina)
    assert feats.shape == (16, 64)  # (32/8)^2 vectors of dimension 64
    norms = np.linalg.norm(feats, axis=1)
    np.testing.assert_allclose(norms, 1.0, atol=1e-9)


def test_transport_chain(retina):
    rng = np.random.default_rng(11)
    a = rng.normal(size=(5, 4))
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    b = rng.normal(size=(5, 4))
    b /= np.linalg.norm(b, axis=1, keepdims=True)

    cost = ctxot.cost_matrix(a, b, kind="exp", h=0.5)
    ctx = ctxot.one_sided_cost(cost)
    rem = ctxot.rem_distance(cost)
    emd, plan = ctxot.emd_exact(cost)
    assert ctx <= rem + 1e-9
    assert rem <= emd + 1e-9
    np.testing.assert_allclose(plan.sum(axis=0), 0.2, atol=1e-9)
    np.testing.assert_allclose(plan.sum(axis=1), 0.2, atol=1e-9)

    assert ctxot.contextual_cost(a, a, h=0.5) == pytest.approx(1.0, abs=1e-12)
    value, grad = ctxot.contextual_cost_grad(a, b, h=0.5)
    assert value == pytest.approx(ctx, rel=1e-9)
    assert grad.shape == (5, 4)
    assert np.isfinite(grad).all()


def test_feature_file_roundtrip(tmp_path):
    rng = np.random.default_rng(13)
    feats = rng.normal(size=(6, 8))
    feats /= np.linalg.norm(feats, axis=1, keepdims=True)
    feats = feats.astype(np.float32).astype(np.float64)
    path = str(tmp_path / "feats.ctxf")
    ctxot.write_features(path, feats)
    back = ctxot.read_features(path)
    np.testing.assert_array_equal(feats, back)


def test_ppm_roundtrip(tmp_path, retina):
    path = str(tmp_path / "img.ppm")
    ctxot.write_ppm(path, retina)
    back = ctxot.read_ppm(path)
    assert back.shape == retina.shape
    assert np.abs(back - retina).max() <= 0.5 / 255.0 + 1e-12


def test_tiny_train_and_enhance(tmp_path):
    clean_dir = tmp_path / "clean"
    noisy_dir = tmp_path / "noisy"
    clean_dir.mkdir()
    noisy_dir.mkdir()
    for i in range(3):
        img = ctxot.generate_retina(size=32, seed=100 + i)
        ctxot.write_ppm(str(clean_dir / f"img_{i}.ppm"), img)
        noisy, _ = ctxot.degrade(img, seed=200 + i)
        ctxot.write_ppm(str(noisy_dir / f"img_{i}.ppm"), noisy)

    ckpt = str(tmp_path / "model.ckpt")
    config = "image_size = 16\nmax_steps = 3\nepochs = 10\n"
    ctxot.train(str(clean_dir), str(noisy_dir), ckpt, config_text=config, seed=1)

    img = ctxot.read_ppm(str(noisy_dir / "img_0.ppm"))
    out = ctxot.enhance(ckpt, img)
    assert out.shape == img.shape
    assert out.min() >= 0.0 and out.max() <= 1.0
    np.testing.assert_array_equal(out, ctxot.enhance(ckpt, img))


def test_errors_surface_as_python_exceptions():
    with pytest.raises(ValueError):
        ctxot.generate_retina(size=100, seed=0)
    with pytest.raises(ValueError):
        ctxot.psnr(np.zeros((16, 16, 3)), np.zeros((16, 17, 3)))
    with pytest.raises(OSError):
        ctxot.read_features("/nonexistent/features.ctxf")
