import subprocess

import numpy as np
import pytest
import torch

from cinetrain.cplx import read_image, write_cplx
from cinetrain.data import TrainConfig
from cinetrain.export import denoise_patch, export_weights, import_weights
from cinetrain.train import TrainingError, config_hash, train

torch.set_num_threads(1)


def smooth_images(n, shape=(6, 20, 20), seed=0):
    from scipy.ndimage import gaussian_filter

    out = []
    for s in range(n):
        rng = np.random.default_rng(seed + s)
        x = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        x = gaussian_filter(x.real, 1.5) + 1j * gaussian_filter(x.imag, 1.5)
        out.append(x / np.abs(x).max())
    return out


def tiny_cfg(**kw):
    base = dict(patch_size=(10, 10, 4), stride=(10, 10, 4), epochs=2, batch_size=4,
                seed=0)
    base.update(kw)
    return TrainConfig(**base)


def test_zero_noise_training_learns_zero_residual():
    # clean targets equal inputs: the residual net must learn the zero map
    cfg = tiny_cfg(noise_snr_db=300.0, epochs=40, learning_rate=1e-3)
    net, info = train(smooth_images(2), cfg, log=lambda *a: None)
    assert info["loss_trace"][-1] < 1e-6


def test_training_is_reproducible():
    cfg = tiny_cfg(epochs=3)
    _, a = train(smooth_images(2), cfg, log=lambda *a: None)
    _, b = train(smooth_images(2), cfg, log=lambda *a: None)
    assert np.allclose(a["loss_trace"], b["loss_trace"], atol=1e-6)
    assert a["config_hash"] == b["config_hash"]


def test_divergent_loss_raises():
    cfg = tiny_cfg(epochs=5, learning_rate=1e18)
    with pytest.raises(TrainingError):
        train(smooth_images(2), cfg, log=lambda *a: None)


def test_exported_file_passes_primary_certification(tmp_path):
    cfg = tiny_cfg(epochs=2)
    net, info = train(smooth_images(2), cfg, log=lambda *a: None)
    w = tmp_path / "net.pnpd"
    export_weights(net, w, info)
    assert (tmp_path / "net.pnpd.manifest.txt").exists()
    assert (tmp_path / "net.pnpd.loss.json").exists()
    proc = subprocess.run(
        ["pnpcine", "certify", "--weights", str(w), "--tol", "1e-3"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr


def test_roundtrip_import_matches_export(tmp_path):
    cfg = tiny_cfg(epochs=1)
    net, info = train(smooth_images(1), cfg, log=lambda *a: None)
    w = tmp_path / "net.pnpd"
    export_weights(net, w, info)
    back, residual = import_weights(w)
    assert residual is True
    for a, b in zip(net.convs, back.convs):
        assert torch.equal(a.weight, b.weight)
        assert torch.equal(a.bias, b.bias)


def test_parity_with_primary_runtime(tmp_path):
    cfg = tiny_cfg(epochs=2)
    net, info = train(smooth_images(2), cfg, log=lambda *a: None)
    w = tmp_path / "net.pnpd"
    export_weights(net, w, info)
    rng = np.random.default_rng(3)
    for i in range(3):
        patch = (rng.standard_normal((5, 12, 12))
                 + 1j * rng.standard_normal((5, 12, 12))).astype(np.complex64)
        mine = denoise_patch(net, patch)
        pin = tmp_path / f"in{i}.cplx"
        pout = tmp_path / f"out{i}.cplx"
        write_cplx(pin, patch)
        proc = subprocess.run(
            ["pnpcine", "denoise", "--weights", str(w), "--in", str(pin),
             "--out", str(pout), "--no-certify"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr
        theirs = read_image(pout)
        assert np.abs(mine - theirs).max() <= 1e-4


def test_config_hash_tracks_content():
    assert config_hash(tiny_cfg()) == config_hash(tiny_cfg())
    assert config_hash(tiny_cfg()) != config_hash(tiny_cfg(seed=1))
