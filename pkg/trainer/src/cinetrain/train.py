"""Training loop: ADAM on MSE between denoised output and clean target,
spectral normalization after every update, deterministic given the seed."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict

import numpy as np
import torch

from .data import TrainConfig, extract_patches
from .model import CineDenoiser, SpectralTracker, finalize_spectral_norms


class TrainingError(RuntimeError):
    pass


def _to_channels(batch: np.ndarray) -> torch.Tensor:
    # (n, t, y, x) complex -> (n, 2, t, y, x) float32
    return torch.from_numpy(np.stack([batch.real, batch.imag], axis=1).astype(np.float32))


def config_hash(cfg: TrainConfig) -> str:
    blob = json.dumps(asdict(cfg), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def train(images, cfg: TrainConfig, log=print):
    """Train on (noisy, clean) patch pairs cut from ``images``.

    Returns (net, info) where info carries the loss trace, achieved
    spectral norms, and the config hash for the manifest.
    """
    torch.manual_seed(cfg.seed)
    noisy, clean = extract_patches(images, cfg)
    n = noisy.shape[0]
    log(f"training on {n} patches of shape {noisy.shape[1:]}")

    net = CineDenoiser()
    tracker = SpectralTracker(net, domain=cfg.sn_domain, seed=cfg.seed)
    tracker.refresh(net, iters=20)
    net.bake_scales()  # start with unit-ball stored weights and unit scales
    opt = torch.optim.Adam(net.parameters(), lr=cfg.learning_rate)

    order_rng = np.random.default_rng(cfg.seed)
    noisy_t = _to_channels(noisy)
    clean_t = _to_channels(clean)

    losses = []
    for epoch in range(cfg.epochs):
        perm = order_rng.permutation(n)
        epoch_loss = 0.0
        steps = 0
        for lo in range(0, n, cfg.batch_size):
            idx = perm[lo : lo + cfg.batch_size]
            xb = noisy_t[idx]
            yb = clean_t[idx]
            denoised = xb - net(xb)
            loss = torch.mean((denoised - yb) ** 2)
            opt.zero_grad()
            loss.backward()
            opt.step()
            tracker.refresh(net, iters=cfg.sn_power_iters)
            val = float(loss.detach())
            if not np.isfinite(val):
                raise TrainingError(
                    f"loss diverged at epoch {epoch} step {steps}; trace so far: {losses}"
                )
            epoch_loss += val
            steps += 1
        losses.append(epoch_loss / steps)
        if epoch % max(1, cfg.epochs // 10) == 0 or epoch == cfg.epochs - 1:
            log(f"epoch {epoch + 1}/{cfg.epochs}  mse {losses[-1]:.3e}")

    net.bake_scales()
    achieved = finalize_spectral_norms(net, domain=cfg.sn_domain)
    log("final spectral norms: " + ", ".join(f"{s:.6f}" for s in achieved))
    info = {
        "loss_trace": losses,
        "spectral_norms": achieved,
        "config": asdict(cfg),
        "config_hash": config_hash(cfg),
        "n_patches": int(n),
    }
    return net, info
