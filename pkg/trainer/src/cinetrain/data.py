"""Patch extraction and calibrated noise for denoiser training.

Source images are normalized to unit peak magnitude and paired with a
noisy copy at an exact sample SNR (default 26 dB): the realized noise
vector is rescaled so 20*log10(||image|| / ||noise||) hits the target
exactly. Both images are then cut into the same deterministic grid of
overlapping spatiotemporal patches, so every (noisy, clean) pair shares
one noise level per source image, the way acquisition noise behaves.
Patches with zero clean norm (empty corners) are dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TrainConfig:
    # patch extents in (x, y, t) order; time is the last dimension
    patch_size: tuple = (55, 55, 15)
    stride: tuple | None = None  # defaults to patch_size (non-overlapping)
    noise_snr_db: float = 26.0
    batch_size: int = 4
    learning_rate: float = 1e-4
    epochs: int = 50  # desk scale; the full-scale reference value is 500
    seed: int = 0
    sn_power_iters: int = 1
    sn_domain: tuple = (8, 8, 8)

    def __post_init__(self):
        if len(self.patch_size) != 3 or min(self.patch_size) < 3:
            raise ValueError("patch_size must be three extents >= 3")
        if self.stride is not None and (len(self.stride) != 3 or min(self.stride) < 1):
            raise ValueError("stride must be three positive extents")
        if self.batch_size < 1 or self.epochs < 1 or self.sn_power_iters < 1:
            raise ValueError("batch_size, epochs, sn_power_iters must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")

    @property
    def patch_tyx(self) -> tuple:
        px, py, pt = self.patch_size
        return (pt, py, px)

    @property
    def stride_tyx(self) -> tuple:
        sx, sy, st = self.stride if self.stride is not None else self.patch_size
        return (st, sy, sx)


def _grid_starts(extent: int, patch: int, stride: int) -> list:
    if patch > extent:
        raise ValueError(f"patch extent {patch} exceeds image extent {extent}")
    starts = list(range(0, extent - patch + 1, stride))
    last = extent - patch
    if starts[-1] != last:  # always cover the trailing edge
        starts.append(last)
    return starts


def add_exact_snr_noise(patch: np.ndarray, snr_db: float, rng: np.random.Generator):
    w = rng.standard_normal(patch.shape) + 1j * rng.standard_normal(patch.shape)
    norm = np.linalg.norm(patch.ravel())
    w *= (norm / 10.0 ** (snr_db / 20.0)) / np.linalg.norm(w.ravel())
    return (patch + w).astype(np.complex64)


def extract_patches(images, cfg: TrainConfig):
    """Deterministic (noisy, clean) patch pairs from a list of (nt, ny, nx)
    complex images. Returns two arrays of shape (n, pt, py, px)."""
    pt, py, px = cfg.patch_tyx
    st, sy, sx = cfg.stride_tyx
    clean, noisy = [], []
    for i, img in enumerate(images):
        img = np.asarray(img, dtype=np.complex128)
        peak = np.abs(img).max()
        if peak > 0:
            img = img / peak
        rng = np.random.default_rng([cfg.seed, i])
        noisy_img = add_exact_snr_noise(img, cfg.noise_snr_db, rng)
        for t0 in _grid_starts(img.shape[0], pt, st):
            for y0 in _grid_starts(img.shape[1], py, sy):
                for x0 in _grid_starts(img.shape[2], px, sx):
                    sl = (slice(t0, t0 + pt), slice(y0, y0 + py), slice(x0, x0 + px))
                    patch = img[sl]
                    if np.linalg.norm(patch.ravel()) > 0:
                        clean.append(patch.astype(np.complex64))
                        noisy.append(noisy_img[sl])
    if not clean:
        raise ValueError("no usable (nonzero) patches were extracted")
    return np.stack(noisy), np.stack(clean)
