"""SENSE forward model, centered unitary FFTs, coil compression, and
Walsh-style sensitivity estimation.

The encoding operator is A x = mask * F (S_c * x_t) per coil and frame,
with F the centered orthonormal 2-D DFT, so ||A|| <= 1 whenever the maps
have unit per-pixel norm. All operators are pure functions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter

from .core import ComplexImage, MultiCoilKSpace, SamplingMask, SensitivityMaps
from .errors import DimensionError, ParameterError

__all__ = [
    "fft2c",
    "ifft2c",
    "SenseModel",
    "sense_forward",
    "sense_adjoint",
    "CoilCompression",
    "coil_compress",
    "compress_maps",
    "estimate_maps_walsh",
    "coil_combine",
]


def fft2c(frame: np.ndarray) -> np.ndarray:
    """Centered orthonormal 2-D DFT over the trailing two axes."""
    x = np.fft.ifftshift(frame, axes=(-2, -1))
    k = np.fft.fft2(x, axes=(-2, -1), norm="ortho")
    return np.fft.fftshift(k, axes=(-2, -1))


def ifft2c(kspace: np.ndarray) -> np.ndarray:
    """Inverse of fft2c (exactly unitary)."""
    k = np.fft.ifftshift(kspace, axes=(-2, -1))
    x = np.fft.ifft2(k, axes=(-2, -1), norm="ortho")
    return np.fft.fftshift(x, axes=(-2, -1))


@dataclass(frozen=True)
class SenseModel:
    """Bundles coil maps and a sampling mask over one Cartesian grid."""

    maps: SensitivityMaps
    mask: SamplingMask

    def __post_init__(self):
        if (self.maps.ny, self.maps.nx) != (self.mask.nky, self.mask.nkx):
            raise DimensionError(
                f"image grid {(self.maps.ny, self.maps.nx)} must equal "
                f"k-space grid {(self.mask.nky, self.mask.nkx)}"
            )

    @property
    def nc(self) -> int:
        return self.maps.nc

    @property
    def nt(self) -> int:
        return self.mask.nt

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.mask.nt, self.maps.ny, self.maps.nx)

    # array-level hooks used by the solvers (avoid rewrapping per iteration)
    def forward_array(self, x: np.ndarray) -> np.ndarray:
        coil_images = self.maps.maps[:, None, :, :] * x[None]
        k = fft2c(coil_images)
        k *= self.mask.kept[None]
        return k

    def adjoint_array(self, y: np.ndarray) -> np.ndarray:
        coil_images = ifft2c(y * self.mask.kept[None])
        return np.sum(np.conj(self.maps.maps)[:, None, :, :] * coil_images, axis=0)


def sense_forward(x: ComplexImage, model: SenseModel) -> MultiCoilKSpace:
    """A x: per coil and frame, mask * fft2c(S_c * x_t)."""
    if x.shape != model.shape:
        raise DimensionError(f"image shape {x.shape} does not match model grid {model.shape}")
    return MultiCoilKSpace(model.forward_array(x.data), mask=model.mask)


def sense_adjoint(y: MultiCoilKSpace, model: SenseModel) -> ComplexImage:
    """A^H y: sum_c conj(S_c) * ifft2c(mask * y_c) per frame."""
    if y.shape != (model.nc,) + model.shape:
        raise DimensionError(
            f"k-space shape {y.shape} does not match model {(model.nc,) + model.shape}"
        )
    return ComplexImage(model.adjoint_array(y.data))


@dataclass(frozen=True)
class CoilCompression:
    """Virtual-coil projection: compressed k-space, the (nc x n_virtual)
    basis, and the fraction of squared-singular-value energy retained."""

    kspace: MultiCoilKSpace
    basis: np.ndarray
    energy_retained: float


def coil_compress(y: MultiCoilKSpace, n_virtual: int) -> CoilCompression:
    """Project onto the top principal coil subspace.

    Stacks all samples as an (nc x M) matrix, takes its top ``n_virtual``
    left singular vectors as virtual coils, and reports the retained
    energy fraction. Basis vectors are phase-fixed so their largest-
    magnitude entry is real-positive, keeping outputs rerun-stable.
    """
    if n_virtual < 1 or n_virtual > y.nc:
        raise DimensionError(f"n_virtual must lie in [1, {y.nc}], got {n_virtual}")
    X = y.data.reshape(y.nc, -1)
    U, s, _ = np.linalg.svd(X, full_matrices=False)
    total = float(np.sum(s**2))
    energy = 1.0 if total == 0 else float(np.sum(s[:n_virtual] ** 2) / total)
    basis = U[:, :n_virtual].copy()
    for k in range(basis.shape[1]):
        j = int(np.argmax(np.abs(basis[:, k])))
        piv = basis[j, k]
        if piv != 0:
            basis[:, k] *= np.conj(piv) / abs(piv)
    compressed = np.tensordot(np.conj(basis.T), y.data, axes=(1, 0))
    return CoilCompression(MultiCoilKSpace(compressed, mask=y.mask), basis, energy)


def compress_maps(maps: SensitivityMaps, basis: np.ndarray) -> SensitivityMaps:
    """Project coil maps onto a virtual-coil basis and renormalize per pixel.

    Pixels whose projected coil vector vanishes are left at zero.
    """
    m = np.tensordot(np.conj(basis.T), maps.maps, axes=(1, 0))
    norms = np.sqrt(np.sum(np.abs(m) ** 2, axis=0))
    nz = norms > 0
    m[:, nz] /= norms[nz]
    return SensitivityMaps(m)


def estimate_maps_walsh(
    coil_images: np.ndarray, block: int = 7
) -> tuple[SensitivityMaps, int]:
    """Per-pixel principal eigenvector of the local coil covariance.

    ``coil_images`` is the time-averaged per-coil image stack (nc, ny, nx).
    The covariance is accumulated over a block x block neighborhood
    (zero-padded at borders). The global phase per pixel is fixed so the
    first nonzero coil entry is real-nonnegative, and vectors are unit
    norm. Returns the maps plus the count of pixels whose whole
    neighborhood was zero (those map entries are zero vectors).
    """
    imgs = np.asarray(coil_images, dtype=np.complex128)
    if imgs.ndim != 3:
        raise DimensionError(f"expected (nc, ny, nx) coil images, got shape {imgs.shape}")
    nc, ny, nx = imgs.shape
    if block < 1 or block % 2 == 0:
        raise ParameterError("block must be an odd positive integer")
    if block > min(ny, nx):
        raise ParameterError(f"block {block} exceeds image extent {min(ny, nx)}")

    # covariance entries as box-filtered products; scale drops out in eigh
    cov = np.empty((ny, nx, nc, nc), dtype=np.complex128)
    for i in range(nc):
        for j in range(i, nc):
            prod = imgs[i] * np.conj(imgs[j])
            filt = uniform_filter(prod.real, size=block, mode="constant") + 1j * uniform_filter(
                prod.imag, size=block, mode="constant"
            )
            cov[:, :, i, j] = filt
            cov[:, :, j, i] = np.conj(filt)

    _, vecs = np.linalg.eigh(cov.reshape(-1, nc, nc))
    v = vecs[:, :, -1]  # principal eigenvector per pixel, unit norm

    norms = np.linalg.norm(v, axis=1)
    zero_rows = ~(np.abs(cov.reshape(-1, nc, nc)).sum(axis=(1, 2)) > 0)
    v[zero_rows] = 0.0

    # fix global phase: first nonzero coil entry real-nonnegative
    nz_mask = np.abs(v) > 0
    first = np.argmax(nz_mask, axis=1)
    piv = v[np.arange(v.shape[0]), first]
    piv_abs = np.abs(piv)
    good = piv_abs > 0
    phase = np.ones_like(piv)
    phase[good] = np.conj(piv[good]) / piv_abs[good]
    v *= phase[:, None]

    with np.errstate(invalid="ignore"):
        v[~zero_rows] /= norms[~zero_rows, None]

    maps = v.reshape(ny, nx, nc).transpose(2, 0, 1)
    return SensitivityMaps(maps), int(zero_rows.sum())


def coil_combine(coil_images: np.ndarray, maps: SensitivityMaps) -> ComplexImage:
    """Matched-filter combination sum_c conj(S_c) * img_c.

    Accepts (nc, ny, nx) or (nc, nt, ny, nx) stacks; single-frame input is
    combined into a one-frame image.
    """
    imgs = np.asarray(coil_images, dtype=np.complex128)
    if imgs.ndim == 3:
        imgs = imgs[:, None, :, :]
    if imgs.ndim != 4 or imgs.shape[0] != maps.nc or imgs.shape[2:] != (maps.ny, maps.nx):
        raise DimensionError(
            f"coil images {np.asarray(coil_images).shape} do not match maps "
            f"({maps.nc}, {maps.ny}, {maps.nx})"
        )
    combined = np.sum(np.conj(maps.maps)[:, None, :, :] * imgs, axis=0)
    return ComplexImage(combined)
