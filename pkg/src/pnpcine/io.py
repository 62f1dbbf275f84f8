"""Binary container and PNG export.

CPLX container (little-endian, version 1):

    bytes 0..3  magic b"CPLX"
    u32         format version
    u32         ndim
    u32[ndim]   dims, slowest-to-fastest storage order
    payload     interleaved float32 (real, imag) pairs, C order

Canonical dims: images (nt, ny, nx); k-space (nc, nt, nky, nkx); masks are
stored as 0/1 images over (nt, nky, nkx). Writing is bit-stable: the same
array always produces the same bytes.
"""

from __future__ import annotations

import struct

import numpy as np
from PIL import Image

from .core import ComplexImage, MultiCoilKSpace, SamplingMask
from .errors import DimensionError, FormatError

__all__ = [
    "write_cplx",
    "read_cplx",
    "read_image",
    "read_kspace",
    "read_mask",
    "write_mask",
    "magnitude_png",
    "error_png",
    "temporal_profile_png",
    "mask_png",
]

CPLX_MAGIC = b"CPLX"
CPLX_VERSION = 1


def write_cplx(path, data) -> None:
    """Write a complex array (or ComplexImage / MultiCoilKSpace) to disk."""
    if isinstance(data, ComplexImage):
        arr = data.data
    elif isinstance(data, MultiCoilKSpace):
        arr = data.data
    else:
        arr = np.asarray(data, dtype=np.complex128)
    with open(path, "wb") as fh:
        fh.write(CPLX_MAGIC)
        fh.write(struct.pack("<II", CPLX_VERSION, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(np.ascontiguousarray(arr, dtype=np.complex64).tobytes(order="C"))


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated CPLX file while reading {what}")
    return buf


def read_cplx(path) -> np.ndarray:
    """Read a CPLX container back as a complex128 array."""
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != CPLX_MAGIC:
            raise FormatError(f"{path}: bad magic, not a CPLX file")
        version, ndim = struct.unpack("<II", _read_exact(fh, 8, "version/ndim"))
        if version != CPLX_VERSION:
            raise FormatError(f"{path}: unsupported CPLX version {version}")
        if not 1 <= ndim <= 8:
            raise FormatError(f"{path}: implausible ndim {ndim}")
        dims = struct.unpack(f"<{ndim}I", _read_exact(fh, 4 * ndim, "dims"))
        n = int(np.prod(dims))
        payload = _read_exact(fh, 8 * n, "payload")
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after payload")
    arr = np.frombuffer(payload, dtype="<c8").reshape(dims)
    return arr.astype(np.complex128)


def read_image(path) -> ComplexImage:
    arr = read_cplx(path)
    if arr.ndim != 3:
        raise FormatError(f"{path}: expected a 3-D image container, got ndim={arr.ndim}")
    return ComplexImage(arr)


def read_kspace(path, mask: SamplingMask | None = None) -> MultiCoilKSpace:
    arr = read_cplx(path)
    if arr.ndim != 4:
        raise FormatError(f"{path}: expected a 4-D k-space container, got ndim={arr.ndim}")
    return MultiCoilKSpace(arr, mask=mask)


def write_mask(path, mask: SamplingMask) -> None:
    write_cplx(path, mask.kept.astype(np.complex128))


def read_mask(path) -> SamplingMask:
    arr = read_cplx(path)
    if arr.ndim != 3:
        raise FormatError(f"{path}: expected a 3-D mask container, got ndim={arr.ndim}")
    kept = arr.real > 0.5
    lines = kept.any(axis=2).sum(axis=1)  # sampled ky lines per frame
    if lines.min() == 0:
        raise FormatError(f"{path}: mask has a frame with no sampled lines")
    r_nominal = kept.shape[1] / float(lines.mean())
    return SamplingMask(kept, r_nominal=r_nominal)


def _to_u8(a: np.ndarray) -> np.ndarray:
    return np.clip(np.round(a * 255.0), 0, 255).astype(np.uint8)


def _frame_mosaic(mag: np.ndarray, per_row: int = 8) -> np.ndarray:
    """Tile (nt, ny, nx) magnitudes into a 2-D mosaic, row-major frames."""
    nt, ny, nx = mag.shape
    cols = min(per_row, nt)
    rows = (nt + cols - 1) // cols
    canvas = np.zeros((rows * ny, cols * nx), dtype=mag.dtype)
    for t in range(nt):
        r, c = divmod(t, cols)
        canvas[r * ny : (r + 1) * ny, c * nx : (c + 1) * nx] = mag[t]
    return canvas


def magnitude_png(path, image: ComplexImage, per_row: int = 8) -> None:
    """Frame mosaic of |image|, normalized to the per-file maximum."""
    mag = np.abs(image.data)
    peak = mag.max()
    if peak > 0:
        mag = mag / peak
    Image.fromarray(_to_u8(_frame_mosaic(mag, per_row)), mode="L").save(path)


def error_png(path, reference: ComplexImage, estimate: ComplexImage,
              amplification: float = 5.0, per_row: int = 8) -> None:
    """Mosaic of the amplified error magnitude |est - ref| * amplification,
    normalized by the reference peak."""
    if reference.shape != estimate.shape:
        raise DimensionError("reference/estimate shapes differ")
    peak = np.abs(reference.data).max()
    if peak == 0:
        raise DimensionError("reference is identically zero")
    err = np.abs(estimate.data - reference.data) * (amplification / peak)
    Image.fromarray(_to_u8(_frame_mosaic(err, per_row)), mode="L").save(path)


def temporal_profile_png(path, image: ComplexImage, x_index: int | None = None,
                         upscale: int = 4) -> None:
    """Profile of |image| along the central vertical line, shown as a
    (y, t) image (time running rightward)."""
    x = image.nx // 2 if x_index is None else int(x_index)
    if not 0 <= x < image.nx:
        raise DimensionError(f"x_index {x} outside [0, {image.nx})")
    prof = np.abs(image.data[:, :, x]).T  # (ny, nt)
    peak = prof.max()
    if peak > 0:
        prof = prof / peak
    prof = np.repeat(np.repeat(prof, upscale, axis=0), upscale, axis=1)
    Image.fromarray(_to_u8(prof), mode="L").save(path)


def mask_png(path, mask: SamplingMask) -> None:
    """ky-t view (left, any-kx collapse) beside the last frame's ky-kx plane."""
    kyt = mask.kept.any(axis=2).T.astype(np.float64)  # (nky, nt)
    last = mask.kept[-1].astype(np.float64)  # (nky, nkx)
    gap = np.zeros((mask.nky, 4))
    panel = np.concatenate([kyt, gap, last], axis=1)
    Image.fromarray(_to_u8(panel), mode="L").save(path)
