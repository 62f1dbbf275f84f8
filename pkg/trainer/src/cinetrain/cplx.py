"""Reader for the toolkit's CPLX container (the training-data interface).

Layout (little-endian): magic b"CPLX", u32 version, u32 ndim, u32 dims in
slowest-to-fastest order, then interleaved float32 (real, imag) payload.
Images are 3-D with dims (nt, ny, nx).
"""

from __future__ import annotations

import struct

import numpy as np

CPLX_MAGIC = b"CPLX"
CPLX_VERSION = 1


class CplxFormatError(ValueError):
    pass


def read_cplx(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(12)
        if len(head) != 12 or head[:4] != CPLX_MAGIC:
            raise CplxFormatError(f"{path}: not a CPLX container")
        version, ndim = struct.unpack("<II", head[4:])
        if version != CPLX_VERSION:
            raise CplxFormatError(f"{path}: unsupported version {version}")
        dims_raw = fh.read(4 * ndim)
        if len(dims_raw) != 4 * ndim:
            raise CplxFormatError(f"{path}: truncated dims")
        dims = struct.unpack(f"<{ndim}I", dims_raw)
        n = int(np.prod(dims))
        payload = fh.read(8 * n)
        if len(payload) != 8 * n:
            raise CplxFormatError(f"{path}: truncated payload")
    return np.frombuffer(payload, dtype="<c8").reshape(dims).astype(np.complex64)


def read_image(path) -> np.ndarray:
    arr = read_cplx(path)
    if arr.ndim != 3:
        raise CplxFormatError(f"{path}: expected a 3-D image, got ndim={arr.ndim}")
    return arr


def write_cplx(path, arr: np.ndarray) -> None:
    arr = np.asarray(arr, dtype=np.complex64)
    with open(path, "wb") as fh:
        fh.write(CPLX_MAGIC)
        fh.write(struct.pack("<II", CPLX_VERSION, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(np.ascontiguousarray(arr).tobytes(order="C"))
