"""Domain types for complex cine data and the elementary linear algebra they share.

Canonical array layouts (C-order, slowest to fastest axis):

* image:    ``(nt, ny, nx)``      complex
* k-space:  ``(nc, nt, nky, nkx)`` complex, coil outermost
* mask:     ``(nt, nky, nkx)``    bool
* coil maps:``(nc, ny, nx)``      complex, time-invariant

All in-memory arithmetic is float64/complex128; serialized payloads are
float32 (see pnpcine.io). Types are immutable after construction: the
wrapped arrays are marked read-only, so instances are safe to share
across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError

__all__ = [
    "ComplexImage",
    "MultiCoilKSpace",
    "SamplingMask",
    "SensitivityMaps",
    "inner_product",
    "l2_norm",
]


def _freeze(a: np.ndarray) -> np.ndarray:
    """Return a read-only C-contiguous copy-on-demand view of ``a``.

    Copies when the input is writeable so freezing never mutates caller state.
    """
    a = np.ascontiguousarray(a)
    if a.flags.writeable:
        a = a.copy()
        a.flags.writeable = False
    return a


def _check_finite(a: np.ndarray, what: str) -> None:
    if not np.isfinite(a).all():
        raise DimensionError(f"{what} contains non-finite entries")


@dataclass(frozen=True)
class ComplexImage:
    """A complex-valued cine volume, indexed (t, y, x)."""

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data, dtype=np.complex128)
        if a.ndim != 3 or min(a.shape) < 1:
            raise DimensionError(f"image must be 3-D (nt, ny, nx), got shape {a.shape}")
        _check_finite(a, "image")
        object.__setattr__(self, "data", _freeze(a))

    @property
    def nt(self) -> int:
        return self.data.shape[0]

    @property
    def ny(self) -> int:
        return self.data.shape[1]

    @property
    def nx(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True)
class SamplingMask:
    """Binary Cartesian sampling pattern over (t, ky, kx).

    ``r_nominal`` records the per-frame line acceleration nky / kept-lines.
    """

    kept: np.ndarray
    r_nominal: float = 1.0

    def __post_init__(self):
        k = np.asarray(self.kept)
        if k.dtype != np.bool_:
            k = k.astype(bool)
        if k.ndim != 3 or min(k.shape) < 1:
            raise DimensionError(f"mask must be 3-D (nt, nky, nkx), got shape {k.shape}")
        if not self.r_nominal > 0:
            raise DimensionError("r_nominal must be positive")
        # sampled-line fraction per frame must sit within +-20% of 1/R_nominal
        line_sampled = k.any(axis=2)  # (nt, nky)
        frac = line_sampled.mean(axis=1)
        lo, hi = 0.8 / self.r_nominal, 1.2 / self.r_nominal
        if np.any(frac < lo) or np.any(frac > hi):
            raise DimensionError(
                f"per-frame sampled fraction {frac.min():.4f}..{frac.max():.4f} "
                f"inconsistent with r_nominal={self.r_nominal:.3f}"
            )
        object.__setattr__(self, "kept", _freeze(k))

    @property
    def nt(self) -> int:
        return self.kept.shape[0]

    @property
    def nky(self) -> int:
        return self.kept.shape[1]

    @property
    def nkx(self) -> int:
        return self.kept.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.kept.shape


@dataclass(frozen=True)
class SensitivityMaps:
    """Per-coil complex spatial maps, time-invariant, indexed (coil, y, x).

    Wherever the per-pixel coil vector is nonzero it has unit l2 norm;
    pixels may be exactly zero across all coils (outside the support).
    """

    maps: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.maps, dtype=np.complex128)
        if m.ndim != 3 or min(m.shape) < 1:
            raise DimensionError(f"maps must be 3-D (nc, ny, nx), got shape {m.shape}")
        _check_finite(m, "sensitivity maps")
        norms = np.sqrt(np.sum(np.abs(m) ** 2, axis=0))
        nonzero = norms > 0
        if nonzero.any() and not np.allclose(norms[nonzero], 1.0, atol=1e-9):
            raise DimensionError("per-pixel coil vector norms must be 1 (or 0 outside support)")
        object.__setattr__(self, "maps", _freeze(m))

    @property
    def nc(self) -> int:
        return self.maps.shape[0]

    @property
    def ny(self) -> int:
        return self.maps.shape[1]

    @property
    def nx(self) -> int:
        return self.maps.shape[2]


@dataclass(frozen=True)
class MultiCoilKSpace:
    """Complex k-space samples indexed (coil, t, ky, kx).

    When a mask is attached, entries at unsampled locations are exactly zero.
    """

    data: np.ndarray
    mask: SamplingMask | None = field(default=None)

    def __post_init__(self):
        a = np.asarray(self.data, dtype=np.complex128)
        if a.ndim != 4 or min(a.shape) < 1:
            raise DimensionError(f"k-space must be 4-D (nc, nt, nky, nkx), got shape {a.shape}")
        _check_finite(a, "k-space")
        if self.mask is not None:
            if self.mask.shape != a.shape[1:]:
                raise DimensionError(
                    f"mask shape {self.mask.shape} does not match k-space grid {a.shape[1:]}"
                )
            if np.any(a[:, ~self.mask.kept] != 0):
                raise DimensionError("unsampled k-space entries must be exactly zero")
        object.__setattr__(self, "data", _freeze(a))

    @property
    def nc(self) -> int:
        return self.data.shape[0]

    @property
    def nt(self) -> int:
        return self.data.shape[1]

    @property
    def nky(self) -> int:
        return self.data.shape[2]

    @property
    def nkx(self) -> int:
        return self.data.shape[3]

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape


def _as_array(a) -> np.ndarray:
    if isinstance(a, ComplexImage) or isinstance(a, MultiCoilKSpace):
        return a.data
    if isinstance(a, SensitivityMaps):
        return a.maps
    return np.asarray(a)


def inner_product(a, b) -> complex:
    """Sum of conj(a_i) * b_i over all entries. Shapes must match exactly."""
    aa, bb = _as_array(a), _as_array(b)
    if aa.shape != bb.shape:
        raise DimensionError(f"shape mismatch {aa.shape} vs {bb.shape}")
    return complex(np.vdot(aa, bb))


def l2_norm(a) -> float:
    """Euclidean norm sqrt(<a, a>); zero iff a is identically zero."""
    aa = _as_array(a)
    return float(np.linalg.norm(aa.ravel()))
