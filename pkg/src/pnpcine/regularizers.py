"""Sparsifying transforms and proximal maps.

* undecimated 3-D Haar transform (a-trous, default 3 levels): a tight
  frame with W^H W = I exactly
* circular spatiotemporal finite differences with exact adjoint
* complex magnitude soft-thresholding and the UWT l1 prox

Both transforms use periodic boundaries. Per level l the two-tap pair
acts at spacing 2^(l-1); on singleton (or shorter-than-spacing periodic)
axes it degenerates to (identity, zero), so nt = 1 inputs need no special
cases. Coefficients stack as (1 + 7L, nt, ny, nx): the level-L
approximation first, then the seven detail bands per level, fine to
coarse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ComplexImage
from .errors import ParameterError

__all__ = [
    "UwtCoeffs",
    "FiniteDiffCoeffs",
    "UWT_LEVELS",
    "soft_threshold",
    "uwt_forward",
    "uwt_adjoint",
    "prox_uwt_l1",
    "finite_diff_forward",
    "finite_diff_adjoint",
    "detail_l1",
]

# default decomposition depth; callers may override per transform call
UWT_LEVELS = 3

# per-level band order: axis filters (t, y, x), L=lowpass, H=highpass
UWT_DETAIL_BANDS = ("LLH", "LHL", "LHH", "HLL", "HLH", "HHL", "HHH")


@dataclass(frozen=True)
class UwtCoeffs:
    """Subbands of the undecimated Haar analysis, stacked
    (1 + 7 * levels, nt, ny, nx); band 0 is the coarsest approximation,
    the rest are details (level 1 first)."""

    bands: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bands)
        if b.ndim != 4 or b.shape[0] < 8 or (b.shape[0] - 1) % 7 != 0:
            raise ParameterError(f"expected (1 + 7L, nt, ny, nx) subbands, got {b.shape}")
        object.__setattr__(self, "bands", b)

    @property
    def levels(self) -> int:
        return (self.bands.shape[0] - 1) // 7

    @property
    def approximation(self) -> np.ndarray:
        return self.bands[0]

    @property
    def details(self) -> np.ndarray:
        return self.bands[1:]


@dataclass(frozen=True)
class FiniteDiffCoeffs:
    """Circular first differences along (t, y, x), stacked (3, nt, ny, nx)."""

    diffs: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.diffs)
        if d.ndim != 4 or d.shape[0] != 3:
            raise ParameterError(f"expected (3, nt, ny, nx) differences, got {d.shape}")
        object.__setattr__(self, "diffs", d)


def soft_threshold(z: np.ndarray, tau: float) -> np.ndarray:
    """Complex magnitude shrinkage: z * max(|z| - tau, 0) / |z|, 0 at z = 0."""
    if tau < 0:
        raise ParameterError("threshold must be nonnegative")
    z = np.asarray(z)
    mag = np.abs(z)
    scale = np.maximum(mag - tau, 0.0) / np.where(mag > 0, mag, 1.0)
    return z * scale


def _low(x, axis, step):
    return 0.5 * (x + np.roll(x, -step, axis=axis))


def _high(x, axis, step):
    return 0.5 * (x - np.roll(x, -step, axis=axis))


def _low_adj(y, axis, step):
    return 0.5 * (y + np.roll(y, step, axis=axis))


def _high_adj(y, axis, step):
    return 0.5 * (y - np.roll(y, step, axis=axis))


def _level_analysis(a: np.ndarray, step: int):
    """One a-trous level: returns (approximation, [7 detail bands])."""
    details = []
    for name in UWT_DETAIL_BANDS:
        out = a
        for axis, f in enumerate(name):
            out = _low(out, axis, step) if f == "L" else _high(out, axis, step)
        details.append(out)
    approx = _low(_low(_low(a, 0, step), 1, step), 2, step)
    return approx, details


def _level_adjoint(approx: np.ndarray, details, step: int) -> np.ndarray:
    out = np.zeros_like(approx)
    band = approx
    for axis in (2, 1, 0):
        band = _low_adj(band, axis, step)
    out += band
    for name, d in zip(UWT_DETAIL_BANDS, details):
        band = d
        for axis in (2, 1, 0):
            f = name[axis]
            band = _low_adj(band, axis, step) if f == "L" else _high_adj(band, axis, step)
        out += band
    return out


def uwt_forward_array(a: np.ndarray, levels: int = UWT_LEVELS) -> np.ndarray:
    if levels < 1:
        raise ParameterError("levels must be >= 1")
    bands = np.empty((1 + 7 * levels,) + a.shape, dtype=a.dtype)
    approx = a
    for lvl in range(levels):
        approx, details = _level_analysis(approx, 2**lvl)
        for bi, d in enumerate(details):
            bands[1 + 7 * lvl + bi] = d
    bands[0] = approx
    return bands


def uwt_adjoint_array(bands: np.ndarray) -> np.ndarray:
    levels = (bands.shape[0] - 1) // 7
    out = bands[0]
    for lvl in range(levels - 1, -1, -1):
        details = [bands[1 + 7 * lvl + bi] for bi in range(7)]
        out = _level_adjoint(out, details, 2**lvl)
    return out


def prox_uwt_l1_array(a: np.ndarray, tau: float, levels: int = UWT_LEVELS) -> np.ndarray:
    bands = uwt_forward_array(a, levels)
    bands[1:] = soft_threshold(bands[1:], tau)
    return uwt_adjoint_array(bands)


def detail_l1_array(a: np.ndarray, levels: int = UWT_LEVELS) -> float:
    return float(np.abs(uwt_forward_array(a, levels)[1:]).sum())


def finite_diff_array(a: np.ndarray) -> np.ndarray:
    d = np.empty((3,) + a.shape, dtype=a.dtype)
    for axis in range(3):
        d[axis] = np.roll(a, -1, axis=axis) - a
    return d


def finite_diff_adjoint_array(d: np.ndarray) -> np.ndarray:
    out = np.zeros(d.shape[1:], dtype=d.dtype)
    for axis in range(3):
        out += np.roll(d[axis], 1, axis=axis) - d[axis]
    return out


def uwt_forward(x: ComplexImage, levels: int = UWT_LEVELS) -> UwtCoeffs:
    """Undecimated 3-D Haar analysis.

    Per-axis two-tap filters are scaled so the stacked analysis operator W
    satisfies W^H W = I and ||Wx|| = ||x|| exactly, at any depth.
    """
    return UwtCoeffs(uwt_forward_array(x.data, levels))


def uwt_adjoint(c: UwtCoeffs) -> ComplexImage:
    """Adjoint (= pseudo-inverse, tight frame) of uwt_forward."""
    return ComplexImage(uwt_adjoint_array(c.bands))


def prox_uwt_l1(z: ComplexImage, tau: float, levels: int = UWT_LEVELS) -> ComplexImage:
    """Soft-threshold the detail subbands; the approximation passes through."""
    if tau < 0:
        raise ParameterError("threshold must be nonnegative")
    return ComplexImage(prox_uwt_l1_array(z.data, tau, levels))


def detail_l1(x: ComplexImage, levels: int = UWT_LEVELS) -> float:
    """l1 norm of the detail subbands of the UWT analysis of x."""
    return detail_l1_array(x.data, levels)


def finite_diff_forward(x: ComplexImage) -> FiniteDiffCoeffs:
    """Circular forward differences along t, y, x."""
    return FiniteDiffCoeffs(finite_diff_array(x.data))


def finite_diff_adjoint(c: FiniteDiffCoeffs) -> ComplexImage:
    """Exact algebraic adjoint: negative circular backward difference."""
    return ComplexImage(finite_diff_adjoint_array(c.diffs))
