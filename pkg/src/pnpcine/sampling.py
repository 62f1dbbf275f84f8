"""Pseudo-random Cartesian undersampling masks for cine acquisitions.

Undersampling acts on whole ky lines per frame: each frame keeps a fully
sampled central calibration band plus variable-density random lines, with
an independent pattern per frame. The asymmetric-echo variant removes a
fraction of kx columns on one side of every kept line.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SamplingMask
from .errors import EmptyMaskError, InfeasibleMaskError, ParameterError

__all__ = ["MaskSpec", "generate_mask", "acceleration_of"]


@dataclass(frozen=True)
class MaskSpec:
    nkx: int = 64
    nky: int = 64
    nt: int = 16
    R: float = 8.0
    calib_lines: int = 4
    asym_echo_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if min(self.nkx, self.nky, self.nt) < 1:
            raise ParameterError("grid sizes must be positive")
        if self.R < 1.0:
            raise ParameterError("acceleration R must be >= 1")
        if self.calib_lines < 0 or self.calib_lines > self.nky:
            raise ParameterError("calib_lines must lie in [0, nky]")
        if not 0.0 <= self.asym_echo_fraction < 0.5:
            raise ParameterError("asym_echo_fraction must lie in [0, 0.5)")

    @property
    def lines_per_frame(self) -> int:
        return int(self.nky // self.R)


def _calib_band(nky: int, calib_lines: int) -> np.ndarray:
    lo = nky // 2 - calib_lines // 2
    return np.arange(lo, lo + calib_lines)


def generate_mask(spec: MaskSpec) -> SamplingMask:
    """Draw a mask per spec; deterministic in (seed, frame index).

    Per frame: the central ``calib_lines`` ky lines are always kept, then
    random lines are drawn without replacement under a center-weighted
    density w(ky) = (1 + |ky - center| / nky)^-2 until floor(nky / R) lines
    are kept. With ``asym_echo_fraction`` > 0, the leading
    floor(frac * nkx) kx columns are zeroed on every kept line.
    """
    n_keep = spec.lines_per_frame
    if n_keep < 1:
        raise InfeasibleMaskError(f"R={spec.R} leaves no ky lines on a {spec.nky}-line grid")
    if spec.calib_lines > n_keep:
        raise InfeasibleMaskError(
            f"calibration band ({spec.calib_lines} lines) exceeds the per-frame "
            f"budget of {n_keep} lines at R={spec.R}"
        )

    ky = np.arange(spec.nky)
    center = (spec.nky - 1) / 2.0
    weights = (1.0 + np.abs(ky - center) / spec.nky) ** -2.0
    calib = _calib_band(spec.nky, spec.calib_lines)

    kept = np.zeros((spec.nt, spec.nky, spec.nkx), dtype=bool)
    for t in range(spec.nt):
        rng = np.random.default_rng([spec.seed, t])
        lines = set(calib.tolist())
        n_random = n_keep - len(lines)
        if n_random > 0:
            pool = np.setdiff1d(ky, calib)
            w = weights[pool] / weights[pool].sum()
            drawn = rng.choice(pool, size=n_random, replace=False, p=w)
            lines.update(drawn.tolist())
        kept[t, sorted(lines), :] = True

    n_echo = int(spec.asym_echo_fraction * spec.nkx)
    if n_echo:
        kept[:, :, :n_echo] = False

    r_nominal = spec.nky / n_keep
    return SamplingMask(kept, r_nominal=r_nominal)


def acceleration_of(mask: SamplingMask) -> float:
    """Realized acceleration: total entries over kept entries."""
    kept = int(mask.kept.sum())
    if kept == 0:
        raise EmptyMaskError("mask keeps no entries")
    return mask.kept.size / kept
