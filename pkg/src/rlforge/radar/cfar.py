"""Cell-averaging CFAR over range-Doppler, per azimuth bin."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from rlforge.radar.processing import radar_to_world
from rlforge.radar.types import RdaCube, Target


@dataclass(frozen=True)
class CfarParams:
    """Window half-sizes (cells per side) and design false-alarm rate."""

    guard_range: int = 2
    train_range: int = 8
    guard_doppler: int = 1
    train_doppler: int = 4
    pfa: float = 1e-4

    @property
    def n_train(self) -> int:
        outer = (2 * (self.guard_range + self.train_range) + 1) * \
                (2 * (self.guard_doppler + self.train_doppler) + 1)
        inner = (2 * self.guard_range + 1) * (2 * self.guard_doppler + 1)
        return outer - inner

    @property
    def scale(self) -> float:
        """Threshold multiplier for exponentially distributed cell power."""
        n = self.n_train
        return n * (self.pfa ** (-1.0 / n) - 1.0)

    @classmethod
    def from_dict(cls, d) -> "CfarParams":
        return cls(**(d or {}))


def _box_sum(power, half_r, half_d):
    size = (2 * half_r + 1, 2 * half_d + 1, 1)
    # range edges are excluded from testing, Doppler is periodic
    return ndimage.uniform_filter(power, size=size, mode=("nearest", "wrap", "nearest")) \
        * (size[0] * size[1])


def cfar_mask(power: np.ndarray, params: CfarParams = CfarParams()) -> np.ndarray:
    """Boolean detections on a ``(range, doppler, azimuth)`` power array.

    The training cells form a rectangular ring around the guard window; the
    Doppler axis wraps around, range cells without a full window are never
    declared.
    """
    p = params
    nr, nd = power.shape[:2]
    half_r = p.guard_range + p.train_range
    half_d = p.guard_doppler + p.train_doppler
    if 2 * half_r + 1 > nr or 2 * half_d + 1 > nd:
        raise ValueError(f"CFAR window ({2 * half_r + 1} x {2 * half_d + 1}) larger than "
                         f"cube ({nr} x {nd})")
    power = np.asarray(power, dtype=np.float32)
    outer = _box_sum(power, half_r, half_d)
    inner = _box_sum(power, p.guard_range, p.guard_doppler)
    noise = np.maximum(outer - inner, 0.0) / p.n_train
    det = power > p.scale * noise
    det[:half_r] = False
    det[nr - half_r:] = False
    return det


def _parabolic_offset(left, center, right) -> float:
    denom = left - 2.0 * center + right
    if denom >= 0 or not np.isfinite(denom):
        return 0.0
    return float(np.clip(0.5 * (left - right) / denom, -0.5, 0.5))


def _db(power, idx) -> float:
    p = float(power[idx])
    return 10.0 * np.log10(p) if p > 0 else -np.inf


def _refine(power, idx, axis_values, axis_no):
    i = idx[axis_no]
    n = power.shape[axis_no]
    frac = float(i)
    if 0 < i < n - 1:
        lo, hi = list(idx), list(idx)
        lo[axis_no] -= 1
        hi[axis_no] += 1
        frac += _parabolic_offset(_db(power, tuple(lo)), _db(power, idx), _db(power, tuple(hi)))
    return float(np.interp(frac, np.arange(n), axis_values))


def cfar_detect(cube: RdaCube, params: CfarParams = CfarParams()) -> list[Target]:
    """CA-CFAR detections grouped into one target per connected blob.

    Adjacent detected cells (26-connectivity over range, Doppler, azimuth)
    collapse to their strongest cell.  Axis values are refined with a
    three-point parabola on the dB power along each axis; world positions
    use the cube's radar pose.
    """
    power = cube.data.real.astype(np.float32) ** 2 + cube.data.imag.astype(np.float32) ** 2
    det = cfar_mask(power, params)
    labels, count = ndimage.label(det, structure=np.ones((3, 3, 3), dtype=bool))
    if count == 0:
        return []
    peaks = ndimage.maximum_position(power, labels, index=np.arange(1, count + 1))
    out = []
    for idx in sorted(peaks):
        idx = tuple(int(i) for i in idx)
        rng = _refine(power, idx, cube.range_axis, 0)
        vel = _refine(power, idx, cube.velocity_axis, 1)
        az = _refine(power, idx, cube.azimuth_axis, 2)
        xy = radar_to_world(rng, az, cube.pose)
        out.append(Target(range=rng, azimuth=az, velocity=vel,
                          magnitude_db=_db(power, idx), x=float(xy[0]), y=float(xy[1]),
                          range_bin=idx[0] + cube.offset[0], doppler_bin=idx[1] + cube.offset[1],
                          azimuth_bin=idx[2] + cube.offset[2]))
    return out
