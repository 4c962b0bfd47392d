"""FMCW processing chain: RD maps, angle FFT, RA image, Cartesian resampling.

All FFTs use orthonormal scaling, so with a rectangular window the energy
of every transform equals the energy of its (zero-padded) input.
"""
from __future__ import annotations

import numpy as np
import scipy.fft as sfft
from scipy.signal import get_window

from rlforge.geometry.camera import RigPose
from rlforge.geometry.grid import GridSpec
from rlforge.radar.types import (
    DB_FLOOR,
    RaImage,
    RadarConfigError,
    RawAdcCube,
    RdaCube,
    RdMapStack,
    WorldRaster,
)


def window(kind: str, n: int) -> np.ndarray:
    if kind == "rect":
        return np.ones(n)
    return get_window(kind, n, fftbins=False)


def _shifted_window(kind: str, n: int, nfft: int) -> np.ndarray:
    """Window premultiplied by (-1)^k so the FFT output comes out centred.

    For an even transform length this is equivalent to an ``fftshift`` of
    the output without the extra copy.
    """
    w = window(kind, n)
    if nfft % 2 == 0:
        w = w * np.where(np.arange(n) % 2, -1.0, 1.0)
    return w


def _center(x: np.ndarray, axis: int, nfft: int) -> np.ndarray:
    return x if nfft % 2 == 0 else sfft.fftshift(x, axes=axis)


def range_doppler_map(raw: RawAdcCube) -> RdMapStack:
    """Windowed, zero-padded 2D FFT of every virtual channel.

    Returns an :class:`RdMapStack` whose ``data`` has logical shape
    ``(channel, range, doppler)``; memory is laid out channel-last so the
    subsequent angle FFT runs along contiguous data.
    """
    cfg = raw.config
    v, m, n = raw.samples.shape
    if (v, m, n) != (cfg.virtual_channels, cfg.chirps_per_tx, cfg.samples_per_chirp):
        raise RadarConfigError("raw cube dimensions do not match the radar config")
    nr, nd = cfg.n_range_bins, cfg.n_doppler_bins

    x = raw.samples.astype(np.complex64, copy=False)
    wr = window(cfg.range_window, n).astype(np.float32)
    fast = sfft.fft(x * wr, n=nr, axis=2, norm="ortho")            # (v, m, nr)

    wd = _shifted_window(cfg.doppler_window, m, nd).astype(np.float32)
    slow = np.empty((nr, m, v), dtype=np.complex64)
    np.multiply(fast.transpose(2, 1, 0), wd[None, :, None], out=slow)
    del fast
    rd = sfft.fft(slow, n=nd, axis=1, norm="ortho", overwrite_x=True)  # (nr, nd, v)
    rd = _center(rd, 1, nd)
    return RdMapStack(
        data=rd.transpose(2, 0, 1),
        range_axis=cfg.range_axis(),
        velocity_axis=cfg.velocity_axis(),
        config=cfg,
        timestamp=raw.timestamp,
        pose=raw.vehicle_pose,
    )


def angle_fft(rd_stack: RdMapStack, calibration=None) -> RdaCube:
    """FFT across the calibrated virtual array.

    ``calibration`` is a complex per-channel factor applied before the
    window (``None`` or all-ones means uncalibrated).  Bins are mapped to
    azimuth by ``sin(theta) = f / d`` and restricted to the configured FoV.
    """
    cfg = rd_stack.config
    nv = rd_stack.data.shape[0]
    if nv != cfg.virtual_channels:
        raise RadarConfigError(f"expected {cfg.virtual_channels} channels, got {nv}")
    cal = _calibration(cfg, calibration)
    na = cfg.n_angle_bins
    weights = (cal * _shifted_window(cfg.angle_window, nv, na)).astype(np.complex64)

    chan_last = np.moveaxis(rd_stack.data, 0, -1)
    cube = sfft.fft(chan_last * weights, n=na, axis=2, norm="ortho", overwrite_x=True)
    cube = _center(cube, 2, na)
    first, stop, az_axis = cfg.azimuth_bins()
    if first != 0 or stop != na:
        cube = np.ascontiguousarray(cube[:, :, first:stop])
    return RdaCube(
        data=cube,
        range_axis=rd_stack.range_axis,
        velocity_axis=rd_stack.velocity_axis,
        azimuth_axis=az_axis,
        timestamp=rd_stack.timestamp,
        pose=rd_stack.pose,
    )


def to_db(power: np.ndarray, floor: float = DB_FLOOR) -> np.ndarray:
    """``10 log10(power)`` clipped at ``floor``; zero power maps to the floor."""
    power = np.asarray(power, dtype=np.float64)
    out = np.full(power.shape, floor)
    pos = power > 0
    out[pos] = np.maximum(10.0 * np.log10(power[pos]), floor)
    return out


def ra_image(cube: RdaCube) -> RaImage:
    """Collapse the Doppler axis by the maximum magnitude, in dB."""
    d = cube.data
    peak_power = (d.real.astype(np.float32) ** 2 + d.imag.astype(np.float32) ** 2).max(axis=1)
    return RaImage(
        values=to_db(peak_power),
        range_axis=cube.range_axis,
        azimuth_axis=cube.azimuth_axis,
        timestamp=cube.timestamp,
        pose=cube.pose,
    )


def world_to_radar(xy, pose: RigPose):
    """Ground-plane points to (range m, azimuth deg) in the radar frame."""
    xy = np.asarray(xy, dtype=float)
    dx = xy[..., 0] - pose.x
    dy = xy[..., 1] - pose.y
    yaw = np.radians(pose.yaw)
    xr = np.cos(yaw) * dx + np.sin(yaw) * dy
    yr = -np.sin(yaw) * dx + np.cos(yaw) * dy
    return np.hypot(xr, yr), np.degrees(np.arctan2(yr, xr))


def radar_to_world(rng, az_deg, pose: RigPose) -> np.ndarray:
    ang = np.radians(np.asarray(az_deg, dtype=float) + pose.yaw)
    rng = np.asarray(rng, dtype=float)
    return np.stack([pose.x + rng * np.cos(ang), pose.y + rng * np.sin(ang)], axis=-1)


def _fractional_index(values: np.ndarray, axis: np.ndarray):
    """Fractional bin positions of ``values`` on a monotonic axis; NaN outside."""
    idx = np.interp(values, axis, np.arange(len(axis), dtype=float))
    outside = (values < axis[0]) | (values > axis[-1]) | ~np.isfinite(values)
    return np.where(outside, np.nan, idx)


def polar_to_cartesian(ra: RaImage, grid: GridSpec, radar_pose: RigPose | None = None,
                       fill_value: float = DB_FLOOR) -> WorldRaster:
    """Resample an RA image onto a world grid by bilinear interpolation.

    Each cell center is back-projected into the radar frame; cells whose
    (range, azimuth) falls outside the image extent get ``fill_value``.
    """
    if grid.shape[0] < 1 or grid.shape[1] < 1:
        raise ValueError("grid has no cells")
    pose = ra.pose if radar_pose is None else radar_pose
    X, Y = grid.cell_centers()
    rng, az = world_to_radar(np.stack([X, Y], axis=-1), pose)
    ri = _fractional_index(rng, ra.range_axis)
    ai = _fractional_index(az, ra.azimuth_axis)
    ok = np.isfinite(ri) & np.isfinite(ai)
    out = np.full(grid.shape, fill_value, dtype=float)

    r0 = np.minimum(np.floor(ri[ok]).astype(int), len(ra.range_axis) - 2)
    a0 = np.minimum(np.floor(ai[ok]).astype(int), len(ra.azimuth_axis) - 2)
    fr = ri[ok] - r0
    fa = ai[ok] - a0
    v = ra.values
    out[ok] = (v[r0, a0] * (1 - fr) * (1 - fa) + v[r0 + 1, a0] * fr * (1 - fa)
               + v[r0, a0 + 1] * (1 - fr) * fa + v[r0 + 1, a0 + 1] * fr * fa)
    return WorldRaster(values=out, grid=grid, fill_value=fill_value, timestamp=ra.timestamp)


def _calibration(cfg, calibration) -> np.ndarray:
    nv = cfg.virtual_channels
    cal = np.ones(nv, dtype=np.complex64) if calibration is None else \
        np.asarray(calibration, dtype=np.complex64)
    if cal.shape != (nv,):
        raise RadarConfigError(f"calibration vector must have length {nv}, got {cal.shape}")
    return cal


def process_raw(raw: RawAdcCube, calibration=None) -> RdaCube:
    """Raw ADC cube to RDA cube.

    Numerically the same as ``angle_fft(range_doppler_map(raw), calibration)``
    but the Doppler and angle weights are applied in one pass, which saves a
    sweep over the full RD stack.
    """
    cfg = raw.config
    v, m, n = raw.samples.shape
    if (v, m, n) != (cfg.virtual_channels, cfg.chirps_per_tx, cfg.samples_per_chirp):
        raise RadarConfigError("raw cube dimensions do not match the radar config")
    nr, nd, na = cfg.n_range_bins, cfg.n_doppler_bins, cfg.n_angle_bins
    cal = _calibration(cfg, calibration)

    # zero-padded buffers are filled in place so each FFT can overwrite its input
    wr = window(cfg.range_window, n).astype(np.float32)
    fast = np.zeros((v, m, nr), dtype=np.complex64)
    np.multiply(raw.samples, wr, out=fast[:, :, :n], casting="same_kind")
    fast = sfft.fft(fast, axis=2, norm="ortho", overwrite_x=True)  # (v, m, nr)

    wd = _shifted_window(cfg.doppler_window, m, nd)
    wa = cal * _shifted_window(cfg.angle_window, v, na)
    weights = (wd[:, None] * wa[None, :]).astype(np.complex64)      # (m, v)
    slow = np.zeros((nr, nd, v), dtype=np.complex64)
    np.multiply(fast.transpose(2, 1, 0), weights[None], out=slow[:, :m, :])
    del fast
    rd = sfft.fft(slow, axis=1, norm="ortho", overwrite_x=True)
    del slow
    cube = np.zeros((nr, nd, na), dtype=np.complex64)
    cube[:, :, :v] = rd
    del rd
    cube = sfft.fft(cube, axis=2, norm="ortho", overwrite_x=True)
    cube = _center(_center(cube, 1, nd), 2, na)
    first, stop, az_axis = cfg.azimuth_bins()
    if first != 0 or stop != na:
        cube = np.ascontiguousarray(cube[:, :, first:stop])
    return RdaCube(
        data=cube,
        range_axis=cfg.range_axis(),
        velocity_axis=cfg.velocity_axis(),
        azimuth_axis=az_axis,
        timestamp=raw.timestamp,
        pose=raw.vehicle_pose,
    )
