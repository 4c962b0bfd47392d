"""Binary envelopes for raw cubes and processed radar rasters.

Layout (little endian)::

    magic        4 bytes   b"RDC1" | b"RDM1" | b"RDA1" | b"RAI1"
    dims         3 x u32
    timestamp    f64
    pose         6 x f64   (x, y, z, yaw, pitch, roll)
    axes         dims[0] + dims[1] + dims[2] x f64   (absent for RDC1)
    samples      interleaved f32 (re, im), C order over dims

Real rasters (RA images, RD magnitudes) are stored with zero imaginary part.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from rlforge.geometry.camera import RigPose
from rlforge.radar.types import RaImage, RadarConfig, RawAdcCube, RdaCube, RdMapStack

MAGICS = (b"RDC1", b"RDM1", b"RDA1", b"RAI1")
_HEADER = struct.Struct("<4s3Id6d")


class EnvelopeError(ValueError):
    pass


def write_envelope(path, magic: bytes, data: np.ndarray, timestamp: float = 0.0,
                   pose: RigPose | None = None, axes=None) -> Path:
    if magic not in MAGICS:
        raise EnvelopeError(f"unknown magic {magic!r}")
    data = np.asarray(data)
    if data.ndim != 3:
        raise EnvelopeError("envelope payload must be 3-dimensional")
    pose = pose or RigPose()
    path = Path(path)
    inter = np.empty(data.shape + (2,), dtype="<f4")
    inter[..., 0] = np.real(data)
    inter[..., 1] = np.imag(data) if np.iscomplexobj(data) else 0.0
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(magic, *data.shape, float(timestamp), *pose.as_array()))
        if magic != b"RDC1":
            if axes is None or len(axes) != 3:
                raise EnvelopeError(f"{magic.decode()} requires three axis vectors")
            for n, ax in zip(data.shape, axes):
                ax = np.asarray(ax, dtype="<f8")
                if ax.shape != (n,):
                    raise EnvelopeError(f"axis length {ax.shape} does not match dim {n}")
                fh.write(ax.tobytes())
        fh.write(inter.tobytes())
    return path


def read_envelope(path, expect: bytes | None = None):
    """Return ``(magic, data, timestamp, pose, axes)``; ``data`` is complex64."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise EnvelopeError(f"{path}: truncated header")
    magic, d0, d1, d2, ts, *pose = _HEADER.unpack_from(raw, 0)
    if magic not in MAGICS:
        raise EnvelopeError(f"{path}: bad magic {magic!r}")
    if expect is not None and magic != expect:
        raise EnvelopeError(f"{path}: expected {expect!r}, found {magic!r}")
    off = _HEADER.size
    axes = None
    if magic != b"RDC1":
        axes = []
        for n in (d0, d1, d2):
            axes.append(np.frombuffer(raw, dtype="<f8", count=n, offset=off).copy())
            off += 8 * n
    count = d0 * d1 * d2 * 2
    if len(raw) - off != 4 * count:
        raise EnvelopeError(f"{path}: payload size mismatch")
    pairs = np.frombuffer(raw, dtype="<f4", count=count, offset=off).reshape(d0, d1, d2, 2)
    data = (pairs[..., 0] + 1j * pairs[..., 1]).astype(np.complex64)
    return magic, data, ts, RigPose.from_array(pose, timestamp=ts), axes


def save_raw(raw: RawAdcCube, path) -> Path:
    return write_envelope(path, b"RDC1", raw.samples, raw.timestamp, raw.vehicle_pose)


def load_raw(path, config: RadarConfig) -> RawAdcCube:
    _, data, ts, pose, _ = read_envelope(path, b"RDC1")
    return RawAdcCube(samples=data, config=config, timestamp=ts, vehicle_pose=pose)


def save_rd(stack: RdMapStack, path) -> Path:
    ch = np.arange(stack.data.shape[0], dtype=float)
    return write_envelope(path, b"RDM1", stack.data, stack.timestamp, stack.pose,
                          (ch, stack.range_axis, stack.velocity_axis))


def save_rd_magnitude(values, range_axis, velocity_axis, path, timestamp=0.0, pose=None) -> Path:
    """Single-channel real RD raster of shape ``(range, doppler)``."""
    return write_envelope(path, b"RDM1", np.asarray(values)[None], timestamp, pose,
                          (np.zeros(1), range_axis, velocity_axis))


def save_rda(cube: RdaCube, path) -> Path:
    return write_envelope(path, b"RDA1", cube.data, cube.timestamp, cube.pose,
                          (cube.range_axis, cube.velocity_axis, cube.azimuth_axis))


def load_rda(path) -> RdaCube:
    _, data, ts, pose, axes = read_envelope(path, b"RDA1")
    return RdaCube(data=data, range_axis=axes[0], velocity_axis=axes[1], azimuth_axis=axes[2],
                   timestamp=ts, pose=pose)


def save_ra(img: RaImage, path) -> Path:
    return write_envelope(path, b"RAI1", img.values[None], img.timestamp, img.pose,
                          (np.zeros(1), img.range_axis, img.azimuth_axis))


def load_ra(path) -> RaImage:
    _, data, ts, pose, axes = read_envelope(path, b"RAI1")
    return RaImage(values=data[0].real.astype(np.float64), range_axis=axes[1],
                   azimuth_axis=axes[2], timestamp=ts, pose=pose)
