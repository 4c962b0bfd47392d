"""Radar configuration and the data products of the processing chain."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from rlforge.geometry.camera import RigPose
from rlforge.geometry.grid import GridSpec

SPEED_OF_LIGHT = 299_792_458.0
DB_FLOOR = -120.0
WINDOWS = ("rect", "hann", "hamming", "blackman")


class RadarConfigError(ValueError):
    """Invalid radar configuration or data/config dimension mismatch."""


@dataclass(frozen=True)
class RadarConfig:
    """TDM-MIMO FMCW radar parameters.

    Defaults follow a 77 GHz, 1 GHz-bandwidth sensor using 3 TX x 16 RX with
    128 chirps per TX.  ``chirp_duration`` is the TX-to-TX chirp period, so
    the slow-time sample interval per virtual channel is
    ``tx_count_used * chirp_duration``.
    """

    carrier_frequency: float = 77e9
    bandwidth: float = 1e9
    chirps_per_tx: int = 128
    tx_count_used: int = 3
    rx_count: int = 16
    samples_per_chirp: int = 512
    chirp_duration: float = 82.7e-6
    virtual_element_spacing: float = 1.0 / (2.0 * math.sin(math.radians(70.0)))
    fov_half_angle: float = 70.0
    range_zero_pad_factor: int = 2
    doppler_zero_pad_factor: int = 2
    angle_zero_pad_factor: int = 2
    range_window: str = "hann"
    doppler_window: str = "hann"
    angle_window: str = "hann"
    model_tdm_skew: bool = False

    def __post_init__(self):
        if not (self.bandwidth > 0 and self.chirp_duration > 0 and self.carrier_frequency > 0):
            raise RadarConfigError("bandwidth, chirp duration and carrier must be positive")
        for name in ("chirps_per_tx", "tx_count_used", "rx_count", "samples_per_chirp",
                     "range_zero_pad_factor", "doppler_zero_pad_factor", "angle_zero_pad_factor"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise RadarConfigError(f"{name} must be an integer >= 1, got {v!r}")
        for name in ("range_window", "doppler_window", "angle_window"):
            if getattr(self, name) not in WINDOWS:
                raise RadarConfigError(f"{name} must be one of {WINDOWS}")
        if not self.virtual_element_spacing > 0:
            raise RadarConfigError("virtual_element_spacing must be positive")
        if self.unambiguous_half_angle + 1e-9 < self.fov_half_angle:
            raise RadarConfigError(
                f"element spacing {self.virtual_element_spacing:.4f} wavelengths gives only "
                f"+/-{self.unambiguous_half_angle:.2f} deg unambiguous, FoV needs "
                f"+/-{self.fov_half_angle:.2f} deg")

    # derived quantities -------------------------------------------------
    @property
    def virtual_channels(self) -> int:
        return self.tx_count_used * self.rx_count

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency

    @property
    def range_resolution(self) -> float:
        return SPEED_OF_LIGHT / (2.0 * self.bandwidth)

    @property
    def pri(self) -> float:
        """Slow-time interval between chirps of the same TX."""
        return self.tx_count_used * self.chirp_duration

    @property
    def max_velocity(self) -> float:
        return self.wavelength / (4.0 * self.pri)

    @property
    def unambiguous_half_angle(self) -> float:
        ratio = 1.0 / (2.0 * self.virtual_element_spacing)
        return 90.0 if ratio >= 1.0 else math.degrees(math.asin(ratio))

    @property
    def n_range_bins(self) -> int:
        return self.samples_per_chirp * self.range_zero_pad_factor

    @property
    def n_doppler_bins(self) -> int:
        return self.chirps_per_tx * self.doppler_zero_pad_factor

    @property
    def n_angle_bins(self) -> int:
        return self.virtual_channels * self.angle_zero_pad_factor

    @property
    def range_bin_width(self) -> float:
        return self.range_resolution / self.range_zero_pad_factor

    @property
    def velocity_bin_width(self) -> float:
        return self.wavelength / (2.0 * self.n_doppler_bins * self.pri)

    def range_axis(self) -> np.ndarray:
        return np.arange(self.n_range_bins) * self.range_bin_width

    def velocity_axis(self) -> np.ndarray:
        n = self.n_doppler_bins
        return (np.arange(n) - n // 2) * self.velocity_bin_width

    def angle_bin_frequencies(self) -> np.ndarray:
        """Spatial frequency (cycles per element) of each shifted angle-FFT bin."""
        n = self.n_angle_bins
        return (np.arange(n) - n // 2) / n

    def azimuth_bins(self):
        """``(first, stop, axis_deg)``: FFT bins kept inside the configured FoV."""
        s = self.angle_bin_frequencies() / self.virtual_element_spacing
        valid = np.abs(s) <= 1.0
        theta = np.full(s.shape, np.nan)
        theta[valid] = np.degrees(np.arcsin(s[valid]))
        keep = valid & (np.abs(theta) <= self.fov_half_angle + 1e-9)
        idx = np.flatnonzero(keep)
        return int(idx[0]), int(idx[-1]) + 1, theta[idx[0]:idx[-1] + 1]

    def azimuth_axis(self) -> np.ndarray:
        return self.azimuth_bins()[2]

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict | None) -> "RadarConfig":
        d = dict(d or {})
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise RadarConfigError(f"unknown radar config keys: {sorted(unknown)}")
        return cls(**d)

    def desk_scale(self, **overrides) -> "RadarConfig":
        return replace(self, **overrides)


@dataclass
class RawAdcCube:
    """Demultiplexed ADC samples, shape ``(virtual_channel, chirp, sample)``."""

    samples: np.ndarray
    config: RadarConfig
    timestamp: float = 0.0
    vehicle_pose: RigPose = field(default_factory=RigPose)

    def __post_init__(self):
        expected = (self.config.virtual_channels, self.config.chirps_per_tx,
                    self.config.samples_per_chirp)
        if self.samples.shape != expected:
            raise RadarConfigError(f"raw cube shape {self.samples.shape} does not match "
                                   f"config {expected}")


@dataclass
class RdMapStack:
    """Range-Doppler maps per virtual channel, shape ``(channel, range, doppler)``."""

    data: np.ndarray
    range_axis: np.ndarray
    velocity_axis: np.ndarray
    config: RadarConfig
    timestamp: float = 0.0
    pose: RigPose = field(default_factory=RigPose)


@dataclass
class RdaCube:
    """Complex range-Doppler-azimuth cube, shape ``(range, doppler, azimuth)``.

    ``offset`` records the index of element ``[0, 0, 0]`` in the full cube
    this one was cropped from (zeros for an uncropped cube).
    """

    data: np.ndarray
    range_axis: np.ndarray
    velocity_axis: np.ndarray
    azimuth_axis: np.ndarray
    timestamp: float = 0.0
    pose: RigPose = field(default_factory=RigPose)
    offset: tuple = (0, 0, 0)

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape != (
                len(self.range_axis), len(self.velocity_axis), len(self.azimuth_axis)):
            raise RadarConfigError(f"cube shape {self.data.shape} does not match its axes")

    @property
    def shape(self):
        return self.data.shape


@dataclass
class RaImage:
    """Range-azimuth magnitude image in dB, shape ``(range, azimuth)``."""

    values: np.ndarray
    range_axis: np.ndarray
    azimuth_axis: np.ndarray
    timestamp: float = 0.0
    pose: RigPose = field(default_factory=RigPose)


@dataclass
class WorldRaster:
    """Radar image resampled onto an axis-aligned ground grid (dB)."""

    values: np.ndarray
    grid: GridSpec
    fill_value: float = DB_FLOOR
    timestamp: float = 0.0


@dataclass(frozen=True)
class Target:
    """One CFAR detection with interpolated axis values and world position."""

    range: float
    azimuth: float
    velocity: float
    magnitude_db: float
    x: float
    y: float
    range_bin: int
    doppler_bin: int
    azimuth_bin: int

    CSV_FIELDS = ("range", "azimuth", "velocity", "magnitude_db", "x", "y",
                  "range_bin", "doppler_bin", "azimuth_bin")

    def as_row(self) -> dict:
        return {k: getattr(self, k) for k in self.CSV_FIELDS}
