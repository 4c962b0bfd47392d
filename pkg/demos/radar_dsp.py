"""Radar processing walk-through.

Two synthetic pedestrians are placed in front of a parked radar, the raw
ADC cube is turned into a range-Doppler-azimuth cube, and CA-CFAR picks
them out again.  Run with ``python demos/radar_dsp.py``.
"""
import numpy as np

from rlforge.radar import RadarConfig, cfar_detect, polar_to_cartesian, process_raw, ra_image
from rlforge.radar.cfar import CfarParams
from rlforge.radar.types import RawAdcCube
from rlforge.geometry import GridSpec
from rlforge.simulator import noise_sigma, predicted_bins, scatterer_cube

cfg = RadarConfig(bandwidth=5e8, chirps_per_tx=16, samples_per_chirp=128)
print(f"range bin {cfg.range_bin_width:.3f} m, velocity bin {cfg.velocity_bin_width:.3f} m/s, "
      f"{cfg.virtual_channels} virtual channels")

walkers = [(22.0, 1.0, -8.0), (31.0, -0.6, 5.0)]           # (range m, radial m/s, azimuth deg)
raw = sum(scatterer_cube(cfg, r, v, az) for r, v, az in walkers)
rng = np.random.default_rng(0)
sigma = noise_sigma(cfg, 25.0) / np.sqrt(2)
raw = raw + sigma * (rng.standard_normal(raw.shape) + 1j * rng.standard_normal(raw.shape))

cube = process_raw(RawAdcCube(raw, cfg))
print("RDA cube shape (range, doppler, azimuth):", cube.shape)

for t in cfar_detect(cube, CfarParams(pfa=1e-6)):
    print(f"target at {t.range:5.2f} m, {t.velocity:+.2f} m/s, {t.azimuth:+5.1f} deg, "
          f"{t.magnitude_db:.1f} dB -> bins {(t.range_bin, t.doppler_bin, t.azimuth_bin)}")
for r, v, az in walkers:
    print(f"truth {r:5.2f} m, {v:+.2f} m/s, {az:+5.1f} deg -> bins {predicted_bins(cfg, r, v, az)}")

# a top-down view of the scene, as the label transfer sees it
grid = GridSpec((0.0, -15.0), 0.25, (120, 160))
world = polar_to_cartesian(ra_image(cube), grid)
row, col = np.unravel_index(np.argmax(world.values), world.values.shape)
print(f"brightest ground cell at x={grid.x_centers()[col]:.2f} m, y={grid.y_centers()[row]:.2f} m")
