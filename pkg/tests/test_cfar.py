import numpy as np
import pytest

from rlforge.geometry import RigPose
from rlforge.radar import CfarParams, RadarConfig, RawAdcCube, RdaCube, cfar_detect, cfar_mask, process_raw
from rlforge.simulator import predicted_bins, scatterer_cube


@pytest.fixture(scope="module")
def cfg():
    return RadarConfig(bandwidth=2.5e8, chirps_per_tx=16, rx_count=4, samples_per_chirp=64)


def _on_grid(cfg, rb, db_off, ab_off):
    """Scatterer parameters that land exactly on bin centers."""
    r = rb * cfg.range_bin_width
    v = db_off * cfg.velocity_bin_width
    f = ab_off / cfg.n_angle_bins
    az = float(np.degrees(np.arcsin(f / cfg.virtual_element_spacing)))
    return r, v, az


def _noisy_cube(cfg, targets, snr_over_floor_db, seed=0):
    """Cube whose strongest target peak sits ``snr_over_floor_db`` above the mean noise power."""
    rng = np.random.default_rng(seed)
    shape = (cfg.virtual_channels, cfg.chirps_per_tx, cfg.samples_per_chirp)
    noise = (rng.normal(size=shape) + 1j * rng.normal(size=shape)) / np.sqrt(2)
    signal = sum(scatterer_cube(cfg, *t) for t in targets)
    floor = np.mean(np.abs(process_raw(RawAdcCube(noise, cfg)).data) ** 2)
    peak = np.max(np.abs(process_raw(RawAdcCube(signal, cfg)).data) ** 2)
    gain = np.sqrt(10 ** (snr_over_floor_db / 10) * floor / peak)
    return process_raw(RawAdcCube(gain * signal + noise, cfg))


def test_zero_cube_no_targets(cfg):
    shape = (cfg.n_range_bins, cfg.n_doppler_bins, len(cfg.azimuth_axis()))
    cube = RdaCube(np.zeros(shape, np.complex64), cfg.range_axis(), cfg.velocity_axis(),
                   cfg.azimuth_axis())
    assert cfar_detect(cube) == []


def test_single_scatterer_single_detection(cfg):
    truth = _on_grid(cfg, 40, 3, 2)
    cube = _noisy_cube(cfg, [truth], 20.0)
    targets = cfar_detect(cube, CfarParams(pfa=1e-7))
    assert len(targets) == 1
    t = targets[0]
    assert (t.range_bin, t.doppler_bin, t.azimuth_bin) == predicted_bins(cfg, *truth)
    assert t.range == pytest.approx(truth[0], abs=cfg.range_bin_width / 2)
    assert t.velocity == pytest.approx(truth[1], abs=cfg.velocity_bin_width / 2)


def test_two_separated_scatterers(cfg):
    p = CfarParams(pfa=1e-7)
    gap = 2 * (p.guard_range + p.train_range) + 2
    truths = [_on_grid(cfg, 30, 2, 0), _on_grid(cfg, 30 + gap, -3, -4)]
    targets = cfar_detect(_noisy_cube(cfg, truths, 20.0, seed=3), p)
    assert len(targets) == 2
    got = sorted((t.range_bin, t.doppler_bin, t.azimuth_bin) for t in targets)
    assert got == sorted(predicted_bins(cfg, *t) for t in truths)


def test_world_position_uses_pose(cfg):
    truth = _on_grid(cfg, 40, 0, 0)
    cube = _noisy_cube(cfg, [truth], 25.0)
    cube.pose = RigPose(x=5.0, y=2.0, yaw=90.0)
    (t,) = cfar_detect(cube, CfarParams(pfa=1e-7))
    a = np.radians(t.azimuth)
    # boresight along +y, positive azimuth turns toward -x
    assert (t.x, t.y) == pytest.approx((5.0 - t.range * np.sin(a), 2.0 + t.range * np.cos(a)),
                                       abs=1e-9)
    assert abs(t.azimuth) < 2.0


def test_false_alarm_rate_on_iid_noise():
    rng = np.random.default_rng(11)
    shape = (1000, 64, 20)
    power = rng.exponential(size=shape).astype(np.float32)
    p = CfarParams(pfa=1e-4)
    det = cfar_mask(power, p)
    half_r = p.guard_range + p.train_range
    tested = (shape[0] - 2 * half_r) * shape[1] * shape[2]
    assert tested >= 1_000_000
    rate = det.sum() / tested
    assert p.pfa / 3 <= rate <= 3 * p.pfa


def test_threshold_scale_matches_design_pfa():
    # i.i.d. exponential cells: P(x > a * mean of N) = (1 + a / N) ** -N
    p = CfarParams(pfa=1e-5)
    assert (1 + p.scale / p.n_train) ** (-p.n_train) == pytest.approx(1e-5, rel=1e-9)


def test_window_larger_than_cube():
    with pytest.raises(ValueError, match="larger than"):
        cfar_mask(np.ones((10, 64, 2)), CfarParams())
    with pytest.raises(ValueError):
        cfar_mask(np.ones((100, 8, 2)), CfarParams())
