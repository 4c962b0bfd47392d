import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rlforge.radar import RadarConfig

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def small_radar():
    """3 TX x 4 RX, 16 chirps, 64 samples over 0.6 m bins (about 38 m of range)."""
    return RadarConfig(bandwidth=2.5e8, chirps_per_tx=16, rx_count=4, samples_per_chirp=64)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
