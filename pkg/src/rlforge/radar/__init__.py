"""FMCW MIMO radar processing chain and CA-CFAR target extraction."""
from rlforge.radar.cfar import CfarParams, cfar_detect, cfar_mask
from rlforge.radar.processing import (
    angle_fft,
    polar_to_cartesian,
    process_raw,
    ra_image,
    radar_to_world,
    range_doppler_map,
    to_db,
    world_to_radar,
)
from rlforge.radar.types import (
    DB_FLOOR,
    SPEED_OF_LIGHT,
    RaImage,
    RadarConfig,
    RadarConfigError,
    RawAdcCube,
    RdaCube,
    RdMapStack,
    Target,
    WorldRaster,
)

__all__ = [
    "CfarParams", "cfar_detect", "cfar_mask", "angle_fft", "polar_to_cartesian",
    "process_raw", "ra_image", "radar_to_world", "range_doppler_map", "to_db",
    "world_to_radar", "DB_FLOOR", "SPEED_OF_LIGHT", "RaImage", "RadarConfig",
    "RadarConfigError", "RawAdcCube", "RdaCube", "RdMapStack", "Target", "WorldRaster",
]
