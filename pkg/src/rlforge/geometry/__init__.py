"""Camera geometry: distortion, footprints, homographies and ground warping."""
from rlforge.geometry.camera import (
    DEFAULT_SIGNS,
    CameraModel,
    GeometryError,
    GroundQuad,
    RigPose,
    distort_points,
    footprint_angles,
    ground_quad_closed_form,
    level_equivalent_camera,
    pixels_to_ground,
    project_to_image,
    raspberry_pi_v21,
    ray_cast_footprint,
    undistort_points,
)
from rlforge.geometry.grid import GridSpec
from rlforge.geometry.homography import (
    DegenerateConfigurationError,
    apply_homography,
    ground_homography,
    homography_from_correspondences,
    normalize_homography,
    warp_to_ground,
)

__all__ = [
    "DEFAULT_SIGNS", "CameraModel", "GeometryError", "GroundQuad", "RigPose",
    "distort_points", "footprint_angles", "ground_quad_closed_form",
    "level_equivalent_camera", "pixels_to_ground", "project_to_image",
    "raspberry_pi_v21", "ray_cast_footprint", "undistort_points", "GridSpec",
    "DegenerateConfigurationError", "apply_homography", "ground_homography",
    "homography_from_correspondences", "normalize_homography", "warp_to_ground",
]
