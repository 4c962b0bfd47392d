import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rlforge.geometry import (
    CameraModel,
    GeometryError,
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
from rlforge.geometry.polygon import points_in_polygon


@pytest.fixture(scope="module")
def cam():
    return raspberry_pi_v21()


def _sensor_grid(m, frac=0.9, n=25):
    """Pixel lattice covering the central ``frac`` of the sensor."""
    hw, hh = frac * m.width / 2, frac * m.height / 2
    u = np.linspace(m.cx - hw, m.cx + hw, n)
    v = np.linspace(m.cy - hh, m.cy + hh, n)
    return np.array([(a, b) for b in v for a in u])


# -- distortion --------------------------------------------------------------

def test_undistort_identity_without_coefficients(cam):
    pts = _sensor_grid(cam)
    np.testing.assert_array_equal(undistort_points(pts, cam), pts)


def test_principal_point_is_fixed(cam):
    m = cam.with_distortion(k1=-0.25, k2=0.05, p1=1e-3, p2=-2e-3)
    pp = np.array([[m.cx, m.cy]])
    np.testing.assert_allclose(undistort_points(pp, m), pp, atol=1e-12)
    np.testing.assert_allclose(distort_points(pp, m), pp, atol=1e-12)


def test_k1_round_trip_at_half_radius(cam):
    m = cam.with_distortion(k1=-0.2)
    p = np.array([[m.cx + 0.5 * m.fx, m.cy]])
    und, ok = undistort_points(p, m, return_status=True)
    assert ok.all()
    assert np.abs(distort_points(und, m) - p).max() < 1e-9


def test_distort_formula_oracle(cam):
    m = cam.with_distortion(k1=0.1, k2=-0.02, k3=0.003, p1=0.001, p2=-0.002)
    x, y = 0.3, -0.2
    r2 = x * x + y * y
    rad = 1 + 0.1 * r2 - 0.02 * r2 ** 2 + 0.003 * r2 ** 3
    xd = x * rad + 2 * 0.001 * x * y + -0.002 * (r2 + 2 * x * x)
    yd = y * rad + 0.001 * (r2 + 2 * y * y) + 2 * -0.002 * x * y
    out = distort_points([[m.cx + x * m.fx, m.cy + y * m.fy]], m)[0]
    assert out == pytest.approx([m.cx + xd * m.fx, m.cy + yd * m.fy], abs=1e-9)


@given(st.floats(-0.3, 0.3))
def test_round_trip_over_sensor(k1):
    m = raspberry_pi_v21().with_distortion(k1=k1)
    pts = _sensor_grid(m)
    und, ok = undistort_points(pts, m, return_status=True)
    assert ok.all()
    assert np.abs(distort_points(und, m) - pts).max() < 1e-9


def test_nonconvergence_is_flagged(cam):
    m = cam.with_distortion(k1=-0.3)
    # beyond the fold of r (1 - 0.3 r^2) there is no preimage
    far = np.array([[m.cx + 1.5 * m.fx, m.cy]])
    _, ok = undistort_points(far, m, return_status=True)
    assert not ok[0]


# -- projection --------------------------------------------------------------

def test_project_then_cast_is_identity(cam):
    pose = RigPose(3.0, -2.0, 25.0, 20.0, 60.0, 2.0)
    pts = np.array([[30.0, 0.0], [40.0, -5.0], [25.0, 6.0]])
    uv, front = project_to_image(pts, pose, cam)
    assert front.all()
    xy, valid = pixels_to_ground(uv, pose, cam)
    assert valid.all()
    np.testing.assert_allclose(xy, pts, atol=1e-9)


def test_distorted_projection_round_trip(cam):
    m = cam.with_distortion(k1=-0.1, p2=5e-4)
    pose = RigPose(z=25.0, pitch=45.0)
    pts = np.array([[20.0, 3.0], [26.0, -4.0]])
    uv, _ = project_to_image(pts, pose, m, distort=True)
    xy, _ = pixels_to_ground(uv, pose, m, distorted=True)
    np.testing.assert_allclose(xy, pts, atol=1e-7)


# -- footprints --------------------------------------------------------------

def test_closed_form_scales_with_altitude(cam):
    a = ground_quad_closed_form(10.0, cam)
    b = ground_quad_closed_form(20.0, cam)
    np.testing.assert_allclose(b.corners, 2 * a.corners, rtol=1e-12)


def test_closed_form_symmetric_signs(cam):
    ang = footprint_angles(cam)
    assert ang["T"] == -ang["B"] and ang["L"] == -ang["R"]
    q = ground_quad_closed_form(25.0, cam)
    assert q.tl[0] == pytest.approx(-q.bl[0]) and q.tl[1] == pytest.approx(-q.tr[1])


def test_closed_form_edge_angle_formula(cam):
    ang = footprint_angles(cam)
    top = math.radians(115.0) / 2 + math.atan(cam.sensor_height / (2 * cam.focal_length))
    left = -(math.radians(80.0) / 2 + math.atan(cam.sensor_width / (2 * cam.focal_length)))
    assert ang["T"] == pytest.approx(top) and ang["L"] == pytest.approx(left)


def test_closed_form_horizon_error(cam):
    wide = CameraModel(focal_length=1e-3, sensor_width=3.68e-3, sensor_height=2.76e-3,
                       width=64, height=48, fov_v=170.0, fov_h=80.0)
    with pytest.raises(GeometryError, match="horizon"):
        ground_quad_closed_form(25.0, wide)


@pytest.mark.parametrize("yaw", [0.0, 37.0, -120.0])
def test_closed_form_matches_ray_cast_level(cam, yaw):
    pose = RigPose(x=4.0, y=-7.0, z=25.0, yaw=yaw)
    closed = ground_quad_closed_form(25.0, cam, pose=pose)
    cast = ray_cast_footprint(pose, level_equivalent_camera(cam))
    assert np.abs(closed.corners - cast.corners).max() < 1e-6
    np.testing.assert_allclose(closed.c0, cast.c0, atol=1e-9)


def test_nadir_quad_centered_and_symmetric(cam):
    q = ray_cast_footprint(RigPose(x=1.0, y=2.0, z=25.0), cam)
    np.testing.assert_allclose(q.c0, [1.0, 2.0], atol=1e-12)
    np.testing.assert_allclose(q.corners.mean(axis=0), [1.0, 2.0], atol=1e-9)
    np.testing.assert_allclose(q.tl - q.c0, -(q.br - q.c0), atol=1e-9)


def _line_plane(pose, m, pix):
    """Independent ray/ground intersection for one pixel."""
    d_cam = np.array([(pix[0] - m.cx) / m.fx, (pix[1] - m.cy) / m.fy, 1.0])
    d = pose.camera_to_world() @ d_cam
    t = -pose.z / d[2]
    return pose.position[:2] + t * d[:2]


def test_tilted_far_and_near_corners(cam):
    pose = RigPose(z=25.0, pitch=60.0)
    q = ray_cast_footprint(pose, cam)
    for name, pix in zip(("tl", "tr", "bl", "br"), cam.corner_pixels()):
        np.testing.assert_allclose(getattr(q, name), _line_plane(pose, cam, pix), atol=1e-9)
    track = pose.position[:2]
    far = [np.hypot(*(p - track)) for p in (q.tl, q.tr)]
    near = [np.hypot(*(p - track)) for p in (q.bl, q.br)]
    assert min(far) > max(near)
    assert q.is_simple()
    assert points_in_polygon(q.c0[None], q.polygon())[0]


@given(st.floats(-180.0, 180.0))
def test_yaw_rotates_quad_rigidly(yaw):
    cam = raspberry_pi_v21()
    base = ray_cast_footprint(RigPose(x=5.0, y=-3.0, z=25.0, pitch=60.0), cam)
    turned = ray_cast_footprint(RigPose(x=5.0, y=-3.0, z=25.0, yaw=yaw, pitch=60.0), cam)
    c, s = math.cos(math.radians(yaw)), math.sin(math.radians(yaw))
    rot = np.array([[c, -s], [s, c]])
    expected = (base.corners - [5.0, -3.0]) @ rot.T + [5.0, -3.0]
    np.testing.assert_allclose(turned.corners, expected, atol=1e-7)


def test_ray_cast_errors(cam):
    with pytest.raises(GeometryError, match="z > 0"):
        ray_cast_footprint(RigPose(z=0.0), cam)
    with pytest.raises(GeometryError, match="top-left"):
        ray_cast_footprint(RigPose(z=25.0, pitch=80.0), cam)


def test_camera_model_validation():
    with pytest.raises(GeometryError):
        CameraModel(focal_length=0.0, sensor_width=1e-3, sensor_height=1e-3, width=10, height=10)
    with pytest.raises(GeometryError):
        CameraModel(focal_length=1e-3, sensor_width=1e-3, sensor_height=1e-3, width=0, height=10)


def test_camera_dict_round_trip(cam):
    m = cam.with_distortion(k1=-0.1, p1=1e-3)
    back = CameraModel.from_dict(m.to_dict())
    assert back.fx == pytest.approx(m.fx) and back.k1 == m.k1 and back.p1 == m.p1
