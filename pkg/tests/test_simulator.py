import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import ndimage

from rlforge.geometry import GeometryError, RigPose, ground_homography, raspberry_pi_v21, warp_to_ground
from rlforge.geometry import GridSpec, distort_points, undistort_points
from rlforge.radar import RadarConfig, process_raw
from rlforge.radar.types import SPEED_OF_LIGHT, RawAdcCube
from rlforge.segmentation import ClassId
from rlforge.simulator import (
    CameraRig,
    RadarRig,
    Scene,
    SceneError,
    SceneObject,
    Trajectory,
    camera_bundle,
    generate_sequence,
    predicted_bins,
    radar_bundle,
    render_aerial_labels,
    scatterer_cube,
    synthesize_raw,
    three_pedestrian_scene,
)

GRID = GridSpec((0.0, -25.0), 0.1, (500, 450))
SMALL = RadarConfig(bandwidth=2.5e8, chirps_per_tx=16, rx_count=4, samples_per_chirp=64)


def _point(xy, amp=1.0, size=(0.6, 0.4), **kw):
    return SceneObject(ClassId.PEDESTRIANS, Trajectory([xy], **kw), size, [[0.0, 0.0, amp]])


def _beat_oracle(cfg, r, v, az_deg):
    """Raw samples from the dechirped beat model, written out per index."""
    c = SPEED_OF_LIGHT
    s = np.arange(cfg.samples_per_chirp)[None, None, :]
    m = np.arange(cfg.chirps_per_tx)[None, :, None]
    n = np.arange(cfg.virtual_channels)[:, None, None]
    f_inst = cfg.carrier_frequency + cfg.bandwidth / cfg.chirp_duration * s * cfg.chirp_duration \
        / cfg.samples_per_chirp
    tau = 2 * (r + v * m * cfg.pri) / c \
        + n * cfg.virtual_element_spacing * cfg.wavelength * math.sin(math.radians(az_deg)) / c
    return np.exp(2j * np.pi * f_inst * tau)


def _bin_oracle(cfg, r, v, az_deg):
    """Peak bins from beat, Doppler and spatial frequencies."""
    n_r, n_d, n_a = cfg.n_range_bins, cfg.n_doppler_bins, cfg.n_angle_bins
    fs = cfg.samples_per_chirp / cfg.chirp_duration
    f_beat = 2 * r * cfg.bandwidth / (cfg.chirp_duration * SPEED_OF_LIGHT)
    rb = round(f_beat / fs * n_r)
    f_dop = 2 * v / cfg.wavelength
    db = round(f_dop * cfg.pri * n_d) + n_d // 2
    first = cfg.azimuth_bins()[0]
    ab = round(cfg.virtual_element_spacing * math.sin(math.radians(az_deg)) * n_a) + n_a // 2 - first
    return rb, db, ab


# -- radar synthesis ---------------------------------------------------------

def test_empty_scene_zero_cube(small_radar):
    scene = Scene((), RadarRig(config=small_radar, noise=False))
    raw = synthesize_raw(scene, 0.3)
    assert raw.samples.shape == (12, 16, 64) and not raw.samples.any()


def test_cube_matches_beat_model(small_radar):
    got = scatterer_cube(small_radar, 17.3, -0.8, 23.0)
    want = _beat_oracle(small_radar, 17.3, -0.8, 23.0)
    assert np.abs(got - want).max() < 1e-9


def test_amplitude_linearity(small_radar):
    one = process_raw(RawAdcCube(scatterer_cube(small_radar, 15.0, 0.5, -12.0), small_radar))
    two = process_raw(RawAdcCube(scatterer_cube(small_radar, 15.0, 0.5, -12.0, amplitude=2.0),
                                 small_radar))
    assert np.abs(two.data).max() / np.abs(one.data).max() == pytest.approx(2.0, rel=1e-6)


def test_known_scatterer_bins(small_radar):
    cube = process_raw(RawAdcCube(scatterer_cube(small_radar, 20.0, 1.0, 10.0), small_radar))
    peak = np.unravel_index(np.argmax(np.abs(cube.data)), cube.shape)
    oracle = _bin_oracle(small_radar, 20.0, 1.0, 10.0)
    assert np.all(np.abs(np.subtract(peak, oracle)) <= 1)
    assert predicted_bins(small_radar, 20.0, 1.0, 10.0) == oracle


def _cubes(objs):
    return [synthesize_raw(Scene((o,), RadarRig(config=SMALL, noise=False)), 0.0).samples
            for o in objs]


def test_two_object_scene_is_sum_of_cubes():
    objs = (_point([12.0, 3.0]), _point([25.0, -6.0], amp=0.7))
    raw = synthesize_raw(Scene(objs, RadarRig(config=SMALL, noise=False)), 0.0)
    total = sum(_cubes(objs))
    assert np.abs(raw.samples - total).max() <= 1e-12 * np.abs(total).max()


@given(st.floats(3.0, 35.0), st.floats(-60.0, 60.0), st.floats(3.0, 35.0), st.floats(-60.0, 60.0),
       st.floats(0.1, 2.0))
def test_additivity(r1, a1, r2, a2, amp):
    pos = [[r * math.cos(math.radians(a)), r * math.sin(math.radians(a))] for r, a in ((r1, a1), (r2, a2))]
    objs = (_point(pos[0]), _point(pos[1], amp=amp))
    raw = synthesize_raw(Scene(objs, RadarRig(config=SMALL, noise=False)), 0.0).samples
    total = sum(_cubes(objs))
    assert np.abs(raw - total).max() <= 1e-12 * np.abs(total).max()


def test_zero_range_rejected(small_radar):
    with pytest.raises(ValueError):
        scatterer_cube(small_radar, 0.0, 0.0, 0.0)


# -- sequences ---------------------------------------------------------------

def test_campaign_frame_count():
    assert len(Scene((), duration=122.0).radar_times) == 248
    assert len(Scene((), duration=122.0).camera_times) == 1220


def test_timestamps_differ_by_offsets():
    scene = Scene((), RadarRig(offset_s=0.0), CameraRig(offset_s=0.012), duration=2.0)
    np.testing.assert_allclose(scene.camera_times[::5][:4] - 0.012, np.arange(4) * 0.5)


def test_static_scene_same_seed_same_cube(small_radar):
    scene = Scene((_point([18.0, 1.0]),), RadarRig(config=small_radar), duration=2.0, seed=3)
    a = synthesize_raw(scene, 0.0, rng=np.random.default_rng(11))
    b = synthesize_raw(scene, 1 / 2.03, rng=np.random.default_rng(11))
    assert a.samples.tobytes() == b.samples.tobytes()


def test_sequence_determinism(small_radar):
    scene = three_pedestrian_scene(duration=1.0, seed=2, radar=small_radar)

    def stream():
        out = []
        for b in generate_sequence(scene):
            payload = b.raw.samples.tobytes() if b.kind == "radar" else \
                b.panoptic.class_map.tobytes() + b.panoptic.instance_map.tobytes()
            out.append((b.kind, b.index, b.timestamp, payload))
        return out

    first = stream()
    assert first == stream()
    kinds = [k for k, *_ in first]
    assert kinds.count("radar") == 3 and kinds.count("camera") == 10
    times = [t for _, _, t, _ in first]
    assert times == sorted(times)


def test_radial_walk_range_step(small_radar):
    obj = SceneObject(ClassId.PEDESTRIANS, Trajectory([[35.0, 0.0], [20.0, 0.0]], speed=1.0),
                      (0.6, 0.4), [[0.0, 0.0, 1.0]])
    scene = Scene((obj,), RadarRig(config=small_radar, noise=False), duration=6.0)
    ranges = [radar_bundle(scene, k).truth[0].scatterers[0].range for k in range(10)]
    np.testing.assert_allclose(np.diff(ranges), -1.0 / 2.03, atol=1e-9)
    vel = radar_bundle(scene, 3).truth[0].scatterers[0].velocity
    assert vel == pytest.approx(-1.0)


@pytest.mark.parametrize("mode, t, expected", [
    ("hold", 25.0, [20.0, 0.0]),
    ("hold", -1.0, [0.0, 0.0]),
    ("loop", 25.0, [5.0, 0.0]),
    ("pingpong", 25.0, [15.0, 0.0]),
    ("pingpong", 45.0, [5.0, 0.0]),
])
def test_trajectory_modes(mode, t, expected):
    traj = Trajectory([[0.0, 0.0], [20.0, 0.0]], speed=1.0, mode=mode)
    np.testing.assert_allclose(traj.position(t), expected, atol=1e-12)


def test_pingpong_velocity_flips():
    traj = Trajectory([[0.0, 0.0], [0.0, 10.0]], speed=2.0, mode="pingpong")
    assert traj.state(2.0)[1].tolist() == [0.0, 2.0]
    assert traj.state(7.0)[1].tolist() == [0.0, -2.0]


def test_scene_validation():
    with pytest.raises(SceneError):
        Scene((), RadarRig(rate_hz=0.0))
    with pytest.raises(SceneError):
        Scene((), duration=0.0)
    with pytest.raises(SceneError):
        SceneObject(ClassId.PEDESTRIANS, Trajectory([[0, 0]]), (0.6, 0.4), [[1.0, 0.0, 1.0]])
    with pytest.raises(SceneError):
        Trajectory([[0, 0]], mode="bounce")
    with pytest.raises(SceneError):
        Scene.from_dict({"objects": [{"class": "pedestrian"}]})


def test_scene_from_dict():
    scene = Scene.from_dict({
        "seed": 4, "duration": 3.0,
        "radar": {"config": {"bandwidth": 5e8, "chirps_per_tx": 16, "samples_per_chirp": 128}},
        "objects": [{"class": "pedestrian", "position": [20.0, 1.0]},
                    {"class": "cars", "trajectory": {"waypoints": [[30, 0], [30, 10]], "speed": 2.0}}]})
    assert [o.class_id for o in scene.objects] == [ClassId.PEDESTRIANS, ClassId.CARS]
    assert 5 <= len(scene.objects[1].scatterers) <= 10
    assert scene.camera.pose.z == 25.0 and scene.camera.pose.pitch == 60.0
    assert scene.radar.config.samples_per_chirp == 128


# -- aerial labels -----------------------------------------------------------

def _pinhole(pose, cam, xy):
    """Independent projection of ground points into ideal pixels."""
    pts = np.column_stack([xy, np.zeros(len(xy))]) - pose.position
    pc = pts @ pose.camera_to_world()          # rows: R^T (X - C)
    return np.column_stack([cam.fx * pc[:, 0] / pc[:, 2] + cam.cx,
                            cam.fy * pc[:, 1] / pc[:, 2] + cam.cy])


NADIR = RigPose(z=25.0)


def test_nadir_blob_centered_on_projection():
    cam = raspberry_pi_v21()
    scene = Scene((_point([3.0, -2.0], size=(1.0, 1.0)),), camera=CameraRig(pose=NADIR))
    frame = render_aerial_labels(scene, 0.0)
    rows, cols = np.nonzero(frame.instance_map == 1)
    assert np.all(frame.class_map[rows, cols] == ClassId.PEDESTRIANS)
    (u, v), = _pinhole(NADIR, cam, np.array([[3.0, -2.0]]))
    assert abs(cols.mean() - u) < 0.5 and abs(rows.mean() - v) < 0.5
    # the pixel count approximates the 1 m^2 footprint seen at 25 m
    assert len(rows) == pytest.approx(cam.fx * cam.fy / 25.0 ** 2, rel=0.1)


def test_distorted_render_agrees_within_a_pixel():
    cam = raspberry_pi_v21()
    bent = cam.with_distortion(k1=-0.08, k2=0.01)
    objs = (_point([30.0, -3.0], size=(2.0, 2.0)), _point([45.0, 4.0], size=(2.0, 2.0)))
    scene = Scene(objs)
    ideal = render_aerial_labels(scene, 0.0, camera=cam).instance_map > 0
    raw = render_aerial_labels(scene, 0.0, camera=bent).instance_map > 0
    dist_to_ideal = ndimage.distance_transform_edt(~ideal)
    dist_to_raw = ndimage.distance_transform_edt(~raw)
    r, c = np.nonzero(raw)
    und = np.rint(undistort_points(np.column_stack([c, r]).astype(float), bent)).astype(int)
    assert dist_to_ideal[und[:, 1], und[:, 0]].max() <= 1.0
    r, c = np.nonzero(ideal)
    dis = np.rint(distort_points(np.column_stack([c, r]).astype(float), bent)).astype(int)
    assert dist_to_raw[dis[:, 1], dis[:, 0]].max() <= 1.0


def test_instances_equal_objects_in_frustum():
    cam = raspberry_pi_v21()
    centers = [[0.0, 0.0], [3.0, 3.0], [-4.0, 2.0], [200.0, 0.0], [0.0, -300.0], [6.0, -5.0]]
    scene = Scene(tuple(_point(c) for c in centers), camera=CameraRig(pose=NADIR))
    frame = render_aerial_labels(scene, 0.0)
    in_view = []
    for i, obj in enumerate(scene.objects):
        uv = _pinhole(NADIR, cam, obj.footprint(0.0))
        inside = (uv[:, 0] >= 0) & (uv[:, 0] < cam.width) & (uv[:, 1] >= 0) & (uv[:, 1] < cam.height)
        assert inside.all() or not inside.any()
        if inside.all():
            in_view.append(i + 1)
    ids = sorted(int(i) for i in np.unique(frame.instance_map) if i)
    assert ids == in_view == [1, 2, 3, 6]


def test_camera_facing_up_rejected():
    with pytest.raises(GeometryError):
        render_aerial_labels(Scene(()), 0.0, pose=RigPose(z=25.0, pitch=180.0))


def test_label_warp_hits_pedestrians():
    scene = three_pedestrian_scene(duration=20.0, seed=1)
    cb = camera_bundle(scene, 150)
    H = ground_homography(cb.panoptic.camera_pose, scene.camera.model)
    ground = warp_to_ground(cb.panoptic.class_map, H, GRID, camera=scene.camera.model)
    clock = cb.timestamp - scene.camera.offset_s
    centers = np.array([obj.pose(clock)[0] for _, obj in scene.active_objects(clock)])
    cells = GRID.world_to_cell(centers)
    assert len(centers) == 3
    assert np.all(ground[cells[:, 0], cells[:, 1]] == ClassId.PEDESTRIANS)
