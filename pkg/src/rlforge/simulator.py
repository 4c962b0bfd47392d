"""Synthetic scenes with known ground truth for every pipeline stage.

A scene holds moving objects on the ground plane, a static radar and a UAV
camera.  From it we render dechirped FMCW raw cubes and pixel-exact aerial
panoptic label frames, both stamped from one clock plus per-sensor offsets.
Radar geometry is planar: ranges and azimuths are taken in the ``z = 0``
plane regardless of the radar mounting height.

Scene files are YAML with these top-level keys::

    seed: 7
    duration: 122.0             # s
    radar:   {rate_hz, offset_s, pose: {x, y, yaw}, config: {...}, snr_db, noise}
    camera:  {rate_hz, offset_s, pose: {x, y, z, yaw, pitch, roll}, model: {...},
              trajectory: {...}, pose_noise_m}
    objects:
      - class: pedestrian
        trajectory: {waypoints: [[20, 0], [35, 0]], speed: 1.0, mode: pingpong, t0: 0}
        t_start: 0.0            # optional visibility window
        t_end: null
        size: [0.6, 0.4]        # optional length, width (m)
        heading: null           # fixed heading in deg; default follows the path
        scatterers: [[dx, dy, amplitude], ...]   # optional, body frame
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from rlforge.geometry.camera import (
    CameraModel,
    GeometryError,
    RigPose,
    pixels_to_ground,
    project_to_image,
    raspberry_pi_v21,
    undistort_points,
)
from rlforge.geometry.polygon import points_in_polygon, rectangle
from rlforge.radar.processing import world_to_radar
from rlforge.radar.types import SPEED_OF_LIGHT, RadarConfig, RawAdcCube
from rlforge.segmentation import ClassId, PanopticFrame, frame_seed

OBJECT_SIZES = {ClassId.PEDESTRIANS: (0.6, 0.4), ClassId.CARS: (4.5, 1.8)}
SCATTERER_COUNTS = {ClassId.PEDESTRIANS: (1, 3), ClassId.CARS: (5, 10)}


class SceneError(ValueError):
    pass


# ---------------------------------------------------------------------------
# motion

@dataclass(frozen=True)
class Trajectory:
    """Piecewise-linear path traversed at constant speed.

    ``mode`` decides what happens at the last waypoint: ``"hold"`` stops
    there, ``"pingpong"`` walks back along the path, ``"loop"`` jumps back to
    the start.  Before ``t0`` the object rests at the first waypoint.
    """

    waypoints: np.ndarray
    speed: float = 0.0
    t0: float = 0.0
    mode: str = "hold"

    def __post_init__(self):
        wp = np.asarray(self.waypoints, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "waypoints", wp)
        if len(wp) == 0:
            raise SceneError("trajectory needs at least one waypoint")
        if self.speed < 0:
            raise SceneError("speed must be non-negative")
        if self.mode not in ("hold", "pingpong", "loop"):
            raise SceneError(f"unknown trajectory mode {self.mode!r}")

    @property
    def _cum(self) -> np.ndarray:
        seg = np.hypot(*np.diff(self.waypoints, axis=0).T) if len(self.waypoints) > 1 else np.zeros(0)
        return np.concatenate([[0.0], np.cumsum(seg)])

    def state(self, t: float):
        """``(position, velocity)`` at time ``t``."""
        cum = self._cum
        total = cum[-1]
        if total == 0 or self.speed == 0 or t < self.t0:
            return self.waypoints[0].copy(), np.zeros(2)
        s = self.speed * (t - self.t0)
        direction = 1.0
        if self.mode == "hold":
            if s >= total:
                return self.waypoints[-1].copy(), np.zeros(2)
        elif self.mode == "loop":
            s = s % total
        else:
            s = s % (2 * total)
            if s > total:
                s, direction = 2 * total - s, -1.0
        k = int(np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(cum) - 2))
        a, b = self.waypoints[k], self.waypoints[k + 1]
        seg = cum[k + 1] - cum[k]
        u = (b - a) / seg
        return a + u * (s - cum[k]), direction * self.speed * u

    def position(self, t: float) -> np.ndarray:
        return self.state(t)[0]

    @classmethod
    def from_dict(cls, d) -> "Trajectory":
        d = dict(d)
        return cls(np.asarray(d.pop("waypoints"), float), **d)

    def to_dict(self) -> dict:
        return {"waypoints": self.waypoints.tolist(), "speed": self.speed, "t0": self.t0,
                "mode": self.mode}


@dataclass(frozen=True)
class SceneObject:
    """Rigid ground object: rectangle footprint with point scatterers.

    ``scatterers`` holds body-frame ``(dx, dy, amplitude)`` rows, ``dx``
    along the heading.
    """

    class_id: ClassId
    trajectory: Trajectory
    size: tuple
    scatterers: np.ndarray
    heading: float | None = None
    t_start: float | None = None
    t_end: float | None = None

    def __post_init__(self):
        sc = np.asarray(self.scatterers, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "scatterers", sc)
        half = np.asarray(self.size, float) / 2
        if np.any(np.abs(sc[:, :2]) > half + 1e-12):
            raise SceneError("scatterers must lie inside the object footprint")

    def active(self, t: float) -> bool:
        return (self.t_start is None or t >= self.t_start) and (self.t_end is None or t <= self.t_end)

    def pose(self, t: float):
        """``(center, velocity, heading_deg)``."""
        pos, vel = self.trajectory.state(t)
        if self.heading is not None:
            heading = self.heading
        elif np.any(vel):
            heading = math.degrees(math.atan2(vel[1], vel[0]))
        else:
            wp = self.trajectory.waypoints
            heading = math.degrees(math.atan2(*(wp[-1] - wp[0])[::-1])) if len(wp) > 1 else 0.0
        return pos, vel, heading

    def footprint(self, t: float) -> np.ndarray:
        pos, _, heading = self.pose(t)
        return rectangle(pos, self.size[0], self.size[1], heading)

    def scatterer_states(self, t: float):
        """World positions ``(k, 2)``, velocities ``(k, 2)`` and amplitudes ``(k,)``."""
        pos, vel, heading = self.pose(t)
        h = math.radians(heading)
        rot = np.array([[math.cos(h), -math.sin(h)], [math.sin(h), math.cos(h)]])
        xy = pos + self.scatterers[:, :2] @ rot.T
        return xy, np.tile(vel, (len(xy), 1)), self.scatterers[:, 2].copy()


def random_scatterers(class_id: ClassId, rng: np.random.Generator, size=None,
                      amplitude: float = 1.0) -> np.ndarray:
    lo, hi = SCATTERER_COUNTS.get(ClassId(class_id), (1, 1))
    size = size or OBJECT_SIZES.get(ClassId(class_id), (0.5, 0.5))
    n = int(rng.integers(lo, hi + 1))
    half = 0.45 * np.asarray(size)
    off = rng.uniform(-half, half, size=(n, 2))
    amp = amplitude * rng.uniform(0.7, 1.0, size=n)
    return np.column_stack([off, amp])


# ---------------------------------------------------------------------------
# scene

@dataclass(frozen=True)
class RadarRig:
    pose: RigPose = field(default_factory=RigPose)
    config: RadarConfig = field(default_factory=RadarConfig)
    rate_hz: float = 2.03
    offset_s: float = 0.0
    snr_db: float = 30.0
    noise: bool = True


@dataclass(frozen=True)
class CameraRig:
    pose: RigPose = field(default_factory=lambda: RigPose(z=25.0, pitch=60.0))
    model: CameraModel = field(default_factory=raspberry_pi_v21)
    rate_hz: float = 10.0
    offset_s: float = 0.012
    trajectory: Trajectory | None = None
    pose_noise_m: float = 0.0

    def true_pose(self, t: float) -> RigPose:
        if self.trajectory is None:
            return replace(self.pose, timestamp=t)
        xy = self.trajectory.position(t)
        return replace(self.pose, x=float(xy[0]), y=float(xy[1]), timestamp=t)


@dataclass(frozen=True)
class Scene:
    objects: tuple
    radar: RadarRig = field(default_factory=RadarRig)
    camera: CameraRig = field(default_factory=CameraRig)
    duration: float = 10.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        if not (self.radar.rate_hz > 0 and self.camera.rate_hz > 0):
            raise SceneError("frame rates must be positive")
        if not self.duration > 0:
            raise SceneError("duration must be positive")

    @property
    def radar_times(self) -> np.ndarray:
        n = math.ceil(self.duration * self.radar.rate_hz - 1e-9)
        return np.arange(n) / self.radar.rate_hz + self.radar.offset_s

    @property
    def camera_times(self) -> np.ndarray:
        n = math.ceil(self.duration * self.camera.rate_hz - 1e-9)
        return np.arange(n) / self.camera.rate_hz + self.camera.offset_s

    def active_objects(self, t: float):
        return [(i, o) for i, o in enumerate(self.objects) if o.active(t)]

    # serialization ---------------------------------------------------------
    @classmethod
    def from_dict(cls, d: dict) -> "Scene":
        d = dict(d or {})
        seed = int(d.get("seed", 0))
        rng = np.random.default_rng([seed, 0x5CE])
        r = dict(d.get("radar") or {})
        radar = RadarRig(
            pose=RigPose.from_dict(r.get("pose") or {}),
            config=RadarConfig.from_dict(r.get("config")),
            rate_hz=float(r.get("rate_hz", 2.03)),
            offset_s=float(r.get("offset_s", 0.0)),
            snr_db=float(r.get("snr_db", 30.0)),
            noise=bool(r.get("noise", True)),
        )
        c = dict(d.get("camera") or {})
        cam_pose = {"z": 25.0, "pitch": 60.0}
        cam_pose.update(c.get("pose") or {})
        camera = CameraRig(
            pose=RigPose.from_dict(cam_pose),
            model=CameraModel.from_dict(c["model"]) if c.get("model") else raspberry_pi_v21(),
            rate_hz=float(c.get("rate_hz", 10.0)),
            offset_s=float(c.get("offset_s", 0.012)),
            trajectory=Trajectory.from_dict(c["trajectory"]) if c.get("trajectory") else None,
            pose_noise_m=float(c.get("pose_noise_m", 0.0)),
        )
        objects = []
        for i, od in enumerate(d.get("objects") or []):
            try:
                cls_id = ClassId.parse(od.get("class", "pedestrians"))
            except KeyError:
                # singular spellings are accepted too ("pedestrian", "car")
                cls_id = ClassId.parse(str(od["class"]) + "s")
            size = tuple(od.get("size") or OBJECT_SIZES.get(cls_id, (0.5, 0.5)))
            if od.get("scatterers") is not None:
                sc = np.asarray(od["scatterers"], float)
            else:
                sc = random_scatterers(cls_id, rng, size, float(od.get("amplitude", 1.0)))
            if "trajectory" not in od and "position" not in od:
                raise SceneError(f"object {i} needs a trajectory or a position")
            traj = Trajectory.from_dict(od["trajectory"]) if "trajectory" in od else \
                Trajectory(np.asarray(od["position"], float))
            objects.append(SceneObject(cls_id, traj, size, sc, od.get("heading"),
                                       od.get("t_start"), od.get("t_end")))
        return cls(tuple(objects), radar, camera, float(d.get("duration", 10.0)), seed)

    @classmethod
    def load(cls, path) -> "Scene":
        return cls.from_dict(yaml.safe_load(Path(path).read_text()))


def three_pedestrian_scene(duration: float = 122.0, seed: int = 0, radar: RadarConfig | None = None,
                           late_start: float | None = 12.0, **rig) -> Scene:
    """Three pedestrians pacing radially 20 to 35 m in front of a parked radar.

    The third one enters at ``late_start`` seconds.
    """
    rng = np.random.default_rng([seed, 0x5CE])
    objects = []
    for k, (az, phase) in enumerate(((-9.0, 0.0), (0.0, 5.0), (8.0, 11.0))):
        a = math.radians(az)
        u = np.array([math.cos(a), math.sin(a)])
        traj = Trajectory(np.array([20.0 * u, 35.0 * u]), speed=1.0, t0=-phase, mode="pingpong")
        objects.append(SceneObject(ClassId.PEDESTRIANS, traj, OBJECT_SIZES[ClassId.PEDESTRIANS],
                                   random_scatterers(ClassId.PEDESTRIANS, rng),
                                   t_start=late_start if k == 2 else None))
    radar_rig = RadarRig(config=radar or RadarConfig(), **rig.pop("radar_rig", {}))
    camera_rig = CameraRig(**rig.pop("camera_rig", {}))
    return Scene(tuple(objects), radar_rig, camera_rig, duration, seed)


# ---------------------------------------------------------------------------
# radar synthesis

@dataclass(frozen=True)
class ScattererTruth:
    range: float
    velocity: float
    azimuth: float
    amplitude: float
    x: float
    y: float


def radar_truth(scene: Scene, t: float):
    """Per active object: list of :class:`ScattererTruth` in the radar frame."""
    out = []
    pose = scene.radar.pose
    for idx, obj in scene.active_objects(t):
        xy, vel, amp = obj.scatterer_states(t)
        rng, az = world_to_radar(xy, pose)
        rel = xy - np.array([pose.x, pose.y])
        vr = np.einsum("ij,ij->i", rel, vel) / np.where(rng > 0, rng, 1.0)
        out.append((idx, [ScattererTruth(float(r), float(v), float(a), float(m), float(p[0]),
                                          float(p[1]))
                          for r, v, a, m, p in zip(rng, vr, az, amp, xy)]))
    return out


def scatterer_cube(cfg: RadarConfig, r: float, v: float, azimuth_deg: float,
                   amplitude: float = 1.0) -> np.ndarray:
    """Noise-free dechirped response of one point scatterer, complex128.

    The round-trip delay of chirp ``m`` at virtual element ``n`` is
    ``tau = 2 (r + v t_m) / c + n d lambda sin(theta) / c``, with ``t_m`` the
    slow time (including the TX slot offset when ``model_tdm_skew`` is set).
    The sample phase is ``2 pi (f_c + S t_s) tau``; since ``tau`` is a sum of
    a chirp term and an element term, the cube factors exactly into
    ``A[s] B[m, s] C[n, s]``.
    """
    if not r > 0:
        raise ValueError("scatterer range must be positive")
    c = SPEED_OF_LIGHT
    nv, nm, ns = cfg.virtual_channels, cfg.chirps_per_tx, cfg.samples_per_chirp
    slope = cfg.bandwidth / cfg.chirp_duration
    t_s = np.arange(ns) * cfg.chirp_duration / ns
    inst_freq = cfg.carrier_frequency + slope * t_s                # (s,)
    tau0 = 2.0 * r / c
    t_m = np.arange(nm) * cfg.pri
    tau_m = 2.0 * v * t_m / c                                       # (m,)
    n = np.arange(nv)
    tau_n = n * cfg.virtual_element_spacing * cfg.wavelength * math.sin(math.radians(azimuth_deg)) / c
    if cfg.model_tdm_skew:
        tau_n = tau_n + 2.0 * v * (n // cfg.rx_count) * cfg.chirp_duration / c
    two_pi = 2.0 * np.pi
    a = amplitude * np.exp(1j * two_pi * inst_freq * tau0)
    b = np.exp(1j * two_pi * np.outer(tau_m, inst_freq)) * a       # (m, s)
    cn = np.exp(1j * two_pi * np.outer(tau_n, inst_freq))          # (n, s)
    return cn[:, None, :] * b[None, :, :]


def noise_sigma(cfg: RadarConfig, snr_db: float) -> float:
    """Per-sample complex noise std for a unit-amplitude scatterer at ``snr_db``.

    SNR refers to the coherent peak after the full 3D transform with
    rectangular windows, i.e. it includes the ``N_v N_m N_s`` integration gain.
    """
    n = cfg.virtual_channels * cfg.chirps_per_tx * cfg.samples_per_chirp
    return math.sqrt(n / 10.0 ** (snr_db / 10.0))


def synthesize_raw(scene: Scene, t: float, noise: bool | None = None,
                   rng: np.random.Generator | None = None) -> RawAdcCube:
    """Raw ADC cube of the scene at time ``t`` (stop-and-hop model)."""
    cfg = scene.radar.config
    cube = np.zeros((cfg.virtual_channels, cfg.chirps_per_tx, cfg.samples_per_chirp),
                    dtype=np.complex128)
    for _, scatterers in radar_truth(scene, t):
        for s in scatterers:
            cube += scatterer_cube(cfg, s.range, s.velocity, s.azimuth, s.amplitude)
    noise = scene.radar.noise if noise is None else noise
    if noise:
        rng = rng or frame_seed(scene.seed, t)
        sigma = noise_sigma(cfg, scene.radar.snr_db) / math.sqrt(2.0)
        w = np.empty(cube.shape, dtype=np.complex64)
        rng.standard_normal(out=w.view(np.float32), dtype=np.float32)
        w *= np.float32(sigma)
        cube += w
    return RawAdcCube(samples=cube, config=cfg, timestamp=float(t), vehicle_pose=scene.radar.pose)


def predicted_bins(cfg: RadarConfig, r: float, v: float, azimuth_deg: float):
    """Analytic ``(range, doppler, azimuth)`` bins of a point scatterer."""
    rb = int(round(r / cfg.range_bin_width))
    nd = cfg.n_doppler_bins
    db = (int(round(v / cfg.velocity_bin_width)) + nd // 2) % nd
    na = cfg.n_angle_bins
    first, stop, _ = cfg.azimuth_bins()
    f = cfg.virtual_element_spacing * math.sin(math.radians(azimuth_deg))
    ab = int(round(f * na)) + na // 2 - first
    return rb, db, int(np.clip(ab, 0, stop - first - 1))


# ---------------------------------------------------------------------------
# aerial label rendering

def render_aerial_labels(scene: Scene, t: float, pose: RigPose | None = None,
                         camera: CameraModel | None = None) -> PanopticFrame:
    """Pixel-exact panoptic labels of the scene seen from the UAV.

    Every pixel center is cast onto the ground and tested against the object
    footprints.  Objects nearer to the camera are painted last.  Instance ids
    are the object index plus one, so they persist across frames.
    """
    pose = pose or scene.camera.true_pose(t)
    camera = camera or scene.camera.model
    axis = pose.camera_to_world()[:, 2]
    if axis[2] >= 0:
        raise GeometryError("camera is not looking at the ground")
    h, w = camera.height, camera.width
    cm = np.full((h, w), int(ClassId.ENVIRONMENT), dtype=np.uint8)
    inst = np.zeros((h, w), dtype=np.uint16)

    order = []
    for idx, obj in scene.active_objects(t):
        poly = obj.footprint(t)
        uv, in_front = project_to_image(poly, pose, camera, distort=True)
        if not in_front.all():
            continue
        pad = 3
        c0 = max(int(np.floor(uv[:, 0].min())) - pad, 0)
        c1 = min(int(np.ceil(uv[:, 0].max())) + pad, w - 1)
        r0 = max(int(np.floor(uv[:, 1].min())) - pad, 0)
        r1 = min(int(np.ceil(uv[:, 1].max())) + pad, h - 1)
        if c0 > c1 or r0 > r1:
            continue
        dist = float(np.hypot(*(poly.mean(axis=0) - pose.position[:2])) ** 2 + pose.z ** 2)
        order.append((dist, idx, obj, poly, (r0, r1, c0, c1)))
    order.sort(key=lambda e: (-e[0], e[1]))
    for _, idx, obj, poly, (r0, r1, c0, c1) in order:
        vv, uu = np.mgrid[r0:r1 + 1, c0:c1 + 1]
        pix = np.column_stack([uu.ravel(), vv.ravel()]).astype(float)
        if camera.has_distortion:
            pix = undistort_points(pix, camera)
        xy, valid = pixels_to_ground(pix, pose, camera)
        hit = valid & points_in_polygon(np.where(valid[:, None], xy, 0.0), poly)
        if not hit.any():
            continue
        rr, cc = vv.ravel()[hit], uu.ravel()[hit]
        cm[rr, cc] = int(obj.class_id)
        inst[rr, cc] = idx + 1
    return PanopticFrame(class_map=cm, instance_map=inst, scores={int(i): 1.0 for i in np.unique(inst) if i},
                         timestamp=float(t), camera_pose=pose)


def recorded_camera_pose(scene: Scene, t: float) -> RigPose:
    """Pose as reported by the UAV log: the true pose plus position noise."""
    pose = scene.camera.true_pose(t)
    sigma = scene.camera.pose_noise_m
    if sigma <= 0:
        return pose
    rng = frame_seed(scene.seed + 0x9E37, t)
    dx, dy = rng.normal(0.0, sigma, 2)
    return replace(pose, x=pose.x + float(dx), y=pose.y + float(dy))


# ---------------------------------------------------------------------------
# sequences

@dataclass(frozen=True)
class ObjectTruth:
    """Ground truth of one object at one radar frame."""

    object_id: int
    instance_id: int
    class_id: int
    center: tuple
    footprint: tuple            # (x_min, x_max, y_min, y_max)
    scatterers: tuple           # ScattererTruth
    bins: tuple                 # per scatterer (range, doppler, azimuth)

    def to_dict(self) -> dict:
        return {
            "object_id": self.object_id, "instance_id": self.instance_id,
            "class_id": self.class_id, "center": list(self.center),
            "footprint": list(self.footprint),
            "scatterers": [asdict(s) for s in self.scatterers],
            "bins": [list(b) for b in self.bins],
        }


@dataclass
class FrameBundle:
    """One sensor sample with its ground truth.

    Radar bundles carry ``raw`` and per-object ``truth``; camera bundles carry
    the ground-truth ``panoptic`` frame.  ``index`` counts frames per sensor.
    """

    kind: str
    index: int
    timestamp: float
    raw: RawAdcCube | None = None
    panoptic: PanopticFrame | None = None
    truth: list = field(default_factory=list)


def object_truth(scene: Scene, t: float) -> list[ObjectTruth]:
    cfg = scene.radar.config
    out = []
    for idx, scatterers in radar_truth(scene, t):
        obj = scene.objects[idx]
        poly = obj.footprint(t)
        center = obj.pose(t)[0]
        out.append(ObjectTruth(
            object_id=idx, instance_id=idx + 1, class_id=int(obj.class_id),
            center=(float(center[0]), float(center[1])),
            footprint=(float(poly[:, 0].min()), float(poly[:, 0].max()),
                       float(poly[:, 1].min()), float(poly[:, 1].max())),
            scatterers=tuple(scatterers),
            bins=tuple(predicted_bins(cfg, s.range, s.velocity, s.azimuth) for s in scatterers)))
    return out


def radar_bundle(scene: Scene, k: int) -> FrameBundle:
    t = float(scene.radar_times[k])
    clock = t - scene.radar.offset_s
    raw = synthesize_raw(scene, clock)
    raw.timestamp = t
    return FrameBundle("radar", k, t, raw=raw, truth=object_truth(scene, clock))


def camera_bundle(scene: Scene, j: int) -> FrameBundle:
    t = float(scene.camera_times[j])
    clock = t - scene.camera.offset_s
    frame = render_aerial_labels(scene, clock, scene.camera.true_pose(clock))
    frame.timestamp = t
    frame.camera_pose = replace(recorded_camera_pose(scene, clock), timestamp=t)
    return FrameBundle("camera", j, t, panoptic=frame)


def generate_sequence(scene: Scene):
    """Yield radar and camera bundles in timestamp order.

    Sensor timestamps are the shared clock plus each sensor's offset; the
    scene itself is always evaluated at the clock time.  Frames are produced
    lazily and each is reproducible on its own (per-frame seeds).
    """
    events = [(t, 0, k) for k, t in enumerate(scene.radar_times)]
    events += [(t, 1, j) for j, t in enumerate(scene.camera_times)]
    for _, kind, i in sorted(events):
        yield radar_bundle(scene, i) if kind == 0 else camera_bundle(scene, i)
