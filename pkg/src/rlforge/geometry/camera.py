"""Pinhole camera with Brown-Conrady distortion, rig poses and ground footprints.

Coordinate conventions
----------------------
World frame: right-handed, ``z`` up, ground plane at ``z = 0``.

Pixel frame: ``u`` to the right (column), ``v`` down (row); integer
coordinates are pixel centers, so the image spans ``[-0.5, W - 0.5]``.

Camera frame (OpenCV): ``x`` right, ``y`` down, ``z`` along the optical
axis.  With ``yaw = pitch = roll = 0`` the camera looks straight down and
the top of the image points along world ``+x``.  ``yaw`` turns the image-up
heading counter-clockwise about world ``z``, ``pitch`` tilts the optical
axis from nadir toward the image-up heading, ``roll`` spins the image about
the optical axis.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

log = logging.getLogger(__name__)

# camera axes expressed in the world frame for a zero pose (columns x, y, z)
_NADIR_BASIS = np.array([[0.0, -1.0, 0.0],
                         [-1.0, 0.0, 0.0],
                         [0.0, 0.0, -1.0]]).T


_WARNED: set = set()


class GeometryError(ValueError):
    """Raised for degenerate or unbounded geometric configurations."""


@dataclass(frozen=True)
class RigPose:
    """6-DoF sensor pose in the global frame.

    Angles are in degrees.  Radar rigs only use ``x``, ``y`` and ``yaw``
    (boresight heading, counter-clockwise from world ``+x``).
    """

    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    yaw: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0
    timestamp: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.yaw, self.pitch, self.roll])

    @classmethod
    def from_array(cls, values, timestamp: float = 0.0) -> "RigPose":
        x, y, z, yaw, pitch, roll = (float(v) for v in values)
        return cls(x, y, z, yaw, pitch, roll, float(timestamp))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def camera_to_world(self) -> np.ndarray:
        """Rotation taking camera-frame vectors to world-frame vectors."""
        cy, sy = math.cos(math.radians(self.yaw)), math.sin(math.radians(self.yaw))
        cp, sp = math.cos(math.radians(self.pitch)), math.sin(math.radians(self.pitch))
        cr, sr = math.cos(math.radians(self.roll)), math.sin(math.radians(self.roll))
        rz_world = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
        rx_cam = np.array([[1.0, 0.0, 0.0], [0.0, cp, -sp], [0.0, sp, cp]])
        rz_cam = np.array([[cr, -sr, 0.0], [sr, cr, 0.0], [0.0, 0.0, 1.0]])
        return rz_world @ _NADIR_BASIS @ rx_cam @ rz_cam

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "z": self.z, "yaw": self.yaw,
                "pitch": self.pitch, "roll": self.roll, "timestamp": self.timestamp}

    @classmethod
    def from_dict(cls, d: dict) -> "RigPose":
        return cls(**{k: float(d.get(k, 0.0)) for k in
                      ("x", "y", "z", "yaw", "pitch", "roll", "timestamp")})


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics plus radial/tangential distortion.

    Physical sizes are in metres.  ``fx``/``fy``/``cx``/``cy`` default to the
    sensor geometry (focal length over pixel pitch, centred principal
    point) and can be overridden.  ``fov_v``/``fov_h`` hold the lens's
    physical field of view, which only enters the closed-form footprint.
    """

    focal_length: float
    sensor_width: float
    sensor_height: float
    width: int
    height: int
    fov_v: float = 115.0
    fov_h: float = 80.0
    k1: float = 0.0
    k2: float = 0.0
    k3: float = 0.0
    p1: float = 0.0
    p2: float = 0.0
    fx_px: float | None = None
    fy_px: float | None = None
    cx_px: float | None = None
    cy_px: float | None = None
    fov_tolerance: float = 0.05
    warnings: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if not (self.focal_length > 0 and self.sensor_width > 0 and self.sensor_height > 0):
            raise GeometryError("focal length and sensor dimensions must be positive")
        if self.width < 1 or self.height < 1:
            raise GeometryError("pixel dimensions must be >= 1")
        for name in ("fov_v", "fov_h"):
            if not 0.0 < getattr(self, name) < 180.0:
                raise GeometryError(f"{name} must lie in (0, 180) degrees")
        notes = []
        expected = self.sensor_height / (2.0 * self.focal_length)
        actual = math.tan(math.radians(self.fov_v) / 2.0)
        if abs(actual - expected) > self.fov_tolerance * max(expected, 1e-12):
            notes.append(f"tan(fov_v/2)={actual:.4f} disagrees with h/(2f)={expected:.4f}")
        if notes and not self.warnings:
            for n in notes:
                if n not in _WARNED:
                    _WARNED.add(n)
                    log.warning("camera model: %s", n)
            object.__setattr__(self, "warnings", tuple(notes))

    @property
    def fx(self) -> float:
        if self.fx_px is not None:
            return self.fx_px
        return self.focal_length * self.width / self.sensor_width

    @property
    def fy(self) -> float:
        if self.fy_px is not None:
            return self.fy_px
        return self.focal_length * self.height / self.sensor_height

    @property
    def cx(self) -> float:
        return (self.width - 1) / 2.0 if self.cx_px is None else self.cx_px

    @property
    def cy(self) -> float:
        return (self.height - 1) / 2.0 if self.cy_px is None else self.cy_px

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def has_distortion(self) -> bool:
        return any((self.k1, self.k2, self.k3, self.p1, self.p2))

    def corner_pixels(self) -> np.ndarray:
        """Outer image corners TL, TR, BL, BR in pixel coordinates."""
        w, h = self.width - 0.5, self.height - 0.5
        return np.array([[-0.5, -0.5], [w, -0.5], [-0.5, h], [w, h]])

    def with_distortion(self, k1=0.0, k2=0.0, k3=0.0, p1=0.0, p2=0.0) -> "CameraModel":
        return replace(self, k1=k1, k2=k2, k3=k3, p1=p1, p2=p2)

    def to_dict(self) -> dict:
        return {
            "focal_length_mm": self.focal_length * 1e3,
            "sensor_w_mm": self.sensor_width * 1e3,
            "sensor_h_mm": self.sensor_height * 1e3,
            "width_px": self.width, "height_px": self.height,
            "fov_v_deg": self.fov_v, "fov_h_deg": self.fov_h,
            "k1": self.k1, "k2": self.k2, "k3": self.k3, "p1": self.p1, "p2": self.p2,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraModel":
        """Build from the config keys (``focal_length_mm``, ``sensor_w_mm``...)."""
        return cls(
            focal_length=float(d["focal_length_mm"]) * 1e-3,
            sensor_width=float(d["sensor_w_mm"]) * 1e-3,
            sensor_height=float(d["sensor_h_mm"]) * 1e-3,
            width=int(d.get("width_px", 820)),
            height=int(d.get("height_px", 616)),
            fov_v=float(d.get("fov_v_deg", 115.0)),
            fov_h=float(d.get("fov_h_deg", 80.0)),
            k1=float(d.get("k1", 0.0)), k2=float(d.get("k2", 0.0)), k3=float(d.get("k3", 0.0)),
            p1=float(d.get("p1", 0.0)), p2=float(d.get("p2", 0.0)),
        )


def raspberry_pi_v21(width: int = 820, height: int = 616, **kw) -> CameraModel:
    """Camera Module V2.1 sensor geometry at a reduced pixel resolution."""
    return CameraModel(focal_length=3.04e-3, sensor_width=3.68e-3, sensor_height=2.76e-3,
                       width=width, height=height, fov_v=115.0, fov_h=80.0, **kw)


# ---------------------------------------------------------------------------
# distortion

def _distort_normalized(x, y, m: CameraModel):
    r2 = x * x + y * y
    radial = 1.0 + r2 * (m.k1 + r2 * (m.k2 + r2 * m.k3))
    xd = x * radial + 2.0 * m.p1 * x * y + m.p2 * (r2 + 2.0 * x * x)
    yd = y * radial + m.p1 * (r2 + 2.0 * y * y) + 2.0 * m.p2 * x * y
    return xd, yd


def _distortion_jacobian(x, y, m: CameraModel):
    r2 = x * x + y * y
    radial = 1.0 + r2 * (m.k1 + r2 * (m.k2 + r2 * m.k3))
    dradial = m.k1 + 2.0 * m.k2 * r2 + 3.0 * m.k3 * r2 * r2  # d radial / d r2
    j00 = radial + 2.0 * x * x * dradial + 2.0 * m.p1 * y + 6.0 * m.p2 * x
    j01 = 2.0 * x * y * dradial + 2.0 * m.p1 * x + 2.0 * m.p2 * y
    j10 = 2.0 * x * y * dradial + 2.0 * m.p1 * x + 2.0 * m.p2 * y
    j11 = radial + 2.0 * y * y * dradial + 6.0 * m.p1 * y + 2.0 * m.p2 * x
    return j00, j01, j10, j11


def distort_points(pts, model: CameraModel) -> np.ndarray:
    """Map ideal (undistorted) pixel coordinates to distorted pixel coordinates."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    x = (pts[:, 0] - model.cx) / model.fx
    y = (pts[:, 1] - model.cy) / model.fy
    xd, yd = _distort_normalized(x, y, model)
    return np.column_stack([xd * model.fx + model.cx, yd * model.fy + model.cy])


def undistort_points(pts, model: CameraModel, max_iter: int = 50, tol: float = 1e-12,
                     return_status: bool = False):
    """Invert the Brown-Conrady model for distorted pixel coordinates.

    Newton iteration on the normalized coordinates, seeded with the
    distorted point.  Points that fail to reach ``tol`` within ``max_iter``
    steps are flagged in the status array (``True`` = converged).
    """
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    xd = (pts[:, 0] - model.cx) / model.fx
    yd = (pts[:, 1] - model.cy) / model.fy
    if not model.has_distortion:
        out = pts.copy()
        return (out, np.ones(len(out), bool)) if return_status else out

    x, y = xd.copy(), yd.copy()
    ok = np.zeros(len(x), dtype=bool)
    for _ in range(max_iter):
        fx_, fy_ = _distort_normalized(x, y, model)
        ex, ey = fx_ - xd, fy_ - yd
        ok = np.hypot(ex, ey) < tol
        if ok.all():
            break
        j00, j01, j10, j11 = _distortion_jacobian(x, y, model)
        det = j00 * j11 - j01 * j10
        det = np.where(np.abs(det) < 1e-15, 1e-15, det)
        dx = (j11 * ex - j01 * ey) / det
        dy = (-j10 * ex + j00 * ey) / det
        x = np.where(ok, x, x - dx)
        y = np.where(ok, y, y - dy)
    fx_, fy_ = _distort_normalized(x, y, model)
    ok = np.hypot(fx_ - xd, fy_ - yd) < max(tol, 1e-11)
    ok &= np.isfinite(x) & np.isfinite(y)
    # a non-positive radial factor means the root sits on the mirrored branch
    r2 = x * x + y * y
    ok &= 1.0 + r2 * (model.k1 + r2 * (model.k2 + r2 * model.k3)) > 0
    out = np.column_stack([x * model.fx + model.cx, y * model.fy + model.cy])
    if not ok.all():
        log.debug("undistort_points: %d of %d points did not converge", (~ok).sum(), len(ok))
    return (out, ok) if return_status else out


# ---------------------------------------------------------------------------
# projection and ray casting

def pixel_rays(pixels, pose: RigPose, model: CameraModel, distorted: bool = False) -> np.ndarray:
    """World-frame ray directions through (undistorted by default) pixels."""
    pixels = np.asarray(pixels, dtype=float).reshape(-1, 2)
    if distorted:
        pixels = undistort_points(pixels, model)
    xn = (pixels[:, 0] - model.cx) / model.fx
    yn = (pixels[:, 1] - model.cy) / model.fy
    rays_c = np.column_stack([xn, yn, np.ones_like(xn)])
    return rays_c @ pose.camera_to_world().T


def pixels_to_ground(pixels, pose: RigPose, model: CameraModel, distorted: bool = False):
    """Intersect pixel rays with the ``z = 0`` plane.

    Returns ``(xy, valid)``; rays that do not descend are marked invalid and
    their coordinates set to NaN.
    """
    d = pixel_rays(pixels, pose, model, distorted=distorted)
    valid = d[:, 2] < -1e-12
    t = np.where(valid, -pose.z / np.where(valid, d[:, 2], -1.0), np.nan)
    xy = pose.position[:2] + t[:, None] * d[:, :2]
    return xy, valid


def project_to_image(world_pts, pose: RigPose, model: CameraModel, distort: bool = True):
    """Project world points to pixel coordinates.

    Returns ``(uv, in_front)``.  When ``distort`` is set and the model has
    distortion, the output is in distorted (raw image) coordinates.
    """
    p = np.asarray(world_pts, dtype=float).reshape(-1, 3) if np.shape(world_pts)[-1] == 3 \
        else np.column_stack([np.asarray(world_pts, float).reshape(-1, 2),
                              np.zeros(np.asarray(world_pts).size // 2)])
    pc = (p - pose.position) @ pose.camera_to_world()
    in_front = pc[:, 2] > 1e-9
    z = np.where(in_front, pc[:, 2], np.nan)
    uv = np.column_stack([pc[:, 0] / z * model.fx + model.cx, pc[:, 1] / z * model.fy + model.cy])
    if distort and model.has_distortion:
        uv = distort_points(uv, model)
    return uv, in_front


# ---------------------------------------------------------------------------
# ground footprints

@dataclass(frozen=True)
class GroundQuad:
    """Observed ground area: corners TL, TR, BL, BR and the center point."""

    tl: np.ndarray
    tr: np.ndarray
    bl: np.ndarray
    br: np.ndarray
    c0: np.ndarray

    @property
    def corners(self) -> np.ndarray:
        return np.vstack([self.tl, self.tr, self.bl, self.br])

    def polygon(self) -> np.ndarray:
        """Corners in boundary order (TL, TR, BR, BL)."""
        return np.vstack([self.tl, self.tr, self.br, self.bl])

    def is_simple(self) -> bool:
        from rlforge.geometry.polygon import is_simple_polygon
        return is_simple_polygon(self.polygon())


# sign pattern per corner edge: (sign of the fov term, sign of the sensor term)
DEFAULT_SIGNS = {"T": (1, 1), "B": (-1, -1), "L": (-1, -1), "R": (1, 1)}


def footprint_angles(model: CameraModel, signs=None) -> dict:
    """Signed edge angles (rad) from nadir: ``s1*fov/2 + s2*atan(size/2f)``.

    ``T``/``B`` use the vertical field of view and sensor height,
    ``L``/``R`` the horizontal field of view and sensor width.  Positive
    angles point toward the image top (``T``/``B``) or image right (``L``/``R``).
    """
    signs = {**DEFAULT_SIGNS, **(signs or {})}
    half_v = math.radians(model.fov_v) / 2.0
    half_h = math.radians(model.fov_h) / 2.0
    sens_v = math.atan(model.sensor_height / (2.0 * model.focal_length))
    sens_h = math.atan(model.sensor_width / (2.0 * model.focal_length))
    out = {}
    for key, (a, b) in signs.items():
        fov, sens = (half_v, sens_v) if key in "TB" else (half_h, sens_h)
        out[key] = a * fov + b * sens
    return out


def ground_quad_closed_form(z: float, model: CameraModel, signs=None,
                            pose: RigPose | None = None) -> GroundQuad:
    """Closed-form footprint of a level camera at altitude ``z``.

    Each edge offset is ``z * tan(angle)`` with the angles from
    :func:`footprint_angles`; corner ``c_{T/B,L/R} = (l_{T/B}, l_{L/R})`` is
    expressed in a (forward, right) frame centred on ``c0``, the ground point
    below the camera.  If ``pose`` is given, ``z`` is taken from it and the
    corners are placed in the world frame using its position and yaw.
    """
    if pose is not None:
        z = pose.z
    angles = footprint_angles(model, signs)
    for key, a in angles.items():
        if abs(a) >= math.pi / 2.0:
            raise GeometryError(f"footprint edge {key} reaches the horizon "
                                f"({math.degrees(a):.2f} deg)")
    ell = {k: z * math.tan(a) for k, a in angles.items()}
    local = {
        "tl": (ell["T"], ell["L"]), "tr": (ell["T"], ell["R"]),
        "bl": (ell["B"], ell["L"]), "br": (ell["B"], ell["R"]),
    }
    if pose is None:
        pts = {k: np.array(v) for k, v in local.items()}
        return GroundQuad(c0=np.zeros(2), **pts)
    yaw = math.radians(pose.yaw)
    fwd = np.array([math.cos(yaw), math.sin(yaw)])
    right = np.array([math.sin(yaw), -math.cos(yaw)])
    c0 = np.array([pose.x, pose.y])
    pts = {k: c0 + a * fwd + b * right for k, (a, b) in local.items()}
    return GroundQuad(c0=c0, **pts)


def level_equivalent_camera(model: CameraModel, signs=None) -> CameraModel:
    """Pinhole whose outer edge rays, for a nadir pose, sit at the closed-form angles.

    The returned model keeps the pixel grid of ``model`` but overrides
    ``fx, fy, cx, cy`` (and drops distortion) so that ray casting and the
    closed form describe the same geometry.
    """
    a = footprint_angles(model, signs)
    tt, tb = math.tan(a["T"]), math.tan(a["B"])
    tl, tr = math.tan(a["L"]), math.tan(a["R"])
    if tt <= tb or tr <= tl:
        raise GeometryError("sign pattern yields an inverted footprint")
    fy = model.height / (tt - tb)
    fx = model.width / (tr - tl)
    return replace(model, fx_px=fx, fy_px=fy, cx_px=-0.5 - fx * tl, cy_px=fy * tt - 0.5,
                   k1=0.0, k2=0.0, k3=0.0, p1=0.0, p2=0.0)


def ray_cast_footprint(pose: RigPose, model: CameraModel) -> GroundQuad:
    """Intersect the four image-corner rays and the optical axis with the ground."""
    if pose.z <= 0:
        raise GeometryError("camera must be above the ground plane (z > 0)")
    corners = model.corner_pixels()
    xy, valid = pixels_to_ground(corners, pose, model)
    names = ("top-left", "top-right", "bottom-left", "bottom-right")
    for name, ok in zip(names, valid):
        if not ok:
            raise GeometryError(f"{name} corner ray does not reach the ground")
    axis = pose.camera_to_world()[:, 2]
    if axis[2] >= -1e-12:
        raise GeometryError("optical axis does not reach the ground")
    c0 = pose.position[:2] + (-pose.z / axis[2]) * axis[:2]
    return GroundQuad(tl=xy[0], tr=xy[1], bl=xy[2], br=xy[3], c0=c0)
