"""Homography estimation (normalized DLT) and ground-plane warping."""
from __future__ import annotations

import itertools

import numpy as np

from rlforge.geometry.camera import (
    CameraModel,
    GeometryError,
    RigPose,
    distort_points,
    pixels_to_ground,
)
from rlforge.geometry.grid import GridSpec


class DegenerateConfigurationError(GeometryError):
    pass


def normalize_homography(H) -> np.ndarray:
    H = np.asarray(H, dtype=float)
    if abs(H[2, 2]) > 1e-15:
        H = H / H[2, 2]
    return H


def apply_homography(H, pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    ph = np.column_stack([pts, np.ones(len(pts))]) @ np.asarray(H, float).T
    return ph[:, :2] / ph[:, 2:3]


def _hartley(pts):
    centroid = pts.mean(axis=0)
    d = np.sqrt(((pts - centroid) ** 2).sum(axis=1)).mean()
    if d < 1e-15:
        raise DegenerateConfigurationError("all points coincide")
    s = np.sqrt(2.0) / d
    return np.array([[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]])


def _collinear(a, b, c, tol) -> bool:
    area = abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
    scale = max(np.ptp(np.vstack([a, b, c]), axis=0).max(), 1e-300)
    return area <= tol * scale * scale


def homography_from_correspondences(src, dst) -> np.ndarray:
    """Estimate ``H`` with ``dst ~ H @ src`` from >= 4 point pairs.

    Hartley-normalized DLT; the solution is the right singular vector of the
    smallest singular value, de-normalized and scaled so ``H[2, 2] = 1``.
    With more than four pairs this is the algebraic least-squares fit.
    """
    src = np.asarray(src, dtype=float).reshape(-1, 2)
    dst = np.asarray(dst, dtype=float).reshape(-1, 2)
    if len(src) != len(dst):
        raise ValueError("src and dst must have the same length")
    if len(src) < 4:
        raise DegenerateConfigurationError(f"need at least 4 correspondences, got {len(src)}")
    if len(src) == 4:
        for i, j, k in itertools.combinations(range(4), 3):
            if _collinear(src[i], src[j], src[k], 1e-12) or _collinear(dst[i], dst[j], dst[k], 1e-12):
                raise DegenerateConfigurationError(f"points {i}, {j}, {k} are collinear")

    Ts, Td = _hartley(src), _hartley(dst)
    s = apply_homography(Ts, src)
    d = apply_homography(Td, dst)
    n = len(s)
    A = np.zeros((2 * n, 9))
    x, y, u, v = s[:, 0], s[:, 1], d[:, 0], d[:, 1]
    A[0::2, 0:3] = np.column_stack([-x, -y, -np.ones(n)])
    A[0::2, 6:9] = np.column_stack([u * x, u * y, u])
    A[1::2, 3:6] = np.column_stack([-x, -y, -np.ones(n)])
    A[1::2, 6:9] = np.column_stack([v * x, v * y, v])
    _, sv, vt = np.linalg.svd(A)
    if sv[7] < 1e-10 * sv[0]:
        raise DegenerateConfigurationError("correspondences do not determine a homography "
                                           f"(singular values {sv[-2]:.3e}, {sv[-1]:.3e})")
    Hn = vt[-1].reshape(3, 3)
    H = np.linalg.inv(Td) @ Hn @ Ts
    H = normalize_homography(H)
    if abs(np.linalg.det(H)) < 1e-14:
        raise DegenerateConfigurationError("estimated homography is singular")
    return H


def _inverse(H) -> np.ndarray:
    H = np.asarray(H, dtype=float)
    if not np.all(np.isfinite(H)) or abs(np.linalg.det(H)) <= 1e-14 * np.abs(H).max() ** 3:
        raise GeometryError("homography is singular")
    return np.linalg.inv(H)


def warp_to_ground(raster, H, grid: GridSpec, mode: str = "nearest", void=None,
                   camera: CameraModel | None = None) -> np.ndarray:
    """Inverse-warp an image raster onto a ground grid.

    ``H`` maps (undistorted) pixel coordinates to world ``(x, y)``.  For every
    grid cell the center is mapped back through ``H^-1``; when ``camera`` has
    distortion the resulting ideal pixel is pushed through the forward
    distortion so the raw image is sampled directly.

    ``mode="nearest"`` keeps label values exact, ``mode="bilinear"`` blends
    intensities.  Cells whose pre-image falls outside the image get ``void``
    (default 255 for integer rasters, NaN otherwise).
    """
    raster = np.asarray(raster)
    Hinv = _inverse(H)
    X, Y = grid.cell_centers()
    uv = apply_homography(Hinv, np.column_stack([X.ravel(), Y.ravel()]))
    if camera is not None and camera.has_distortion:
        uv = distort_points(uv, camera)
    u, v = uv[:, 0], uv[:, 1]
    h, w = raster.shape[:2]
    if void is None:
        void = 255 if np.issubdtype(raster.dtype, np.integer) else np.nan

    finite = np.isfinite(u) & np.isfinite(v)
    if mode == "nearest":
        out = np.full(u.shape, void, dtype=np.result_type(raster.dtype, np.min_scalar_type(void)))
        ui = np.floor(np.where(finite, u, -10) + 0.5).astype(np.int64)
        vi = np.floor(np.where(finite, v, -10) + 0.5).astype(np.int64)
        inside = finite & (ui >= 0) & (ui < w) & (vi >= 0) & (vi < h)
        out[inside] = raster[vi[inside], ui[inside]]
    elif mode == "bilinear":
        out = np.full(u.shape, void, dtype=float)
        u0 = np.floor(np.where(finite, u, -10)).astype(np.int64)
        v0 = np.floor(np.where(finite, v, -10)).astype(np.int64)
        inside = finite & (u0 >= 0) & (u0 + 1 < w) & (v0 >= 0) & (v0 + 1 < h)
        # exact integer positions on the last row/column are still inside the image
        edge_u = finite & (u0 == w - 1) & (u == w - 1) & (v0 >= 0) & (v0 < h)
        edge_v = finite & (v0 == h - 1) & (v == h - 1) & (u0 >= 0) & (u0 < w)
        u0 = np.where(edge_u, u0 - 1, u0)
        v0 = np.where(edge_v, v0 - 1, v0)
        inside |= (edge_u | edge_v) & (u0 >= 0) & (v0 >= 0)
        fu = (u - u0)[inside]
        fv = (v - v0)[inside]
        a, b = u0[inside], v0[inside]
        img = raster.astype(float)
        out[inside] = (img[b, a] * (1 - fu) * (1 - fv) + img[b, a + 1] * fu * (1 - fv)
                       + img[b + 1, a] * (1 - fu) * fv + img[b + 1, a + 1] * fu * fv)
    else:
        raise ValueError(f"unknown warp mode {mode!r}")
    return out.reshape(grid.shape)


def ground_homography(pose: RigPose, camera: CameraModel, grid_points: int = 5) -> np.ndarray:
    """Pixel-to-ground homography of a pinhole at ``pose`` (undistorted pixels).

    Built from a ``grid_points x grid_points`` lattice of pixels spanning the
    image whose rays reach the ground; at least four are required.
    """
    us = np.linspace(-0.5, camera.width - 0.5, grid_points)
    vs = np.linspace(-0.5, camera.height - 0.5, grid_points)
    pix = np.array([(u, v) for v in vs for u in us])
    xy, valid = pixels_to_ground(pix, pose, camera)
    if valid.sum() < 4:
        raise GeometryError("fewer than four image points see the ground")
    return homography_from_correspondences(pix[valid], xy[valid])
