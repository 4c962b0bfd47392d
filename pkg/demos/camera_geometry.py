"""Where does the UAV camera look?

The ground footprint of a hovering camera is computed twice, once with the
closed-form edge angles and once by casting the corner pixels, and a ground
homography maps image pixels to metres.
"""
import numpy as np

from rlforge.geometry import (
    RigPose,
    apply_homography,
    footprint_angles,
    ground_homography,
    ground_quad_closed_form,
    level_equivalent_camera,
    raspberry_pi_v21,
    ray_cast_footprint,
    undistort_points,
    distort_points,
)

cam = raspberry_pi_v21()
print(f"{cam.width}x{cam.height} px, fx={cam.fx:.1f} px")
print("edge angles (deg):", {k: round(float(np.degrees(v)), 2) for k, v in footprint_angles(cam).items()})

pose = RigPose(x=0.0, y=0.0, z=25.0, yaw=20.0)
closed = ground_quad_closed_form(25.0, cam, pose=pose)
cast = ray_cast_footprint(pose, level_equivalent_camera(cam))
print("level footprint corners (m):\n", np.round(closed.corners, 2))
print(f"closed form vs ray cast: {np.abs(closed.corners - cast.corners).max():.1e} m")

tilted = RigPose(z=25.0, pitch=60.0)
quad = ray_cast_footprint(tilted, cam)
print("tilted footprint (pitch 60):\n", np.round(quad.corners, 1))

H = ground_homography(tilted, cam)
centre = apply_homography(H, [[cam.cx, cam.cy]])[0]
print(f"image centre lands at x={centre[0]:.2f} m, y={centre[1]:.2f} m")

bent = cam.with_distortion(k1=-0.2, k2=0.03)
px = np.array([[700.0, 80.0], [40.0, 560.0]])
ideal = undistort_points(px, bent)
print("undistorted corners:", np.round(ideal, 2))
print(f"round trip error {np.abs(distort_points(ideal, bent) - px).max():.1e} px")
