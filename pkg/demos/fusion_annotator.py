"""Transferring camera labels onto the radar cube.

One radar frame is paired with its nearest camera frame, every pedestrian
mask is projected to the ground, boxed with a 0.5 m margin, converted into
range/azimuth bins and cut out of the radar cube together with all its
Doppler content.
"""
import tempfile
from pathlib import Path

import numpy as np

from rlforge.fusion import annotate_frame, emit_dataset, match_frames, read_manifest
from rlforge.geometry import GridSpec, ground_homography
from rlforge.radar import RadarConfig, process_raw
from rlforge.segmentation import extract_instances
from rlforge.simulator import camera_bundle, radar_bundle, three_pedestrian_scene

radar = RadarConfig(bandwidth=5e8, chirps_per_tx=16, samples_per_chirp=128)
scene = three_pedestrian_scene(duration=20.0, seed=1, radar=radar)
matching = match_frames(scene.radar_times, scene.camera_times, max_skew=0.1)
print(f"{len(matching)} radar frames paired, {len(matching.unpaired)} unpaired")
pair = matching.pairs[30]
print(f"radar frame {pair.radar_index} <-> camera frame {pair.camera_index}, "
      f"skew {1000 * pair.skew:+.1f} ms")

rb, cb = radar_bundle(scene, pair.radar_index), camera_bundle(scene, pair.camera_index)
cube = process_raw(rb.raw)
H = ground_homography(cb.panoptic.camera_pose, scene.camera.model)
grid = GridSpec((0.0, -25.0), 0.1, (500, 450))
records, skips = annotate_frame(pair, cube, extract_instances(cb.panoptic), cb.panoptic.shape, H,
                                grid, margin=0.5, camera=scene.camera.model)
for rec in records:
    w, h = rec.box.size
    print(f"instance {rec.instance_id}: box {w:.1f} x {h:.1f} m, range {rec.roi.r_lo:.1f}-"
          f"{rec.roi.r_hi:.1f} m, azimuth {rec.roi.a_lo:+.1f}..{rec.roi.a_hi:+.1f} deg")

truth = {o.instance_id: o for o in rb.truth}
for rec in records:
    inside = all(rec.roi.contains_bins(r, a) for r, _, a in truth[rec.instance_id].bins)
    print(f"instance {rec.instance_id}: true scatterer bins inside crop: {inside}")

with tempfile.TemporaryDirectory() as tmp:
    manifest = emit_dataset([(cube, records)], ["rd", "rda", "targets", "features"], tmp)
    _, back = read_manifest(manifest)
    for rec in back:
        print(rec.stem, sorted(rec.paths.values()))
    print("files:", sorted(p.relative_to(tmp).as_posix() for p in Path(tmp).rglob("*.*"))[:6], "...")
print("skipped:", skips or "nothing")
