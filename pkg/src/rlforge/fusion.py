"""Camera-to-radar label transfer.

The flow per synchronized frame pair is: project camera instance masks onto
the ground grid, box each projection (plus a margin), convert the box into
range/azimuth bin intervals of the radar cube, crop the cube and emit the
labeled sections in the requested formats.
"""
from __future__ import annotations

import csv
import datetime as _dt
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from rlforge.geometry.camera import CameraModel, RigPose
from rlforge.geometry.grid import GridSpec
from rlforge.geometry.homography import warp_to_ground
from rlforge.radar.cfar import CfarParams, cfar_detect
from rlforge.radar.io import save_rd_magnitude, save_rda
from rlforge.radar.processing import to_db, world_to_radar
from rlforge.radar.types import RdaCube, Target
from rlforge.segmentation import ClassId

log = logging.getLogger(__name__)

FORMATS = ("rd", "rda", "targets", "features")
FEATURE_FIELDS = ("peak_db", "energy",
                  "range_centroid", "range_spread",
                  "velocity_centroid", "velocity_spread",
                  "azimuth_centroid", "azimuth_spread")


# ---------------------------------------------------------------------------
# temporal matching

@dataclass(frozen=True)
class SyncPair:
    radar_index: int
    radar_ts: float
    camera_index: int
    camera_ts: float

    @property
    def skew(self) -> float:
        """Camera minus radar timestamp, seconds."""
        return self.camera_ts - self.radar_ts


@dataclass
class FrameMatching:
    pairs: list
    unpaired: list      # radar indices without a camera frame within max_skew

    def __iter__(self):
        return iter(self.pairs)

    def __len__(self):
        return len(self.pairs)


def _check_sorted(ts, name):
    ts = np.asarray(ts, dtype=float)
    if ts.ndim != 1:
        raise ValueError(f"{name} timestamps must be one-dimensional")
    if not np.all(np.isfinite(ts)):
        raise ValueError(f"{name} timestamps must be finite")
    if np.any(np.diff(ts) < 0):
        raise ValueError(f"{name} timestamps must be sorted")
    return ts


def match_frames(radar_ts, camera_ts, max_skew: float) -> FrameMatching:
    """Pair each radar frame with its nearest camera frame.

    A pair is kept when ``|skew| <= max_skew``.  Equidistant candidates go to
    the earlier camera frame.  Radar frames without a partner are listed in
    ``unpaired``; that is an outcome, not an error.
    """
    if not max_skew >= 0:
        raise ValueError("max_skew must be non-negative")
    r = _check_sorted(radar_ts, "radar")
    c = _check_sorted(camera_ts, "camera")
    pairs, unpaired = [], []
    if len(c) == 0:
        return FrameMatching([], list(range(len(r))))
    right = np.searchsorted(c, r, side="left")
    for i, (t, j) in enumerate(zip(r, right)):
        best = None
        if j > 0:
            best = j - 1
        if j < len(c) and (best is None or c[j] - t < t - c[best]):
            best = j
        if abs(c[best] - t) <= max_skew:
            pairs.append(SyncPair(i, float(t), int(best), float(c[best])))
        else:
            unpaired.append(i)
    return FrameMatching(pairs, unpaired)


# ---------------------------------------------------------------------------
# spatial transfer

@dataclass(frozen=True)
class WorldBox:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    class_id: int = int(ClassId.PEDESTRIANS)
    instance_id: int = 0
    score: float = 1.0

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"empty box ({self.x_min}, {self.x_max}, {self.y_min}, {self.y_max})")

    @property
    def corners(self) -> np.ndarray:
        return np.array([[self.x_min, self.y_min], [self.x_max, self.y_min],
                         [self.x_max, self.y_max], [self.x_min, self.y_max]])

    @property
    def size(self):
        return self.x_max - self.x_min, self.y_max - self.y_min

    def contains(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        return ((xy[:, 0] >= self.x_min) & (xy[:, 0] <= self.x_max)
                & (xy[:, 1] >= self.y_min) & (xy[:, 1] <= self.y_max))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class WorldMask:
    instance_id: int
    class_id: int
    score: float
    occupancy: np.ndarray
    grid: GridSpec


@dataclass(frozen=True)
class RaRoi:
    """Range and azimuth section of an RDA cube; bin bounds are inclusive."""

    r_lo: float
    r_hi: float
    range_bins: tuple
    a_lo: float
    a_hi: float
    azimuth_bins: tuple

    def __post_init__(self):
        if self.range_bins[0] > self.range_bins[1] or self.azimuth_bins[0] > self.azimuth_bins[1]:
            raise ValueError("empty RoI")
        if self.range_bins[0] < 0 or self.azimuth_bins[0] < 0:
            raise ValueError("negative bin index")

    def contains_bins(self, range_bin: int, azimuth_bin: int, strict: bool = True) -> bool:
        (r0, r1), (a0, a1) = self.range_bins, self.azimuth_bins
        if strict:
            return r0 < range_bin < r1 and a0 < azimuth_bin < a1
        return r0 <= range_bin <= r1 and a0 <= azimuth_bin <= a1

    def to_dict(self) -> dict:
        return {"r_lo": self.r_lo, "r_hi": self.r_hi, "range_bins": list(self.range_bins),
                "a_lo": self.a_lo, "a_hi": self.a_hi, "azimuth_bins": list(self.azimuth_bins)}

    @classmethod
    def from_dict(cls, d) -> "RaRoi":
        return cls(d["r_lo"], d["r_hi"], tuple(d["range_bins"]),
                   d["a_lo"], d["a_hi"], tuple(d["azimuth_bins"]))


def project_instances(masks, frame_shape, H, grid: GridSpec, camera: CameraModel | None = None):
    """Transfer instance masks onto the world grid.

    Returns ``(world_masks, dropped)``.  All masks are painted into one label
    raster and warped once with nearest sampling, so disjoint pixel sets stay
    disjoint on the grid.  Instances whose projection misses every cell are
    dropped and listed in ``dropped``.
    """
    frame_shape = tuple(frame_shape)[:2]
    masks = list(masks)
    if not masks:
        return [], []
    labels = np.zeros(frame_shape[0] * frame_shape[1], dtype=np.int32)
    for m in masks:
        px = m.pixels()
        if np.any(labels[px]):
            raise ValueError(f"instance {m.instance_id} overlaps another instance")
        labels[px] = m.instance_id
    warped = warp_to_ground(labels.reshape(frame_shape), H, grid, mode="nearest", void=0,
                            camera=camera)
    out, dropped = [], []
    for m in masks:
        occ = warped == m.instance_id
        if occ.any():
            out.append(WorldMask(m.instance_id, int(m.class_id), float(m.score), occ, grid))
        else:
            dropped.append({"instance_id": int(m.instance_id), "class_id": int(m.class_id),
                            "reason": "projection outside grid"})
    return out, dropped


def extract_rois(world_masks, margin: float = 0.5) -> list[WorldBox]:
    """Tight box around each mask's occupied cells, grown by ``margin``."""
    if margin < 0:
        raise ValueError("margin must be non-negative")
    boxes = []
    for wm in world_masks:
        g = wm.grid
        rows, cols = np.nonzero(wm.occupancy)
        if len(rows) == 0:
            continue
        x0, y0 = g.origin
        bx0, bx1, by0, by1 = g.bounds
        boxes.append(WorldBox(
            x_min=max(bx0, x0 + cols.min() * g.cell_size - margin),
            x_max=min(bx1, x0 + (cols.max() + 1) * g.cell_size + margin),
            y_min=max(by0, y0 + rows.min() * g.cell_size - margin),
            y_max=min(by1, y0 + (rows.max() + 1) * g.cell_size + margin),
            class_id=wm.class_id, instance_id=wm.instance_id, score=wm.score))
    return boxes


def _wrap180(a):
    return (np.asarray(a) + 180.0) % 360.0 - 180.0


def _snap_outward(axis: np.ndarray, lo: float, hi: float):
    i0 = int(np.searchsorted(axis, lo, side="right")) - 1
    i1 = int(np.searchsorted(axis, hi, side="left"))
    return max(i0, 0), min(i1, len(axis) - 1)


def world_box_to_ra(box: WorldBox, radar_pose: RigPose, range_axis, azimuth_axis) -> RaRoi | None:
    """Range/azimuth section of the radar cube covered by ``box``.

    The range interval runs from the closest point of the rectangle to the
    farthest corner (zero when the radar sits inside it).  The azimuth
    interval spans the corner azimuths.  Both are widened outward to whole
    bins.  Returns ``None`` when the box lies outside the range or angular
    coverage of the axes.
    """
    range_axis = np.asarray(range_axis, dtype=float)
    azimuth_axis = np.asarray(azimuth_axis, dtype=float)
    corners = box.corners
    rng, az = world_to_radar(corners, radar_pose)
    px, py = radar_pose.x, radar_pose.y
    inside = box.x_min <= px <= box.x_max and box.y_min <= py <= box.y_max
    nearest = np.array([np.clip(px, box.x_min, box.x_max), np.clip(py, box.y_min, box.y_max)])
    r_lo = float(np.hypot(*(nearest - [px, py])))
    r_hi = float(rng.max())
    if inside:
        a_lo, a_hi = -180.0, 180.0
    else:
        cx, cy = (box.x_min + box.x_max) / 2, (box.y_min + box.y_max) / 2
        ref = world_to_radar(np.array([cx, cy]), radar_pose)[1]
        rel = ref + _wrap180(az - ref)
        a_lo, a_hi = float(rel.min()), float(rel.max())
    half_r = (range_axis[1] - range_axis[0]) / 2 if len(range_axis) > 1 else 0.0
    if r_lo > range_axis[-1] + half_r or r_hi < range_axis[0] - half_r:
        return None
    if a_lo > azimuth_axis[-1] or a_hi < azimuth_axis[0]:
        return None
    return RaRoi(r_lo, r_hi, _snap_outward(range_axis, r_lo, r_hi),
                 a_lo, a_hi, _snap_outward(azimuth_axis, a_lo, a_hi))


def crop_rda(cube: RdaCube, roi: RaRoi) -> RdaCube:
    """Range x azimuth section of ``cube`` keeping every Doppler bin.

    RoI bins are indices of the full cube; ``cube.offset`` locates ``cube``
    inside it, so crops of crops compose.
    """
    (r0, r1), (a0, a1) = roi.range_bins, roi.azimuth_bins
    lr0, lr1 = r0 - cube.offset[0], r1 - cube.offset[0]
    la0, la1 = a0 - cube.offset[2], a1 - cube.offset[2]
    nr, _, na = cube.shape
    if lr0 < 0 or la0 < 0 or lr1 >= nr or la1 >= na:
        raise IndexError(f"RoI bins {roi.range_bins} x {roi.azimuth_bins} outside cube "
                         f"(offset {cube.offset}, shape {cube.shape})")
    return RdaCube(
        data=np.ascontiguousarray(cube.data[lr0:lr1 + 1, :, la0:la1 + 1]),
        range_axis=cube.range_axis[lr0:lr1 + 1],
        velocity_axis=cube.velocity_axis,
        azimuth_axis=cube.azimuth_axis[la0:la1 + 1],
        timestamp=cube.timestamp,
        pose=cube.pose,
        offset=(r0, cube.offset[1], a0),
    )


def targets_in_roi(targets, roi: RaRoi) -> list[Target]:
    return [t for t in targets if roi.contains_bins(t.range_bin, t.azimuth_bin, strict=False)]


def crop_features(crop: RdaCube) -> dict:
    """Peak level, total energy and power-weighted centroid/spread per axis."""
    power = np.abs(crop.data.astype(np.complex128)) ** 2
    energy = float(power.sum())
    out = {"peak_db": float(to_db(power.max())), "energy": energy}
    for name, axis, ax_no in (("range", crop.range_axis, 0), ("velocity", crop.velocity_axis, 1),
                              ("azimuth", crop.azimuth_axis, 2)):
        marginal = power.sum(axis=tuple(i for i in range(3) if i != ax_no))
        if energy > 0:
            mu = float((marginal * axis).sum() / energy)
            sd = float(np.sqrt(max((marginal * (axis - mu) ** 2).sum() / energy, 0.0)))
        else:
            mu, sd = float("nan"), float("nan")
        out[f"{name}_centroid"] = mu
        out[f"{name}_spread"] = sd
    return out


# ---------------------------------------------------------------------------
# records and emission

@dataclass
class AnnotationRecord:
    frame: int
    class_id: int
    instance_id: int
    box: WorldBox
    roi: RaRoi
    doppler_bins: int
    radar_ts: float
    camera_ts: float
    paths: dict = field(default_factory=dict)

    @property
    def skew(self) -> float:
        return self.camera_ts - self.radar_ts

    @property
    def stem(self) -> str:
        return f"{self.frame:05d}_{self.instance_id:03d}"

    def to_dict(self) -> dict:
        return {
            "frame": self.frame,
            "class": ClassId(self.class_id).label,
            "class_id": self.class_id,
            "instance_id": self.instance_id,
            "box": {k: getattr(self.box, k) for k in ("x_min", "x_max", "y_min", "y_max")},
            "score": self.box.score,
            "roi": self.roi.to_dict(),
            "doppler_bins": self.doppler_bins,
            "radar_ts": self.radar_ts,
            "camera_ts": self.camera_ts,
            "skew": self.skew,
            "paths": dict(sorted(self.paths.items())),
        }

    @classmethod
    def from_dict(cls, d) -> "AnnotationRecord":
        box = WorldBox(**d["box"], class_id=d["class_id"], instance_id=d["instance_id"],
                       score=d.get("score", 1.0))
        return cls(frame=d["frame"], class_id=d["class_id"], instance_id=d["instance_id"],
                   box=box, roi=RaRoi.from_dict(d["roi"]), doppler_bins=d["doppler_bins"],
                   radar_ts=d["radar_ts"], camera_ts=d["camera_ts"], paths=dict(d.get("paths", {})))


def annotate_frame(pair: SyncPair, cube: RdaCube, masks, frame_shape, H, grid: GridSpec,
                   margin: float = 0.5, camera: CameraModel | None = None, classes=None):
    """Build the annotation records for one synchronized frame pair.

    Returns ``(records, skips)``; ``classes`` restricts which instance
    classes are transferred (all countable classes by default).
    """
    if classes is not None:
        masks = [m for m in masks if int(m.class_id) in set(int(c) for c in classes)]
    world, dropped = project_instances(masks, frame_shape, H, grid, camera=camera)
    skips = [dict(d, frame=pair.radar_index) for d in dropped]
    records = []
    for box in extract_rois(world, margin):
        roi = world_box_to_ra(box, cube.pose, cube.range_axis, cube.azimuth_axis)
        if roi is None:
            skips.append({"frame": pair.radar_index, "instance_id": box.instance_id,
                          "class_id": box.class_id, "reason": "outside radar coverage"})
            continue
        records.append(AnnotationRecord(
            frame=pair.radar_index, class_id=box.class_id, instance_id=box.instance_id,
            box=box, roi=roi, doppler_bins=len(cube.velocity_axis),
            radar_ts=pair.radar_ts, camera_ts=pair.camera_ts))
    return records, skips


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row[k]) for k in header])


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def emit_frame(cube: RdaCube, records, formats, out_dir, cfar: CfarParams = CfarParams()):
    """Write the per-record artifacts of one frame and return updated records."""
    formats = tuple(f for f in FORMATS if f in set(formats))
    out_dir = Path(out_dir)
    if records:
        for f in formats:
            (out_dir / f).mkdir(parents=True, exist_ok=True)
    targets = None
    if {"targets", "features"} & set(formats) and records:
        targets = cfar_detect(cube, cfar)
    done = []
    for rec in records:
        crop = crop_rda(cube, rec.roi)
        paths = {}
        if "rd" in formats:
            rd = to_db((np.abs(crop.data) ** 2).max(axis=2))
            p = out_dir / "rd" / f"{rec.stem}.rdm"
            save_rd_magnitude(rd, crop.range_axis, crop.velocity_axis, p,
                              timestamp=crop.timestamp, pose=crop.pose)
            paths["rd"] = p.relative_to(out_dir).as_posix()
        if "rda" in formats:
            p = out_dir / "rda" / f"{rec.stem}.rda"
            save_rda(crop, p)
            paths["rda"] = p.relative_to(out_dir).as_posix()
        inside = targets_in_roi(targets, rec.roi) if targets is not None else []
        if "targets" in formats:
            p = out_dir / "targets" / f"{rec.stem}.csv"
            _write_csv(p, Target.CSV_FIELDS, [t.as_row() for t in inside])
            paths["targets"] = p.relative_to(out_dir).as_posix()
        if "features" in formats:
            stats = crop_features(crop)
            p = out_dir / "features" / f"{rec.stem}.csv"
            _write_csv(p, Target.CSV_FIELDS + FEATURE_FIELDS,
                       [dict(t.as_row(), **stats) for t in inside])
            paths["features"] = p.relative_to(out_dir).as_posix()
        done.append(replace(rec, paths=paths))
    return done


def emit_dataset(frames, formats, out_dir, cfar: CfarParams = CfarParams(), skips=(),
                 created: str | None = None) -> Path:
    """Emit labeled radar sections and a JSON-lines manifest.

    ``frames`` is an iterable of ``(cube, records)``.  The manifest's first
    line is a header carrying the creation time; every further line is one
    :class:`AnnotationRecord`.  ``skips`` entries go to ``skips.jsonl``.
    Returns the manifest path.
    """
    unknown = set(formats) - set(FORMATS)
    if unknown:
        raise ValueError(f"unknown formats {sorted(unknown)}; choose from {FORMATS}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for cube, records in frames:
        written.extend(emit_frame(cube, records, formats, out_dir, cfar))
    return write_manifest(out_dir, written, formats, skips, created)


def write_manifest(out_dir, records, formats, skips=(), created: str | None = None) -> Path:
    out_dir = Path(out_dir)
    created = created or _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    header = {"kind": "header", "created": created,
              "formats": [f for f in FORMATS if f in set(formats)], "records": len(records)}
    path = out_dir / "manifest.jsonl"
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")
    skip_path = out_dir / "skips.jsonl"
    if skips:
        with open(skip_path, "w") as fh:
            for s in skips:
                fh.write(json.dumps(s, sort_keys=True) + "\n")
    elif skip_path.exists():
        skip_path.unlink()
    return path


def read_manifest(path):
    """Return ``(header, records)`` from a manifest file."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty manifest")
    header = json.loads(lines[0])
    return header, [AnnotationRecord.from_dict(json.loads(x)) for x in lines[1:] if x.strip()]

