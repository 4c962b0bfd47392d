"""Panoptic label maps: class taxonomy, ingestion, instance masks, statistics.

File formats: class map as 8-bit single-channel PNG (value = class id),
instance map as 16-bit single-channel PNG (0 = no instance), plus a JSON
sidecar holding timestamp, camera pose and per-instance scores.
"""
from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from rlforge.geometry.camera import RigPose


class ClassId(IntEnum):
    ENVIRONMENT = 0
    STREET = 1
    TREES = 2
    HOUSES = 3
    BARRIERS = 4
    POLES = 5
    OBSTACLES = 6
    CARS = 7
    TRUCKS = 8
    MOTORBIKES = 9
    BIKES = 10
    PEDESTRIANS = 11

    @property
    def is_countable(self) -> bool:
        return self >= ClassId.BARRIERS

    @property
    def label(self) -> str:
        return self.name.capitalize()

    @classmethod
    def parse(cls, value) -> "ClassId":
        if isinstance(value, str):
            return cls[value.upper()]
        return cls(int(value))


COUNTABLE = tuple(c for c in ClassId if c.is_countable)
STUFF = tuple(c for c in ClassId if not c.is_countable)
_COUNTABLE_LUT = np.array([c.is_countable for c in ClassId])


class PanopticFormatError(ValueError):
    pass


@dataclass
class PanopticFrame:
    """Per-pixel class ids plus instance ids for countable classes."""

    class_map: np.ndarray
    instance_map: np.ndarray | None = None
    scores: dict = field(default_factory=dict)
    timestamp: float = 0.0
    camera_pose: RigPose = field(default_factory=RigPose)

    def validate(self) -> "PanopticFrame":
        cm = np.asarray(self.class_map)
        if cm.ndim != 2:
            raise PanopticFormatError("class map must be 2-D")
        bad = np.argwhere(cm > max(ClassId))
        if len(bad):
            r, c = bad[0]
            raise PanopticFormatError(f"unknown class value {int(cm[r, c])} at pixel (row={r}, col={c})")
        if self.instance_map is None:
            return self
        im = np.asarray(self.instance_map)
        if im.shape != cm.shape:
            raise PanopticFormatError(f"class map {cm.shape} and instance map {im.shape} differ")
        stray = np.argwhere((im > 0) & ~_COUNTABLE_LUT[cm])
        if len(stray):
            r, c = stray[0]
            raise PanopticFormatError(
                f"instance {int(im[r, c])} on {ClassId(int(cm[r, c])).label} pixel (row={r}, col={c})")
        ids = im[im > 0]
        if ids.size:
            pairs = np.unique(np.stack([ids, cm[im > 0]]), axis=1)
            uniq, counts = np.unique(pairs[0], return_counts=True)
            if (counts > 1).any():
                bad_id = int(uniq[counts > 1][0])
                r, c = np.argwhere(im == bad_id)[0]
                raise PanopticFormatError(f"instance {bad_id} spans several classes (first at row={r}, col={c})")
        return self

    @property
    def shape(self):
        return self.class_map.shape

    def score(self, instance_id: int) -> float:
        return float(self.scores.get(int(instance_id), 1.0))


# ---------------------------------------------------------------------------
# instance masks (run-length encoded, row-major)

@dataclass(frozen=True)
class InstanceMask:
    instance_id: int
    class_id: ClassId
    runs: np.ndarray          # (n, 2): flat start index, run length
    shape: tuple
    bbox: tuple               # (row_min, col_min, row_max, col_max), inclusive
    score: float = 1.0

    @property
    def area(self) -> int:
        return int(self.runs[:, 1].sum())

    def to_mask(self) -> np.ndarray:
        flat = np.zeros(self.shape[0] * self.shape[1], dtype=bool)
        for s, n in self.runs:
            flat[s:s + n] = True
        return flat.reshape(self.shape)

    def pixels(self) -> np.ndarray:
        """Flat indices of all pixels in the mask."""
        if len(self.runs) == 0:
            return np.zeros(0, dtype=np.int64)
        starts, lengths = self.runs[:, 0], self.runs[:, 1]
        offs = np.repeat(starts - np.concatenate([[0], np.cumsum(lengths)[:-1]]), lengths)
        return offs + np.arange(lengths.sum())

    @classmethod
    def from_mask(cls, mask, instance_id: int, class_id, score: float = 1.0) -> "InstanceMask":
        mask = np.asarray(mask, dtype=bool)
        rows, cols = np.nonzero(mask.any(axis=1))[0], np.nonzero(mask.any(axis=0))[0]
        if len(rows) == 0:
            raise ValueError("empty instance mask")
        r0, r1, c0, c1 = rows[0], rows[-1], cols[0], cols[-1]
        runs = encode_runs(mask[r0:r1 + 1, c0:c1 + 1], (r0, c0), mask.shape[1])
        return cls(int(instance_id), ClassId(int(class_id)), runs, mask.shape,
                   (int(r0), int(c0), int(r1), int(c1)), float(score))


def encode_runs(sub: np.ndarray, origin=(0, 0), full_width: int | None = None) -> np.ndarray:
    """Row-major runs of ``True`` in ``sub`` expressed in full-image flat indices."""
    sub = np.asarray(sub, dtype=bool)
    h, w = sub.shape
    full_width = w if full_width is None else full_width
    padded = np.zeros((h, w + 2), dtype=np.int8)
    padded[:, 1:-1] = sub
    d = np.diff(padded, axis=1)
    sr, sc = np.nonzero(d == 1)
    er, ec = np.nonzero(d == -1)
    starts = (sr + origin[0]) * full_width + sc + origin[1]
    return np.column_stack([starts, ec - sc]).astype(np.int64)


def _connected_instances(frame: PanopticFrame) -> np.ndarray:
    inst = np.zeros(frame.shape, dtype=np.int32)
    next_id = 1
    eight = np.ones((3, 3), dtype=bool)
    for cls in COUNTABLE:
        lab, n = ndimage.label(frame.class_map == cls, structure=eight)
        if n:
            inst[lab > 0] = lab[lab > 0] + next_id - 1
            next_id += n
    return inst


def extract_instances(frame: PanopticFrame) -> list[InstanceMask]:
    """One mask per instance id, in increasing id order.

    Without an instance map, 8-connected components of every countable
    class become instances.
    """
    inst = frame.instance_map if frame.instance_map is not None else _connected_instances(frame)
    inst = np.asarray(inst)
    if not inst.any():
        return []
    out = []
    width = inst.shape[1]
    for idx, sl in enumerate(ndimage.find_objects(inst.astype(np.int64)), start=1):
        if sl is None:
            continue
        sub = inst[sl] == idx
        r0, c0 = sl[0].start, sl[1].start
        rows = np.nonzero(sub.any(axis=1))[0]
        cols = np.nonzero(sub.any(axis=0))[0]
        cls = ClassId(int(frame.class_map[sl][sub][0]))
        runs = encode_runs(sub, (r0, c0), width)
        out.append(InstanceMask(idx, cls, runs, inst.shape,
                                (int(r0 + rows[0]), int(c0 + cols[0]),
                                 int(r0 + rows[-1]), int(c0 + cols[-1])),
                                frame.score(idx)))
    return out


# ---------------------------------------------------------------------------
# statistics

@dataclass
class ClassStatistics:
    counts: dict = field(default_factory=lambda: {c: 0 for c in COUNTABLE})

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def __getitem__(self, cls) -> int:
        return self.counts[ClassId.parse(cls)]

    def __add__(self, other: "ClassStatistics") -> "ClassStatistics":
        return ClassStatistics({c: self.counts[c] + other.counts[c] for c in COUNTABLE})

    def table(self) -> str:
        lines = [f"{'Class':<12}{'Instances':>10}"]
        lines += [f"{c.label:<12}{self.counts[c]:>10}" for c in COUNTABLE]
        lines.append(f"{'Total':<12}{self.total:>10}")
        return "\n".join(lines)


def class_statistics(frames) -> ClassStatistics:
    stats = ClassStatistics()
    for frame in frames:
        for m in extract_instances(frame):
            if m.class_id.is_countable:
                stats.counts[m.class_id] += 1
    return stats


# ---------------------------------------------------------------------------
# file I/O

def save_panoptic(frame: PanopticFrame, class_path, instance_path, sidecar_path=None) -> None:
    frame.validate()
    Image.fromarray(np.asarray(frame.class_map, dtype=np.uint8)).save(class_path)
    inst = frame.instance_map if frame.instance_map is not None else np.zeros(frame.shape)
    if np.asarray(inst).max(initial=0) > 65535:
        raise PanopticFormatError("instance ids exceed 16 bits")
    Image.fromarray(np.asarray(inst, dtype=np.uint16)).save(instance_path)
    if sidecar_path is not None:
        meta = {
            "timestamp": frame.timestamp,
            "pose": frame.camera_pose.to_dict(),
            "scores": {str(k): float(v) for k, v in sorted(frame.scores.items())},
        }
        Path(sidecar_path).write_text(json.dumps(meta, indent=1, sort_keys=True))


def load_panoptic(class_image_path, instance_image_path, sidecar_path=None) -> PanopticFrame:
    """Read and validate a class/instance PNG pair (plus optional sidecar)."""
    for p in (class_image_path, instance_image_path):
        if not Path(p).exists():
            raise FileNotFoundError(p)
    with Image.open(class_image_path) as im:
        if im.mode not in ("L", "P"):
            raise PanopticFormatError(f"class map must be single channel 8-bit, got mode {im.mode}")
        cm = np.array(im, dtype=np.uint8)
    with Image.open(instance_image_path) as im:
        if im.mode not in ("I;16", "I", "L"):
            raise PanopticFormatError(f"instance map must be single channel, got mode {im.mode}")
        inst = np.array(im).astype(np.uint16)
    meta = {}
    if sidecar_path is not None and Path(sidecar_path).exists():
        meta = json.loads(Path(sidecar_path).read_text())
    frame = PanopticFrame(
        class_map=cm, instance_map=inst,
        scores={int(k): float(v) for k, v in meta.get("scores", {}).items()},
        timestamp=float(meta.get("timestamp", 0.0)),
        camera_pose=RigPose.from_dict(meta["pose"]) if "pose" in meta else RigPose(),
    )
    return frame.validate()


# ---------------------------------------------------------------------------
# perturbation (stand-in for imperfect network output)

def frame_seed(seed: int, timestamp: float) -> np.random.Generator:
    """Per-frame generator derived from the global seed and the frame time."""
    key = zlib.crc32(np.float64(timestamp).tobytes())
    return np.random.default_rng([int(seed), key])


def perturb_segmentation(frame: PanopticFrame, drop_rate: float = 0.0, shift_sigma: float = 0.0,
                         dilation: int = 0, seed: int = 0) -> PanopticFrame:
    """Drop, jitter and grow/shrink instances; stuff labels are left as they are.

    Each instance is dropped with probability ``drop_rate``; survivors are
    translated by rounded Gaussian pixel offsets (std ``shift_sigma``) and
    dilated (``dilation > 0``) or eroded (``dilation < 0``) by that many
    pixels.  Pixels vacated by instances become Environment.
    """
    if not 0.0 <= drop_rate <= 1.0:
        raise ValueError("drop_rate must lie in [0, 1]")
    if not (np.isfinite(shift_sigma) and shift_sigma >= 0):
        raise ValueError("shift_sigma must be finite and non-negative")
    rng = frame_seed(seed, frame.timestamp)
    masks = extract_instances(frame)
    h, w = frame.shape
    cm = np.array(frame.class_map, copy=True)
    inst = np.zeros((h, w), dtype=np.uint16)
    for m in masks:
        cm.flat[m.pixels()] = ClassId.ENVIRONMENT
    scores = {}
    for m in masks:
        keep = rng.random() >= drop_rate
        dy, dx = np.rint(rng.normal(0.0, 1.0, 2) * shift_sigma).astype(int)
        if not keep:
            continue
        mask = m.to_mask()
        if dilation > 0:
            mask = ndimage.binary_dilation(mask, iterations=dilation)
        elif dilation < 0:
            mask = ndimage.binary_erosion(mask, iterations=-dilation)
        mask = _shift(mask, dy, dx)
        if not mask.any():
            continue
        cm[mask] = m.class_id
        inst[mask] = m.instance_id
        scores[m.instance_id] = m.score
    return PanopticFrame(class_map=cm, instance_map=inst, scores=scores,
                         timestamp=frame.timestamp, camera_pose=frame.camera_pose)


def _shift(mask: np.ndarray, dy: int, dx: int) -> np.ndarray:
    if dy == 0 and dx == 0:
        return mask
    h, w = mask.shape
    out = np.zeros_like(mask)
    src = mask[max(0, -dy):h - max(0, dy), max(0, -dx):w - max(0, dx)]
    out[max(0, dy):max(0, dy) + src.shape[0], max(0, dx):max(0, dx) + src.shape[1]] = src
    return out
