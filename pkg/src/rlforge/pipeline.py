"""Staged annotation pipeline: simulate, process, fuse, evaluate, report.

Every stage reads and writes documented files under one output root, so a
stage can be swapped for real sensor data in the same formats::

    <out>/sim/index.json            frame lists, rig poses, radar config, camera model
    <out>/sim/truth.jsonl           per radar frame object truth
    <out>/sim/radar/rNNNNN.rdc      raw ADC cubes
    <out>/sim/camera/cNNNNN_*.png   ground-truth panoptic frames (+ .json sidecar)
    <out>/processed/rNNNNN.rai      range-azimuth images
    <out>/processed/rNNNNN_targets.csv
    <out>/dataset/manifest.jsonl    one annotation record per line after a header
    <out>/dataset/skips.jsonl       unpaired frames and dropped instances
    <out>/dataset/segmentation/     perturbed label frames used for the transfer
    <out>/dataset/{rd,rda,targets,features}/
    <out>/reports/evaluation.{txt,json}, campaign.txt
"""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from rlforge.fusion import (
    FORMATS,
    annotate_frame,
    emit_frame,
    match_frames,
    read_manifest,
    write_manifest,
)
from rlforge.geometry.camera import CameraModel, RigPose
from rlforge.geometry.grid import GridSpec
from rlforge.geometry.homography import ground_homography
from rlforge.metrics import (
    Detection,
    GroundTruth,
    MatchSpec,
    average_precision,
    format_report,
    match_detections,
    recall_from_counts,
)
from rlforge.radar.cfar import CfarParams, cfar_detect
from rlforge.radar.io import load_raw, save_ra, save_raw
from rlforge.radar.processing import process_raw, ra_image
from rlforge.radar.types import RadarConfig, RadarConfigError, Target
from rlforge.segmentation import (
    ClassId,
    extract_instances,
    load_panoptic,
    perturb_segmentation,
    save_panoptic,
)
from rlforge.simulator import Scene, SceneError, camera_bundle, radar_bundle

log = logging.getLogger(__name__)

STAGES = ("simulate", "process", "fuse", "evaluate", "report")


class PipelineError(Exception):
    exit_code = 1


class ConfigError(PipelineError):
    exit_code = 2


class MissingInputError(PipelineError):
    exit_code = 3


class OutputError(PipelineError):
    exit_code = 4


# ---------------------------------------------------------------------------
# configuration

_TOP_KEYS = {"seed", "jobs", "scene", "scene_file", "processing", "segmentation", "fusion",
             "evaluation", "out"}


@dataclass(frozen=True)
class PipelineConfig:
    scene: Scene
    out: Path = Path("out")
    seed: int = 0
    jobs: int = 1
    cfar: CfarParams = field(default_factory=CfarParams)
    drop_rate: float = 0.0
    shift_sigma: float = 0.0
    dilation: int = 0
    margin: float = 0.5
    max_skew: float = 0.1
    grid: GridSpec = field(default_factory=lambda: GridSpec((0.0, -25.0), 0.1, (500, 450)))
    classes: tuple = (int(ClassId.PEDESTRIANS),)
    formats: tuple = FORMATS
    iou_threshold: float = 0.5

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "PipelineConfig":
        """Validate every section up front; raises :class:`ConfigError`."""
        if not isinstance(d, dict):
            raise ConfigError("config must be a mapping")
        unknown = set(d) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        base_dir = base_dir or Path.cwd()
        try:
            seed = int(d.get("seed", 0))
            scene_d = d.get("scene")
            if scene_d is None and d.get("scene_file"):
                path = base_dir / d["scene_file"]
                if not path.exists():
                    raise ConfigError(f"scene file {path} not found")
                scene_d = yaml.safe_load(path.read_text())
            if scene_d is None:
                raise ConfigError("config needs a 'scene' section or 'scene_file'")
            scene_d = dict(scene_d)
            if "seed" in d:
                scene_d["seed"] = seed
            scene = Scene.from_dict(scene_d)

            proc = dict(d.get("processing") or {})
            cfar = CfarParams.from_dict(proc.get("cfar"))
            if not 0 < cfar.pfa < 1:
                raise ConfigError("processing.cfar.pfa must lie in (0, 1)")

            seg = dict(d.get("segmentation") or {})
            drop = float(seg.get("drop_rate", 0.0))
            shift = float(seg.get("shift_sigma", 0.0))
            dil = int(seg.get("dilation", 0))
            if not 0 <= drop <= 1:
                raise ConfigError("segmentation.drop_rate must lie in [0, 1]")
            if not (math.isfinite(shift) and shift >= 0):
                raise ConfigError("segmentation.shift_sigma must be >= 0")

            fu = dict(d.get("fusion") or {})
            margin = float(fu.get("margin", 0.5))
            max_skew = float(fu.get("max_skew", 0.1))
            if margin < 0 or max_skew < 0:
                raise ConfigError("fusion.margin and fusion.max_skew must be >= 0")
            g = dict(fu.get("grid") or {})
            grid = GridSpec.from_bounds(float(g.get("x_min", 0.0)), float(g.get("x_max", 45.0)),
                                        float(g.get("y_min", -25.0)), float(g.get("y_max", 25.0)),
                                        float(g.get("cell_size", 0.1)))
            classes = tuple(int(ClassId.parse(_plural(c))) for c in fu.get("classes", ["pedestrians"]))
            formats = tuple(fu.get("formats", FORMATS))
            if set(formats) - set(FORMATS):
                raise ConfigError(f"fusion.formats must be a subset of {FORMATS}")

            ev = dict(d.get("evaluation") or {})
            iou_k = float(ev.get("iou_threshold", 0.5))
            if not 0 < iou_k < 1:
                raise ConfigError("evaluation.iou_threshold must lie in (0, 1)")
            jobs = int(d.get("jobs", 1))
            if jobs < 1:
                raise ConfigError("jobs must be >= 1")
        except ConfigError:
            raise
        except (SceneError, RadarConfigError, ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc
        out = Path(d.get("out", "out"))
        if not out.is_absolute():
            out = base_dir / out
        return cls(scene=scene, out=out, seed=seed, jobs=jobs, cfar=cfar, drop_rate=drop,
                   shift_sigma=shift, dilation=dil, margin=margin, max_skew=max_skew, grid=grid,
                   classes=classes, formats=formats, iou_threshold=iou_k)

    @classmethod
    def load(cls, path, **overrides) -> "PipelineConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} not found")
        try:
            d = yaml.safe_load(path.read_text())
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        d = dict(d or {})
        if overrides.get("seed") is not None:
            d["seed"] = int(overrides["seed"])
        cfg = cls.from_dict(d, base_dir=path.parent)
        if overrides.get("out") is not None:
            cfg = replace(cfg, out=Path(overrides["out"]))
        if overrides.get("jobs") is not None:
            if int(overrides["jobs"]) < 1:
                raise ConfigError("--jobs must be >= 1")
            cfg = replace(cfg, jobs=int(overrides["jobs"]))
        if overrides.get("formats") is not None:
            fm = tuple(f for f in overrides["formats"] if f)
            if set(fm) - set(FORMATS):
                raise ConfigError(f"--formats must be a subset of {FORMATS}")
            cfg = replace(cfg, formats=fm)
        return cfg

    # directory layout
    @property
    def sim_dir(self) -> Path:
        return self.out / "sim"

    @property
    def processed_dir(self) -> Path:
        return self.out / "processed"

    @property
    def dataset_dir(self) -> Path:
        return self.out / "dataset"

    @property
    def reports_dir(self) -> Path:
        return self.out / "reports"


def _plural(c):
    if isinstance(c, str) and not c.lower().endswith("s"):
        return c + "s"
    return c


# ---------------------------------------------------------------------------
# helpers

def _map(cfg: PipelineConfig, fn, items):
    items = list(items)
    if cfg.jobs == 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        return list(pool.map(fn, items))


def _mkdir(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create {path}: {exc}") from exc
    return path


def _dump_json(path: Path, obj):
    path.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")


def _read_json(path: Path, stage: str):
    if not path.exists():
        raise MissingInputError(f"{stage}: missing {path}; run the upstream stage first")
    return json.loads(path.read_text())


def _load_index(cfg: PipelineConfig, stage: str) -> dict:
    return _read_json(cfg.sim_dir / "index.json", stage)


def _radar_config(index) -> RadarConfig:
    return RadarConfig.from_dict(index["radar_config"])


def _camera_paths(root: Path, j: int):
    stem = root / f"c{j:05d}"
    return (stem.with_name(stem.name + "_class.png"), stem.with_name(stem.name + "_instance.png"),
            stem.with_suffix(".json"))


def _write_targets(path: Path, targets):
    import csv
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(Target.CSV_FIELDS)
        for t in targets:
            w.writerow([repr(v) if isinstance(v, float) else v for v in t.as_row().values()])


# ---------------------------------------------------------------------------
# stages

def simulate(cfg: PipelineConfig) -> dict:
    scene = cfg.scene
    radar_dir = _mkdir(cfg.sim_dir / "radar")
    cam_dir = _mkdir(cfg.sim_dir / "camera")

    def do_radar(k):
        b = radar_bundle(scene, k)
        save_raw(b.raw, radar_dir / f"r{k:05d}.rdc")
        return {"frame": k, "timestamp": b.timestamp,
                "objects": [o.to_dict() for o in b.truth]}

    def do_camera(j):
        b = camera_bundle(scene, j)
        save_panoptic(b.panoptic, *_camera_paths(cam_dir, j))
        return j

    try:
        truth = _map(cfg, do_radar, range(len(scene.radar_times)))
        _map(cfg, do_camera, range(len(scene.camera_times)))
        with open(cfg.sim_dir / "truth.jsonl", "w") as fh:
            for t in truth:
                fh.write(json.dumps(t, sort_keys=True) + "\n")
        index = {
            "radar": [{"index": k, "timestamp": float(t), "file": f"radar/r{k:05d}.rdc"}
                      for k, t in enumerate(scene.radar_times)],
            "camera": [{"index": j, "timestamp": float(t), "stem": f"camera/c{j:05d}"}
                       for j, t in enumerate(scene.camera_times)],
            "radar_config": scene.radar.config.to_dict(),
            "radar_pose": scene.radar.pose.to_dict(),
            "camera_model": scene.camera.model.to_dict(),
            "duration": scene.duration,
            "seed": scene.seed,
        }
        _dump_json(cfg.sim_dir / "index.json", index)
    except OSError as exc:
        raise OutputError(f"simulate: {exc}") from exc
    log.info("simulate: %d radar and %d camera frames", len(index["radar"]), len(index["camera"]))
    return index


def process(cfg: PipelineConfig) -> int:
    index = _load_index(cfg, "process")
    rcfg = _radar_config(index)
    out = _mkdir(cfg.processed_dir)

    def do(entry):
        path = cfg.sim_dir / entry["file"]
        if not path.exists():
            raise MissingInputError(f"process: missing {path}")
        cube = process_raw(load_raw(path, rcfg))
        stem = Path(entry["file"]).stem
        save_ra(ra_image(cube), out / f"{stem}.rai")
        _write_targets(out / f"{stem}_targets.csv", cfar_detect(cube, cfg.cfar))
        return stem

    try:
        done = _map(cfg, do, index["radar"])
    except OSError as exc:
        raise OutputError(f"process: {exc}") from exc
    log.info("process: %d frames", len(done))
    return len(done)


def fuse(cfg: PipelineConfig) -> Path:
    index = _load_index(cfg, "fuse")
    rcfg = _radar_config(index)
    camera = CameraModel.from_dict(index["camera_model"])
    radar_pose = RigPose.from_dict(index["radar_pose"])
    ds = _mkdir(cfg.dataset_dir)
    seg_dir = _mkdir(ds / "segmentation")
    radar_ts = [e["timestamp"] for e in index["radar"]]
    camera_ts = [e["timestamp"] for e in index["camera"]]
    matching = match_frames(radar_ts, camera_ts, cfg.max_skew)
    skips = [{"frame": i, "reason": "no camera frame within max_skew"} for i in matching.unpaired]

    def do(pair):
        paths = _camera_paths(cfg.sim_dir / "camera", pair.camera_index)
        raw_path = cfg.sim_dir / index["radar"][pair.radar_index]["file"]
        for p in (*paths, raw_path):
            if not p.exists():
                raise MissingInputError(f"fuse: missing {p}")
        frame = load_panoptic(*paths)
        seg = perturb_segmentation(frame, cfg.drop_rate, cfg.shift_sigma, cfg.dilation, cfg.seed)
        save_panoptic(seg, *_camera_paths(seg_dir, pair.camera_index))
        masks = extract_instances(seg)
        raw = load_raw(raw_path, rcfg)
        raw.vehicle_pose = radar_pose
        cube = process_raw(raw)
        H = ground_homography(seg.camera_pose, camera)
        records, frame_skips = annotate_frame(pair, cube, masks, seg.shape, H, cfg.grid,
                                              cfg.margin, camera=camera, classes=cfg.classes)
        return emit_frame(cube, records, cfg.formats, ds, cfg.cfar), frame_skips

    try:
        results = _map(cfg, do, matching.pairs)
        records = [r for recs, _ in results for r in recs]
        for _, s in results:
            skips.extend(s)
        skips.sort(key=lambda s: (s["frame"], s.get("instance_id", -1)))
        manifest = write_manifest(ds, records, cfg.formats, skips)
    except OSError as exc:
        raise OutputError(f"fuse: {exc}") from exc
    log.info("fuse: %d pairs, %d records, %d skips", len(matching.pairs), len(records), len(skips))
    return manifest


def _truth_by_frame(cfg) -> dict:
    path = cfg.sim_dir / "truth.jsonl"
    if not path.exists():
        raise MissingInputError(f"evaluate: missing {path}")
    out = {}
    for line in path.read_text().splitlines():
        if line.strip():
            d = json.loads(line)
            out[d["frame"]] = d["objects"]
    return out


def _record_contains(rec, obj, nd) -> bool:
    for rb, db, ab in obj["bins"]:
        if not (rec.roi.contains_bins(rb, ab, strict=True) and 0 < db < nd - 1):
            return False
    return True


def evaluate(cfg: PipelineConfig) -> dict:
    """Compare the transferred labels with ground truth.

    Detection: a ground-truth instance of a transferred class that a
    segmentation instance matches with IoU above the threshold.  Mapping: a
    detected instance whose emitted RoI holds every scatterer's true range
    and azimuth bin strictly inside the crop, Doppler bin included (the crop
    keeps the whole Doppler axis, so only its two edge bins are excluded).
    """
    index = _load_index(cfg, "evaluate")
    rcfg = _radar_config(index)
    _, records = read_manifest(_require(cfg.dataset_dir / "manifest.jsonl", "evaluate"))
    truth = _truth_by_frame(cfg)
    radar_ts = [e["timestamp"] for e in index["radar"]]
    camera_ts = [e["timestamp"] for e in index["camera"]]
    matching = match_frames(radar_ts, camera_ts, cfg.max_skew)
    by_frame = {}
    for rec in records:
        by_frame.setdefault(rec.frame, {})[rec.instance_id] = rec
    wanted = set(cfg.classes)

    gts, dets = [], []
    per_class = {}
    total = detected = mapped = 0
    contained = emitted_matched = 0
    nd = rcfg.n_doppler_bins
    for pair in matching.pairs:
        gt_frame = load_panoptic(*_camera_paths(cfg.sim_dir / "camera", pair.camera_index))
        seg_paths = _camera_paths(cfg.dataset_dir / "segmentation", pair.camera_index)
        pred_frame = load_panoptic(*[_require(p, "evaluate") for p in seg_paths])
        gt_masks = extract_instances(gt_frame)
        pred_masks = extract_instances(pred_frame)
        for m in gt_masks:
            gts.append(GroundTruth(pair.camera_index, int(m.class_id), m))
        for m in pred_masks:
            dets.append(Detection(pair.camera_index, int(m.class_id), m, m.score))
        objs = {o["instance_id"]: o for o in truth.get(pair.radar_index, [])}
        frame_recs = by_frame.get(pair.radar_index, {})
        for cls in sorted(wanted):
            g = [m for m in gt_masks if int(m.class_id) == cls]
            p = [m for m in pred_masks if int(m.class_id) == cls]
            rep = match_detections(g, p, cfg.iou_threshold, scores=[m.score for m in p])
            stats = per_class.setdefault(ClassId(cls).label, {"total": 0, "detected": 0, "mapped": 0})
            stats["total"] += len(g)
            stats["detected"] += rep.tp
            total += len(g)
            detected += rep.tp
            for d_idx, g_idx, _ in rep.matches:
                pred_id = p[d_idx].instance_id
                gt_id = g[g_idx].instance_id
                rec = frame_recs.get(pred_id)
                obj = objs.get(gt_id)
                if rec is None or obj is None:
                    continue
                emitted_matched += 1
                if _record_contains(rec, obj, nd):
                    contained += 1
                    mapped += 1
                    stats["mapped"] += 1

    ap = average_precision(gts, dets, MatchSpec())
    tp, fn = detected, total - detected
    recall = recall_from_counts(tp, fn)
    result = {
        "frames": len(index["radar"]),
        "paired_frames": len(matching.pairs),
        "duration": index["duration"],
        "appearances": total,
        "detected": detected,
        "mapped": mapped,
        "records": len(records),
        "records_with_truth": emitted_matched,
        "containment": contained / emitted_matched if emitted_matched else None,
        "mapped_over_detected": mapped / detected if detected else None,
        "detected_over_total": detected / total if total else None,
        "recall": recall,
        "per_class": per_class,
        "mAP": ap.mAP,
        "ap_per_class": {ClassId(c).label: ap.ap(c) for c in ap.included},
    }
    try:
        rep_dir = _mkdir(cfg.reports_dir)
        _dump_json(rep_dir / "evaluation.json", result)
        (rep_dir / "evaluation.txt").write_text(format_report(ap))
    except OSError as exc:
        raise OutputError(f"evaluate: {exc}") from exc
    return result


def _require(path: Path, stage: str) -> Path:
    if not path.exists():
        raise MissingInputError(f"{stage}: missing {path}; run the upstream stage first")
    return path


def _pct(v):
    return "undefined" if v is None else f"{100 * v:.2f} %"


def campaign_summary(ev: dict) -> str:
    lines = [
        f"frames: {ev['frames']}",
        f"duration: {ev['duration']:g} s",
        f"paired frames: {ev['paired_frames']}",
        f"appearances: {ev['appearances']}",
        f"detected: {ev['detected']}",
        f"mapped: {ev['mapped']}",
        f"mapped/detected: {_pct(ev['mapped_over_detected'])}",
        f"detected/total: {_pct(ev['detected_over_total'])}",
        f"recall: {'undefined' if ev['recall'] is None else repr(ev['recall'])}",
        f"records: {ev['records']}",
        f"containment: {_pct(ev['containment'])}",
    ]
    for name, s in sorted(ev["per_class"].items()):
        lines.append(f"class {name}: total {s['total']}, detected {s['detected']}, "
                     f"mapped {s['mapped']}")
    if ev.get("mAP") is not None:
        lines.append(f"segmentation mAP: {_pct(ev['mAP'])}")
    return "\n".join(lines) + "\n"


def report(cfg: PipelineConfig) -> str:
    ev = _read_json(cfg.reports_dir / "evaluation.json", "report")
    text = campaign_summary(ev)
    try:
        (cfg.reports_dir / "campaign.txt").write_text(text)
    except OSError as exc:
        raise OutputError(f"report: {exc}") from exc
    return text


def run(stage: str, cfg: PipelineConfig):
    if stage not in STAGES:
        raise ConfigError(f"unknown stage {stage!r}; choose from {STAGES}")
    return {"simulate": simulate, "process": process, "fuse": fuse,
            "evaluate": evaluate, "report": report}[stage](cfg)


def run_all(cfg: PipelineConfig) -> str:
    for stage in STAGES[:-1]:
        run(stage, cfg)
    return report(cfg)
