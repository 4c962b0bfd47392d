"""Detection metrics: IoU, greedy matching, precision/recall, COCO-style AP.

Regions can be boolean masks (same shape), :class:`InstanceMask` objects or
axis-aligned boxes given as ``(x_min, y_min, x_max, y_max)`` or any object
with ``x_min/x_max/y_min/y_max`` attributes.  A detection counts as a true
positive when its IoU with an unmatched ground truth is strictly larger than
the threshold.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from rlforge.segmentation import ClassId, InstanceMask


def default_thresholds() -> np.ndarray:
    return (50 + 5 * np.arange(10)) / 100.0


@dataclass(frozen=True)
class MatchSpec:
    thresholds: tuple = tuple(default_thresholds())

    def __post_init__(self):
        t = np.asarray(self.thresholds, dtype=float)
        if t.ndim != 1 or len(t) == 0:
            raise ValueError("need at least one IoU threshold")
        if np.any(t <= 0) or np.any(t > 1) or np.any(np.diff(t) <= 0):
            raise ValueError("thresholds must be strictly increasing in (0, 1]")

    @property
    def interval(self) -> str:
        t = np.round(np.asarray(self.thresholds) * 100).astype(int)
        if len(t) == 1:
            return f"{t[0]}"
        return f"{t[0]}:{t[1] - t[0]}:{t[-1]}"


@dataclass(frozen=True)
class GroundTruth:
    image_id: object
    class_id: int
    region: object


@dataclass(frozen=True)
class Detection:
    image_id: object
    class_id: int
    region: object
    score: float = 1.0


# ---------------------------------------------------------------------------
# IoU

def _is_mask(region) -> bool:
    return isinstance(region, InstanceMask) or (isinstance(region, np.ndarray) and region.ndim == 2)


def _as_box(region):
    if all(hasattr(region, a) for a in ("x_min", "x_max", "y_min", "y_max")):
        return float(region.x_min), float(region.y_min), float(region.x_max), float(region.y_max)
    arr = np.asarray(region, dtype=float)
    if arr.shape != (4,):
        raise TypeError(f"cannot interpret {type(region).__name__} as a box or mask")
    return tuple(arr)


def _pixel_set(region) -> tuple[np.ndarray, int]:
    if isinstance(region, InstanceMask):
        return region.pixels(), region.area
    flat = np.flatnonzero(np.asarray(region, dtype=bool))
    return flat, len(flat)


def _shape(region):
    return tuple(region.shape)


def iou(truth, prediction) -> float:
    """Intersection over union of two masks or two boxes."""
    if _is_mask(truth) != _is_mask(prediction):
        raise TypeError("cannot compare a mask with a box")
    if not _is_mask(truth):
        bt, bp = _as_box(truth), _as_box(prediction)
        at = (bt[2] - bt[0]) * (bt[3] - bt[1])
        ap = (bp[2] - bp[0]) * (bp[3] - bp[1])
        if at <= 0 or ap <= 0:
            raise ValueError("empty box")
        iw = max(0.0, min(bt[2], bp[2]) - max(bt[0], bp[0]))
        ih = max(0.0, min(bt[3], bp[3]) - max(bt[1], bp[1]))
        inter = iw * ih
        return inter / (at + ap - inter)
    if _shape(truth) != _shape(prediction):
        raise ValueError("mask shapes differ")
    if isinstance(truth, np.ndarray) and isinstance(prediction, np.ndarray):
        t, p = truth.astype(bool, copy=False), prediction.astype(bool, copy=False)
        nt, np_ = int(np.count_nonzero(t)), int(np.count_nonzero(p))
        if nt == 0 or np_ == 0:
            raise ValueError("empty mask")
        inter = int(np.count_nonzero(t & p))
        return inter / (nt + np_ - inter)
    st, nt = _pixel_set(truth)
    sp, np_ = _pixel_set(prediction)
    if nt == 0 or np_ == 0:
        raise ValueError("empty mask")
    inter = len(np.intersect1d(st, sp, assume_unique=True))
    return inter / (nt + np_ - inter)


def iou_matrix(truths, predictions) -> np.ndarray:
    out = np.zeros((len(truths), len(predictions)))
    for i, t in enumerate(truths):
        for j, p in enumerate(predictions):
            if isinstance(t, InstanceMask) and isinstance(p, InstanceMask):
                a, b = t.bbox, p.bbox
                if a[2] < b[0] or b[2] < a[0] or a[3] < b[1] or b[3] < a[1]:
                    continue
            out[i, j] = iou(t, p)
    return out


# ---------------------------------------------------------------------------
# matching

@dataclass
class MatchReport:
    """Greedy matching outcome for one class at one IoU threshold."""

    threshold: float
    n_gt: int
    scores: np.ndarray            # detection scores, descending
    is_tp: np.ndarray             # per sorted detection
    matches: list = field(default_factory=list)   # (det index, gt index, iou)

    @property
    def tp(self) -> int:
        return int(self.is_tp.sum())

    @property
    def fp(self) -> int:
        return int(len(self.is_tp) - self.is_tp.sum())

    @property
    def fn(self) -> int:
        return self.n_gt - self.tp


def _greedy(ious: np.ndarray, order: np.ndarray, k: float):
    matched_gt = np.zeros(ious.shape[0], dtype=bool)
    is_tp = np.zeros(len(order), dtype=bool)
    pairs = []
    for rank, d in enumerate(order):
        if ious.shape[0] == 0:
            break
        cand = np.where(matched_gt, -1.0, ious[:, d])
        g = int(np.argmax(cand))
        if cand[g] > k:
            matched_gt[g] = True
            is_tp[rank] = True
            pairs.append((int(d), g, float(ious[g, d])))
    return is_tp, pairs


def _score_order(scores) -> np.ndarray:
    return np.argsort(-np.asarray(scores, dtype=float), kind="stable")


def match_detections(gts, dets, k: float, scores=None, ious: np.ndarray | None = None) -> MatchReport:
    """Greedy score-ordered matching of detections to ground truths.

    Detections are visited by descending score; each takes the unmatched
    ground truth with the highest IoU if that IoU exceeds ``k``, otherwise it
    is a false positive.  ``dets`` may be regions (with ``scores`` given
    separately) or :class:`Detection` objects.
    """
    if scores is None:
        scores = [getattr(d, "score", 1.0) for d in dets]
    regions = [getattr(d, "region", d) for d in dets]
    gt_regions = [getattr(g, "region", g) for g in gts]
    scores = np.asarray(scores, dtype=float)
    if not np.all(np.isfinite(scores)):
        raise ValueError("detection scores must be finite")
    if ious is None:
        ious = iou_matrix(gt_regions, regions)
    order = _score_order(scores)
    is_tp, pairs = _greedy(ious, order, k)
    return MatchReport(threshold=k, n_gt=len(gts), scores=scores[order], is_tp=is_tp, matches=pairs)


def precision_recall(report: MatchReport):
    """``(precision, recall)``; an undefined ratio is returned as ``None``."""
    tp, fp, fn = report.tp, report.fp, report.fn
    precision = tp / (tp + fp) if tp + fp > 0 else None
    recall = tp / (tp + fn) if tp + fn > 0 else None
    return precision, recall


def recall_from_counts(tp: int, fn: int):
    return tp / (tp + fn) if tp + fn > 0 else None


def precision_from_counts(tp: int, fp: int):
    return tp / (tp + fp) if tp + fp > 0 else None


# ---------------------------------------------------------------------------
# average precision

RECALL_POINTS = np.arange(101) / 100.0


def pr_curve(is_tp, n_gt: int):
    """Cumulative precision and recall along a score-sorted detection list."""
    is_tp = np.asarray(is_tp, dtype=bool)
    tp = np.cumsum(is_tp)
    fp = np.cumsum(~is_tp)
    precision = tp / np.maximum(tp + fp, 1)
    recall = tp / n_gt if n_gt > 0 else np.zeros_like(tp, dtype=float)
    return precision, recall


def interpolated_ap(precision, recall) -> float:
    """101-point interpolated average precision."""
    precision = np.asarray(precision, dtype=float)
    recall = np.asarray(recall, dtype=float)
    if len(precision) == 0:
        return 0.0
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_POINTS, side="left")
    q = np.where(idx < len(envelope), envelope[np.minimum(idx, len(envelope) - 1)], 0.0)
    return float(q.mean())


@dataclass
class ApResult:
    thresholds: np.ndarray
    per_class: dict                 # class -> dict(ap_k, ap, n_gt, n_det)
    curves: dict                    # (class, threshold) -> (precision, recall)
    notes: list = field(default_factory=list)

    @property
    def included(self) -> list:
        return [c for c, v in self.per_class.items() if v["n_gt"] > 0]

    @property
    def mAP(self) -> float | None:
        inc = self.included
        if not inc:
            return None
        return float(np.mean([self.per_class[c]["ap"] for c in inc]))

    def map_at(self, k: float) -> float | None:
        j = int(np.argmin(np.abs(self.thresholds - k)))
        if abs(self.thresholds[j] - k) > 1e-9:
            raise KeyError(f"threshold {k} was not evaluated")
        inc = self.included
        if not inc:
            return None
        return float(np.mean([self.per_class[c]["ap_k"][j] for c in inc]))

    def ap(self, cls) -> float:
        return self.per_class[cls]["ap"]


def average_precision(gts, dets, spec: MatchSpec = MatchSpec()) -> ApResult:
    """Per-class AP averaged over IoU thresholds, plus the class mean.

    ``gts`` and ``dets`` are iterables of :class:`GroundTruth` and
    :class:`Detection`.  Matching runs per image; the precision/recall sweep
    ranks all detections of a class across images by score.  Classes without
    ground truth are left out of the mean.
    """
    thresholds = np.asarray(spec.thresholds, dtype=float)
    by_key_gt = defaultdict(list)
    by_key_det = defaultdict(list)
    for g in gts:
        by_key_gt[(g.class_id, g.image_id)].append(g)
    for d in dets:
        by_key_det[(d.class_id, d.image_id)].append(d)
    classes = sorted({k[0] for k in by_key_gt} | {k[0] for k in by_key_det})

    per_class, curves, notes = {}, {}, []
    for cls in classes:
        images = sorted({k[1] for k in by_key_gt if k[0] == cls}
                        | {k[1] for k in by_key_det if k[0] == cls}, key=repr)
        n_gt = sum(len(by_key_gt[(cls, im)]) for im in images)
        n_det = sum(len(by_key_det[(cls, im)]) for im in images)
        cached = []
        for im in images:
            g = by_key_gt[(cls, im)]
            d = by_key_det[(cls, im)]
            ious = iou_matrix([x.region for x in g], [x.region for x in d])
            sc = np.array([x.score for x in d], dtype=float)
            cached.append((ious, sc))
        ap_k = np.zeros(len(thresholds))
        for j, k in enumerate(thresholds):
            all_scores, all_tp = [], []
            for ious, sc in cached:
                order = _score_order(sc)
                is_tp, _ = _greedy(ious, order, k)
                all_scores.append(sc[order])
                all_tp.append(is_tp)
            scores = np.concatenate(all_scores) if all_scores else np.zeros(0)
            flags = np.concatenate(all_tp) if all_tp else np.zeros(0, bool)
            order = _score_order(scores)
            precision, recall = pr_curve(flags[order], n_gt)
            curves[(cls, float(k))] = (precision, recall)
            ap_k[j] = interpolated_ap(precision, recall) if n_gt > 0 else 0.0
        per_class[cls] = {"ap_k": ap_k, "ap": float(ap_k.mean()), "n_gt": n_gt, "n_det": n_det}
        if n_gt == 0:
            notes.append(f"class {_name(cls)} has no ground truth; excluded from the mean")
    return ApResult(thresholds=thresholds, per_class=per_class, curves=curves, notes=notes)


def _name(cls) -> str:
    try:
        return ClassId(int(cls)).label
    except (ValueError, TypeError):
        return str(cls)


def format_report(result: ApResult, classes=None) -> str:
    """Plain-text table: metric, IoU interval (%), value (%)."""
    spec_interval = MatchSpec(tuple(result.thresholds)).interval
    rows = [("Metric", "IoU interval (in %)", "Value (in %)")]

    def pct(v):
        return "undefined" if v is None else f"{100.0 * v:.2f}"

    rows.append(("mAP", spec_interval, pct(result.mAP)))
    for k in (0.5, 0.75):
        if np.any(np.abs(result.thresholds - k) < 1e-9):
            rows.append((f"mAP-{int(round(k * 100))}", f"{int(round(k * 100))}", pct(result.map_at(k))))
    for cls in classes or result.included:
        if cls in result.per_class and result.per_class[cls]["n_gt"] > 0:
            rows.append((f"AP_{_name(cls).lower()}", spec_interval, pct(result.ap(cls))))
    widths = [max(len(r[i]) for r in rows) for i in range(3)]
    lines = [" | ".join(r[i].ljust(widths[i]) for i in range(3)).rstrip() for r in rows]
    lines.insert(1, "-+-".join("-" * w for w in widths))
    lines += [f"note: {n}" for n in result.notes]
    return "\n".join(lines) + "\n"
