"""Scoring a segmentation against ground truth.

Instance masks are matched greedily by score at IoU thresholds from 0.50 to
0.95, and the per-class average precision uses 101-point interpolation.
"""
import numpy as np

from rlforge.metrics import (
    Detection,
    GroundTruth,
    average_precision,
    format_report,
    iou,
    match_detections,
    precision_recall,
)
from rlforge.segmentation import ClassId, extract_instances, perturb_segmentation
from rlforge.simulator import camera_bundle, three_pedestrian_scene

a = np.zeros((30, 30), bool)
a[0:10, 0:10] = True
b = np.zeros_like(a)
b[0:10, 5:15] = True
print(f"IoU of two squares sharing half their width: {iou(a, b):.4f}")

scene = three_pedestrian_scene(duration=30.0, seed=2)
gts, dets = [], []
for j in range(120, 300, 3):
    truth = camera_bundle(scene, j).panoptic
    pred = perturb_segmentation(truth, drop_rate=0.1, shift_sigma=1.5, seed=9)
    gt_masks, pred_masks = extract_instances(truth), extract_instances(pred)
    gts += [GroundTruth(j, int(m.class_id), m) for m in gt_masks]
    dets += [Detection(j, int(m.class_id), m, m.score) for m in pred_masks]

peds = [g.region for g in gts if g.class_id == ClassId.PEDESTRIANS][:3]
rep = match_detections(peds, [d.region for d in dets][:3], 0.5)
print("first frame at IoU > 0.5:", rep.tp, "TP,", rep.fp, "FP,", rep.fn, "FN;",
      "precision/recall", precision_recall(rep))

print(format_report(average_precision(gts, dets)))
