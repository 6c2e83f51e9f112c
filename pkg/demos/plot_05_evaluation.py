"""
COCO-style AP by hand
=====================

One object, one detection whose box covers 70% of it. The detection is a
true positive only where its IoU strictly exceeds the threshold, so it
counts at 0.50 through 0.65 and misses from 0.70 on.
"""

import numpy as np

from dualweight.evaluation import IOU_THRESHOLDS, coco_ap, filter_and_nms, match_detections

gt = np.array([[0, 0, 10, 10]])
det = np.array([[0, 0, 10, 7]])

report = coco_ap(det, [0.9], gt)
for th, ap in zip(IOU_THRESHOLDS, report.ap):
    print(f"IoU > {th:.2f}: AP {ap:.2f}")
print("mean:", round(report.mean, 4))

# A duplicate of a matched detection is a false positive, which is why NMS
# runs before matching.
dets = np.array([[0, 0, 10, 10], [0, 0, 10, 9.6], [0, 0, 10, 7]])
scores = np.array([0.9, 0.85, 0.4])
print("without NMS:", match_detections(dets, gt, 0.5).tp)
keep = filter_and_nms(dets, scores)
print("kept by NMS:", keep, "->", match_detections(dets[keep], gt, 0.5).tp)
