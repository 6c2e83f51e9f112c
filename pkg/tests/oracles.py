"""Straightforward reference implementations used as test oracles.

These intentionally avoid the package's vectorized code paths.
"""

import math


def box_iou_scalar(a, b):
    iw = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    ih = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = iw * ih
    area = lambda r: max(0.0, r[2] - r[0]) * max(0.0, r[3] - r[1])
    union = area(a) + area(b) - inter
    return inter / union if union > 0 else 0.0


def bilinear(grid, row, col):
    """Bilinear lookup in a list-of-lists with edge clamping."""
    h, w = len(grid), len(grid[0])
    row = min(max(row, 0.0), h - 1.0)
    col = min(max(col, 0.0), w - 1.0)
    r0, c0 = int(math.floor(row)), int(math.floor(col))
    r1, c1 = min(r0 + 1, h - 1), min(c0 + 1, w - 1)
    fr, fc = row - r0, col - c0
    top = grid[r0][c0] * (1 - fc) + grid[r0][c1] * fc
    bot = grid[r1][c0] * (1 - fc) + grid[r1][c1] * fc
    return top * (1 - fr) + bot * fr


def refine_cell(omap, dmap, j, i, sign="paper"):
    """Refined offsets at one cell, written out side by side."""
    dl, dt, dr, db = omap[j][i]
    xl, yl, xt, yt, xr, yr, xb, yb = dmap[j][i]
    chan = lambda c: [[cell[c] for cell in row] for row in omap]
    left_pt = (j + yl, i - dl + xl)
    top_pt = (j - dt + yt, i + xt)
    right_pt = (j + yr, i + dr + xr)
    bottom_pt = (j + db + yb, i + xb)
    sgn = 1.0 if sign == "paper" else -1.0
    return [
        dl + sgn * xl + bilinear(chan(0), *left_pt),
        dt + sgn * yt + bilinear(chan(1), *top_pt),
        dr + xr + bilinear(chan(2), *right_pt),
        db + yb + bilinear(chan(3), *bottom_pt),
    ]


def nms_reference(boxes, scores, thresh):
    """O(n^2) greedy NMS: walk in score order, keep a box unless a kept box overlaps it."""
    order = sorted(range(len(scores)), key=lambda k: (-scores[k], k))
    kept = []
    for k in order:
        if all(box_iou_scalar(boxes[k], boxes[q]) <= thresh for q in kept):
            kept.append(k)
    return kept


def match_reference(det_boxes, gt_boxes, thresh):
    used = set()
    labels = []
    for d in det_boxes:
        best, best_g = -1.0, None
        for g, gt in enumerate(gt_boxes):
            if g in used:
                continue
            v = box_iou_scalar(d, gt)
            if v > best:
                best, best_g = v, g
        if best_g is not None and best > thresh:
            used.add(best_g)
            labels.append(True)
        else:
            labels.append(False)
    return labels


def ap_reference(labels, num_gts):
    """101-point interpolated AP straight from the PR points.

    Interpolated precision at recall r is the largest precision among
    points whose recall is at least r.
    """
    if num_gts == 0 or not labels:
        return 0.0
    tp = fp = 0
    points = []
    for lab in labels:
        tp += lab
        fp += not lab
        points.append((tp / num_gts, tp / (tp + fp)))
    vals = []
    for k in range(101):
        r = k / 100
        cands = [p for rc, p in points if rc >= r]
        vals.append(max(cands) if cands else 0.0)
    return vals


def coco_ap_reference(det_boxes, det_scores, gt_boxes):
    import numpy as np

    order = sorted(range(len(det_scores)), key=lambda k: (-det_scores[k], k))
    dets = [det_boxes[k] for k in order]
    out = []
    for th in [round(0.5 + 0.05 * k, 2) for k in range(10)]:
        labels = match_reference(dets, gt_boxes, th)
        vals = ap_reference(labels, len(gt_boxes))
        out.append(float(np.mean(vals)) if isinstance(vals, list) else 0.0)
    return out
