"""
Four anchors, one object
========================

Four predictions for one ground-truth box. Anchor A is good on both
counts. B has a high score but a loose box, D a low score but a tight box,
and the two are tuned so that their consistency ``t = s * IoU**5`` is
exactly equal. C is poor on both.

A scheme that only looks at the gap between score and IoU cannot tell A
from C, since both have ``s == IoU``. Dual weighting gives each anchor its
own (pos, neg) pair, and B and D share a positive weight but not a negative
one.
"""

from dualweight.assignment import CenterPriorStrategy
from dualweight.cli import bundled, read_predictions, weights_table
from dualweight.structures import Scene
from dualweight.weighting import SchemeConfig

scene = Scene.load(bundled("fig1_scene.json"))
entries = read_predictions(bundled("fig1_predictions.jsonl"), scene)

for name in ("gfl", "dw"):
    print(f"\n{name}")
    print("anchor      s     iou    w_pos     w_neg")
    for label, r in zip("ABCD", weights_table(scene, entries, SchemeConfig.from_name(name), CenterPriorStrategy())):
        print(f"  {label}    {r['s']:.3f}  {r['iou']:.3f}  {r['w_pos']:.5f}  {r['w_neg']:.5f}")

# B has IoU below 0.5, so it counts fully as a negative and its negative
# weight is just s**2. D's tighter box lowers its negative probability.
