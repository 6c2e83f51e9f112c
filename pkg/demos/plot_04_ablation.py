"""
Which negative weight?
======================

The same scenes and the same initial heads, trained three ways:

* ``dw``: negative weight from IoU-based probability times score importance
* ``dw-none``: positive weights only
* ``dw-one-minus-pos``: negative weight taken as one minus the positive weight

Pass ``--full`` for the 20-scene, 3-seed suite used by the acceptance
tests (under a minute on one core).
"""

import sys

from dualweight.sim import ABLATION_SCHEMES, compare

full = "--full" in sys.argv
report = compare(ABLATION_SCHEMES, seeds=(0, 1, 2) if full else (0,), n_scenes=20 if full else 6)
for name in report["ranking"]:
    s = report["schemes"][name]
    print(f"{name:18s} AP {s['mean_ap']:.4f} +- {s['std_ap']:.4f}   AP50 {s['mean_ap50']:.3f}  AP75 {s['mean_ap75']:.3f}")

# Command-line equivalent:
#     dw compare --seeds 0 1 2 --scenes 20
