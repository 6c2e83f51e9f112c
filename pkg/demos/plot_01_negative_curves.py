"""
How likely is an anchor to be a negative?
=========================================

The negative probability falls from 1 at IoU 0.5 to 0 at IoU 0.95.
``gamma1`` bends the curve: larger values keep it high for longer, which
treats a moderately overlapping box as background for longer.
"""

import numpy as np

from dualweight.weighting import neg_prob, solve_neg_coefficients

ious = np.linspace(0.5, 0.95, 10)
print("iou   " + "  ".join(f"g={g}" for g in range(1, 6)))
columns = []
for g in range(1, 6):
    k, b = solve_neg_coefficients(g)
    columns.append(neg_prob(ious, g, k, b))
for row, u in enumerate(ious):
    print(f"{u:.2f}  " + "  ".join(f"{c[row]:.2f}" for c in columns))

# Outside [0.5, 0.95] the curve is flat.
k, b = solve_neg_coefficients(2)
print("P_neg(0.3) =", neg_prob(0.3, 2, k, b), " P_neg(0.99) =", neg_prob(0.99, 2, k, b))

# The same numbers as CSV, ready for a plotting tool:
#     dw curves --gamma1 1 2 3 4 5 --resolution 46 > curves.csv
