"""
Grouping fine pixels under coarse cells
=======================================

Each fine pixel belongs to the coarse cell containing its center. Group
agreement ``g`` and the coarse series' missing share ``m`` give the
reliability weight ``w = g / (g + 1 - m)``.
"""

import numpy as np

from pgmfuse import GridGeometry, ProbabilityRaster, build_group_map, group_agreement, reliability_weight

# 6x6 fine grid at 30 m under a 2x2 coarse grid at 90 m
fine = GridGeometry(6, 6, 0.0, 0.0, 30.0, -30.0)
coarse = GridGeometry(2, 2, 0.0, 0.0, 90.0, -90.0)
groups = build_group_map(fine, coarse)
print("coarse cell of each fine pixel:")
print(groups.assignment.reshape(fine.shape))
print("group sizes:", groups.sizes)

# a fused fine map whose upper-left cell is split between two classes
rng = np.random.default_rng(0)
labels = np.zeros(fine.shape, int)
labels[:3, :2] = 1
labels[3:, 3:] = 2
p = np.full(fine.shape + (3,), 0.1)
np.put_along_axis(p, labels[..., None], 0.8, axis=-1)
g = group_agreement(ProbabilityRaster(fine, p), groups).values(0)
print("group agreement g:")
print(np.round(g, 3))

# %%
# More agreement or more gaps in the coarse series both raise w.
for gi, mi in [(1.0, 1.0), (0.5, 0.0), (0.5, 0.5), (0.0, 0.3), (0.0, 1.0)]:
    print(f"g={gi:.1f} m={mi:.1f} -> w={reliability_weight(gi, mi):.4f}")
