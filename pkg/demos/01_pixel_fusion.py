"""
Fusing two class distributions at one pixel
===========================================

Two sources estimate land-cover probabilities for the same pixel. The
primary source is trusted according to how much of the secondary pixel is
cloud or shadow (``f``).
"""

import numpy as np

from pgmfuse import PixelModel, combine_pair, fuse_pixel, joint_enumeration_oracle, marginal_map
from pgmfuse.pgm import stage1_keep_weight, stage2_keep_weight

np.set_printoptions(precision=4, suppress=True)

# clean source A and a cloud-contaminated source B disagree
pa = np.array([0.7, 0.2, 0.1])
pb = np.array([0.1, 0.8, 0.1])

# f is the cloud/shadow fraction of the B pixel; the keep weight moves from 0.5 to 1 with f
for f in (0.0, 0.5, 1.0):
    k = stage1_keep_weight(f)
    print(f"f={f:.1f}  keep={k:.2f}  P(LL)={combine_pair(pa, pb, k)}")

# f = 1 hands the pixel to A; f = 0 averages the two
assert np.allclose(combine_pair(pa, pb, stage1_keep_weight(1.0)), pa)
assert np.allclose(combine_pair(pa, pb, stage1_keep_weight(0.0)), 0.5 * (pa + pb))

# %%
# The coarse source joins in a second step with weight w.
pm = np.array([0.2, 0.3, 0.5])
model = PixelModel(pa, pb, pm, f=0.5, w=0.4, has_b=True, apply_m=True)
fast = fuse_pixel(model)
slow = joint_enumeration_oracle(model)  # sums the full joint over every assignment
print("posterior  ", fast)
print("enumeration", slow)
print("max |diff|  ", np.abs(fast - slow).max())
print("MAP class   ", marginal_map(fast))

# w = 1 is the strongest the coarse source can get: an even split with LL
ll = combine_pair(pa, pb, stage1_keep_weight(0.5))
print("w=1        ", combine_pair(ll, pm, stage2_keep_weight(1.0)), "=", 0.5 * (ll + pm))
