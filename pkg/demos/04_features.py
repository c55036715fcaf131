"""
NDVI, GLCM texture and time-series smoothing
============================================
"""

import numpy as np

from pgmfuse import BandRaster, GridGeometry
from pgmfuse.features import GlcmParams, glcm_textures, missing_fraction, ndvi, savitzky_golay_smooth

geom = GridGeometry(24, 24, 0.0, 0.0, 30.0, -30.0)
rng = np.random.default_rng(2)

red = BandRaster(geom, rng.uniform(0.02, 0.1, geom.shape))
nir = BandRaster(geom, rng.uniform(0.2, 0.5, geom.shape))
v = ndvi(red, nir).values(0)
print(f"NDVI range {np.nanmin(v):.3f} .. {np.nanmax(v):.3f}")

# left half smooth, right half noisy: texture separates them
img = np.where(np.arange(24) < 12, 0.3, 0.3 + rng.normal(0, 0.1, (24, 24)))
tex = glcm_textures(BandRaster(geom, img), GlcmParams(16, 7, (1, 1))).data
for name, k in (("mean", 0), ("contrast", 1), ("entropy", 2)):
    print(f"{name:<9} smooth {np.nanmean(tex[:, 3:6, k]):7.3f}   rough {np.nanmean(tex[:, 15:21, k]):7.3f}")

# %%
# A 23-epoch EVI series with cloudy gaps: fill, then smooth.
t = np.arange(23)
evi = 0.2 + 0.4 * np.exp(-0.5 * ((t - 11) / 3.5) ** 2) + rng.normal(0, 0.02, 23)
missing = rng.random(23) < 0.25
evi[missing] = np.nan
print("missing fraction m =", missing_fraction(missing))
print("smoothed:", np.round(savitzky_golay_smooth(evi, missing, window=5, poly_order=2), 3))
