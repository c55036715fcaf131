"""
Cloud/shadow fraction from spectral unmixing
============================================

Endmembers are found with N-FINDR, named by a brightness/vegetation
heuristic, and each cloudy pixel's fractions give
``f = (cloud + soil) / (cloud + soil + vegetation + dark)``.
"""

import numpy as np

from pgmfuse.synth import ENDMEMBER_SPECTRA, NIR_BAND, RED_BAND
from pgmfuse.unmix import ROLES, AbundanceVector, assign_roles, cloud_shadow_fraction, nfindr_extract, unmix_pixel

np.set_printoptions(precision=3, suppress=True)
rng = np.random.default_rng(1)

# 400 mixed pixels plus the four pure spectra, shuffled
mixtures = rng.dirichlet(np.ones(4) * 0.7, 400) @ ENDMEMBER_SPECTRA
pixels = np.vstack([mixtures, ENDMEMBER_SPECTRA])
rng.shuffle(pixels)

em = assign_roles(nfindr_extract(pixels, 4), RED_BAND, NIR_BAND)
for role, spectrum in zip(em.roles, em.spectra):
    print(f"{role:<10}", spectrum)

# %%
# Unmix a pixel that is 30% cloud, 10% soil and 60% vegetation.
truth = np.array([0.3, 0.1, 0.6, 0.0])
ab = unmix_pixel(truth @ ENDMEMBER_SPECTRA, em)
print("abundances", {r: round(float(a), 6) + 0.0 for r, a in zip(ab.roles, ab.fractions)})
print("f =", cloud_shadow_fraction(ab))

# the solve only enforces sum-to-one; negative fractions are clamped inside f
print("f with a negative fraction:", cloud_shadow_fraction(AbundanceVector((0.6, -0.2, 0.4, 0.2), ROLES)))
