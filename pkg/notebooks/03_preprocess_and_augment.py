"""
Preprocessing: masks, resize, Z-score, rotation augmentation
============================================================
"""

# %%
import numpy as np

from cxrenhance import AugmentSpec, BinaryMask, ResizeSpec, apply_mask, augment_rotations
from cxrenhance import resize_bilinear, zscore_normalize
from cxrenhance.preprocess import DEFAULT_SIZE, rotation_angles
from cxrenhance.synthetic import synthetic_cxr, synthetic_lung_mask

img = synthetic_cxr(320, np.random.default_rng(2))

# %%
# Segmented-lung variant: zero everything outside the mask.
lungs = apply_mask(img, BinaryMask(synthetic_lung_mask(320)))
print("lung fraction:", float((lungs.data > 0).mean()))

# %%
# Resize to the classifier input size, then standardise per image.
small = resize_bilinear(lungs, ResizeSpec(*DEFAULT_SIZE))
z = zscore_normalize(small)
print(small, "z mean %.2e std %.6f" % (z.data.mean(), z.data.std()))
print("float image bytes:", len(z.to_bytes()))

# %%
# One rotated copy per image doubles a class; angles are keyed by (seed, image id)
# so the same copy comes out no matter the processing order.
spec = AugmentSpec(copies_per_image=1, max_abs_angle=10.0, seed=2020)
for name in ("covid/0001.png", "covid/0002.png", "covid/0001.png"):
    print(name, rotation_angles(spec, name))
variants = augment_rotations(small, spec, "covid/0001.png")
print(len(variants), "variant(s), corner value", variants[0].data[0, 0, 0])
