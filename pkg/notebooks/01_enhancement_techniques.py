"""
Enhancement techniques on a synthetic radiograph
================================================

Runs the six conditions (original plus five enhancements) on one image and
compares their histograms, the way one would eyeball them before training.
"""

# %%
import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
from pathlib import Path

from cxrenhance import TECHNIQUES, apply_technique, compute_histogram
from cxrenhance.synthetic import synthetic_cxr

OUT = Path(__file__).with_name("output")
OUT.mkdir(exist_ok=True)

img = synthetic_cxr(256, np.random.default_rng(0))
print(img, "range", img.data.min(), img.data.max())

# %%
# Every technique is addressed by its string id.
results = {t: apply_technique(img, t) for t in TECHNIQUES}
for t, out in results.items():
    d = out.data
    print(f"{t:<11} min={d.min():3d} max={d.max():3d} mean={d.mean():6.1f} std={d.std():5.1f}")

# %%
# The complement's histogram is the original's flipped left to right.
h0 = compute_histogram(img.plane()).counts
hc = compute_histogram(results["complement"].plane()).counts
print("complement histogram reversed:", np.array_equal(hc, h0[::-1]))

# %%
fig, axes = plt.subplots(2, 6, figsize=(18, 5))
for col, (t, out) in enumerate(results.items()):
    axes[0, col].imshow(out.plane(), cmap="gray", vmin=0, vmax=255)
    axes[0, col].set_title(t)
    axes[0, col].axis("off")
    axes[1, col].bar(np.arange(256), compute_histogram(out.plane()).counts, width=1.0)
    axes[1, col].set_xlim(0, 255)
fig.tight_layout()
fig.savefig(OUT / "techniques.png", dpi=80)
print("saved", OUT / "techniques.png")
