"""
Tone curves: adaptive gamma and BCET
====================================

Both techniques are per-pixel maps, so the whole story is in their curves.
"""

# %%
import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
from pathlib import Path

from cxrenhance.enhance import BcetTargets, bcet_curve, bcet_fit, gamma_curve
from cxrenhance.histogram import image_stats
from cxrenhance.synthetic import synthetic_cxr

OUT = Path(__file__).with_name("output")
OUT.mkdir(exist_ok=True)
x = np.linspace(0, 255, 1001)

# %%
# gamma(x) = 1 + a*cos(pi*x/255): above 1 in the shadows (brighten), below 1
# in the highlights (darken). Past a ~ 0.81 the curve stops being monotone.
for a in (0.25, 0.5, 0.75, 0.9):
    g = gamma_curve(x, a)
    print(f"a={a:<5} g(64)={gamma_curve(64, a):7.2f}  monotone={bool((np.diff(g) > 0).all())}")

# %%
# BCET: fit the parabola on the image's min, max, mean and mean square.
img = synthetic_cxr(256, np.random.default_rng(1))
stats = image_stats(img.plane())
co = bcet_fit(stats, BcetTargets(L=0, H=255, E=110))
y = bcet_curve(img.plane(), co)
print(stats)
print(co)
print(f"output min {y.min():.6f}  max {y.max():.6f}  mean {y.mean():.6f}")

# %%
fig, ax = plt.subplots(1, 2, figsize=(10, 4))
for a in (0.25, 0.5, 0.75, 0.9):
    ax[0].plot(x, gamma_curve(x, a), label=f"a={a}")
ax[0].plot(x, x, "k:", lw=0.8)
ax[0].legend()
ax[0].set_title("adaptive gamma")
xs = np.linspace(stats.l, stats.h, 200)
ax[1].plot(xs, co(xs))
ax[1].set_title("BCET parabola")
fig.tight_layout()
fig.savefig(OUT / "curves.png", dpi=80)
print("saved", OUT / "curves.png")
