"""
Five-fold splits and evaluation metrics
=======================================
"""

# %%
import numpy as np

from cxrenhance.metrics import ConfusionMatrix, classification_report, format_report, seg_overlap_scores
from cxrenhance.pipeline import Manifest, ManifestRow, make_folds, split_counts

sizes = {"COVID-19": 3616, "Normal": 8851, "Non-COVID": 6012}

# %%
# Nominal per-fold counts; only COVID-19 gets a rotated copy per training image.
for label, n in sizes.items():
    print(label, split_counts(n, copies_per_image=1 if label == "COVID-19" else 0))

# %%
# The actual stratified plan: test chunks differ by at most one image across folds.
m = Manifest(tuple(ManifestRow(f"{c}/{i}.png", c) for c, n in sizes.items() for i in range(n)))
plan = make_folds(m, seed=0)
for f in range(plan.fold_count):
    print(f, [(k.train, k.val, k.test) for k in (plan.counts(f, c) for c in sizes)])

# %%
cm = ConfusionMatrix(("COVID-19", "Non-COVID", "Normal"), [[700, 10, 14], [12, 1150, 41], [6, 30, 1735]])
print(format_report(classification_report(cm)))

# %%
rng = np.random.default_rng(0)
truth = rng.random((64, 64)) > 0.6
pred = truth.copy()
pred[:4] = ~pred[:4]
print(seg_overlap_scores(pred, truth))
