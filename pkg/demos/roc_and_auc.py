"""
ROC curves with ties
====================

The area from pairwise ranks equals the trapezoid under the ROC curve,
even when scores tie across classes.
"""

import numpy as np

from ucl.metrics import auc, roc_curve

scores = [0.9, 0.8, 0.4, 0.3]
labels = [1, 0, 1, 0]  # 1 = fake
print("hand example AUC:", auc(scores, labels))

roc = roc_curve(scores, labels)
for t, f, p in zip(roc.thresholds, roc.fpr, roc.tpr):
    print(f"threshold {t:>5}  fpr {f:.2f}  tpr {p:.2f}")

# coarse scores produce ties; both computations still agree
rng = np.random.default_rng(1)
s = rng.integers(0, 5, size=50) / 4
y = rng.integers(0, 2, size=50)
roc = roc_curve(s, y)
print("ranks:", auc(s, y), " trapezoid:", float(np.sum(np.diff(roc.fpr) * (roc.tpr[1:] + roc.tpr[:-1]) / 2)))
print(roc.to_csv("demo")[:120])
