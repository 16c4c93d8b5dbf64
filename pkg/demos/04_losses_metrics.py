"""Objectives and metrics walkthrough.

Quality labels are opinions on an arbitrary scale, so training and
evaluation both care about relationships, not absolute values: linear
agreement (plcc), rank agreement (srcc, krcc), and differentiable losses
that push predictions toward those agreements.

Run: python3 demos/04_losses_metrics.py
"""

import numpy as np

from fragvqa import (
    krcc,
    loss_fusion,
    loss_lin,
    loss_mono,
    plcc,
    srcc,
    stability_report,
)

gt = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
good = np.array([10.0, 22.0, 28.0, 41.0, 50.0])   # right order, roughly linear
noisy = np.array([12.0, 8.0, 30.0, 25.0, 49.0])   # two swaps

for name, pred in (("good", good), ("noisy", noisy)):
    print(f"{name:5s}: plcc={plcc(pred, gt):+.3f}  srcc={srcc(pred, gt):+.3f}  "
          f"krcc={krcc(pred, gt):+.3f}")

# Both metrics are shift/scale invariant: rescaling predictions is free.
print("scale invariance:", plcc(good, gt) == plcc(3 * good + 7, gt))

# The linearity loss is literally (1 - plcc) / 2, but written as a smooth
# function of the predictions so it has a gradient everywhere.
print(f"loss_lin(good) = {loss_lin(good, gt):.4f} "
      f"== (1 - plcc)/2 = {(1 - plcc(good, gt)) / 2:.4f}")

# The monotonicity loss charges every wrongly ordered pair by its margin;
# a perfectly ordered prediction pays nothing.
print(f"loss_mono(good) = {loss_mono(good, gt):.4f}")
print(f"loss_mono(noisy) = {loss_mono(noisy, gt):.4f}")

fused = loss_fusion(noisy, gt, mono_weight=0.3)
print(f"fusion: lin={fused['lin']:.4f} + 0.3 * mono={fused['mono']:.4f} "
      f"-> {fused['fusion']:.4f}")

# Random sampling means repeated runs score the same video differently.
# The stability report normalizes that spread by the score range so
# different scales compare.
runs = [
    [62.1, 63.0, 61.7, 62.4],   # video A, four samplings
    [40.2, 40.9, 40.5, 40.6],   # video B
]
report = stability_report(runs, score_range=(0.0, 100.0))
print(f"per-video std {np.round(report['per_video_std'], 3)}, "
      f"normalized spread {report['normalized_std']:.4%} of the scale")
