"""Training objectives for quality regression.

Two complementary pieces: a pairwise monotonicity term that pushes the
predicted ordering toward the ground-truth ordering, and a linearity
term that rewards linear correlation of the whole batch.  Their weighted
sum is the fusion objective used for end-to-end runs.

All arithmetic is in 64-bit precision, and both terms come with
hand-derived gradients (the monotonicity term has a subgradient exactly
at tied pairs; the gradient functions are exact away from ties).
"""

from __future__ import annotations

import numpy as np

from .metrics import DegenerateInputError

MONO_WEIGHT_DEFAULT = 0.3


def _pair(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.ndim != 1:
        raise ValueError(f"need equal-length 1-d score vectors, got {pred.shape} vs {gt.shape}")
    return pred, gt


def loss_mono(pred, gt) -> float:
    """Sum over ordered pairs of max((pred_i - pred_j) * sign(gt_j - gt_i), 0).

    Every mis-ordered pair is penalised by its margin; pairs with tied
    ground truth contribute nothing.
    """
    pred, gt = _pair(pred, gt)
    diff = pred[:, None] - pred[None, :]
    direction = np.sign(gt[None, :] - gt[:, None])
    return float(np.maximum(diff * direction, 0.0).sum())


def loss_mono_grad(pred, gt) -> np.ndarray:
    pred, gt = _pair(pred, gt)
    diff = pred[:, None] - pred[None, :]
    direction = np.sign(gt[None, :] - gt[:, None])
    active = (diff * direction > 0.0) * direction
    return active.sum(axis=1) - active.sum(axis=0)


def _centered(v, what):
    c = v - v.mean()
    norm = np.linalg.norm(c)
    if norm == 0.0:
        raise DegenerateInputError(f"{what} is constant; linearity is undefined")
    return c, norm


def loss_lin(pred, gt) -> float:
    """(1 - cosine of the mean-centered vectors) / 2, i.e. (1 - PLCC)/2."""
    pred, gt = _pair(pred, gt)
    if pred.size < 2:
        raise ValueError("need at least 2 scores")
    u, nu = _centered(pred, "pred")
    v, nv = _centered(gt, "gt")
    return float((1.0 - (u @ v) / (nu * nv)) / 2.0)


def loss_lin_grad(pred, gt) -> np.ndarray:
    pred, gt = _pair(pred, gt)
    u, nu = _centered(pred, "pred")
    v, nv = _centered(gt, "gt")
    cos = (u @ v) / (nu * nv)
    # d cos / d pred; both terms are already mean-free so centering adds nothing
    dcos = v / (nu * nv) - cos * u / (nu * nu)
    return -dcos / 2.0


def loss_fusion(pred, gt, mono_weight: float = MONO_WEIGHT_DEFAULT) -> dict:
    """Both terms and their weighted sum."""
    lin = loss_lin(pred, gt)
    mono = loss_mono(pred, gt)
    return {"lin": lin, "mono": mono, "fusion": lin + mono_weight * mono}
