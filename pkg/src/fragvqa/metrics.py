"""Correlation metrics and repeat-stability reporting.

Implements the three standard quality-assessment correlations from
their definitions (64-bit throughout): Pearson linear correlation,
Spearman rank correlation over average fractional ranks, and Kendall
tau-b with tie correction.  Predictions are used raw; no logistic
remapping is applied before Pearson.
"""

from __future__ import annotations

import math

import numpy as np


class DegenerateInputError(ValueError):
    """Input without enough variation for the statistic to exist."""


def _vector(x, name) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise ValueError(f"{name} must be a 1-d vector of length >= 2")
    return x


def _pair(x, y):
    x, y = _vector(x, "x"), _vector(y, "y")
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    return x, y


def plcc(x, y) -> float:
    """Pearson linear correlation coefficient.

    Parameters
    ----------
    x, y : array_like
        Equal-length score vectors; neither may be constant.
    """
    x, y = _pair(x, y)
    u = x - x.mean()
    v = y - y.mean()
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise DegenerateInputError("constant input: Pearson correlation undefined")
    return float((u @ v) / (nu * nv))


def fractional_ranks(x) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(x.size, dtype=np.float64)
    i = 0
    while i < x.size:
        j = i
        while j < x.size and x[order[j]] == x[order[i]]:
            j += 1
        ranks[order[i:j]] = (i + j + 1) / 2.0  # average of 1-based ranks i+1 .. j
        i = j
    return ranks


def srcc(x, y) -> float:
    """Spearman rank correlation: Pearson over average fractional ranks."""
    x, y = _pair(x, y)
    return plcc(fractional_ranks(x), fractional_ranks(y))


def krcc(x, y) -> float:
    """Kendall rank correlation, tau-b (tie-corrected).

    (concordant - discordant) / sqrt((n0 - tx) (n0 - ty)) with n0 the
    pair count and tx, ty the tied-pair counts per argument.
    """
    x, y = _pair(x, y)
    sx = np.sign(x[:, None] - x[None, :])
    sy = np.sign(y[:, None] - y[None, :])
    upper = np.triu_indices(x.size, k=1)
    concordance = float((sx[upper] * sy[upper]).sum())
    n0 = x.size * (x.size - 1) / 2.0
    ties_x = float((sx[upper] == 0).sum())
    ties_y = float((sy[upper] == 0).sum())
    denom = math.sqrt((n0 - ties_x) * (n0 - ties_y))
    if denom == 0.0:
        raise DegenerateInputError("constant input: Kendall correlation undefined")
    return concordance / denom


def stability_report(scores, score_range) -> dict:
    """Spread of repeated random-sampling predictions per video.

    Parameters
    ----------
    scores : sequence of per-video score sequences
        Each inner sequence holds one video's repeated predictions
        (>= 2 repeats each).
    score_range : (low, high)
        The scale the scores live on; the mean standard deviation is
        normalized by ``high - low`` so different scales compare.

    Returns
    -------
    dict with ``per_video_std`` (population std per video), ``mean_std``,
    and ``normalized_std``.
    """
    lo, hi = float(score_range[0]), float(score_range[1])
    if hi <= lo:
        raise ValueError(f"empty score range [{lo}, {hi}]")
    rows = [np.asarray(row, dtype=np.float64) for row in scores]
    if not rows:
        raise ValueError("no videos in stability input")
    per_video = []
    for idx, row in enumerate(rows):
        if row.ndim != 1 or row.size < 2:
            raise ValueError(f"video {idx}: need at least 2 repeats, got {row.size}")
        per_video.append(float(row.std()))  # population convention (divide by n)
    mean_std = float(np.mean(per_video))
    return {
        "per_video_std": per_video,
        "mean_std": mean_std,
        "normalized_std": mean_std / (hi - lo),
    }
