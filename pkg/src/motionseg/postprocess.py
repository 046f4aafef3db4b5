"""Probability mask to binary motion mask: Gaussian smoothing, global
thresholding, and the F-measure threshold sweep."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from . import metrics


def gaussian_kernel_3x3(sigma: float = 1.0) -> np.ndarray:
    """Unit-sum 3x3 Gaussian kernel."""
    ax = np.array([-1.0, 0.0, 1.0])
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def smooth(mask: np.ndarray, sigma: float = 1.0) -> np.ndarray:
    """3x3 Gaussian smoothing with reflective borders; range-preserving."""
    mask = np.asarray(mask, dtype=np.float64)
    return ndimage.correlate(mask, gaussian_kernel_3x3(sigma), mode="reflect")


def threshold(mask: np.ndarray, t: float) -> np.ndarray:
    """Per-pixel >= comparison to a global threshold."""
    return (np.asarray(mask) >= t).astype(np.uint8)


def sweep_threshold(preds, gts, grid=None):
    """F-measure over pooled confusion counts per threshold.

    Returns (best_t, table) with table a list of (t, f_measure). Ties break
    toward the smaller threshold; undefined F never wins over a defined one.
    """
    if grid is None:
        grid = metrics.DEFAULT_THRESHOLD_GRID
    preds = list(preds)
    gts = list(gts)
    if not preds:
        raise ValueError("sweep_threshold needs at least one prediction")
    table = []
    for t in grid:
        f = metrics.f_measure(metrics.pooled_counts(preds, gts, t))
        table.append((t, f))
    best_t, best_f = None, -1.0
    for t, f in table:
        if not np.isnan(f) and f > best_f:
            best_t, best_f = t, f
    if best_t is None:
        best_t = table[0][0]
    return best_t, table
