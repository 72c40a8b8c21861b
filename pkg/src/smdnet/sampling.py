"""Training-point samplers driven by the ground-truth disparity map.

Pixel ``(row, col)`` owns the unit cell ``[col-0.5, col+0.5] x [row-0.5, row+0.5]``
clipped to the continuous domain ``[0, W-1] x [0, H-1]``.
"""

import numpy as np
from scipy import ndimage


def boundary_mask(gt, threshold):
    """Pixels whose 4-neighbourhood contains a disparity jump larger than ``threshold``."""
    gt = np.asarray(gt, dtype=np.float64)
    mask = np.zeros(gt.shape, dtype=bool)
    dy = np.abs(np.diff(gt, axis=0)) > threshold
    dx = np.abs(np.diff(gt, axis=1)) > threshold
    mask[:-1] |= dy
    mask[1:] |= dy
    mask[:, :-1] |= dx
    mask[:, 1:] |= dx
    return mask


def dilate(mask, rho):
    """Binary dilation with a ``rho x rho`` square; ``rho == 0`` returns a copy."""
    mask = np.asarray(mask, dtype=bool)
    rho = int(rho)
    if rho < 0:
        raise ValueError("rho must be non-negative")
    if rho <= 1:
        return mask.copy()
    return ndimage.binary_dilation(mask, structure=np.ones((rho, rho), dtype=bool))


def cell_bounds(shape):
    """Clipped cell extents per pixel: ``(x_lo, x_hi, y_lo, y_hi)`` arrays of ``shape``."""
    h, w = shape
    cols = np.arange(w, dtype=np.float64)
    rows = np.arange(h, dtype=np.float64)
    x_lo = np.clip(cols - 0.5, 0, w - 1)
    x_hi = np.clip(cols + 0.5, 0, w - 1)
    y_lo = np.clip(rows - 0.5, 0, h - 1)
    y_hi = np.clip(rows + 0.5, 0, h - 1)
    bx = np.broadcast_to
    return (bx(x_lo, shape), bx(x_hi, shape), bx(y_lo[:, None], shape), bx(y_hi[:, None], shape))


def _sample_cells(select, n, rng):
    """Draw ``n`` points uniformly over the union of the cells flagged in ``select``."""
    x_lo, x_hi, y_lo, y_hi = (b[select] for b in cell_bounds(select.shape))
    area = (x_hi - x_lo) * (y_hi - y_lo)
    idx = rng.choice(area.size, size=n, p=area / area.sum())
    x = x_lo[idx] + rng.random(n) * (x_hi[idx] - x_lo[idx])
    y = y_lo[idx] + rng.random(n) * (y_hi[idx] - y_lo[idx])
    return x, y


def gt_lookup(gt, x, y):
    """Nearest-pixel ground truth with round-half-up."""
    gt = np.asarray(gt)
    h, w = gt.shape
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.any(x < 0) or np.any(x > w - 1) or np.any(y < 0) or np.any(y > h - 1):
        raise ValueError("out of domain")
    col = np.floor(x + 0.5).astype(np.int64)
    row = np.floor(y + 0.5).astype(np.int64)
    return gt[row, col]


def uniform_sample(gt, n, rng, valid=None):
    """``n`` i.i.d. uniform points over the domain (or over valid cells for sparse GT).

    Returns ``(x, y, d)`` arrays.
    """
    gt = np.asarray(gt)
    h, w = gt.shape
    if valid is None:
        x = rng.random(n) * (w - 1)
        y = rng.random(n) * (h - 1)
    else:
        x, y = _sample_cells(np.asarray(valid, dtype=bool), n, rng)
    return x, y, gt_lookup(gt, x, y)


def dda_sample(gt, mask, n, rng):
    """Depth-discontinuity-aware sampling.

    The first ``n // 2`` points fall uniformly in the cells of ``mask``, the rest
    uniformly in the remaining cells.  An empty or full mask degrades to
    :func:`uniform_sample`.
    """
    if n % 2:
        raise ValueError("n must be even")
    mask = np.asarray(mask, dtype=bool)
    if not mask.any() or mask.all():
        return uniform_sample(gt, n, rng)
    half = n // 2
    xb, yb = _sample_cells(mask, half, rng)
    xr, yr = _sample_cells(~mask, n - half, rng)
    x = np.concatenate([xb, xr])
    y = np.concatenate([yb, yr])
    return x, y, gt_lookup(gt, x, y)
