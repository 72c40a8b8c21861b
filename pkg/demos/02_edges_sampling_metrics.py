"""Scene generation, boundary-aware sampling and the edge metrics."""

import numpy as np
from scipy import ndimage

from smdnet import data, metrics, sampling

cfg = data.SceneConfig(seed=4)
scene = data.gen_scene(cfg)
gt = scene.gt_raw                          # raw pixels, 4x the image resolution
print("images", scene.left.shape, "ground truth", gt.shape)
print("layer disparities:", np.round(np.unique(gt), 3))

# Boundary pixels are where the disparity jumps by more than one pixel.
edges = sampling.boundary_mask(gt, 1.0)
band = sampling.dilate(edges, 10)
print(f"boundary pixels {edges.mean():.1%}, dilated band {band.mean():.1%}")

# Half the training points land inside the band, half outside.
rng = np.random.default_rng(0)
x, y, d = sampling.dda_sample(gt, band, 2048, rng)
inside = band[np.floor(y + 0.5).astype(int), np.floor(x + 0.5).astype(int)]
print("dda: fraction of points in band", inside.mean())
x, y, d = sampling.uniform_sample(gt, 2048, rng)
inside = band[np.floor(y + 0.5).astype(int), np.floor(x + 0.5).astype(int)]
print("uniform: fraction of points in band", inside.mean())

# Two fake predictions: one blurred across edges (what L1 regression tends to
# produce), one that keeps edges sharp but is off by a third of a pixel.
blurred = ndimage.uniform_filter(gt, 9)
shifted = gt + 0.33
for name, pred in (("blurred", blurred), ("sharp+0.33", shifted)):
    r = metrics.evaluate(pred, gt)
    print(f"{name:>11}: SEE3 {r.see3_avg:.3f}  SEE5 {r.see5_avg:.3f}  EPE {r.epe_avg:.3f}")
# The blurred map has the better EPE but far worse edge error: the soft edge
# error is what exposes over-smoothing.
