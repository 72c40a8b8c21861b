from dataclasses import replace

import numpy as np
import pytest

from smdnet import data as dt
from smdnet.data import SceneConfig

CFG = SceneConfig(width=48, height=40, sr=4, n_layers=3, d_lo=1.0, d_hi=10.0, d_max=12.0, seed=3)


def test_background_only_scene():
    cfg = replace(CFG, n_layers=0, d_lo=2.0, d_hi=2.0)
    s = dt.gen_scene(cfg)
    np.testing.assert_array_equal(s.gt, 2.0 / 12.0)
    np.testing.assert_allclose(s.right[:, :-2], s.left[:, 2:], atol=1e-12)


def test_layer_values_and_shapes():
    s = dt.gen_scene(CFG)
    assert s.left.shape == (40, 48, 3) and s.right.shape == (40, 48, 3)
    assert s.gt.shape == (160, 192)
    layers = dt.scene_layers(CFG)
    allowed = {l.disparity / CFG.d_max for l in layers}
    assert set(np.unique(s.gt)) <= allowed
    assert s.left.min() >= 0 and s.left.max() <= 1


def test_distinct_values_when_all_layers_visible():
    hits = 0
    for seed in range(20):
        cfg = replace(CFG, seed=seed)
        s = dt.gen_scene(cfg)
        layers = dt.scene_layers(cfg)
        diffs = np.diff([l.disparity for l in layers])
        assert np.all(diffs >= dt.MIN_LAYER_GAP - 1e-12)
        if len(np.unique(s.gt)) == cfg.n_layers + 1:
            hits += 1
    assert hits >= 10


def test_layer_disparities_spread():
    backgrounds = []
    for seed in range(30):
        d = np.array([l.disparity for l in dt.scene_layers(replace(CFG, seed=seed))])
        assert d.min() >= CFG.d_lo and d.max() <= CFG.d_hi
        assert np.all(np.diff(d) >= dt.MIN_LAYER_GAP)
        backgrounds.append(d[0])
    # no disparity value is shared by every scene
    assert np.ptp(backgrounds) > 1.0


def test_occlusion_order():
    cfg = CFG
    s = dt.gen_scene(cfg)
    layers = dt.scene_layers(cfg)
    xs, ys = np.meshgrid((np.arange(192) + 0.5) / 4, (np.arange(160) + 0.5) / 4)
    cover = np.stack([l.covers(xs, ys) for l in layers])
    top = np.array([l.disparity for l in layers])[len(layers) - 1 - np.argmax(cover[::-1], axis=0)]
    multi = cover.sum(axis=0) >= 2
    assert multi.any()
    np.testing.assert_array_equal(s.gt[multi] * cfg.d_max, top[multi])


@pytest.mark.parametrize("sr", [2, 4])
def test_superres_gt_consistent_with_base_render(sr):
    for seed in range(5):
        hi = dt.gen_scene(replace(CFG, sr=sr, seed=seed))
        lo = dt.gen_scene(replace(CFG, sr=1, seed=seed))
        np.testing.assert_array_equal(dt.downsample_nearest(hi.gt, sr), lo.gt)


def test_photometric_consistency():
    from scipy import ndimage
    from smdnet.sampling import boundary_mask

    for seed in range(4):
        s = dt.gen_scene(replace(CFG, seed=seed))
        gt = dt.downsample_nearest(s.gt, 4) * s.d_max
        occ = dt.downsample_nearest(s.occlusion, 4)
        near_edge = ndimage.binary_dilation(boundary_mask(gt, 1.0), iterations=2)
        h, w = gt.shape
        yy, xx = np.mgrid[0:h, 0:w].astype(float)
        xr = xx - gt
        ok = ~occ & ~near_edge & (xr >= 0)
        warped = np.stack([ndimage.map_coordinates(s.right[..., c], [yy[ok], xr[ok]], order=1)
                           for c in range(3)], axis=-1)
        assert np.abs(s.left[ok] - warped).mean() < 0.02


def test_determinism():
    a, b = dt.gen_scene(CFG), dt.gen_scene(CFG)
    for f in ("left", "right", "gt", "occlusion"):
        np.testing.assert_array_equal(getattr(a, f), getattr(b, f))


def test_invalid_config():
    with pytest.raises(ValueError):
        dt.gen_scene(replace(CFG, sr=3))
    with pytest.raises(ValueError):
        dt.gen_scene(replace(CFG, d_hi=13.0))
    with pytest.raises(ValueError):
        dt.gen_scene(replace(CFG, width=32, d_hi=9.0))


def test_augment():
    s = dt.gen_scene(CFG)
    same = dt.augment(s, np.random.default_rng(0), ())
    np.testing.assert_array_equal(same.left, s.left)
    np.testing.assert_array_equal(same.gt, s.gt)
    twice = dt.augment(dt.augment(s, np.random.default_rng(0), {"vflip"}), np.random.default_rng(0), {"vflip"})
    for f in ("left", "right", "gt"):
        np.testing.assert_array_equal(getattr(twice, f), getattr(s, f))
    h = dt.augment(s, np.random.default_rng(0), {"hflip"})
    np.testing.assert_array_equal(np.sort(h.gt, axis=None), np.sort(s.gt, axis=None))
    np.testing.assert_array_equal(h.left, s.right[:, ::-1])
    c = dt.augment(s, np.random.default_rng(0), {"chromatic"})
    assert c.left.min() >= 0 and c.left.max() <= 1
    np.testing.assert_array_equal(c.gt, s.gt)
    with pytest.raises(ValueError):
        dt.augment(s, np.random.default_rng(0), {"rotate"})


def test_make_dataset():
    tmpl = replace(CFG, sr=1)
    a = dt.make_dataset(3, 1, 2, tmpl, master_seed=7, n_ood=1)
    b = dt.make_dataset(3, 1, 2, tmpl, master_seed=7, n_ood=1)
    assert [len(a[k]) for k in ("train", "val", "test", "ood")] == [3, 1, 2, 1]
    for k in a:
        for x, y in zip(a[k], b[k]):
            np.testing.assert_array_equal(x.left, y.left)
    seeds = {k: {s.seed for s in v} for k, v in a.items()}
    assert not seeds["train"] & seeds["test"]
    assert not seeds["train"] & seeds["val"]
    lo_in, hi_in = dt.TEXTURE_SPACING["in"]
    lo_ood, hi_ood = dt.TEXTURE_SPACING["ood"]
    assert hi_in < lo_ood
    for s in a["ood"]:
        layers = dt.scene_layers(replace(tmpl, seed=s.seed, texture="ood"))
        assert all(lo_ood <= l.spacing <= hi_ood for l in layers)
