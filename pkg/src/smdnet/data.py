"""Procedural stereo scenes with exact, sharp ground-truth disparity.

A scene is a textured background plane plus fronto-parallel rectangles, each
at its own disparity.  Views are rendered at ``sr`` times the base resolution
by point-sampling pixel centres, then box-filtered down to base resolution;
the ground truth stays at the super-resolved grid.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

TEXTURE_SPACING = {"in": (3.0, 6.0), "ood": (8.0, 12.0)}
# rectangle edges live on a 1/8 px lattice; fractions in (0.25, 0.5] are skipped so
# that every supported ``sr`` samples each base pixel on the same side of an edge
_EDGE_FRACTIONS = np.array([0.0, 0.125, 0.25, 0.625, 0.75, 0.875])
MIN_LAYER_GAP = 2.0


@dataclass(frozen=True)
class SceneConfig:
    width: int = 96
    height: int = 96
    sr: int = 4
    n_layers: int = 3
    d_lo: float = 1.0
    d_hi: float = 10.0
    d_max: float = 12.0
    texture: str = "in"
    seed: int = 0

    def validate(self):
        if self.sr not in (1, 2, 4):
            raise ValueError("sr must be 1, 2 or 4")
        if self.width < 8 or self.height < 8:
            raise ValueError("scene too small")
        if not 0 <= self.d_lo <= self.d_hi <= self.d_max:
            raise ValueError("need 0 <= d_lo <= d_hi <= d_max")
        if self.d_hi >= self.width / 4:
            raise ValueError("d_hi must stay below width / 4")
        if self.n_layers < 0:
            raise ValueError("n_layers must be non-negative")
        if self.texture not in TEXTURE_SPACING:
            raise ValueError(f"unknown texture family {self.texture!r}")
        if self.d_hi - self.d_lo < self.n_layers * MIN_LAYER_GAP:
            raise ValueError("disparity range too narrow for that many layers")


@dataclass
class StereoSample:
    left: np.ndarray        # (H, W, 3) in [0, 1]
    right: np.ndarray       # (H, W, 3) in [0, 1]
    gt: np.ndarray          # (sr*H, sr*W) normalized disparity
    d_max: float
    sr: int
    seed: int
    occlusion: np.ndarray = field(default=None, repr=False)  # (sr*H, sr*W) bool, left pixels hidden in right

    @property
    def gt_raw(self):
        return self.gt * self.d_max


@dataclass
class _Layer:
    disparity: float
    x0: float
    x1: float
    y0: float
    y1: float
    color: np.ndarray
    lattice: np.ndarray     # (3, ny, nx) noise values
    spacing: float
    origin: float           # texture x origin in left-view coordinates

    def covers(self, x, y):
        return (x >= self.x0) & (x < self.x1) & (y >= self.y0) & (y < self.y1)

    def texture(self, x, y):
        u = (x - self.origin) / self.spacing
        v = y / self.spacing
        coords = np.stack([v.ravel(), u.ravel()])
        chans = [ndimage.map_coordinates(self.lattice[c], coords, order=3, mode="mirror")
                 for c in range(3)]
        noise = np.stack(chans, axis=-1).reshape(x.shape + (3,))
        return np.clip(self.color + 0.35 * (noise - 0.5), 0.0, 1.0)


def _snap_edge(v, rng):
    return np.floor(v) + rng.choice(_EDGE_FRACTIONS)


def _make_layers(cfg, rng):
    lo_sp, hi_sp = TEXTURE_SPACING[cfg.texture]
    w, h = cfg.width, cfg.height

    def lattice(extent_x, spacing):
        nx = int(np.ceil(extent_x / spacing)) + 4
        ny = int(np.ceil(h / spacing)) + 4
        return rng.random((3, ny, nx))

    # background is farthest, rectangles nearer; consecutive layers stay MIN_LAYER_GAP apart
    n = cfg.n_layers
    slack = cfg.d_hi - cfg.d_lo - n * MIN_LAYER_GAP
    disparities = cfg.d_lo + MIN_LAYER_GAP * np.arange(n + 1) + np.sort(rng.uniform(0.0, slack, n + 1))

    layers = []
    spacing = rng.uniform(lo_sp, hi_sp)
    span = w + 2 * cfg.d_hi + 4
    layers.append(_Layer(float(disparities[0]), -np.inf, np.inf, -np.inf, np.inf,
                         rng.uniform(0.25, 0.75, 3), lattice(span, spacing), spacing, -cfg.d_hi - 1.0))
    for k in range(1, n + 1):
        rw = rng.uniform(w / 6, w / 2)
        rh = rng.uniform(h / 6, h / 2)
        x0 = _snap_edge(rng.uniform(0, w - rw), rng)
        y0 = _snap_edge(rng.uniform(0, h - rh), rng)
        x1 = _snap_edge(x0 + rw, rng)
        y1 = _snap_edge(y0 + rh, rng)
        spacing = rng.uniform(lo_sp, hi_sp)
        layers.append(_Layer(float(disparities[k]), x0, x1, y0, y1,
                             rng.uniform(0.1, 0.9, 3), lattice(x1 - x0 + 2, spacing), spacing, x0 - 1.0))
    return layers


def _render(layers, xs, ys, shift):
    """Composite far-to-near; ``shift`` selects the view (0 left, 1 right)."""
    img = np.zeros(xs.shape + (3,))
    disp = np.zeros(xs.shape)
    ident = np.zeros(xs.shape, dtype=np.int64)
    for k, layer in enumerate(layers):
        xl = xs + shift * layer.disparity
        hit = layer.covers(xl, ys)
        if not hit.any():
            continue
        img[hit] = layer.texture(xl[hit], ys[hit])
        disp[hit] = layer.disparity
        ident[hit] = k
    return img, disp, ident


def _box_down(img, s):
    if s == 1:
        return img
    h, w = img.shape[0] // s, img.shape[1] // s
    return img.reshape(h, s, w, s, -1).mean(axis=(1, 3))


def scene_layers(cfg):
    """Layer geometry of the scene, far to near; independent of ``cfg.sr``."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    return sorted(_make_layers(cfg, rng), key=lambda l: l.disparity)


def gen_scene(cfg):
    """Render one :class:`StereoSample`; deterministic in ``cfg.seed``."""
    layers = scene_layers(cfg)
    s = cfg.sr
    xs1 = (np.arange(cfg.width * s) + 0.5) / s
    ys1 = (np.arange(cfg.height * s) + 0.5) / s
    xs, ys = np.meshgrid(xs1, ys1)
    left_hr, disp, ident = _render(layers, xs, ys, 0.0)
    right_hr, _, _ = _render(layers, xs, ys, 1.0)

    # left point on layer L is hidden in the right view if a nearer layer covers x - d_L there
    occluded = np.zeros(xs.shape, dtype=bool)
    for k, layer in enumerate(layers):
        on = ident == k
        xr = xs - layer.disparity
        for nearer in layers[k + 1:]:
            occluded |= on & nearer.covers(xr + nearer.disparity, ys)

    return StereoSample(
        left=_box_down(left_hr, s),
        right=_box_down(right_hr, s),
        gt=disp / cfg.d_max,
        d_max=float(cfg.d_max),
        sr=s,
        seed=cfg.seed,
        occlusion=occluded,
    )


def downsample_nearest(field_hr, s):
    """Pick, per base pixel, the super-resolved sample nearest its centre (lower index on ties)."""
    off = (s - 1) // 2
    return field_hr[off::s, off::s]


def augment(sample, rng, flags=()):
    """Chromatic jitter and flips; ``flags`` is a subset of {chromatic, hflip, vflip}."""
    flags = set(flags)
    unknown = flags - {"chromatic", "hflip", "vflip"}
    if unknown:
        raise ValueError(f"unknown augmentation flags {sorted(unknown)}")
    left, right, gt, occ = sample.left, sample.right, sample.gt, sample.occlusion
    if "chromatic" in flags:
        gain = rng.uniform(0.8, 1.2)
        gamma = rng.uniform(0.8, 1.2)
        tint = rng.uniform(0.95, 1.05, size=3)
        left, right = (np.clip((np.clip(v, 0, 1) ** gamma) * gain * tint, 0.0, 1.0) for v in (left, right))
    if "vflip" in flags:
        left, right, gt = left[::-1], right[::-1], gt[::-1]
        occ = None if occ is None else occ[::-1]
    if "hflip" in flags:
        # mirrored right view becomes the reference; gt is mirrored as an approximation
        left, right = right[:, ::-1], left[:, ::-1]
        gt = gt[:, ::-1]
        occ = None
    return replace(sample, left=np.ascontiguousarray(left), right=np.ascontiguousarray(right),
                   gt=np.ascontiguousarray(gt), occlusion=None if occ is None else np.ascontiguousarray(occ))


SPLIT_OFFSETS = {"train": 0, "val": 200_000, "test": 400_000, "ood": 600_000}


def split_seeds(split, count, master_seed):
    return [master_seed * 1_000_000 + SPLIT_OFFSETS[split] + i for i in range(count)]


def make_dataset(n_train, n_val, n_test, template=SceneConfig(), master_seed=0, n_ood=0):
    """Generate train/val/test (and optionally out-of-domain) splits with disjoint seeds."""
    counts = {"train": n_train, "val": n_val, "test": n_test}
    for name, c in counts.items():
        if c < 1:
            raise ValueError(f"{name} split needs at least one sample")
    if n_ood:
        counts["ood"] = n_ood
    out = {}
    for name, c in counts.items():
        texture = "ood" if name == "ood" else template.texture
        out[name] = [gen_scene(replace(template, seed=s, texture=texture))
                     for s in split_seeds(name, c, master_seed)]
    return out
