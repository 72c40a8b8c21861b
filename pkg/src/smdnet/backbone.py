"""Toy stereo backbone, optimizer, training loop and grid inference.

Activations are ``(H, W, C)`` float64 arrays; a single stereo crop is processed
per step.  Gradients are computed by hand, layer by layer.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import mixture
from .data import augment, downsample_nearest
from .field import (OMEGA, OUTPUT_DIMS, MlpHead, decode_backward, decode_params, decode_unimodal,
                    decode_unimodal_backward, head_backward, head_forward, head_widths,
                    interp, interp_backward, sine_init)
from .sampling import boundary_mask, dda_sample, dilate, uniform_sample

LEAK = 0.1


# -- convolutional network ----------------------------------------------------

@dataclass(frozen=True)
class ConvSpec:
    out_ch: int
    stride: int = 1
    upsample: bool = False
    skip: int | None = None     # index of an earlier layer whose output is concatenated
    act: str = "leaky"          # "leaky" or "linear"


class ConvNet:
    """Sequence of 3x3 convolutions with optional nearest upsampling and skips."""

    def __init__(self, in_ch, specs):
        self.in_ch = int(in_ch)
        self.specs = tuple(specs)
        self.in_channels = []
        chans = []
        for k, s in enumerate(self.specs):
            c = chans[k - 1] if k else self.in_ch
            if s.skip is not None:
                if not 0 <= s.skip < k:
                    raise ValueError(f"layer {k}: skip must reference an earlier layer")
                c += chans[s.skip]
            if s.stride not in (1, 2):
                raise ValueError("stride must be 1 or 2")
            self.in_channels.append(c)
            chans.append(s.out_ch)
        self.weights = [np.zeros((3, 3, c, s.out_ch)) for c, s in zip(self.in_channels, self.specs)]
        self.biases = [np.zeros(s.out_ch) for s in self.specs]

    @property
    def out_ch(self):
        return self.specs[-1].out_ch

    @property
    def scale_factor(self):
        """Total downsampling, so input sides must be multiples of it."""
        level, worst = 0, 0
        for s in self.specs:
            level -= int(s.upsample)
            level += int(s.stride == 2)
            worst = max(worst, level)
        if level != 0:
            raise ValueError("network does not return to input resolution")
        return 2 ** worst

    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def set_params(self, arrays):
        arrays = list(arrays)
        self.weights = [np.array(a, dtype=np.float64) for a in arrays[0::2]]
        self.biases = [np.array(a, dtype=np.float64) for a in arrays[1::2]]

    def init(self, seed):
        rng = np.random.default_rng(seed)
        for k, (w, s) in enumerate(zip(self.weights, self.specs)):
            fan_in = 9 * w.shape[2]
            gain = 2.0 / (1 + LEAK ** 2) if s.act == "leaky" else 1.0
            bound = np.sqrt(3.0 * gain / fan_in)
            self.weights[k] = rng.uniform(-bound, bound, size=w.shape)
            self.biases[k] = np.zeros_like(self.biases[k])
        return self


def build_unet(in_ch=6, base=16, feat_dim=32):
    """4 encoder + 4 decoder layers, three stride-2 levels."""
    return ConvNet(in_ch, [
        ConvSpec(base),
        ConvSpec(2 * base, stride=2),
        ConvSpec(4 * base, stride=2),
        ConvSpec(4 * base, stride=2),
        ConvSpec(4 * base, upsample=True, skip=2),
        ConvSpec(2 * base, upsample=True, skip=1),
        ConvSpec(2 * base, upsample=True, skip=0),
        ConvSpec(feat_dim, act="linear"),
    ])


def _im2col(x, stride):
    xp = np.pad(x, ((1, 1), (1, 1), (0, 0)))
    win = sliding_window_view(xp, (3, 3), axis=(0, 1))[::stride, ::stride]
    ho, wo = win.shape[:2]
    # column order (ky, kx, cin) matches w.reshape(9 * cin, cout)
    return win.transpose(0, 1, 3, 4, 2).reshape(ho * wo, -1), (ho, wo)


def conv2d(x, w, b, stride=1):
    """3x3 convolution (cross-correlation), zero padding 1."""
    cols, (ho, wo) = _im2col(x, stride)
    return (cols @ w.reshape(-1, w.shape[3]) + b).reshape(ho, wo, -1), cols


def conv2d_backward(x_shape, cols, w, stride, dout):
    h, wd, cin = x_shape
    ho, wo, cout = dout.shape
    d2 = dout.reshape(-1, cout)
    dw = (cols.T @ d2).reshape(3, 3, cin, cout)
    db = d2.sum(axis=0)
    dcols = (d2 @ w.reshape(-1, cout).T).reshape(ho, wo, 3, 3, cin)
    dxp = np.zeros((h + 2, wd + 2, cin))
    for ky in range(3):
        for kx in range(3):
            dxp[ky:ky + stride * ho:stride, kx:kx + stride * wo:stride] += dcols[:, :, ky, kx]
    return dxp[1:-1, 1:-1], dw, db


def _up(x):
    return x.repeat(2, axis=0).repeat(2, axis=1)


def _up_backward(g):
    h, w, c = g.shape
    return g.reshape(h // 2, 2, w // 2, 2, c).sum(axis=(1, 3))


def net_forward(net, inp, keep_cache=True, tally=None):
    """Feature grid ``(H, W, D)`` for an ``(H, W, in_ch)`` input.

    If ``tally`` is a list, the bytes of every activation buffer the pass
    allocates are appended to it.
    """
    x = np.asarray(inp, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] != net.in_ch:
        raise ValueError(f"expected (H, W, {net.in_ch}) input, got {x.shape}")
    f = net.scale_factor
    if x.shape[0] % f or x.shape[1] % f:
        raise ValueError(f"input sides must be multiples of {f}")
    outs, cache = [], []
    for k, (s, w, b) in enumerate(zip(net.specs, net.weights, net.biases)):
        a = outs[k - 1] if k else x
        if s.upsample:
            a = _up(a)
        if s.skip is not None:
            a = np.concatenate([a, outs[s.skip]], axis=2)
        z, cols = conv2d(a, w, b, s.stride)
        y = np.where(z > 0, z, LEAK * z) if s.act == "leaky" else z
        outs.append(y)
        if tally is not None:
            tally.append(a.nbytes + cols.nbytes + z.nbytes + y.nbytes)
        if keep_cache:
            cache.append((a.shape, cols, z))
    return outs[-1], cache


def net_backward(net, cache, dfeat):
    """Parameter gradients (ordered like ``net.params()``) and the input gradient."""
    n = len(net.specs)
    douts = [None] * n
    douts[-1] = np.asarray(dfeat, dtype=np.float64)
    grads = [None] * (2 * n)
    dinp = None
    for k in reversed(range(n)):
        s = net.specs[k]
        a_shape, cols, z = cache[k]
        g = douts[k]
        if s.act == "leaky":
            g = np.where(z > 0, g, LEAK * g)
        da, dw, db = conv2d_backward(a_shape, cols, net.weights[k], s.stride, g)
        grads[2 * k], grads[2 * k + 1] = dw, db
        if s.skip is not None:
            c_skip = net.specs[s.skip].out_ch
            g_skip = da[..., -c_skip:]
            douts[s.skip] = g_skip if douts[s.skip] is None else douts[s.skip] + g_skip
            da = da[..., :-c_skip]
        if s.upsample:
            da = _up_backward(da)
        if k:
            douts[k - 1] = da if douts[k - 1] is None else douts[k - 1] + da
        else:
            dinp = da
    return grads, dinp


# -- optimizer ------------------------------------------------------------------

@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def like(cls, params, lr=1e-3):
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0, lr)


def adam_step(state, params, grads, lr=None):
    """One bias-corrected Adam update; returns new parameter arrays and advances ``state``."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("parameter / gradient count mismatch")
    lr = state.lr if lr is None else lr
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    out = []
    for k, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape or p.shape != state.m[k].shape:
            raise ValueError(f"shape mismatch at parameter {k}: {p.shape} vs {g.shape}")
        state.m[k] = state.beta1 * state.m[k] + (1 - state.beta1) * g
        state.v[k] = state.beta2 * state.v[k] + (1 - state.beta2) * g * g
        out.append(p - lr * (state.m[k] / c1) / (np.sqrt(state.v[k] / c2) + state.eps))
    return out


# -- model ----------------------------------------------------------------------

class SmdModel:
    """Backbone plus head; ``kind`` selects the output representation."""

    def __init__(self, net, head, kind="bimodal", d_max=1.0):
        if kind not in OUTPUT_DIMS:
            raise ValueError(f"unknown head kind {kind!r}")
        if head.out_dim != OUTPUT_DIMS[kind]:
            raise ValueError(f"{kind} head needs output dimension {OUTPUT_DIMS[kind]}")
        if head.in_dim != net.out_ch:
            raise ValueError("head input does not match backbone feature depth")
        self.net, self.head, self.kind, self.d_max = net, head, kind, float(d_max)

    def params(self):
        return self.net.params() + self.head.params()

    def set_params(self, arrays):
        n = len(self.net.params())
        self.net.set_params(arrays[:n])
        self.head.set_params(arrays[n:])


def init_model(kind="bimodal", seed=0, base=16, feat_dim=32, width_factor=1 / 8,
               omega=OMEGA, d_max=1.0):
    net = build_unet(6, base, feat_dim).init(seed)
    head = sine_init(MlpHead(head_widths(feat_dim, OUTPUT_DIMS[kind], width_factor), omega), seed + 1)
    return SmdModel(net, head, kind, d_max)


def point_loss(kind, raw, d):
    """Per-point loss and its gradient w.r.t. the raw head outputs."""
    if kind == "bimodal":
        params = decode_params(raw)
        return mixture.nll(params, d), decode_backward(raw, mixture.nll_grad(params, d))
    if kind == "unimodal":
        params = decode_unimodal(raw)
        return mixture.unimodal_nll(params, d), decode_unimodal_backward(raw, mixture.unimodal_grad(params, d))
    return mixture.l1_loss(raw[..., 0], d), mixture.l1_grad(raw[..., 0], d)[..., None]


def stereo_input(left, right):
    """Concatenated views shifted to zero-centred ``[-0.5, 0.5]``."""
    return np.concatenate([left, right], axis=2) - 0.5


def loss_and_grads(model, inp, x, y, d):
    """Mean point loss at feature coordinates ``(x, y)`` and gradients for all parameters."""
    feat, cache = net_forward(model.net, inp)
    q = interp(feat, x, y)
    raw, hcache = head_forward(model.head, q)
    loss, g_raw = point_loss(model.kind, raw, d)
    n = loss.size
    hgrads, g_q = head_backward(model.head, hcache, g_raw / n)
    g_feat = interp_backward(feat.shape, x, y, g_q)
    ngrads, _ = net_backward(model.net, cache, g_feat)
    return float(loss.mean()), ngrads + hgrads


# -- training ---------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    n_points: int = 2048
    crop: int = 64
    epochs: int = 10
    lr: float = 1e-3
    loss: str = "bimodal"
    sampling: str = "random"
    rho: int = 10
    gt_sr: int = 4
    augment: tuple = ("chromatic", "vflip")
    seed: int = 0

    def validate(self):
        if self.n_points < 2 or self.n_points % 2:
            raise ValueError("n_points must be even and >= 2")
        if self.gt_sr not in (1, 2, 4):
            raise ValueError("gt_sr must be 1, 2 or 4")
        if self.loss not in OUTPUT_DIMS:
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.sampling not in ("random", "dda"):
            raise ValueError(f"unknown sampling {self.sampling!r}")
        if self.rho < 0 or self.epochs < 0 or self.lr < 0:
            raise ValueError("rho, epochs and lr must be non-negative")


@dataclass
class TrainState:
    adam: AdamState
    epoch: int = 0
    trace: list = field(default_factory=list)


def supervision_gt(sample, gt_sr):
    """Ground truth at ``gt_sr`` times the input resolution."""
    if sample.sr % gt_sr:
        raise ValueError(f"cannot derive x{gt_sr} ground truth from x{sample.sr}")
    return downsample_nearest(sample.gt, sample.sr // gt_sr)


def gt_to_feature(coord, factor, size):
    """Continuous coordinate on an ``factor``-times grid to the input grid (pixel-centre aligned)."""
    return np.clip((coord + 0.5) / factor - 0.5, 0.0, size - 1)


def draw_step(sample, cfg, rng):
    """Crop, augmentation and training points for one step."""
    sample = augment(sample, rng, cfg.augment)
    h, w = sample.left.shape[:2]
    c = cfg.crop
    if c > h or c > w:
        raise ValueError(f"crop {c} larger than image {h}x{w}")
    cy = int(rng.integers(0, h - c + 1))
    cx = int(rng.integers(0, w - c + 1))
    g = cfg.gt_sr
    gt = supervision_gt(sample, g)[g * cy:g * (cy + c), g * cx:g * (cx + c)]
    inp = stereo_input(sample.left[cy:cy + c, cx:cx + c], sample.right[cy:cy + c, cx:cx + c])
    if cfg.sampling == "dda":
        mask = dilate(boundary_mask(gt, 1.0 / sample.d_max), cfg.rho)
        xg, yg, d = dda_sample(gt, mask, cfg.n_points, rng)
    else:
        xg, yg, d = uniform_sample(gt, cfg.n_points, rng)
    return inp, gt_to_feature(xg, g, c), gt_to_feature(yg, g, c), d


def train(model, dataset, cfg, state=None, on_epoch=None):
    """Train ``model`` in place; returns the :class:`TrainState` (Adam moments, epoch, loss trace).

    Epoch ``e`` draws all its randomness from ``default_rng([seed, e])`` so a run
    resumed from a saved state continues bit-identically.
    """
    cfg.validate()
    if not dataset:
        raise ValueError("empty dataset")
    if cfg.loss != model.kind:
        raise ValueError(f"config loss {cfg.loss!r} does not match model head {model.kind!r}")
    params = model.params()
    state = state or TrainState(AdamState.like(params, cfg.lr))
    while state.epoch < cfg.epochs:
        rng = np.random.default_rng([cfg.seed, state.epoch])
        losses = []
        for idx in rng.permutation(len(dataset)):
            inp, x, y, d = draw_step(dataset[idx], cfg, rng)
            loss, grads = loss_and_grads(model, inp, x, y, d)
            losses.append(loss)
            params = adam_step(state.adam, params, grads, cfg.lr)
            model.set_params(params)
        state.trace.append(float(np.mean(losses)))
        state.epoch += 1
        if on_epoch is not None:
            on_epoch(state)
    return state


def mean_loss(model, sample, cfg, rng):
    """Loss of ``model`` on freshly drawn points of one sample (no update)."""
    inp, x, y, d = draw_step(sample, replace(cfg, augment=()), rng)
    feat, _ = net_forward(model.net, inp, keep_cache=False)
    raw, _ = head_forward(model.head, interp(feat, x, y))
    return float(point_loss(model.kind, raw, d)[0].mean())


# -- inference ----------------------------------------------------------------------

@dataclass
class InferStats:
    backbone_bytes: int = 0
    peak_query_buffer: int = 0
    n_batches: int = 0


def query_grid(in_w, in_h, out_w, out_h):
    """Continuous input-grid coordinates of every output pixel centre (row-major)."""
    sx, sy = out_w / in_w, out_h / in_h
    x = gt_to_feature(np.arange(out_w, dtype=np.float64), sx, in_w)
    y = gt_to_feature(np.arange(out_h, dtype=np.float64), sy, in_h)
    return x, y


def infer_grid(model, left, right, out_w, out_h, batch=16384, uncertainty=True, stats=None):
    """Query the model on an ``out_h x out_w`` grid.

    Returns a dict with ``disparity`` (normalized) and, depending on the head,
    ``uncertainty``, ``pi``, ``mu1``, ``mu2``.  The backbone runs once at input
    resolution; queries are processed ``batch`` at a time.
    """
    if out_w < 1 or out_h < 1:
        raise ValueError("output size must be positive")
    h, w = left.shape[:2]
    tally = []
    feat, _ = net_forward(model.net, stereo_input(left, right), keep_cache=False, tally=tally)
    if stats is not None:
        stats.backbone_bytes = sum(tally)
    xs, ys = query_grid(w, h, out_w, out_h)
    names = {"bimodal": ("disparity", "uncertainty", "pi", "mu1", "mu2"),
             "unimodal": ("disparity", "uncertainty"),
             "l1": ("disparity",)}[model.kind]
    if not uncertainty:
        names = tuple(n for n in names if n != "uncertainty")
    out = {n: np.empty(out_h * out_w) for n in names}
    total = out_h * out_w
    for start in range(0, total, batch):
        idx = np.arange(start, min(start + batch, total))
        qx, qy = xs[idx % out_w], ys[idx // out_w]
        raw, _ = head_forward(model.head, interp(feat, qx, qy))
        if stats is not None:
            stats.peak_query_buffer = max(stats.peak_query_buffer, idx.size)
            stats.n_batches += 1
        if model.kind == "bimodal":
            p = decode_params(raw)
            vals = {"disparity": mixture.select_mode(p), "pi": p.pi, "mu1": p.mu1, "mu2": p.mu2}
            if uncertainty:
                vals["uncertainty"] = mixture.entropy(p)
        elif model.kind == "unimodal":
            p = decode_unimodal(raw)
            vals = {"disparity": p.mu}
            if uncertainty:
                vals["uncertainty"] = mixture.unimodal_entropy(p)
        else:
            vals = {"disparity": raw[:, 0]}
        for n in names:
            out[n][idx] = vals[n]
    return {n: v.reshape(out_h, out_w) for n, v in out.items()}
