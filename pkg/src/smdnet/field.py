"""Continuous queries into a feature grid plus the MLP head on top.

Feature grids are ``(H, W, D)`` arrays; a query ``(x, y)`` lives in
``[0, W-1] x [0, H-1]`` with ``x`` along columns.
"""

import numpy as np

from .mixture import B_MAX, B_MIN, PI_MIN, MixtureParams, UnimodalParams

FULL_WIDTHS = (1024, 512, 256, 128)
OMEGA = 1.0

OUTPUT_DIMS = {"bimodal": 5, "unimodal": 2, "l1": 1}


# -- bilinear interpolation ---------------------------------------------------

def _corners(shape, x, y):
    h, w = shape[:2]
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.any(~np.isfinite(x)) or np.any(~np.isfinite(y)) \
            or np.any(x < 0) or np.any(x > w - 1) or np.any(y < 0) or np.any(y > h - 1):
        raise ValueError("out of domain")
    x0 = np.minimum(np.floor(x).astype(np.int64), w - 2)
    y0 = np.minimum(np.floor(y).astype(np.int64), h - 2)
    fx = x - x0
    fy = y - y0
    rows = np.stack([y0, y0, y0 + 1, y0 + 1], axis=-1)
    cols = np.stack([x0, x0 + 1, x0, x0 + 1], axis=-1)
    weights = np.stack([(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy], axis=-1)
    return rows, cols, weights


def interp_weights(shape, x, y):
    """Row/column indices and bilinear weights of the four corners of each query."""
    return _corners(shape, x, y)


def interp(grid, x, y):
    """Bilinearly interpolate ``grid`` at continuous coordinates; shape ``x.shape + (D,)``."""
    grid = np.asarray(grid)
    rows, cols, weights = _corners(grid.shape, x, y)
    return np.einsum("...k,...kd->...d", weights, grid[rows, cols])


def interp_backward(shape, x, y, upstream):
    """Scatter ``upstream`` (``x.shape + (D,)``) back onto a zero grid of ``shape``."""
    h, w, d = shape
    rows, cols, weights = _corners(shape, x, y)
    flat = (rows * w + cols).reshape(-1)
    contrib = (weights[..., None] * np.asarray(upstream)[..., None, :]).reshape(-1, d)
    out = np.zeros((h * w, d))
    np.add.at(out, flat, contrib)
    return out.reshape(h, w, d)


# -- MLP head -----------------------------------------------------------------

class MlpHead:
    """Fully connected head: sine hidden layers and a sigmoid output layer.

    ``activations`` holds one tag per layer; ``"identity"`` exists for tests.
    """

    def __init__(self, widths, omega=OMEGA, activations=None):
        self.widths = tuple(int(w) for w in widths)
        if len(self.widths) < 2:
            raise ValueError("head needs at least an input and an output width")
        self.omega = float(omega)
        n = len(self.widths) - 1
        self.activations = tuple(activations) if activations is not None \
            else ("sine",) * (n - 1) + ("sigmoid",)
        if len(self.activations) != n:
            raise ValueError("one activation tag per layer")
        self.weights = [np.zeros((a, b)) for a, b in zip(self.widths[:-1], self.widths[1:])]
        self.biases = [np.zeros(b) for b in self.widths[1:]]

    @property
    def in_dim(self):
        return self.widths[0]

    @property
    def out_dim(self):
        return self.widths[-1]

    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def set_params(self, arrays):
        arrays = list(arrays)
        self.weights = [np.array(a, dtype=np.float64) for a in arrays[0::2]]
        self.biases = [np.array(a, dtype=np.float64) for a in arrays[1::2]]

    def copy(self):
        other = MlpHead(self.widths, self.omega, self.activations)
        other.set_params(self.params())
        return other


def head_widths(in_dim, out_dim=5, width_factor=1 / 8):
    hidden = [max(1, int(round(w * width_factor))) for w in FULL_WIDTHS]
    return (in_dim, *hidden, out_dim)


def sine_init(head, seed):
    """Initialise ``head`` in place with the usual sine-network scheme."""
    rng = np.random.default_rng(seed)
    for k, w in enumerate(head.weights):
        fan_in = w.shape[0]
        bound = 1.0 / fan_in if k == 0 else np.sqrt(6.0 / fan_in) / head.omega
        head.weights[k] = rng.uniform(-bound, bound, size=w.shape)
        head.biases[k] = rng.uniform(-bound, bound, size=head.biases[k].shape)
    return head


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def head_forward(head, feat):
    """Run the head on ``feat`` of shape ``(..., D)``; returns ``(out, cache)``."""
    a = np.asarray(feat, dtype=np.float64)
    if a.shape[-1] != head.in_dim:
        raise ValueError(f"feature dimension {a.shape[-1]} does not match head input {head.in_dim}")
    cache = []
    for w, b, act in zip(head.weights, head.biases, head.activations):
        z = a @ w + b
        cache.append((a, z))
        if act == "sine":
            a = np.sin(head.omega * z)
        elif act == "sigmoid":
            a = _sigmoid(z)
        elif act == "identity":
            a = z
        else:
            raise ValueError(f"unknown activation {act!r}")
    cache.append(a)
    return a, cache


def head_backward(head, cache, upstream):
    """Backprop ``upstream`` (d loss / d output) through the head.

    Returns ``(grads, d_feat)`` where ``grads`` is ordered like ``head.params()``.
    """
    out = cache[-1]
    g = np.asarray(upstream, dtype=np.float64)
    grads = []
    for k in reversed(range(len(head.weights))):
        a, z = cache[k]
        act = head.activations[k]
        if act == "sine":
            g = g * head.omega * np.cos(head.omega * z)
        elif act == "sigmoid":
            s = out if k == len(head.weights) - 1 else _sigmoid(z)
            g = g * s * (1.0 - s)
        a2 = a.reshape(-1, a.shape[-1])
        g2 = g.reshape(-1, g.shape[-1])
        grads.append(g2.sum(axis=0))
        grads.append(a2.T @ g2)
        g = g @ head.weights[k].T
    grads.reverse()
    return grads, g


# -- decoding -----------------------------------------------------------------

def decode_params(raw, b_min=B_MIN, b_max=B_MAX):
    """Map sigmoid outputs in (0,1)^5 to mixture parameters."""
    raw = np.asarray(raw, dtype=np.float64)
    return MixtureParams(
        np.clip(raw[..., 0], PI_MIN, 1.0 - PI_MIN),
        raw[..., 1],
        b_min + raw[..., 2] * (b_max - b_min),
        raw[..., 3],
        b_min + raw[..., 4] * (b_max - b_min),
    )


def decode_backward(raw, grad_params, b_min=B_MIN, b_max=B_MAX):
    """Chain d loss / d params (trailing axis 5) back to the raw outputs."""
    raw = np.asarray(raw, dtype=np.float64)
    g = np.array(grad_params, dtype=np.float64)
    inside = (raw[..., 0] > PI_MIN) & (raw[..., 0] < 1.0 - PI_MIN)
    g[..., 0] *= inside
    g[..., 2] *= b_max - b_min
    g[..., 4] *= b_max - b_min
    return g


def decode_unimodal(raw, b_min=B_MIN, b_max=B_MAX):
    raw = np.asarray(raw, dtype=np.float64)
    return UnimodalParams(raw[..., 0], b_min + raw[..., 1] * (b_max - b_min))


def decode_unimodal_backward(raw, grad_params, b_min=B_MIN, b_max=B_MAX):
    g = np.array(grad_params, dtype=np.float64)
    g[..., 1] *= b_max - b_min
    return g
