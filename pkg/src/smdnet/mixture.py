"""Closed-form math for the disparity output representations.

The bimodal head predicts a two-component Laplacian mixture over normalized
disparity.  Everything here is vectorized: parameter fields may be scalars or
arrays that broadcast against the query disparity ``d``.
"""

from typing import NamedTuple

import numpy as np

PI_MIN = 1e-4
B_MIN = 1e-4
B_MAX = 1.0

# entropy quadrature
ENTROPY_WINDOW = 20.0
ENTROPY_INTERVALS = 2048
_GRADE = (0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 48.0)


class MixtureParams(NamedTuple):
    pi: np.ndarray
    mu1: np.ndarray
    b1: np.ndarray
    mu2: np.ndarray
    b2: np.ndarray

    @classmethod
    def from_array(cls, arr):
        arr = np.asarray(arr, dtype=np.float64)
        return cls(*(arr[..., k] for k in range(5)))

    def as_array(self):
        return np.stack(np.broadcast_arrays(*map(np.asarray, self)), axis=-1)

    def swapped(self):
        """Same distribution with the component labels exchanged."""
        return MixtureParams(1.0 - np.asarray(self.pi), self.mu2, self.b2, self.mu1, self.b1)


class UnimodalParams(NamedTuple):
    mu: np.ndarray
    b: np.ndarray


def _component_logs(params, d):
    pi, mu1, b1, mu2, b2 = (np.asarray(v, dtype=np.float64) for v in params)
    d = np.asarray(d, dtype=np.float64)
    a1 = np.log(pi) - np.log(2.0 * b1) - np.abs(d - mu1) / b1
    a2 = np.log1p(-pi) - np.log(2.0 * b2) - np.abs(d - mu2) / b2
    return a1, a2


def pdf(params, d):
    """Mixture density at disparity ``d``."""
    pi, mu1, b1, mu2, b2 = (np.asarray(v, dtype=np.float64) for v in params)
    d = np.asarray(d, dtype=np.float64)
    return (pi / (2.0 * b1) * np.exp(-np.abs(d - mu1) / b1)
            + (1.0 - pi) / (2.0 * b2) * np.exp(-np.abs(d - mu2) / b2))


def log_pdf(params, d):
    a1, a2 = _component_logs(params, d)
    return np.logaddexp(a1, a2)


def nll(params, d):
    return -log_pdf(params, d)


def nll_grad(params, d):
    """Analytic gradient of :func:`nll` w.r.t. (pi, mu1, b1, mu2, b2).

    Returns an array with a trailing axis of size 5.  At ``d == mu`` the
    subgradient of ``|d - mu|`` is taken as zero.
    """
    pi, mu1, b1, mu2, b2 = (np.asarray(v, dtype=np.float64) for v in params)
    d = np.asarray(d, dtype=np.float64)
    a1, a2 = _component_logs(params, d)
    lse = np.logaddexp(a1, a2)
    r1 = np.exp(a1 - lse)
    r2 = np.exp(a2 - lse)
    e1 = d - mu1
    e2 = d - mu2
    g_pi = -(r1 / pi - r2 / (1.0 - pi))
    g_mu1 = -r1 * np.sign(e1) / b1
    g_b1 = -r1 * (np.abs(e1) / b1 - 1.0) / b1
    g_mu2 = -r2 * np.sign(e2) / b2
    g_b2 = -r2 * (np.abs(e2) / b2 - 1.0) / b2
    return np.stack(np.broadcast_arrays(g_pi, g_mu1, g_b1, g_mu2, g_b2), axis=-1)


def select_mode(params):
    """Point estimate: the component mean carrying the higher density (ties go to mu1)."""
    mu1 = np.asarray(params.mu1, dtype=np.float64)
    mu2 = np.asarray(params.mu2, dtype=np.float64)
    return np.where(log_pdf(params, mu1) >= log_pdf(params, mu2), mu1, mu2)


def entropy_nodes(params, intervals=ENTROPY_INTERVALS, window=ENTROPY_WINDOW):
    """Quadrature nodes and Simpson weights for integrals against the mixture.

    The window ``[min(mu) - T*max(b), max(mu) + T*max(b)]`` is cut at both
    means (the density kinks) and at graded offsets ``mu_i +- c*b_i``, so narrow
    components are resolved even when the other scale is large.  Each piece is
    integrated with composite Simpson; ``intervals`` is the total count.
    Truncation drops a mass of at most ``exp(-T)`` per component.
    """
    pi, mu1, b1, mu2, b2 = np.broadcast_arrays(*(np.asarray(v, dtype=np.float64) for v in params))
    bmax = np.maximum(b1, b2)
    lo = np.minimum(mu1, mu2) - window * bmax
    hi = np.maximum(mu1, mu2) + window * bmax
    cuts = [lo, hi, mu1, mu2]
    for mu, b in ((mu1, b1), (mu2, b2)):
        for c in _GRADE:
            cuts += [mu - c * b, mu + c * b]
    cuts = np.stack(cuts, axis=-1)
    cuts = np.sort(np.clip(cuts, lo[..., None], hi[..., None]), axis=-1)
    n_pieces = cuts.shape[-1] - 1
    m = int(np.ceil(intervals / n_pieces))
    m += m % 2
    left = cuts[..., :-1, None]
    width = (cuts[..., 1:] - cuts[..., :-1])[..., None]
    t = np.linspace(0.0, 1.0, m + 1)
    nodes = left + width * t
    simpson = np.ones(m + 1)
    simpson[1:-1:2] = 4.0
    simpson[2:-1:2] = 2.0
    weights = width * (simpson / (3.0 * m))
    shape = nodes.shape[:-2] + (-1,)
    return nodes.reshape(shape), weights.reshape(shape)


def integrate(params, fn, intervals=ENTROPY_INTERVALS, window=ENTROPY_WINDOW):
    """Integrate ``fn(params, d)`` over the truncation window."""
    nodes, weights = entropy_nodes(params, intervals, window)
    expanded = MixtureParams(*(np.asarray(v, dtype=np.float64)[..., None] for v in params))
    return np.sum(weights * fn(expanded, nodes), axis=-1)


def _neg_p_log_p(params, d):
    lp = log_pdf(params, d)
    return -np.exp(lp) * lp


def entropy(params, intervals=ENTROPY_INTERVALS, window=ENTROPY_WINDOW):
    """Differential entropy in nats, by quadrature."""
    return integrate(params, _neg_p_log_p, intervals, window)


def unimodal_nll(params, d):
    mu = np.asarray(params.mu, dtype=np.float64)
    b = np.asarray(params.b, dtype=np.float64)
    return np.log(2.0 * b) + np.abs(np.asarray(d, dtype=np.float64) - mu) / b


def unimodal_grad(params, d):
    """Gradient of :func:`unimodal_nll` w.r.t. (mu, b), trailing axis of size 2."""
    mu = np.asarray(params.mu, dtype=np.float64)
    b = np.asarray(params.b, dtype=np.float64)
    e = np.asarray(d, dtype=np.float64) - mu
    return np.stack(np.broadcast_arrays(-np.sign(e) / b, 1.0 / b - np.abs(e) / b ** 2), axis=-1)


def unimodal_entropy(params):
    return 1.0 + np.log(2.0 * np.asarray(params.b, dtype=np.float64))


def l1_loss(pred, d):
    return np.abs(np.asarray(pred, dtype=np.float64) - d)


def l1_grad(pred, d):
    return np.sign(np.asarray(pred, dtype=np.float64) - d)
