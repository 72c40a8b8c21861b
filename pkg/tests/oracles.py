"""Independent reference implementations used by the tests."""

import numpy as np


def central_diff(fn, x, h=1e-6):
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    for k in range(x.size):
        up, dn = x.copy(), x.copy()
        up.flat[k] += h
        dn.flat[k] -= h
        out.flat[k] = (fn(up) - fn(dn)) / (2 * h)
    return out


def boundary_mask_loops(gt, threshold):
    h, w = gt.shape
    out = np.zeros((h, w), dtype=bool)
    for i in range(h):
        for j in range(w):
            for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                a, b = i + di, j + dj
                if 0 <= a < h and 0 <= b < w and abs(gt[a, b] - gt[i, j]) > threshold:
                    out[i, j] = True
    return out


def see_loops(pred, gt, boundary, k, d_max=1.0):
    h, w = gt.shape
    r = k // 2
    out = []
    for i in range(h):
        for j in range(w):
            if not boundary[i, j]:
                continue
            best = float("inf")
            for a in range(max(0, i - r), min(h, i + r + 1)):
                for b in range(max(0, j - r), min(w, j + r + 1)):
                    best = min(best, abs(pred[i, j] - gt[a, b]))
            out.append(best * d_max)
    return out


def report_loops(pred, gt, d_max=1.0):
    """Straight-line version of metrics.evaluate returning a plain dict."""
    boundary = boundary_mask_loops(gt, 1.0 / d_max)
    s3 = see_loops(pred, gt, boundary, 3, d_max)
    s5 = see_loops(pred, gt, boundary, 5, d_max)
    e = [abs(p - g) * d_max for p, g in zip(pred.ravel().tolist(), gt.ravel().tolist())]

    def avg(v):
        return sum(v) / len(v) if v else 0.0

    def pct(v, t):
        return 100.0 * sum(1 for x in v if x > t) / len(v) if v else 0.0

    return {
        "see3_avg": avg(s3), "see3_sigma1": pct(s3, 1), "see3_sigma2": pct(s3, 2),
        "see5_avg": avg(s5), "see5_sigma1": pct(s5, 1), "see5_sigma2": pct(s5, 2),
        "epe_avg": avg(e), "epe_sigma1": pct(e, 1), "epe_sigma2": pct(e, 2), "epe_sigma3": pct(e, 3),
        "n_boundary": len(s3), "n_pixels": len(e),
    }


def conv_loops(x, w, b, stride=1):
    """Direct 3x3 cross-correlation with zero padding 1."""
    h, wd, cin = x.shape
    cout = w.shape[3]
    ho, wo = (h + stride - 1) // stride, (wd + stride - 1) // stride
    out = np.zeros((ho, wo, cout))
    for i in range(ho):
        for j in range(wo):
            for o in range(cout):
                acc = b[o]
                for ky in range(3):
                    for kx in range(3):
                        r, c = i * stride + ky - 1, j * stride + kx - 1
                        if 0 <= r < h and 0 <= c < wd:
                            for ci in range(cin):
                                acc += x[r, c, ci] * w[ky, kx, ci, o]
                out[i, j, o] = acc
    return out


def adam_scalar(grad_fn, w, lr, steps, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t in range(1, steps + 1):
        g = grad_fn(w)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w -= lr * (m / (1 - b1 ** t)) / ((v / (1 - b2 ** t)) ** 0.5 + eps)
    return w
