"""Boundary-aware disparity error metrics.

All errors are reported in raw disparity pixels: pass raw disparities, or
normalized ones together with ``d_max``.
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from .sampling import boundary_mask

SEE_DELTAS = (1, 2)
EPE_DELTAS = (1, 2, 3)


def _check(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"resolution mismatch: pred {pred.shape} vs gt {gt.shape}")
    return pred, gt


def see_k(pred, gt, boundary, k, d_max=1.0):
    """Soft edge error on boundary pixels (NaN elsewhere).

    For each flagged pixel, the smallest ``|pred(p) - gt(q)|`` over the ``k x k``
    ground-truth patch centred at ``p``, clipped at the image border.
    """
    pred, gt = _check(pred, gt)
    boundary = np.asarray(boundary, dtype=bool)
    if boundary.shape != gt.shape:
        raise ValueError("resolution mismatch: boundary mask")
    if k % 2 != 1:
        raise ValueError("k must be odd")
    r = k // 2
    h, w = gt.shape
    best = np.full(gt.shape, np.inf)
    padded = np.pad(gt, r, mode="constant", constant_values=np.nan)
    for dy in range(k):
        for dx in range(k):
            err = np.abs(pred - padded[dy:dy + h, dx:dx + w])
            np.fmin(best, err, out=best)
    out = np.full(gt.shape, np.nan)
    out[boundary] = best[boundary] * d_max
    return out


def epe(pred, gt, d_max=1.0):
    pred, gt = _check(pred, gt)
    return np.abs(pred - gt) * d_max


def sigma(err, delta):
    """Percentage of entries with error strictly above ``delta`` (NaNs ignored)."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    err = np.asarray(err, dtype=np.float64)
    err = err[~np.isnan(err)]
    if err.size == 0:
        raise ValueError("empty error field")
    return 100.0 * np.count_nonzero(err > delta) / err.size


@dataclass
class ErrorReport:
    see3_avg: float = 0.0
    see3_sigma1: float = 0.0
    see3_sigma2: float = 0.0
    see5_avg: float = 0.0
    see5_sigma1: float = 0.0
    see5_sigma2: float = 0.0
    epe_avg: float = 0.0
    epe_sigma1: float = 0.0
    epe_sigma2: float = 0.0
    epe_sigma3: float = 0.0
    n_boundary: int = 0
    n_pixels: int = 0
    # per-region error sums, kept so reports aggregate exactly
    sums: dict = field(default_factory=dict, repr=False)

    def to_dict(self):
        out = asdict(self)
        out.pop("sums")
        return out

    def to_text(self):
        return "".join(f"{k} = {v}\n" for k, v in self.to_dict().items())


def _stats(err, deltas):
    err = err[~np.isnan(err)]
    if err.size == 0:
        return {"sum": 0.0, "n": 0, **{f"gt{d}": 0 for d in deltas}}
    return {"sum": float(err.sum()), "n": int(err.size),
            **{f"gt{d}": int(np.count_nonzero(err > d)) for d in deltas}}


def _report_from_sums(sums):
    def pct(part, whole):
        return 100.0 * part / whole if whole else 0.0

    s3, s5, e = sums["see3"], sums["see5"], sums["epe"]
    return ErrorReport(
        see3_avg=s3["sum"] / s3["n"] if s3["n"] else 0.0,
        see3_sigma1=pct(s3["gt1"], s3["n"]),
        see3_sigma2=pct(s3["gt2"], s3["n"]),
        see5_avg=s5["sum"] / s5["n"] if s5["n"] else 0.0,
        see5_sigma1=pct(s5["gt1"], s5["n"]),
        see5_sigma2=pct(s5["gt2"], s5["n"]),
        epe_avg=e["sum"] / e["n"] if e["n"] else 0.0,
        epe_sigma1=pct(e["gt1"], e["n"]),
        epe_sigma2=pct(e["gt2"], e["n"]),
        epe_sigma3=pct(e["gt3"], e["n"]),
        n_boundary=s3["n"],
        n_pixels=e["n"],
        sums=sums,
    )


def evaluate(pred, gt, d_max=1.0):
    """Full report for one prediction; the boundary mask uses a 1-pixel jump, no dilation."""
    pred, gt = _check(pred, gt)
    boundary = boundary_mask(gt, 1.0 / d_max)
    sums = {
        "see3": _stats(see_k(pred, gt, boundary, 3, d_max), SEE_DELTAS),
        "see5": _stats(see_k(pred, gt, boundary, 5, d_max), SEE_DELTAS),
        "epe": _stats(epe(pred, gt, d_max), EPE_DELTAS),
    }
    return _report_from_sums(sums)


def aggregate(reports):
    """Pool several reports as if all their pixels came from one image."""
    reports = list(reports)
    if not reports:
        raise ValueError("nothing to aggregate")
    sums = {}
    for region in ("see3", "see5", "epe"):
        keys = reports[0].sums[region].keys()
        sums[region] = {k: sum(r.sums[region][k] for r in reports) for k in keys}
    return _report_from_sums(sums)

