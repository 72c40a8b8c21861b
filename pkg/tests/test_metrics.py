import numpy as np
import pytest

from smdnet import metrics as mt

from .oracles import report_loops, see_loops


def test_see_examples():
    gt = np.full((3, 3), 4.0)
    pred = np.full((3, 3), 5.0)
    boundary = np.zeros((3, 3), dtype=bool)
    boundary[1, 1] = True
    assert mt.see_k(pred, gt, boundary, 3)[1, 1] == 1.0
    gt[0, 2] = 5.0
    assert mt.see_k(pred, gt, boundary, 3)[1, 1] == 0.0


def test_see_bounded_by_pointwise_error():
    rng = np.random.default_rng(0)
    gt = rng.integers(0, 5, (10, 10)).astype(float)
    pred = gt + rng.normal(size=gt.shape)
    boundary = np.ones_like(gt, dtype=bool)
    for k in (3, 5):
        assert np.all(mt.see_k(pred, gt, boundary, k) <= np.abs(pred - gt) + 1e-15)


def test_see_requires_odd_k_and_matching_shapes():
    z = np.zeros((4, 4))
    with pytest.raises(ValueError):
        mt.see_k(z, z, z.astype(bool), 4)
    with pytest.raises(ValueError, match="resolution mismatch"):
        mt.see_k(z, np.zeros((4, 5)), z.astype(bool), 3)


def test_epe():
    rng = np.random.default_rng(1)
    gt = rng.random((3, 3))
    assert not mt.epe(gt, gt).any()
    np.testing.assert_allclose(mt.epe(gt + 0.7, gt), 0.7)
    pred = rng.random((3, 3))
    for i in range(3):
        for j in range(3):
            assert mt.epe(pred, gt)[i, j] == abs(pred[i, j] - gt[i, j])
    with pytest.raises(ValueError):
        mt.epe(gt, np.zeros((2, 3)))


def test_sigma():
    assert mt.sigma(np.array([0.5, 2.5, 3.5, 0.1]), 2) == 50.0
    assert mt.sigma(np.zeros(7), 1) == 0.0
    assert mt.sigma(np.full(5, 2.0), 2.0) == 0.0
    with pytest.raises(ValueError):
        mt.sigma(np.array([]), 1)


def test_evaluate_perfect_and_shifted():
    rng = np.random.default_rng(2)
    gt = rng.integers(1, 6, (12, 12)).astype(float)
    rep = mt.evaluate(gt, gt)
    assert all(v == 0 for k, v in rep.to_dict().items() if not k.startswith("n_"))
    rep = mt.evaluate(gt + 2, gt)
    assert rep.epe_avg == pytest.approx(2.0)
    assert rep.epe_sigma1 == 100.0 and rep.epe_sigma3 == 0.0
    assert rep.see3_avg <= 2.0 and rep.see5_avg <= 2.0


def test_evaluate_normalized_units():
    rng = np.random.default_rng(3)
    gt = rng.integers(1, 6, (9, 9)).astype(float)
    pred = gt + rng.normal(size=gt.shape)
    raw = mt.evaluate(pred, gt).to_dict()
    norm = mt.evaluate(pred / 8.0, gt / 8.0, d_max=8.0).to_dict()
    for k in raw:
        assert norm[k] == pytest.approx(raw[k], rel=1e-12, abs=1e-12)


def test_evaluate_matches_scalar_oracle():
    rng = np.random.default_rng(4)
    for _ in range(10):
        gt = rng.integers(0, 4, (9, 9)) * 1.5
        pred = gt + rng.normal(scale=1.5, size=gt.shape)
        got = mt.evaluate(pred, gt).to_dict()
        want = report_loops(pred, gt)
        for k in want:
            assert got[k] == pytest.approx(want[k], rel=1e-12, abs=1e-12), k


def test_transpose_invariance_and_see_ordering():
    rng = np.random.default_rng(5)
    gt = rng.integers(0, 4, (11, 9)) * 2.0
    pred = gt + rng.normal(size=gt.shape)
    a = mt.evaluate(pred, gt).to_dict()
    b = mt.evaluate(pred.T, gt.T).to_dict()
    for k in a:
        assert a[k] == pytest.approx(b[k], rel=1e-12)
    assert a["see5_avg"] <= a["see3_avg"]


def test_aggregate_is_pixel_weighted():
    rng = np.random.default_rng(6)
    reps = []
    for shape in ((8, 8), (12, 10)):
        gt = rng.integers(0, 4, shape) * 2.0
        reps.append(mt.evaluate(gt + rng.normal(size=shape), gt))
    agg = mt.aggregate(reps)
    want = sum(r.epe_avg * r.n_pixels for r in reps) / sum(r.n_pixels for r in reps)
    assert agg.epe_avg == pytest.approx(want, rel=1e-12)
    want = sum(r.see3_avg * r.n_boundary for r in reps) / sum(r.n_boundary for r in reps)
    assert agg.see3_avg == pytest.approx(want, rel=1e-12)


def test_see_loops_agree_with_vectorized():
    rng = np.random.default_rng(7)
    gt = rng.random((6, 7))
    pred = rng.random((6, 7))
    boundary = rng.random((6, 7)) < 0.5
    got = mt.see_k(pred, gt, boundary, 5)
    np.testing.assert_allclose(got[boundary], see_loops(pred, gt, boundary, 5), rtol=0, atol=0)
