import numpy as np
import pytest

from smdnet import field as fd
from smdnet import mixture as mx
from smdnet.field import MlpHead

from .oracles import central_diff


def test_interp_reproduces_knots():
    rng = np.random.default_rng(0)
    grid = rng.normal(size=(5, 6, 3))
    for i in range(5):
        for j in range(6):
            np.testing.assert_array_equal(fd.interp(grid, j, i), grid[i, j])


def test_interp_symmetric_midpoint():
    grid = np.array([[0.0, 1.0], [0.0, 1.0]])[..., None]
    assert fd.interp(grid, 0.5, 0.5)[0] == pytest.approx(0.5)


def test_interp_exact_on_linear_function():
    ys, xs = np.mgrid[0:7, 0:9]
    grid = (2.0 * xs + 3.0 * ys)[..., None]
    rng = np.random.default_rng(1)
    qx, qy = rng.uniform(0, 8, 100), rng.uniform(0, 6, 100)
    np.testing.assert_allclose(fd.interp(grid, qx, qy)[:, 0], 2 * qx + 3 * qy, rtol=1e-12)


def test_interp_out_of_domain():
    grid = np.zeros((4, 4, 1))
    with pytest.raises(ValueError, match="out of domain"):
        fd.interp(grid, 3.01, 1.0)
    with pytest.raises(ValueError, match="out of domain"):
        fd.interp(grid, 1.0, -0.1)


def test_interp_weights_convex():
    rng = np.random.default_rng(2)
    grid = rng.normal(size=(6, 5, 4))
    x, y = rng.uniform(0, 4, 300), rng.uniform(0, 5, 300)
    rows, cols, w = fd.interp_weights(grid.shape, x, y)
    assert np.all(w >= 0)
    np.testing.assert_allclose(w.sum(axis=-1), 1.0, rtol=1e-14)
    out = fd.interp(grid, x, y)
    corners = grid[rows, cols]
    assert np.all(out <= corners.max(axis=1) + 1e-12)
    assert np.all(out >= corners.min(axis=1) - 1e-12)


def test_interp_backward_examples():
    g = fd.interp_backward((3, 3, 2), np.array([1.0]), np.array([2.0]), np.ones((1, 2)))
    assert g[2, 1].tolist() == [1.0, 1.0]
    assert g.sum() == 2.0
    g = fd.interp_backward((2, 2, 1), np.array([0.5]), np.array([0.5]), np.ones((1, 1)))
    np.testing.assert_allclose(g[..., 0], 0.25)


def test_interp_backward_finite_difference():
    rng = np.random.default_rng(3)
    grid = rng.normal(size=(4, 5, 2))
    x, y = rng.uniform(0, 4, 3), rng.uniform(0, 3, 3)
    up = rng.normal(size=(3, 2))
    g = fd.interp_backward(grid.shape, x, y, up)
    num = central_diff(lambda v: float((fd.interp(v, x, y) * up).sum()), grid)
    np.testing.assert_allclose(g, num, rtol=1e-6, atol=1e-9)


def test_head_zero_weights():
    head = MlpHead((4, 8, 5))
    out, _ = fd.head_forward(head, np.ones(4))
    np.testing.assert_array_equal(out, 0.5)
    head.biases[-1] = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
    out, _ = fd.head_forward(head, np.ones(4))
    np.testing.assert_allclose(out, 1 / (1 + np.exp(-head.biases[-1])), rtol=1e-14)


def test_head_dimension_mismatch():
    with pytest.raises(ValueError):
        fd.head_forward(MlpHead((4, 8, 5)), np.ones(3))


def straight_line_head(weights, biases, omega, x):
    h1 = np.sin(omega * (x @ weights[0] + biases[0]))
    return 1.0 / (1.0 + np.exp(-(h1 @ weights[1] + biases[1])))


def test_head_forward_matches_straight_line():
    head = fd.sine_init(MlpHead((4, 8, 5)), seed=4)
    x = np.random.default_rng(5).normal(size=(10, 4))
    out, _ = fd.head_forward(head, x)
    np.testing.assert_allclose(out, straight_line_head(head.weights, head.biases, head.omega, x), rtol=1e-10)


def test_head_backward_zero_upstream():
    head = fd.sine_init(MlpHead((4, 8, 5)), seed=0)
    _, cache = fd.head_forward(head, np.ones((3, 4)))
    grads, dx = fd.head_backward(head, cache, np.zeros((3, 5)))
    assert all(not g.any() for g in grads) and not dx.any()


def test_head_backward_linear_layer_outer_product():
    head = MlpHead((3, 2), activations=("identity",))
    x = np.array([1.0, 2.0, 3.0])
    up = np.array([0.5, -1.0])
    _, cache = fd.head_forward(head, x)
    grads, _ = fd.head_backward(head, cache, up)
    np.testing.assert_allclose(grads[0], np.outer(x, up))
    np.testing.assert_allclose(grads[1], up)


def test_head_backward_finite_difference():
    rng = np.random.default_rng(6)
    head = fd.sine_init(MlpHead((4, 8, 5), omega=3.0), seed=1)
    x = rng.normal(size=(3, 4))
    up = rng.normal(size=(3, 5))
    _, cache = fd.head_forward(head, x)
    grads, dx = fd.head_backward(head, cache, up)

    def loss_with(k, v):
        h = head.copy()
        params = h.params()
        params[k] = v
        h.set_params(params)
        return float((fd.head_forward(h, x)[0] * up).sum())

    for k, p in enumerate(head.params()):
        num = central_diff(lambda v: loss_with(k, v), p)
        np.testing.assert_allclose(grads[k], num, rtol=1e-4, atol=1e-8)
    num = central_diff(lambda v: float((fd.head_forward(head, v)[0] * up).sum()), x)
    np.testing.assert_allclose(dx, num, rtol=1e-4, atol=1e-8)


def test_decode_params():
    p = fd.decode_params(np.full(5, 0.5))
    assert p.pi == 0.5 and p.mu1 == 0.5 and p.mu2 == 0.5
    assert p.b1 == pytest.approx(mx.B_MIN + 0.5 * (mx.B_MAX - mx.B_MIN))
    p = fd.decode_params(np.array([0.5, 0.5, 1e-300, 0.5, 0.5]))
    assert p.b1 == pytest.approx(mx.B_MIN)
    raw = np.random.default_rng(7).uniform(size=(1000, 5))
    raw[:10, 0] = 1e-12
    raw[10:20, 0] = 1 - 1e-12
    p = fd.decode_params(raw)
    assert np.all((p.pi > 0) & (p.pi < 1))
    assert np.all(p.b1 >= mx.B_MIN) and np.all(p.b2 >= mx.B_MIN)
    assert np.all(np.isfinite(mx.pdf(p, raw[:, 1])))


def test_sine_init():
    a = fd.sine_init(MlpHead((32, 128, 64, 32, 16, 5)), seed=9)
    b = fd.sine_init(MlpHead((32, 128, 64, 32, 16, 5)), seed=9)
    for x, y in zip(a.params(), b.params()):
        np.testing.assert_array_equal(x, y)
    assert np.abs(a.weights[0]).max() <= 1 / 32
    for w in a.weights[1:]:
        assert np.abs(w).max() <= np.sqrt(6 / w.shape[0]) / a.omega
    _, cache = fd.head_forward(a, np.random.default_rng(0).normal(size=(50, 32)))
    for k in range(1, 5):
        assert np.all(np.abs(cache[k][0]) <= 1.0)


def test_head_widths():
    assert fd.head_widths(32) == (32, 128, 64, 32, 16, 5)
    assert fd.head_widths(32, 5, 1.0) == (32, 1024, 512, 256, 128, 5)
