import numpy as np
import pytest

from headblend import numerics as nx
from headblend.numerics import Tensor, finite_difference_gradient, relative_error


def analytic_grad(build, x):
    t = Tensor(x.copy(), requires_grad=True)
    build(t).backward()
    return t.grad


def check(build, x, tol=1e-4, h=1e-5):
    num = finite_difference_gradient(lambda v: float(build(Tensor(v)).data), x, h)
    ana = analytic_grad(build, x)
    err = relative_error(ana, num)
    assert err <= tol, err


def test_matmul_identity():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(nx.matmul(np.eye(2), a).data, a)


def test_matmul_small():
    assert nx.matmul([[1.0, 2.0]], [[3.0], [4.0]]).data.tolist() == [[11.0]]


def test_matmul_shape_error_reports_both():
    with pytest.raises(ValueError, match=r"\(2, 3\).*\(2, 3\)"):
        nx.matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_matmul_gradient_both_sides(rng):
    a, b = rng.normal(size=(5, 7)), rng.normal(size=(7, 3))
    bt = Tensor(b)
    check(lambda t: nx.matmul(t, bt).sum(), a, tol=1e-6)
    at = Tensor(a)
    check(lambda t: nx.matmul(at, t).sum(), b, tol=1e-6)


def test_softmax_examples():
    np.testing.assert_allclose(nx.softmax_last_axis([0.0, 0.0]).data, [0.5, 0.5])
    assert nx.softmax_last_axis([3.0, -np.inf]).data.tolist() == [1.0, 0.0]
    np.testing.assert_allclose(nx.softmax_last_axis([-np.inf] * 3).data, [1 / 3] * 3)


def test_softmax_rejects_nan():
    with pytest.raises(ValueError):
        nx.softmax_last_axis([0.0, np.nan])


def test_softmax_rows_sum_to_one(rng):
    for _ in range(100):
        x = rng.normal(scale=5, size=(rng.integers(1, 6), rng.integers(1, 9)))
        x[rng.random(x.shape) < 0.3] = -np.inf
        y = nx.softmax_last_axis(x).data
        assert (y >= 0).all()
        np.testing.assert_allclose(y.sum(axis=-1), 1.0, atol=1e-12)
        assert (y[np.isneginf(x) & ~np.all(np.isneginf(x), axis=-1, keepdims=True)] == 0).all()


def test_fd_oracle_square():
    g = finite_difference_gradient(lambda v: float(v[0] ** 2), np.array([3.0]), 1e-5)
    assert abs(g[0] - 6.0) <= 1e-6


def test_fd_oracle_softmax_sum_is_flat(rng):
    g = finite_difference_gradient(lambda v: float(nx.softmax_last_axis(v).data.sum()), rng.normal(size=6), 1e-5)
    np.testing.assert_allclose(g, 0.0, atol=1e-6)


def test_fd_rejects_nonfinite():
    with pytest.raises(ValueError):
        finite_difference_gradient(lambda v: float("nan"), np.zeros(2))
    with pytest.raises(ValueError):
        finite_difference_gradient(lambda v: 0.0, np.zeros(2), h=0.0)


def _random_case(rng):
    """One randomly shaped scalar-valued composite of the differentiable ops."""
    kind = rng.integers(9)
    n, m = int(rng.integers(1, 5)), int(rng.integers(1, 5))
    if kind == 0:
        w = Tensor(rng.normal(size=(m, 3)))
        return lambda t: (nx.matmul(t, w) * nx.matmul(t, w)).sum(), rng.normal(size=(n, m))
    if kind == 1:
        c = rng.normal(size=(n, m))
        return lambda t: (nx.softmax_last_axis(t) * c).sum(), rng.normal(size=(n, m))
    if kind == 2:
        mask = np.where(rng.random((n, m)) < 0.3, -np.inf, 0.0)
        mask[:, 0] = 0.0
        c = rng.normal(size=(n, m))
        return lambda t: (nx.softmax_last_axis(t + mask) * c).sum(), rng.normal(size=(n, m))
    if kind == 3:
        c = rng.normal(size=(n, m))
        return lambda t: (nx.sigmoid(t) * c).sum(), rng.normal(scale=3, size=(n, m))
    if kind == 4:
        c = rng.normal(size=(n, m))
        return lambda t: nx.abs_(t - c).mean(), rng.normal(size=(n, m))
    if kind == 5:
        c = rng.normal(size=(n, m))
        return lambda t: (nx.leaky_relu(t) * c).sum(), rng.normal(size=(n, m))
    if kind == 6:
        cin, cout, s = int(rng.integers(1, 3)), int(rng.integers(1, 3)), int(rng.integers(1, 3))
        w, b = Tensor(rng.normal(size=(cout, cin, 3, 3))), Tensor(rng.normal(size=cout))
        hw = int(rng.integers(3, 7))
        c = rng.normal(size=nx.conv2d(np.zeros((cin, hw, hw)), w, b, stride=s, pad=1).shape)
        return lambda t: (nx.conv2d(t, w, b, stride=s, pad=1) * c).sum(), rng.normal(size=(cin, hw, hw))
    if kind == 7:
        c = rng.normal(size=(2, 2 * n, 2 * m))
        return lambda t: (nx.upsample_nearest(t, 2) * c).sum(), rng.normal(size=(2, n, m))
    c = rng.normal(size=(m + 1, n))
    return lambda t: (nx.transpose(nx.concat([t, t[:, :1]], axis=1)) * c).sum(), rng.normal(size=(n, m))


def test_random_ops_match_finite_differences():
    rng = np.random.default_rng(7)
    for _ in range(100):
        build, x = _random_case(rng)
        check(build, x, tol=1e-4)


def test_conv_weight_and_bias_gradients(rng):
    x = Tensor(rng.normal(size=(2, 5, 5)))
    b = Tensor(rng.normal(size=3))
    c = rng.normal(size=(3, 3, 3))
    check(lambda w: (nx.conv2d(x, w, b, stride=2, pad=1) * c).sum(), rng.normal(size=(3, 2, 3, 3)))
    w = Tensor(rng.normal(size=(3, 2, 3, 3)))
    check(lambda bb: (nx.conv2d(x, w, bb, stride=2, pad=1) * c).sum(), rng.normal(size=3))


def test_clip_and_log_gradients(rng):
    check(lambda t: nx.log(nx.clip(t, 0.1, 0.9)).sum(), rng.uniform(0.2, 0.8, size=5))


def test_matmul_associative(rng):
    for _ in range(50):
        a, b, c = (rng.normal(size=(4, 4)) for _ in range(3))
        left = nx.matmul(nx.matmul(a, b), c).data
        right = nx.matmul(a, nx.matmul(b, c)).data
        np.testing.assert_allclose(left, right, atol=1e-9)


def test_rng_reproducible():
    a = nx.make_rng(42).random(1000)
    b = nx.make_rng(42).random(1000)
    assert a.tobytes() == b.tobytes()
    assert ((a >= 0) & (a < 1)).all()
    assert nx.make_rng(42, 1).random() != nx.make_rng(42, 2).random()


def test_gradient_accumulates_over_shared_nodes(rng):
    x = rng.normal(size=3)
    check(lambda t: (t * t + t * 3.0).sum() + nx.mean_all(t), x, tol=1e-8)


def test_float32_switch():
    nx.set_default_dtype(np.float32)
    assert nx.as_tensor([1, 2]).dtype == np.float32
    with pytest.raises(ValueError):
        nx.set_default_dtype(np.int32)
