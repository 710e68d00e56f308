"""Both kernel backends against each other and against plain loops."""
import numpy as np
import pytest

from headblend import kernels
from headblend.kernels import _fallback

BACKENDS = ["numpy"] + (["cython"] if kernels.BACKEND == "cython" else [])


def loop_im2col(x, k, s, p):
    C, H, W = x.shape
    Ho, Wo = (H + 2 * p - k) // s + 1, (W + 2 * p - k) // s + 1
    out = np.zeros((C * k * k, Ho * Wo))
    for c in range(C):
        for i in range(k):
            for j in range(k):
                for oy in range(Ho):
                    for ox in range(Wo):
                        iy, ix = oy * s + i - p, ox * s + j - p
                        if 0 <= iy < H and 0 <= ix < W:
                            out[(c * k + i) * k + j, oy * Wo + ox] = x[c, iy, ix]
    return out


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("k,s,p", [(3, 1, 1), (3, 2, 1), (1, 1, 0), (2, 2, 0)])
def test_im2col_matches_loops(backend, k, s, p, rng):
    x = rng.normal(size=(2, 7, 6))
    got = kernels.get_backend(backend).im2col(x, k, s, p)
    np.testing.assert_array_equal(got, loop_im2col(x, k, s, p))


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("k,s,p", [(3, 1, 1), (3, 2, 1)])
def test_col2im_is_adjoint(backend, k, s, p, rng):
    mod = kernels.get_backend(backend)
    x = rng.normal(size=(3, 8, 8))
    cols = mod.im2col(x, k, s, p)
    y = rng.normal(size=cols.shape)
    # <im2col(x), y> == <x, col2im(y)>
    assert np.isclose(np.sum(cols * y), np.sum(x * mod.col2im(y, x.shape, k, s, p)))


def test_backends_agree_bitwise(rng):
    if "cython" not in BACKENDS:
        pytest.skip("compiled kernels not built")
    c, f = kernels.get_backend("cython"), _fallback
    x = rng.normal(size=(4, 16, 16))
    for k, s, p in [(3, 1, 1), (3, 2, 1)]:
        cols = f.im2col(x, k, s, p)
        assert np.array_equal(c.im2col(x, k, s, p), cols)
        assert np.array_equal(c.col2im(cols, x.shape, k, s, p), f.col2im(cols, x.shape, k, s, p))
    m = (rng.random((32, 32)) < 0.05).astype(np.uint8)
    off = kernels.disk_offsets(3)
    assert np.array_equal(c.dilate(m, off), f.dilate(m, off))
    inv = np.array([[0.9, 0.2, 1.5], [-0.1, 1.1, -2.0]])
    assert np.array_equal(c.warp_nearest(m, inv), f.warp_nearest(m, inv))


def test_float32_kernels(rng):
    x = rng.normal(size=(2, 6, 6)).astype(np.float32)
    for name in BACKENDS:
        assert kernels.get_backend(name).im2col(x, 3, 1, 1).dtype == np.float32


def test_disk_offsets():
    assert kernels.disk_offsets(0).tolist() == [[0, 0]]
    off = kernels.disk_offsets(3)
    assert (off ** 2).sum(axis=1).max() <= 9
    assert off[:, 0].min() == -3 and off[:, 0].max() == 3
    assert len(off) == 29
    with pytest.raises(ValueError):
        kernels.disk_offsets(-1)


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")
