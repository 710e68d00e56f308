import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from headblend import fpat
from headblend import numerics as nx
from headblend.losses import loss_mask
from headblend.numerics import Tensor, finite_difference_gradient, relative_error
from headblend.train import Adam


def random_partition(rng, n):
    lab = rng.random(n) < 0.5
    return fpat.PatchPartition(np.flatnonzero(lab), np.flatnonzero(~lab), 0.5)


def loop_masked_attention(zc, zb, lab, wq, wk, wv):
    """Scalar loops; excluded pairs are simply skipped in the softmax."""
    n = zc.shape[0]
    q, k, v = zc @ wq, zb @ wk, zb @ wv
    dk = q.shape[1]
    out = np.zeros((n, v.shape[1]))
    for i in range(n):
        allowed = [j for j in range(n) if lab[i] == lab[j]]
        s = [sum(q[i, a] * k[j, a] for a in range(dk)) / math.sqrt(dk) for j in allowed]
        top = max(s)
        e = [math.exp(x - top) for x in s]
        tot = sum(e)
        for jj, j in enumerate(allowed):
            out[i] += e[jj] / tot * v[j]
    return out


def test_patchify_examples():
    x = np.arange(16, dtype=float).reshape(1, 4, 4)
    z = fpat.patchify(x, 2).data
    assert z.tolist() == [[0, 1, 4, 5], [2, 3, 6, 7], [8, 9, 12, 13], [10, 11, 14, 15]]
    two = np.stack([x[0], -x[0]])
    # flattened (py, px, c): channels interleave inside each patch row
    assert fpat.patchify(two, 2).data[0].tolist() == [0, 0, 1, -1, 4, -4, 5, -5]


def test_patchify_index_oracle(rng):
    c, h, w, p = 3, 8, 12, 4
    x = rng.normal(size=(c, h, w))
    z = fpat.patchify(x, p).data
    for r in range(h // p):
        for col in range(w // p):
            n = r * (w // p) + col
            for py in range(p):
                for px in range(p):
                    for ch in range(c):
                        assert z[n, (py * p + px) * c + ch] == x[ch, r * p + py, col * p + px]


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(1, 3), st.sampled_from([1, 2, 4]))
def test_patchify_roundtrip(c, a, b, p):
    x = np.random.default_rng(c * 100 + a * 10 + b).normal(size=(c, a * p, b * p))
    z = fpat.patchify(x, p)
    assert z.shape == (a * b, p * p * c)
    np.testing.assert_array_equal(fpat.unpatchify(z, p, c, a * p, b * p).data, x)


def test_patchify_rejects_indivisible():
    with pytest.raises(ValueError):
        fpat.patchify(np.zeros((1, 5, 4)), 2)


def test_average_mask_patches():
    m_p = np.array([[1, 1, 0, 0], [0, 0, 0, 0], [1, 1, 1, 1]])
    assert fpat.average_mask_patches(m_p).tolist() == [0.5, 0.0, 1.0]


def test_partition_tau_inclusive():
    part = fpat.partition_patches([0.5, 0.49, 1.0, 0.0], tau=0.5)
    assert part.s_b.tolist() == [0, 2] and part.s_nb.tolist() == [1, 3]
    with pytest.raises(ValueError):
        fpat.partition_patches([0.5], tau=1.0)


def test_partition_is_total(rng):
    for _ in range(200):
        avg = rng.random(rng.integers(1, 40))
        part = fpat.partition_patches(avg, rng.uniform(0.05, 0.95))
        assert not set(part.s_b) & set(part.s_nb)
        assert sorted(np.r_[part.s_b, part.s_nb]) == list(range(len(avg)))


def test_attention_mask_examples():
    all_fg = fpat.partition_patches([1.0, 1.0, 1.0])
    assert (fpat.build_attention_mask(all_fg) == 0).all()
    split = fpat.PatchPartition(np.array([0, 1]), np.array([2, 3]), 0.5)
    m = fpat.build_attention_mask(split)
    want = np.array([[0, 0, -np.inf, -np.inf]] * 2 + [[-np.inf, -np.inf, 0, 0]] * 2)
    assert np.array_equal(m, want)


def test_attention_mask_symmetric(rng):
    for n in (1, 5, 16):
        m = fpat.build_attention_mask(random_partition(rng, n))
        assert np.array_equal(m, m.T)
        assert (np.diag(m) == 0).all()
        assert set(np.unique(m)) <= {0.0, -np.inf}


def _weights(rng, d, dk):
    return rng.normal(size=(d, dk)), rng.normal(size=(d, dk)), rng.normal(size=(d, d))


@pytest.mark.parametrize("n", [4, 16, 64])
def test_masked_equals_groupwise(rng, n):
    d, dk = 6, 5
    for _ in range(20):
        part = random_partition(rng, n)
        zc, zb = rng.normal(size=(n, d)), rng.normal(size=(n, d))
        wq, wk, wv = _weights(rng, d, dk)
        full = fpat.fpat_attention(zc, zb, fpat.build_attention_mask(part), wq, wk, wv).data
        for group in (part.s_b, part.s_nb):
            if len(group):
                ref = fpat.attention(zc[group], zb[group], zb[group], wq, wk, wv)[0].data
                assert np.abs(full[group] - ref).max() <= 1e-12


def test_no_cross_group_leak(rng):
    n, d = 12, 4
    wq, wk, wv = _weights(rng, d, 3)
    for _ in range(200):
        part = random_partition(rng, n)
        mask = fpat.build_attention_mask(part)
        zc, zb = rng.normal(size=(n, d)), rng.normal(size=(n, d))
        base = fpat.fpat_attention(zc, zb, mask, wq, wk, wv).data
        zb2 = zb.copy()
        zb2[part.s_nb] = rng.normal(scale=100, size=(len(part.s_nb), d))
        moved = fpat.fpat_attention(zc, zb2, mask, wq, wk, wv).data
        assert np.array_equal(base[part.s_b], moved[part.s_b])


def test_matches_loop_oracle(rng):
    for n in (3, 8, 16):
        part = random_partition(rng, n)
        zc, zb = rng.normal(size=(n, 5)), rng.normal(size=(n, 5))
        wq, wk, wv = _weights(rng, 5, 4)
        got = fpat.fpat_attention(zc, zb, fpat.build_attention_mask(part), wq, wk, wv).data
        want = loop_masked_attention(zc, zb, part.labels(), wq, wk, wv)
        assert np.abs(got - want).max() <= 1e-9


def test_weights_zero_across_groups(rng):
    part = random_partition(rng, 10)
    _, w = fpat.fpat_attention(rng.normal(size=(10, 3)), rng.normal(size=(10, 3)),
                               fpat.build_attention_mask(part), *_weights(rng, 3, 2), return_weights=True)
    lab = part.labels()
    assert (w.data[lab[:, None] != lab[None, :]] == 0).all()
    np.testing.assert_allclose(w.data.sum(axis=1), 1.0, atol=1e-12)


def test_width_mismatch_reports_shapes(rng):
    with pytest.raises(ValueError, match="W\\^Q"):
        fpat.fpat_attention(np.zeros((4, 3)), np.zeros((4, 3)), None, *_weights(rng, 5, 2))


@pytest.mark.parametrize("which", ["zc", "zb", "wq", "wk", "wv"])
def test_fpat_gradients(rng, which):
    n, d, dk = 8, 6, 4
    part = random_partition(rng, n)
    mask = fpat.build_attention_mask(part)
    vals = {"zc": rng.normal(size=(n, d)), "zb": rng.normal(size=(n, d))}
    vals.update(zip(("wq", "wk", "wv"), _weights(rng, d, dk)))
    c = rng.normal(size=(n, d))

    def f(x):
        args = dict(vals, **{which: x})
        out = fpat.fpat_attention(args["zc"], args["zb"], mask, args["wq"], args["wk"], args["wv"])
        return (out * c).sum()

    x = Tensor(vals[which].copy(), requires_grad=True)
    f(x).backward()
    num = finite_difference_gradient(lambda v: float(f(Tensor(v)).data), vals[which], 1e-5)
    assert relative_error(x.grad, num) <= 1e-4


def _colorizer_weights(rng, c, dk=5, hidden=7):
    return {
        "wq": rng.normal(size=(c, dk)), "wk": rng.normal(size=(c, dk)), "wv": rng.normal(size=(c, c)),
        "wo": rng.normal(size=(c, c)), "ff_w1": rng.normal(size=(c, hidden)), "ff_b1": np.zeros(hidden),
        "ff_w2": np.zeros((hidden, c)), "ff_b2": np.zeros(c),
    }


def test_colorizer_passthrough_with_zero_condition(rng):
    x = rng.normal(size=(4, 3, 3))
    z, w = fpat.colorizer_cross_attention(x, np.zeros((4, 3, 3)), _colorizer_weights(rng, 4))
    # zero values and a zero feed-forward output leave the residual path alone
    np.testing.assert_allclose(z.data, x, atol=1e-15)
    np.testing.assert_allclose(w.data.sum(axis=1), 1.0)


def test_colorizer_gradient_wrt_condition(rng):
    w = _colorizer_weights(rng, 3)
    w["ff_w2"] = rng.normal(size=w["ff_w2"].shape)
    x = rng.normal(size=(3, 2, 2))
    c = rng.normal(size=(3, 2, 2))
    cond = rng.normal(size=(3, 2, 2))
    t = Tensor(cond.copy(), requires_grad=True)
    (fpat.colorizer_cross_attention(x, t, w)[0] * c).sum().backward()
    num = finite_difference_gradient(
        lambda v: float((fpat.colorizer_cross_attention(x, v, w)[0] * c).sum().data), cond, 1e-5)
    assert relative_error(t.grad, num) <= 1e-4


def _fg_weights(rng, c, hidden=6):
    return {"fg_w1": rng.normal(scale=0.3, size=(hidden, c, 3, 3)), "fg_b1": np.zeros(hidden),
            "fg_w2": rng.normal(scale=0.3, size=(1, hidden, 1, 1)), "fg_b2": np.zeros(1)}


def test_predict_foreground_on_zero_input(rng):
    soft, hard = fpat.predict_foreground(np.zeros((4, 6, 6)), _fg_weights(rng, 4))
    np.testing.assert_allclose(soft.data, 0.5)
    assert hard.dtype == np.uint8 and (hard == 1).all()


def test_predict_foreground_learns_a_mask():
    rng = np.random.default_rng(5)
    z = rng.normal(size=(4, 8, 8))
    target = np.zeros((8, 8))
    target[2:7, 1:5] = 1
    z[0] += 2.0 * target  # make the mask recoverable from the features
    w = {k: Tensor(v, requires_grad=True) for k, v in _fg_weights(rng, 4).items()}
    opt = Adam(w.values(), lr=0.05)
    for _ in range(150):
        opt.zero_grad()
        loss_mask(fpat.predict_foreground(z, w)[0], target).backward()
        opt.step()
    hard = fpat.predict_foreground(z, w)[1].astype(bool)
    iou = (hard & (target > 0)).sum() / (hard | (target > 0)).sum()
    assert iou >= 0.9


def test_fpat_block_end_to_end(rng):
    c, h, p = 2, 4, 2
    d = p * p * c
    m = np.zeros((h, h), np.uint8)
    m[:2, :] = 1
    w = dict(zip(("wq", "wk", "wv"), _weights(rng, d, 3)))
    z_c, z_body = rng.normal(size=(c, h, h)), rng.normal(size=(c, h, h))
    z_b, weights, part = fpat.fpat_block(nx.Tensor(z_c), nx.Tensor(z_body), m, w, p, 0.5)
    assert z_b.shape == (c, h, h)
    assert part.s_b.tolist() == [0, 1] and part.s_nb.tolist() == [2, 3]
    assert (weights.data[:2, 2:] == 0).all() and (weights.data[2:, :2] == 0).all()
