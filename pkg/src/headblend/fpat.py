"""Foreground-predictive masked attention.

A small conv head predicts a foreground map from the colorizer features. The
map is cut into P x P patches, patches are split by their mean coverage at a
threshold tau, and attention is only allowed between patches of the same kind
through an additive {0, -inf} mask.
"""
import math
from dataclasses import dataclass

import numpy as np

from . import numerics as nx


def patchify(x, p):
    """(C, h, w) -> (N, p*p*C), blocks in row-major order, each flattened as (py, px, c)."""
    x = nx.as_tensor(x)
    if x.ndim == 2:
        x = nx.reshape(x, (1,) + x.shape)
    c, h, w = x.shape
    if h % p or w % p:
        raise ValueError(f"patch size {p} does not divide feature size {(h, w)}")
    t = nx.reshape(x, (c, h // p, p, w // p, p))
    t = nx.transpose(t, (1, 3, 2, 4, 0))
    return nx.reshape(t, ((h // p) * (w // p), p * p * c))


def unpatchify(z, p, c, h, w):
    z = nx.as_tensor(z)
    n, d = z.shape
    if n != (h // p) * (w // p) or d != p * p * c:
        raise ValueError(f"cannot unpatchify {z.shape} into {(c, h, w)} with patch {p}")
    t = nx.reshape(z, (h // p, w // p, p, p, c))
    t = nx.transpose(t, (4, 0, 2, 1, 3))
    return nx.reshape(t, (c, h, w))


def average_mask_patches(m_p):
    """Per-patch coverage: the mean of each row of an (N, P*P) mask patch matrix."""
    return np.asarray(m_p, dtype=np.float64).mean(axis=1)


@dataclass(frozen=True)
class PatchPartition:
    s_b: np.ndarray  # foreground (body/neck) patch indices
    s_nb: np.ndarray
    tau: float

    @property
    def n(self):
        return len(self.s_b) + len(self.s_nb)

    def labels(self):
        lab = np.zeros(self.n, dtype=bool)
        lab[self.s_b] = True
        return lab


def partition_patches(m_avg, tau=0.5):
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    m_avg = np.asarray(m_avg, dtype=np.float64)
    fg = m_avg >= tau
    return PatchPartition(np.flatnonzero(fg), np.flatnonzero(~fg), float(tau))


def build_attention_mask(part):
    lab = part.labels()
    same = lab[:, None] == lab[None, :]
    return np.where(same, 0.0, -np.inf)


def attention(q_in, k_in, v_in, wq, wk, wv, mask=None):
    """softmax(Q K^T / sqrt(d_k) + mask) V with bias-free projections.

    Returns the output and the post-softmax weight matrix.
    """
    q = nx.matmul(q_in, wq)
    k = nx.matmul(k_in, wk)
    v = nx.matmul(v_in, wv)
    if k.shape[0] != v.shape[0]:
        raise ValueError(f"key/value token counts differ: {k.shape[0]} vs {v.shape[0]}")
    scores = nx.matmul(q, nx.transpose(k)) * (1.0 / math.sqrt(q.shape[1]))
    if mask is not None:
        mask = np.asarray(mask)
        if mask.shape != scores.shape:
            raise ValueError(f"mask shape {mask.shape} does not match scores {scores.shape}")
        scores = scores + nx.Tensor(mask.astype(scores.dtype))
    weights = nx.softmax_last_axis(scores)
    return nx.matmul(weights, v), weights


def fpat_attention(z_c_p, z_body_p, mask, wq, wk, wv, return_weights=False):
    """Queries from the colorized-head patches, keys/values from the body patches."""
    z_c_p, z_body_p = nx.as_tensor(z_c_p), nx.as_tensor(z_body_p)
    if z_c_p.ndim != 2 or z_body_p.ndim != 2:
        raise ValueError("patch features must be (N, D)")
    if z_c_p.shape[1] != nx.as_tensor(wq).shape[0] or z_body_p.shape[1] != nx.as_tensor(wk).shape[0]:
        raise ValueError(
            f"projection widths do not match features: {z_c_p.shape}, {z_body_p.shape}, "
            f"W^Q {nx.as_tensor(wq).shape}, W^K {nx.as_tensor(wk).shape}"
        )
    out, weights = attention(z_c_p, z_body_p, z_body_p, wq, wk, wv, mask)
    return (out, weights) if return_weights else out


def _tokens(x):
    c, h, w = x.shape
    return nx.transpose(nx.reshape(x, (c, h * w)))


def colorizer_cross_attention(x_feat, head_cond, w):
    """Plain cross-attention block with residual and a per-token feed-forward.

    ``w`` holds wq, wk, wv, wo, ff_w1, ff_b1, ff_w2, ff_b2 and optionally
    learned token offsets pos_q / pos_k (added to query and key inputs only).
    Returns (z_c, attention weights).
    """
    x_feat, head_cond = nx.as_tensor(x_feat), nx.as_tensor(head_cond)
    if x_feat.ndim != 3 or head_cond.ndim != 3 or x_feat.shape[0] != head_cond.shape[0]:
        raise ValueError(f"colorizer expects matching (C, h, w) inputs, got {x_feat.shape} and {head_cond.shape}")
    c, h, wd = x_feat.shape
    xt, ct = _tokens(x_feat), _tokens(head_cond)
    q_in = xt + w["pos_q"] if "pos_q" in w else xt
    k_in = ct + w["pos_k"] if "pos_k" in w else ct
    att, weights = attention(q_in, k_in, ct, w["wq"], w["wk"], w["wv"])
    hid = xt + nx.matmul(att, w["wo"])
    ff = nx.leaky_relu(nx.matmul(hid, w["ff_w1"]) + w["ff_b1"])
    out = hid + nx.matmul(ff, w["ff_w2"]) + w["ff_b2"]
    z_c = nx.reshape(nx.transpose(out), (c, h, wd))
    return z_c, weights


def predict_foreground(z_c, w, threshold=0.5):
    """Soft foreground map (sigmoid, differentiable) and its hard 0/1 threshold."""
    hid = nx.leaky_relu(nx.conv2d(z_c, w["fg_w1"], w["fg_b1"], stride=1, pad=1))
    logit = nx.conv2d(hid, w["fg_w2"], w["fg_b2"])
    soft = nx.sigmoid(nx.reshape(logit, logit.shape[1:]))
    binary = (soft.data >= threshold).astype(np.uint8)
    return soft, binary


def fpat_block(z_c, z_body, m_binary, w, patch, tau):
    """Body blender: masked attention from z_c patches onto body patches, back to (C, h, w).

    ``m_binary`` enters only through the constant attention mask, so no gradient
    reaches the foreground predictor along this path.
    """
    c, h, wd = z_c.shape
    m_p = patchify(nx.Tensor(m_binary.astype(np.float64)), patch).data
    part = partition_patches(average_mask_patches(m_p), tau)
    mask = build_attention_mask(part)
    zc_p = patchify(z_c, patch)
    zb_p = patchify(z_body, patch)
    if "pos_q" in w:
        zc_p = zc_p + w["pos_q"]
        zb_p = zb_p + w["pos_k"]
    out, weights = fpat_attention(zc_p, zb_p, mask, w["wq"], w["wk"], w["wv"], return_weights=True)
    return unpatchify(out, patch, c, h, wd), weights, part
