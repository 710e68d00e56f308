"""Pure numpy versions of the compiled kernels.

Accumulation order matches the Cython loops so both backends agree bit-for-bit.
"""
import numpy as np


def _out_size(n, k, stride, pad):
    return (n + 2 * pad - k) // stride + 1


def im2col(x, k, stride, pad):
    C, H, W = x.shape
    Ho, Wo = _out_size(H, k, stride, pad), _out_size(W, k, stride, pad)
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = np.empty((C, k, k, Ho, Wo), dtype=x.dtype)
    for ki in range(k):
        for kj in range(k):
            cols[:, ki, kj] = xp[:, ki:ki + stride * Ho:stride, kj:kj + stride * Wo:stride]
    return cols.reshape(C * k * k, Ho * Wo)


def col2im(cols, shape, k, stride, pad):
    C, H, W = shape
    Ho, Wo = _out_size(H, k, stride, pad), _out_size(W, k, stride, pad)
    if cols.shape != (C * k * k, Ho * Wo):
        raise ValueError(f"col2im: cols shape {cols.shape} does not match image {tuple(shape)}")
    xp = np.zeros((C, H + 2 * pad, W + 2 * pad), dtype=cols.dtype)
    c5 = cols.reshape(C, k, k, Ho, Wo)
    for ki in range(k):
        for kj in range(k):
            xp[:, ki:ki + stride * Ho:stride, kj:kj + stride * Wo:stride] += c5[:, ki, kj]
    return np.ascontiguousarray(xp[:, pad:pad + H, pad:pad + W])


def dilate(m, offsets):
    H, W = m.shape
    out = np.zeros((H, W), dtype=np.uint8)
    for dy, dx in offsets:
        dy, dx = int(dy), int(dx)
        src = m[max(0, -dy):H - max(0, dy), max(0, -dx):W - max(0, dx)]
        out[max(0, dy):H - max(0, -dy), max(0, dx):W - max(0, -dx)] |= src
    return out


def warp_nearest(m, inv):
    H, W = m.shape
    yy, xx = np.meshgrid(np.arange(H, dtype=np.float64), np.arange(W, dtype=np.float64), indexing="ij")
    fy = inv[0, 0] * yy + inv[0, 1] * xx + inv[0, 2]
    fx = inv[1, 0] * yy + inv[1, 1] * xx + inv[1, 2]
    sy = np.floor(fy + 0.5).astype(np.int64)
    sx = np.floor(fx + 0.5).astype(np.int64)
    ok = (sy >= 0) & (sy < H) & (sx >= 0) & (sx < W)
    out = np.zeros((H, W), dtype=np.uint8)
    out[ok] = m[sy[ok], sx[ok]] != 0
    return out
