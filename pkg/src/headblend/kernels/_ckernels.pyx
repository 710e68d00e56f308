# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled gather/scatter and mask kernels. Mirrors ``_fallback`` exactly."""
import numpy as np
cimport numpy as cnp
from cython cimport floating
from libc.math cimport floor

cnp.import_array()


def im2col(floating[:, :, ::1] x, int k, int stride, int pad):
    cdef Py_ssize_t C = x.shape[0], H = x.shape[1], W = x.shape[2]
    cdef Py_ssize_t Ho = (H + 2 * pad - k) // stride + 1
    cdef Py_ssize_t Wo = (W + 2 * pad - k) // stride + 1
    out = np.zeros((C * k * k, Ho * Wo), dtype=np.asarray(x).dtype)
    cdef floating[:, ::1] o = out
    cdef Py_ssize_t c, ki, kj, oy, ox, iy, ix, row
    for c in range(C):
        for ki in range(k):
            for kj in range(k):
                row = (c * k + ki) * k + kj
                for oy in range(Ho):
                    iy = oy * stride + ki - pad
                    if iy < 0 or iy >= H:
                        continue
                    for ox in range(Wo):
                        ix = ox * stride + kj - pad
                        if ix < 0 or ix >= W:
                            continue
                        o[row, oy * Wo + ox] = x[c, iy, ix]
    return out


def col2im(floating[:, ::1] cols, tuple shape, int k, int stride, int pad):
    cdef Py_ssize_t C = shape[0], H = shape[1], W = shape[2]
    cdef Py_ssize_t Ho = (H + 2 * pad - k) // stride + 1
    cdef Py_ssize_t Wo = (W + 2 * pad - k) // stride + 1
    if cols.shape[0] != C * k * k or cols.shape[1] != Ho * Wo:
        raise ValueError(f"col2im: cols shape {(cols.shape[0], cols.shape[1])} does not match image {shape}")
    out = np.zeros((C, H, W), dtype=np.asarray(cols).dtype)
    cdef floating[:, :, ::1] o = out
    cdef Py_ssize_t c, ki, kj, oy, ox, iy, ix, row
    for c in range(C):
        for ki in range(k):
            for kj in range(k):
                row = (c * k + ki) * k + kj
                for oy in range(Ho):
                    iy = oy * stride + ki - pad
                    if iy < 0 or iy >= H:
                        continue
                    for ox in range(Wo):
                        ix = ox * stride + kj - pad
                        if ix < 0 or ix >= W:
                            continue
                        o[c, iy, ix] += cols[row, oy * Wo + ox]
    return out


def dilate(cnp.uint8_t[:, ::1] m, long[:, ::1] offsets):
    cdef Py_ssize_t H = m.shape[0], W = m.shape[1], n = offsets.shape[0]
    out = np.zeros((H, W), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] o = out
    cdef Py_ssize_t y, x, t, yy, xx
    for y in range(H):
        for x in range(W):
            if m[y, x] == 0:
                continue
            for t in range(n):
                yy = y + offsets[t, 0]
                xx = x + offsets[t, 1]
                if 0 <= yy < H and 0 <= xx < W:
                    o[yy, xx] = 1
    return out


def warp_nearest(cnp.uint8_t[:, ::1] m, double[:, ::1] inv):
    cdef Py_ssize_t H = m.shape[0], W = m.shape[1]
    out = np.zeros((H, W), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] o = out
    cdef Py_ssize_t y, x, sy, sx
    cdef double fy, fx
    for y in range(H):
        for x in range(W):
            fy = inv[0, 0] * y + inv[0, 1] * x + inv[0, 2]
            fx = inv[1, 0] * y + inv[1, 1] * x + inv[1, 2]
            sy = <Py_ssize_t>floor(fy + 0.5)
            sx = <Py_ssize_t>floor(fx + 0.5)
            if 0 <= sy < H and 0 <= sx < W and m[sy, sx] != 0:
                o[y, x] = 1
    return out
