"""Hot inner loops: conv gather/scatter and binary-mask morphology.

The compiled extension is used when it imports; otherwise the numpy fallback.
Set ``HEADBLEND_PURE_PYTHON=1`` to force the fallback.
"""
import os

import numpy as np

from . import _fallback

_compiled = None
if os.environ.get("HEADBLEND_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _compiled
    except ImportError:
        _compiled = None

BACKEND = "cython" if _compiled is not None else "numpy"


def get_backend(name=None):
    """Return the kernel module for ``name`` ('cython', 'numpy') or the active one."""
    if name is None:
        name = BACKEND
    if name == "numpy":
        return _fallback
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built")
        return _compiled
    raise ValueError(f"unknown kernel backend {name!r}")


def disk_offsets(radius):
    """Integer (dy, dx) offsets with dy^2 + dx^2 <= radius^2, row-major order."""
    r = int(radius)
    if r < 0:
        raise ValueError("radius must be >= 0")
    d = np.arange(-r, r + 1)
    dy, dx = np.meshgrid(d, d, indexing="ij")
    keep = dy * dy + dx * dx <= r * r
    return np.ascontiguousarray(np.stack([dy[keep], dx[keep]], axis=1).astype(np.int_))


def im2col(x, k, stride, pad):
    return get_backend().im2col(np.ascontiguousarray(x), k, stride, pad)


def col2im(cols, shape, k, stride, pad):
    return get_backend().col2im(np.ascontiguousarray(cols), tuple(int(s) for s in shape), k, stride, pad)


def dilate(mask, radius):
    mask = np.ascontiguousarray(mask, dtype=np.uint8)
    if radius <= 0:
        return mask.copy()
    return get_backend().dilate(mask, disk_offsets(radius))


def warp_nearest(mask, inv):
    """Nearest-neighbour warp; ``inv`` maps output (y, x, 1) to source (y, x)."""
    return get_backend().warp_nearest(
        np.ascontiguousarray(mask, dtype=np.uint8), np.ascontiguousarray(inv, dtype=np.float64)
    )
