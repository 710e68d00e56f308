"""Head-shape and long-hair mask augmentation for self-identity training."""
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .masks import as_mask, bbox, inpaint_mask, read_mask, resize_mask, union

log = logging.getLogger(__name__)

MAX_WARP_TRIES = 8


@dataclass(frozen=True)
class HeadShapeParams:
    rotation: tuple = (-10.0, 10.0)  # degrees
    scale: tuple = (0.9, 1.2)  # isotropic
    squeeze: tuple = (0.8, 1.25)  # per axis, drawn independently for y and x
    translate: tuple = (-0.05, 0.05)  # fraction of the head bbox extent
    dilation: tuple = (0, 7)  # disk radius in pixels, inclusive

    def __post_init__(self):
        for name in ("rotation", "scale", "squeeze", "translate", "dilation"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} range is not ordered: {(lo, hi)}")
        if self.dilation[0] < 0:
            raise ValueError("dilation radius must be >= 0")
        if self.scale[0] <= 0 or self.squeeze[0] <= 0:
            raise ValueError("scale factors must be positive")

    @classmethod
    def identity(cls):
        return cls((0.0, 0.0), (1.0, 1.0), (1.0, 1.0), (0.0, 0.0), (0, 0))


class HairBank:
    """Long-hair silhouettes, curated offline."""

    def __init__(self, masks=()):
        self.masks = [as_mask(m) for m in masks]

    def __len__(self):
        return len(self.masks)

    def __getitem__(self, i):
        return self.masks[i]

    @classmethod
    def from_dir(cls, path):
        files = sorted(Path(path).glob("*.png"))
        return cls(read_mask(f) for f in files)


def inverse_affine(center, angle_deg, scale_y, scale_x, shift):
    """2x3 matrix mapping output (y, x, 1) to source (y, x).

    The forward map scales about ``center``, rotates, then translates by ``shift``.
    """
    t = math.radians(angle_deg)
    c, s = math.cos(t), math.sin(t)
    rot_t = np.array([[c, s], [-s, c]])  # inverse rotation
    a = np.diag([1.0 / scale_y, 1.0 / scale_x]) @ rot_t
    ctr = np.asarray(center, dtype=np.float64)
    off = ctr - a @ (ctr + np.asarray(shift, dtype=np.float64))
    return np.hstack([a, off[:, None]])


def head_shape_augment(m_src, params, rng):
    m = as_mask(m_src)
    box = bbox(m)
    if box is None:
        raise ValueError("source head mask is empty")
    y0, y1, x0, x1 = box
    center = ((y0 + y1) / 2.0, (x0 + x1) / 2.0)
    for _ in range(MAX_WARP_TRIES):
        angle = rng.uniform(*params.rotation)
        iso = rng.uniform(*params.scale)
        sy = iso * rng.uniform(*params.squeeze)
        sx = iso * rng.uniform(*params.squeeze)
        ty = rng.uniform(*params.translate) * (y1 - y0 + 1)
        tx = rng.uniform(*params.translate) * (x1 - x0 + 1)
        radius = int(rng.integers(params.dilation[0], params.dilation[1] + 1))
        warped = kernels.warp_nearest(m, inverse_affine(center, angle, sy, sx, (ty, tx)))
        if warped.any():
            return kernels.dilate(warped, radius)
    log.warning("head warp left the canvas %d times; keeping the source mask", MAX_WARP_TRIES)
    return m.copy()


def shift_mask(m, dy, dx):
    h, w = m.shape
    out = np.zeros_like(m)
    ys, yd = slice(max(0, -dy), min(h, h - dy)), slice(max(0, dy), min(h, h + dy))
    xs, xd = slice(max(0, -dx), min(w, w - dx)), slice(max(0, dx), min(w, w + dx))
    if ys.start < ys.stop and xs.start < xs.stop:
        out[yd, xd] = m[ys, xs]
    return out


def align_hair(hair, head):
    """Put the hair bbox top on the head bbox top, centred horizontally on the head."""
    hb, mb = bbox(hair), bbox(head)
    if hb is None or mb is None:
        return hair
    dy = mb[0] - hb[0]
    dx = int(round((mb[2] + mb[3]) / 2.0 - (hb[2] + hb[3]) / 2.0))
    return shift_mask(hair, dy, dx)


def _check_eps(eps):
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")


def long_hair_branch(m_h1, bank, eps, rng):
    """Like :func:`long_hair_augment` but also reports whether p >= eps was drawn."""
    _check_eps(eps)
    m = as_mask(m_h1)
    p = rng.random()
    if p < eps:
        return m.copy(), False
    if bank is None or len(bank) == 0:
        log.warning("hair branch drawn but the hair bank is empty; skipping")
        return m.copy(), True
    hair = resize_mask(bank[int(rng.integers(len(bank)))], m.shape)
    return union(m, align_hair(hair, m)), True


def long_hair_augment(m_h1, bank, eps, rng):
    return long_hair_branch(m_h1, bank, eps, rng)[0]


def h2_union(m_src, params, bank, eps, rng):
    """Augmented union mask (always a superset of ``m_src``) and its inpaint mask."""
    m_src = as_mask(m_src)
    m_h2 = long_hair_augment(head_shape_augment(m_src, params, rng), bank, eps, rng)
    m_union = union(m_h2, m_src)
    return m_union, inpaint_mask(m_union, m_src)
