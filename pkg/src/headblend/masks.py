"""Binary mask algebra, gray-scaling, chroma-key painting and compositing.

Images are float arrays of shape (H, W, 3) in [0, 1]; masks are uint8 arrays
of shape (H, W) holding 0 or 1. All mask operations are exact integer ops.
"""
import numpy as np
from PIL import Image as PILImage

GREEN = (0.0, 1.0, 0.0)
LUMA = np.array([0.299, 0.587, 0.114])


class MaskError(ValueError):
    pass


def as_mask(m):
    m = np.asarray(m)
    if m.ndim != 2:
        raise MaskError(f"mask must be 2-D, got shape {m.shape}")
    if m.dtype != np.uint8:
        if m.dtype == bool:
            return m.astype(np.uint8)
        if not np.isin(m, (0, 1)).all():
            raise MaskError("mask is not binary")
        return m.astype(np.uint8)
    if m.max(initial=0) > 1:
        raise MaskError("mask is not binary")
    return m


def _same_res(*arrays):
    shapes = {a.shape[:2] for a in arrays}
    if len(shapes) != 1:
        raise MaskError(f"resolution mismatch: {sorted(shapes)}")


def union(a, b):
    a, b = as_mask(a), as_mask(b)
    _same_res(a, b)
    return a | b


def inpaint_mask(m_union, m_src):
    """max(union - src, 0): the region to hallucinate."""
    u, s = as_mask(m_union), as_mask(m_src)
    _same_res(u, s)
    return u & (1 - s)


def apply_mask(img, m):
    m = as_mask(m)
    _same_res(img, m)
    return img * m[..., None]


def grayscale(img, m):
    """BT.601 luminance inside ``m`` replicated to three channels, zero outside."""
    m = as_mask(m)
    _same_res(img, m)
    y = img @ LUMA
    return np.repeat((y * m)[..., None], 3, axis=2)


def paint_background(img, fg, color=GREEN):
    fg = as_mask(fg)
    _same_res(img, fg)
    out = np.array(img, dtype=np.float64, copy=True)
    out[fg == 0] = np.asarray(color, dtype=np.float64)
    return out


def solid(shape, color=GREEN):
    h, w = shape[:2]
    return np.broadcast_to(np.asarray(color, dtype=np.float64), (h, w, 3)).copy()


def build_input(i_s_gray, i_t_green, m_union, m_ip, color=GREEN):
    """X = gray source head + keyed target outside the union + chroma colour on the inpaint region."""
    u, ip = as_mask(m_union), as_mask(m_ip)
    _same_res(i_s_gray, i_t_green, u, ip)
    if (ip & (1 - u)).any():
        raise MaskError("inpaint mask is not contained in the union mask")
    support = np.any(i_s_gray != 0, axis=2)
    if (support & (ip == 1)).any() or (support & (u == 0)).any():
        raise MaskError("gray source head overlaps the inpaint region or lies outside the union")
    x = i_s_gray + apply_mask(i_t_green, 1 - u) + apply_mask(solid(i_t_green.shape, color), ip)
    if x.max(initial=0.0) > 1.0 or x.min(initial=0.0) < 0.0:
        raise MaskError("composed input leaves [0, 1]; masks are inconsistent")
    return x


def composite_output(y_hat, i_t, m_union):
    """Y = y_hat inside the union, the target everywhere else (selected, not blended)."""
    u = as_mask(m_union)
    _same_res(y_hat, i_t, u)
    return np.where(u[..., None] == 1, y_hat, i_t)


def resize_mask(m, shape):
    """Nearest-neighbour resize to (H, W)."""
    m = as_mask(m)
    h, w = shape
    if m.shape == (h, w):
        return m.copy()
    ys = np.minimum((np.arange(h) + 0.5) * m.shape[0] / h, m.shape[0] - 1).astype(int)
    xs = np.minimum((np.arange(w) + 0.5) * m.shape[1] / w, m.shape[1] - 1).astype(int)
    return m[ys][:, xs]


def downsample_mask(m, factor):
    """Area-average by ``factor`` then threshold at 0.5."""
    m = as_mask(m)
    h, w = m.shape
    if h % factor or w % factor:
        raise MaskError(f"mask {m.shape} not divisible by {factor}")
    avg = m.reshape(h // factor, factor, w // factor, factor).mean(axis=(1, 3))
    return (avg >= 0.5).astype(np.uint8)


def bbox(m):
    """(y0, y1, x0, x1) inclusive bounds of the set pixels, or None if empty."""
    ys, xs = np.nonzero(m)
    if ys.size == 0:
        return None
    return int(ys.min()), int(ys.max()), int(xs.min()), int(xs.max())


# PNG IO


def read_image(path):
    with PILImage.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def to_uint8(img):
    return np.clip(np.round(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)


def write_image(path, img):
    PILImage.fromarray(to_uint8(img)).save(path)


def read_mask(path):
    with PILImage.open(path) as im:
        arr = np.asarray(im.convert("L"))
    if not np.isin(arr, (0, 255)).all():
        raise MaskError(f"{path}: mask PNG must contain only 0 and 255")
    return (arr == 255).astype(np.uint8)


def write_mask(path, m):
    PILImage.fromarray(as_mask(m) * np.uint8(255)).save(path)


def write_heatmap(path, values):
    """Grayscale PNG of a non-negative 2-D array scaled by its max."""
    v = np.asarray(values, dtype=np.float64)
    peak = v.max(initial=0.0)
    scaled = v / peak if peak > 0 else v
    PILImage.fromarray(to_uint8(scaled)).save(path)
