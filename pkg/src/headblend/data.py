"""Corpus ingestion, colour jitter and construction of network inputs.

Corpus layout: ``<root>/<id>/image.png`` (RGB) and ``<root>/<id>/parsing.png``
(single channel labels 0=background, 1=head incl. hair, 2=neck, 3=body).
"""
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from . import masks as mk
from .augment import h2_union
from .numerics import make_rng

log = logging.getLogger(__name__)

BACKGROUND, HEAD, NECK, BODY = 0, 1, 2, 3


class DataError(ValueError):
    pass


@dataclass
class Sample:
    image: np.ndarray  # (H, W, 3) in [0, 1]
    parsing: np.ndarray  # (H, W) uint8 labels
    name: str = ""

    def __post_init__(self):
        if self.image.shape[:2] != self.parsing.shape:
            raise DataError(f"{self.name}: parsing {self.parsing.shape} does not match image {self.image.shape[:2]}")
        if self.parsing.max(initial=0) > BODY:
            raise DataError(f"{self.name}: unknown parsing label {int(self.parsing.max())}")

    @property
    def head(self):
        return (self.parsing == HEAD).astype(np.uint8)

    @property
    def neck(self):
        return (self.parsing == NECK).astype(np.uint8)

    @property
    def body(self):
        return (self.parsing == BODY).astype(np.uint8)

    @property
    def person(self):
        """Full silhouette: head, neck and body."""
        return (self.parsing != BACKGROUND).astype(np.uint8)

    def resized(self, resolution):
        h, w = self.parsing.shape
        if (h, w) == (resolution, resolution):
            return self
        im = PILImage.fromarray(mk.to_uint8(self.image)).resize((resolution, resolution), PILImage.BILINEAR)
        ys = np.minimum((np.arange(resolution) + 0.5) * h / resolution, h - 1).astype(int)
        xs = np.minimum((np.arange(resolution) + 0.5) * w / resolution, w - 1).astype(int)
        return Sample(np.asarray(im, dtype=np.float64) / 255.0, self.parsing[ys][:, xs].copy(), self.name)


def load_sample(path, resolution=None):
    path = Path(path)
    img_p, par_p = path / "image.png", path / "parsing.png"
    if not img_p.is_file() or not par_p.is_file():
        raise DataError(f"{path}: expected image.png and parsing.png")
    with PILImage.open(par_p) as im:
        parsing = np.asarray(im.convert("L"), dtype=np.uint8).copy()
    s = Sample(mk.read_image(img_p), parsing, path.name)
    return s.resized(resolution) if resolution else s


def load_corpus(root, resolution=None):
    root = Path(root)
    dirs = sorted(p for p in root.iterdir() if (p / "image.png").is_file()) if root.is_dir() else []
    if not dirs:
        raise DataError(f"{root}: no samples found")
    return [load_sample(d, resolution) for d in dirs]


def save_sample(path, sample):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    mk.write_image(path / "image.png", sample.image)
    PILImage.fromarray(sample.parsing.astype(np.uint8)).save(path / "parsing.png")


# colour jitter


@dataclass(frozen=True)
class JitterParams:
    brightness: float = 1.0
    contrast: float = 1.0
    saturation: float = 1.0


def sample_jitter(cfg, rng):
    if not cfg.jitter:
        return JitterParams()
    return JitterParams(rng.uniform(*cfg.brightness), rng.uniform(*cfg.contrast), rng.uniform(*cfg.saturation))


def apply_jitter(img, jp):
    out = np.asarray(img, dtype=np.float64)
    if jp.brightness != 1.0:
        out = np.clip(out * jp.brightness, 0.0, 1.0)
    if jp.contrast != 1.0:
        mean = float((out @ mk.LUMA).mean())
        out = np.clip((out - mean) * jp.contrast + mean, 0.0, 1.0)
    if jp.saturation != 1.0:
        gray = (out @ mk.LUMA)[..., None]
        out = np.clip((out - gray) * jp.saturation + gray, 0.0, 1.0)
    return out


# network inputs


@dataclass
class NetworkInputs:
    x: np.ndarray
    i_t: np.ndarray  # image the output is composited onto
    i_t_green: np.ndarray
    i_t_head: np.ndarray
    i_t_body: np.ndarray
    i_t_hc: np.ndarray
    m_src: np.ndarray
    m_union: np.ndarray
    m_ip: np.ndarray
    m_gt: np.ndarray  # full-resolution person silhouette
    jitter_gt: JitterParams = None
    jitter_green: JitterParams = None


def build_network_inputs(source_img, m_src, target_img, target_parsing, m_union, chroma=mk.GREEN):
    """Single X-construction path shared by training and inference; only ``m_union`` differs."""
    m_ip = mk.inpaint_mask(m_union, m_src)
    fg = (target_parsing != BACKGROUND).astype(np.uint8)
    i_t_green = mk.paint_background(target_img, fg, chroma)
    i_s_gray = mk.grayscale(source_img, m_src)
    x = mk.build_input(i_s_gray, i_t_green, m_union, m_ip, chroma)
    i_t_head = mk.apply_mask(target_img, (target_parsing == HEAD).astype(np.uint8))
    i_t_body = mk.apply_mask(target_img, (target_parsing == BODY).astype(np.uint8))
    i_t_hc = mk.apply_mask(i_t_green, 1 - m_ip) + mk.apply_mask(mk.solid(target_img.shape, chroma), m_ip)
    return NetworkInputs(x, target_img, i_t_green, i_t_head, i_t_body, i_t_hc, m_src, m_union, m_ip, fg)


def make_training_sample(sample, cfg, rng, bank=None):
    """Self-identity sample: H^2 union mask, one shared jitter draw, chroma-keyed ground truth."""
    m_src = sample.head
    if not m_src.any():
        raise DataError(f"{sample.name}: empty head mask")
    m_union, _ = h2_union(m_src, cfg.head_shape(), bank, cfg.eps, rng)
    jp = sample_jitter(cfg, rng)
    target = apply_jitter(sample.image, jp)
    inp = build_network_inputs(sample.image, m_src, target, sample.parsing, m_union, cfg.chroma)
    # the ground truth keeps the chroma background so the output learns to keep it too
    inp.i_t = inp.i_t_green
    inp.jitter_gt = inp.jitter_green = jp
    return inp


def inference_inputs(source, target, chroma=mk.GREEN):
    if source.parsing.shape != target.parsing.shape:
        raise DataError("source and target resolutions differ; resize first")
    m_src = source.head
    if not m_src.any():
        raise DataError(f"{source.name}: empty head mask")
    m_union = mk.union(m_src, target.head)
    return build_network_inputs(source.image, m_src, target.image, target.parsing, m_union, chroma)


# synthetic corpus


def _ellipse(h, w, cy, cx, ry, rx):
    yy, xx = np.mgrid[0:h, 0:w]
    return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0


def synth_person(resolution, rng, long_hair=False):
    """A cartoon bust: background gradient, body, neck and a head with hair and eyes."""
    n = resolution
    yy, xx = np.mgrid[0:n, 0:n] / n
    c0, c1 = rng.uniform(0.1, 0.9, 3), rng.uniform(0.1, 0.9, 3)
    t = (0.6 * yy + 0.4 * xx)[..., None]
    img = (1 - t) * c0 + t * c1
    parsing = np.zeros((n, n), dtype=np.uint8)

    cx = n * rng.uniform(0.42, 0.58)
    head_cy, head_ry, head_rx = n * rng.uniform(0.3, 0.36), n * rng.uniform(0.15, 0.19), n * rng.uniform(0.12, 0.16)
    shoulder_y = head_cy + head_ry + n * rng.uniform(0.08, 0.12)

    body = (yy * n >= shoulder_y) & (np.abs(xx * n - cx) <= n * rng.uniform(0.3, 0.4) + (yy * n - shoulder_y) * 0.3)
    body |= _ellipse(n, n, shoulder_y + n * 0.05, cx, n * 0.08, n * 0.3)
    cloth = rng.uniform(0.05, 0.95, 3)
    stripe = (np.sin(yy * n * rng.uniform(0.6, 1.2)) > 0.6)[..., None]
    img = np.where(body[..., None], np.where(stripe, cloth * 0.6, cloth), img)
    parsing[body] = BODY

    skin = np.array([rng.uniform(0.55, 0.95), rng.uniform(0.4, 0.75), rng.uniform(0.3, 0.6)])
    neck = (np.abs(xx * n - cx) <= head_rx * 0.45) & (yy * n >= head_cy) & (yy * n <= shoulder_y + n * 0.04)
    img = np.where(neck[..., None], skin * 0.85, img)
    parsing[neck] = NECK

    face = _ellipse(n, n, head_cy, cx, head_ry, head_rx)
    hair_col = rng.uniform(0.0, 0.5, 3)
    hair = _ellipse(n, n, head_cy - head_ry * 0.25, cx, head_ry * 1.05, head_rx * 1.12) & (yy * n < head_cy - head_ry * 0.2)
    if long_hair:
        hair |= (np.abs(xx * n - cx) <= head_rx * 1.25) & (yy * n >= head_cy - head_ry) & (yy * n <= shoulder_y + n * 0.15) & ~face
    shade = (1.0 - 0.25 * (xx * n - cx) / n)[..., None]
    img = np.where(face[..., None], np.clip(skin * shade, 0, 1), img)
    img = np.where(hair[..., None], hair_col, img)
    for side in (-1, 1):
        eye = _ellipse(n, n, head_cy - head_ry * 0.05, cx + side * head_rx * 0.4, n * 0.018 + 0.5, n * 0.025 + 0.5)
        img = np.where(eye[..., None], 0.1, img)
    mouth = _ellipse(n, n, head_cy + head_ry * 0.5, cx, n * 0.012 + 0.5, head_rx * 0.35)
    img = np.where(mouth[..., None], np.array([0.6, 0.15, 0.2]), img)
    parsing[face | hair] = HEAD
    return Sample(np.clip(img, 0.0, 1.0), parsing), hair.astype(np.uint8)


def write_synthetic_corpus(root, n, resolution=64, seed=0, hair_bank=4):
    """Write ``n`` samples under ``root`` and ``hair_bank`` long-hair masks under ``root/../hair``-style dir.

    Returns (corpus dir, hair dir).
    """
    root = Path(root)
    corpus, hair_dir = root / "corpus", root / "hair"
    hair_dir.mkdir(parents=True, exist_ok=True)
    for i in range(n):
        s, _ = synth_person(resolution, make_rng(seed, 11, i))
        s.name = f"{i:04d}"
        save_sample(corpus / s.name, s)
    for i in range(hair_bank):
        _, hair = synth_person(resolution, make_rng(seed, 13, i), long_hair=True)
        mk.write_mask(hair_dir / f"hair_{i:03d}.png", hair)
    return corpus, hair_dir
