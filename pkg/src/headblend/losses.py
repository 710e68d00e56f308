"""Training losses and image-quality metrics.

Loss inputs are (3, H, W) tensors or arrays with (H, W) masks; every L1 term is
a mean over all elements so the weights stay comparable across resolutions.
Metrics take (H, W, 3) images.
"""
import math
from dataclasses import dataclass, fields

import numpy as np
from scipy.ndimage import correlate1d

from . import numerics as nx

LOG_CLAMP = 1e-7
PSNR_CAP = 100.0


@dataclass(frozen=True)
class LossWeights:
    rec: float = 10.0
    hc: float = 10.0
    mask: float = 10.0
    per: float = 1.0
    adv: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"loss weight {f.name} must be >= 0")

    @classmethod
    def from_config(cls, cfg):
        return cls(cfg.lambda_rec, cfg.lambda_hc, cfg.lambda_mask, cfg.lambda_per, cfg.lambda_adv)

    def scaled(self, k):
        return LossWeights(*(k * getattr(self, f.name) for f in fields(self)))


@dataclass
class LossReport:
    rec: float
    hc: float
    mask: float
    per: float
    adv: float
    total: float

    NAMES = ("rec", "hc", "mask", "per", "adv")


def _mask3(m):
    return np.asarray(m, dtype=np.float64)[None, :, :]


def loss_rec(y, i_t, m_src):
    """Mean |Y * M_S - I_T * M_S|."""
    m = _mask3(m_src)
    return nx.mean_all(nx.abs_(nx.as_tensor(y) * m - np.asarray(i_t) * m))


def loss_hc(to_rgb, i_t_hc):
    return nx.mean_all(nx.abs_(nx.as_tensor(to_rgb) - np.asarray(i_t_hc)))


def loss_mask(m_soft, m_gt):
    return nx.mean_all(nx.abs_(nx.as_tensor(m_soft) - np.asarray(m_gt, dtype=np.float64)))


class PerceptualExtractor:
    """Frozen, seeded random conv stack standing in for a pretrained feature network."""

    WIDTHS = (8, 16, 32)

    def __init__(self, seed=1234, dtype=np.float64):
        rng = nx.make_rng(seed, 7)
        self.layers = []
        cin = 3
        for i, cout in enumerate(self.WIDTHS):
            w = rng.normal(0.0, 1.0 / math.sqrt(cin * 9), size=(cout, cin, 3, 3)).astype(dtype)
            self.layers.append((nx.Tensor(w), 1 if i == 0 else 2))
            cin = cout

    def __call__(self, x):
        feats, h = [], nx.as_tensor(x)
        for w, stride in self.layers:
            h = nx.leaky_relu(nx.conv2d(h, w, stride=stride, pad=1))
            feats.append(h)
        return feats


def loss_perceptual(y, i_t, extractor):
    fy = extractor(y)
    ft = extractor(nx.Tensor(np.asarray(i_t.data if isinstance(i_t, nx.Tensor) else i_t)))
    total = None
    for a, b in zip(fy, ft):
        term = nx.mean_all(nx.abs_(a - b.data))
        total = term if total is None else total + term
    return total


def loss_adversarial(d_real, d_fake):
    """(discriminator loss, generator loss) = (-log D(real) - log(1 - D(fake)), -D(fake))."""
    d_fake = nx.as_tensor(d_fake)
    real = nx.clip(nx.as_tensor(d_real), LOG_CLAMP, 1.0 - LOG_CLAMP)
    fake = nx.clip(d_fake, LOG_CLAMP, 1.0 - LOG_CLAMP)
    d_loss = nx.log(real) * -1.0 - nx.log(1.0 - fake)
    g_loss = d_fake * -1.0
    return d_loss, g_loss


def loss_total(terms, w):
    """Weighted sum of the named terms; missing or None terms count as zero.

    Returns (total tensor, LossReport).
    """
    total, vals = None, {}
    for name in LossReport.NAMES:
        t = terms.get(name)
        vals[name] = 0.0 if t is None else float(nx.as_tensor(t).data)
        if t is None:
            continue
        part = nx.as_tensor(t) * getattr(w, name)
        total = part if total is None else total + part
    if total is None:
        total = nx.Tensor(np.asarray(0.0))
    return total, LossReport(total=float(total.data), **vals)


# metrics


def psnr(y, gt, mask=None):
    y, gt = np.asarray(y, dtype=np.float64), np.asarray(gt, dtype=np.float64)
    if y.shape != gt.shape:
        raise ValueError(f"shape mismatch {y.shape} vs {gt.shape}")
    d = (y - gt) ** 2
    if mask is not None:
        sel = np.asarray(mask).astype(bool)
        if not sel.any():
            raise ValueError("empty mask")
        d = d[sel]
    mse = float(d.mean())
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def _gauss_window(size=11, sigma=1.5):
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r ** 2) / (2 * sigma * sigma))
    return g / g.sum()


def _filt(a, g):
    pad = (len(g) - 1) // 2
    out = correlate1d(correlate1d(a, g, axis=0, mode="reflect"), g, axis=1, mode="reflect")
    return out[pad:-pad, pad:-pad]


def ssim(y, gt, data_range=1.0):
    """Mean SSIM with an 11x11 Gaussian window (sigma 1.5), channel-averaged."""
    y, gt = np.asarray(y, dtype=np.float64), np.asarray(gt, dtype=np.float64)
    if y.shape != gt.shape:
        raise ValueError(f"shape mismatch {y.shape} vs {gt.shape}")
    if min(y.shape[:2]) < 11:
        raise ValueError("images must be at least 11x11 for SSIM")
    g = _gauss_window()
    c1, c2 = (0.01 * data_range) ** 2, (0.03 * data_range) ** 2
    chans = y.shape[2] if y.ndim == 3 else 1
    y3 = y.reshape(y.shape[0], y.shape[1], chans)
    t3 = gt.reshape(y3.shape)
    vals = []
    for ch in range(chans):
        a, b = y3[..., ch], t3[..., ch]
        mu_a, mu_b = _filt(a, g), _filt(b, g)
        saa = _filt(a * a, g) - mu_a ** 2
        sbb = _filt(b * b, g) - mu_b ** 2
        sab = _filt(a * b, g) - mu_a * mu_b
        num = (2 * mu_a * mu_b + c1) * (2 * sab + c2)
        den = (mu_a ** 2 + mu_b ** 2 + c1) * (saa + sbb + c2)
        vals.append(np.mean(num / den))
    return float(np.mean(vals))


def l1(y, gt):
    return float(np.mean(np.abs(np.asarray(y, dtype=np.float64) - np.asarray(gt, dtype=np.float64))))


def metrics(y, gt):
    """(PSNR dB, SSIM, L1)."""
    return psnr(y, gt), ssim(y, gt), l1(y, gt)
