"""Self-supervised adversarial training and cross-identity inference."""
import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import masks as mk
from . import numerics as nx
from .augment import HairBank
from .data import DataError, inference_inputs, make_training_sample
from .losses import (
    LossReport,
    LossWeights,
    PerceptualExtractor,
    loss_adversarial,
    loss_hc,
    loss_mask,
    loss_perceptual,
    loss_rec,
    loss_total,
    psnr,
)
from .model import NumericError, discriminate, forward, init_params, save_params, to_chw, to_hwc

log = logging.getLogger(__name__)

CSV_COLUMNS = ("step", "rec", "hc", "mask", "per", "adv", "total", "d_loss")


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def composite_tensor(y_hat, i_t, m_union):
    """Differentiable Y = y_hat * M + I_T * (1 - M); exact selection for binary M."""
    u = np.asarray(m_union, dtype=y_hat.dtype)[None]
    return y_hat * u + to_chw(i_t).astype(y_hat.dtype) * (1.0 - u)


def generator_losses(out, inp, cfg, params, extractor, weights, with_adv):
    """Forward-pass losses for one sample; returns (total tensor, LossReport, Y tensor)."""
    y = composite_tensor(out.y_hat, inp.i_t, inp.m_union)
    gt = to_chw(inp.i_t)
    m_gt = mk.downsample_mask(inp.m_gt, cfg.resolution // out.soft_mask.shape[0])
    terms = {
        "rec": loss_rec(y, gt, inp.m_src),
        "hc": loss_hc(out.to_rgb, to_chw(inp.i_t_hc)),
        "mask": loss_mask(out.soft_mask, m_gt),
        "per": loss_perceptual(y, gt, extractor),
    }
    if with_adv:
        _, terms["adv"] = loss_adversarial(0.5, discriminate(y, params))
    total, report = loss_total(terms, weights)
    return total, report, y


@dataclass
class TrainResult:
    params: object
    history: list  # per-step dicts keyed by CSV_COLUMNS


def _sample_order(n, seed, epoch):
    return nx.make_rng(seed, 3, epoch).permutation(n)


def _training_inputs(corpus, cfg, bank, step, b):
    """Deterministic per-(step, slot) sample choice and augmentation; skips empty heads."""
    n = len(corpus)
    pos = step * cfg.batch_size + b
    for attempt in range(n):
        k = pos + attempt
        idx = _sample_order(n, cfg.seed, k // n)[k % n]
        rng = nx.make_rng(cfg.seed, 1, step, b, attempt)
        try:
            return make_training_sample(corpus[idx], cfg, rng, bank)
        except DataError as exc:
            log.warning("skipping sample: %s", exc)
    raise DataError("no usable samples in corpus")


def _check_finite(values, step):
    for k, v in values.items():
        if not math.isfinite(v):
            raise NumericError(f"non-finite {k} loss at step {step}")


def train(corpus, cfg, out_dir=None, bank=None, params=None, progress=None):
    """Alternate discriminator and generator Adam steps for ``cfg.steps`` iterations.

    Writes ``losses.csv`` and ``checkpoint.bin`` under ``out_dir`` when given.
    """
    if not corpus:
        raise DataError("empty corpus")
    nx.set_default_dtype(cfg.dtype)
    if bank is None and cfg.hair_dir:
        bank = HairBank.from_dir(cfg.hair_dir)
    params = params or init_params(cfg)
    extractor = PerceptualExtractor(cfg.perceptual_seed, np.dtype(cfg.dtype))
    weights = LossWeights.from_config(cfg)
    with_adv = cfg.adversarial and cfg.lambda_adv > 0
    opt_g = Adam(params.gen.values(), cfg.lr_g, cfg.beta1, cfg.beta2, cfg.adam_eps)
    opt_d = Adam(params.disc.values(), cfg.lr_d, cfg.beta1, cfg.beta2, cfg.adam_eps)

    out_dir = Path(out_dir) if out_dir is not None else None
    writer = fh = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        fh = open(out_dir / "losses.csv", "w", newline="")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
    history = []
    try:
        for step in range(cfg.steps):
            batch = [_training_inputs(corpus, cfg, bank, step, b) for b in range(cfg.batch_size)]
            outs = [forward(inp.x, inp.i_t_head, inp.i_t_body, params, cfg) for inp in batch]
            scale = 1.0 / len(batch)

            d_loss_val = 0.0
            if with_adv:
                opt_d.zero_grad()
                for inp, out in zip(batch, outs):
                    y_fake = composite_tensor(out.y_hat, inp.i_t, inp.m_union).detach()
                    d_loss, _ = loss_adversarial(discriminate(inp.i_t, params), discriminate(y_fake, params))
                    (d_loss * scale).backward()
                    d_loss_val += float(d_loss.data) * scale
                opt_d.step()

            opt_g.zero_grad()
            sums = dict.fromkeys(LossReport.NAMES + ("total",), 0.0)
            for inp, out in zip(batch, outs):
                total, report, _ = generator_losses(out, inp, cfg, params, extractor, weights, with_adv)
                (total * scale).backward()
                for k in sums:
                    sums[k] += getattr(report, k) * scale
            row = {"step": step, **sums, "d_loss": d_loss_val}
            _check_finite({k: v for k, v in row.items() if k != "step"}, step)
            opt_g.step()
            opt_d.zero_grad()  # generator backward also reached the discriminator

            history.append(row)
            if writer is not None:
                writer.writerow([step] + [repr(float(row[c])) for c in CSV_COLUMNS[1:]])
            if out_dir is not None and cfg.ckpt_every and (step + 1) % cfg.ckpt_every == 0:
                fh.flush()
                save_params(out_dir / "checkpoint.bin", params, cfg, {"step": step + 1})
            if progress is not None:
                progress(row)
        if out_dir is not None:
            save_params(out_dir / "checkpoint.bin", params, cfg, {"step": cfg.steps})
    finally:
        if fh is not None:
            fh.close()
    return TrainResult(params, history)


def evaluate(params, corpus, cfg, seed=0, bank=None):
    """Mean L_rec and mean head-region PSNR over the corpus under a fixed augmentation draw."""
    recs, psnrs = [], []
    for i, s in enumerate(corpus):
        inp = make_training_sample(s, cfg, nx.make_rng(seed, 5, i), bank)
        out = forward(inp.x, inp.i_t_head, inp.i_t_body, params, cfg)
        y = composite_tensor(out.y_hat, inp.i_t, inp.m_union)
        recs.append(float(loss_rec(y, to_chw(inp.i_t), inp.m_src).data))
        psnrs.append(psnr(to_hwc(y), inp.i_t, mask=inp.m_src))
    return float(np.mean(recs)), float(np.mean(psnrs))


@dataclass
class InferenceResult:
    y: np.ndarray  # (H, W, 3), target kept outside the union mask
    y_hat: np.ndarray
    mask: np.ndarray  # predicted foreground at feature resolution
    m_union: np.ndarray
    attention: dict
    partition: object


def infer(source, target, params, cfg):
    source, target = source.resized(cfg.resolution), target.resized(cfg.resolution)
    inp = inference_inputs(source, target, cfg.chroma)
    out = forward(inp.x, inp.i_t_head, inp.i_t_body, params, cfg)
    y_hat = to_hwc(out.y_hat)
    y = mk.composite_output(y_hat, target.image, inp.m_union)
    return InferenceResult(y, y_hat, out.mask, inp.m_union, out.attention, out.partition)
