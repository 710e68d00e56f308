"""Toy generator (encoder, head colorizer, body blender, ToRGB, decoder) and discriminator.

Feature maps are (C, H, W) tensors; public images are (H, W, 3) arrays.
"""
import json
import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from . import numerics as nx
from .fpat import colorizer_cross_attention, fpat_block, predict_foreground

FORMAT_VERSION = 1
MAGIC = b"HBCK"


class NumericError(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass


def to_chw(img):
    return np.ascontiguousarray(np.transpose(np.asarray(img), (2, 0, 1)))


def to_hwc(x):
    data = x.data if isinstance(x, nx.Tensor) else np.asarray(x)
    return np.ascontiguousarray(np.transpose(data, (1, 2, 0)))


def param_shapes(cfg):
    """Ordered name -> shape maps for generator and discriminator."""
    ce, c, k = cfg.enc_channels, cfg.channels, cfg.d_k
    h = cfg.feature_size
    tokens = h * h
    d = cfg.patch * cfg.patch * c
    n = tokens // (cfg.patch * cfg.patch)
    gen = {}
    for pre in ("enc", "cond"):
        gen[f"{pre}1_w"], gen[f"{pre}1_b"] = (ce, 3, 3, 3), (ce,)
        gen[f"{pre}2_w"], gen[f"{pre}2_b"] = (c, ce, 3, 3), (c,)
        gen[f"{pre}3_w"], gen[f"{pre}3_b"] = (c, c, 3, 3), (c,)
    gen.update({
        "col_wq": (c, k), "col_wk": (c, k), "col_wv": (c, c), "col_wo": (c, c),
        "col_ff_w1": (c, cfg.ff_hidden), "col_ff_b1": (cfg.ff_hidden,),
        "col_ff_w2": (cfg.ff_hidden, c), "col_ff_b2": (c,),
        "col_pos_q": (tokens, c), "col_pos_k": (tokens, c),
        "fg_w1": (cfg.fg_hidden, c, 3, 3), "fg_b1": (cfg.fg_hidden,),
        "fg_w2": (1, cfg.fg_hidden, 1, 1), "fg_b2": (1,),
        "fp_wq": (d, k), "fp_wk": (d, k), "fp_wv": (d, d),
        "fp_pos_q": (n, d), "fp_pos_k": (n, d),
        "rgb_w": (3, c, 1, 1), "rgb_b": (3,),
        "dec1_w": (c, 2 * c, 3, 3), "dec1_b": (c,),
        "dec2_w": (ce, 2 * c if cfg.skips else c, 3, 3), "dec2_b": (ce,),
        "dec3_w": (ce, 2 * ce + 3 if cfg.skips else ce, 3, 3), "dec3_b": (ce,),
        "dec4_w": (3, ce, 3, 3), "dec4_b": (3,),
    })
    cd = cfg.disc_channels
    disc = {
        "d1_w": (cd, 3, 3, 3), "d1_b": (cd,),
        "d2_w": (2 * cd, cd, 3, 3), "d2_b": (2 * cd,),
        "d3_w": (2 * cd, 2 * cd, 3, 3), "d3_b": (2 * cd,),
        "d_fc_w": (2 * cd, 1), "d_fc_b": (1,),
    }
    return gen, disc


# He gain for leaky_relu(0.2)
INIT_GAIN = math.sqrt(2.0 / (1.0 + 0.2 ** 2))
# zero-initialised so the residual/sigmoid heads start neutral
_ZERO_INIT = {"col_ff_w2", "d_fc_w"}


def _init(name, shape, rng, dtype):
    if name.endswith("_b") or len(shape) == 1 or name in _ZERO_INIT:
        return np.zeros(shape, dtype=dtype)
    if "pos" in name:
        return rng.normal(0.0, 0.1, size=shape).astype(dtype)
    fan_in = int(np.prod(shape[1:])) if len(shape) == 4 else shape[0]
    gain = INIT_GAIN if len(shape) == 4 else 1.0
    return rng.normal(0.0, gain / math.sqrt(fan_in), size=shape).astype(dtype)


@dataclass
class ModelParams:
    gen: dict
    disc: dict
    shape_key: dict = field(default_factory=dict)

    def tensors(self):
        return {**{f"gen.{k}": v for k, v in self.gen.items()}, **{f"disc.{k}": v for k, v in self.disc.items()}}

    def zero_grad(self):
        for t in self.tensors().values():
            t.grad = None

    def equals(self, other):
        a, b = self.tensors(), other.tensors()
        return a.keys() == b.keys() and all(
            a[k].data.dtype == b[k].data.dtype and np.array_equal(a[k].data, b[k].data) for k in a
        )


def init_params(cfg, seed=None):
    dtype = np.dtype(cfg.dtype)
    rng = nx.make_rng(cfg.seed if seed is None else seed, 101)
    gshapes, dshapes = param_shapes(cfg)
    gen = {k: nx.Tensor(_init(k, s, rng, dtype), requires_grad=True, name=k) for k, s in gshapes.items()}
    disc = {k: nx.Tensor(_init(k, s, rng, dtype), requires_grad=True, name=k) for k, s in dshapes.items()}
    return ModelParams(gen, disc, cfg.shape_key())


@dataclass
class ForwardOutputs:
    z_c: nx.Tensor
    z_b: nx.Tensor
    z: nx.Tensor
    y_hat: nx.Tensor  # (3, H, W)
    to_rgb: nx.Tensor  # (3, H, W)
    soft_mask: nx.Tensor  # (h, w)
    mask: np.ndarray  # (h, w) uint8
    attention: dict
    partition: object


def _check(t, layer):
    if not np.all(np.isfinite(t.data)):
        raise NumericError(f"non-finite activation in {layer}")
    return t


def _encode(x, p, pre):
    """Returns the (C, h, w) feature and the two higher-resolution intermediates."""
    h1 = nx.leaky_relu(nx.conv2d(x, p[f"{pre}1_w"], p[f"{pre}1_b"], stride=1, pad=1))
    h2 = nx.leaky_relu(nx.conv2d(h1, p[f"{pre}2_w"], p[f"{pre}2_b"], stride=2, pad=1))
    h3 = nx.leaky_relu(nx.conv2d(h2, p[f"{pre}3_w"], p[f"{pre}3_b"], stride=2, pad=1))
    return _check(h3, pre), (x, h1, h2)


def _decode(z, p, skips=None):
    h = nx.leaky_relu(nx.conv2d(z, p["dec1_w"], p["dec1_b"], pad=1))
    h = nx.upsample_nearest(h, 2)
    if skips is not None:
        h = nx.concat([h, skips[2]], axis=0)
    h = nx.leaky_relu(nx.conv2d(h, p["dec2_w"], p["dec2_b"], pad=1))
    h = nx.upsample_nearest(h, 2)
    if skips is not None:
        h = nx.concat([h, skips[1], skips[0]], axis=0)
    h = nx.leaky_relu(nx.conv2d(h, p["dec3_w"], p["dec3_b"], pad=1))
    return _check(nx.sigmoid(nx.conv2d(h, p["dec4_w"], p["dec4_b"], pad=1)), "decoder")


def forward(x, i_t_head, i_t_body, params, cfg):
    """Generator pass. Image arguments are (H, W, 3) arrays or (3, H, W) tensors."""
    p = params.gen
    x, i_t_head, i_t_body = (a if isinstance(a, nx.Tensor) else nx.Tensor(to_chw(a).astype(cfg.dtype))
                             for a in (x, i_t_head, i_t_body))
    if not (x.shape == i_t_head.shape == i_t_body.shape == (3, cfg.resolution, cfg.resolution)):
        raise ValueError(f"inputs must be {cfg.resolution}x{cfg.resolution} RGB, got {x.shape}, {i_t_head.shape}, {i_t_body.shape}")
    feat, enc_skips = _encode(x, p, "enc")
    cond, _ = _encode(i_t_head, p, "cond")
    col_w = {k[4:]: v for k, v in p.items() if k.startswith("col_")}
    z_c, col_attn = colorizer_cross_attention(feat, cond, col_w)
    _check(z_c, "colorizer")
    soft, m = predict_foreground(z_c, p)
    _check(soft, "foreground predictor")
    body, _ = _encode(i_t_body, p, "enc")
    fp_w = {k[3:]: v for k, v in p.items() if k.startswith("fp_")}
    z_b, fp_attn, part = fpat_block(z_c, body, m, fp_w, cfg.patch, cfg.tau)
    _check(z_b, "body blender")
    z = nx.concat([z_c, z_b], axis=0)
    y_hat = _decode(z, p, enc_skips if cfg.skips else None)
    rgb = nx.sigmoid(nx.conv2d(z_c, p["rgb_w"], p["rgb_b"]))
    rgb = _check(nx.upsample_nearest(rgb, cfg.resolution // z_c.shape[1]), "to_rgb")
    return ForwardOutputs(z_c, z_b, z, y_hat, rgb, soft, m,
                          {"colorizer": col_attn.data, "fpat": fp_attn.data}, part)


def discriminate(img, params):
    """Probability that ``img`` (H, W, 3 array or 3, H, W tensor) is real, as a scalar tensor."""
    p = params.disc
    x = img if isinstance(img, nx.Tensor) else nx.Tensor(to_chw(img))
    h = nx.leaky_relu(nx.conv2d(x, p["d1_w"], p["d1_b"], stride=2, pad=1))
    h = nx.leaky_relu(nx.conv2d(h, p["d2_w"], p["d2_b"], stride=2, pad=1))
    h = nx.leaky_relu(nx.conv2d(h, p["d3_w"], p["d3_b"], stride=2, pad=1))
    logit = nx.matmul(nx.global_mean_pool(h), p["d_fc_w"]) + p["d_fc_b"]
    return _check(nx.reshape(nx.sigmoid(logit), ()), "discriminator")


# checkpoints


def save_params(path, params, cfg=None, extra=None):
    """Little-endian float blob behind a JSON header; written atomically."""
    entries, blobs, offset = [], [], 0
    for name, t in params.tensors().items():
        arr = np.ascontiguousarray(t.data)
        raw = arr.astype(arr.dtype.newbyteorder("<")).tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "dtype": arr.dtype.str.lstrip("<>=|"),
                        "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = {
        "format_version": FORMAT_VERSION,
        "shape_key": params.shape_key,
        "shape_hash": cfg.shape_hash() if cfg is not None else None,
        "config": {k: list(v) if isinstance(v, tuple) else v for k, v in cfg.to_dict().items()} if cfg else None,
        "tensors": entries,
        "data_bytes": offset,
        "extra": extra or {},
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(hbytes)))
        fh.write(hbytes)
        for b in blobs:
            fh.write(b)
    os.replace(tmp, path)


def read_header(path):
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        size = fh.read(8)
        if len(size) != 8:
            raise CheckpointError(f"{path}: truncated header")
        (n,) = struct.unpack("<Q", size)
        raw = fh.read(n)
        if len(raw) != n:
            raise CheckpointError(f"{path}: truncated header")
        return json.loads(raw), 12 + n


def load_params(path, cfg=None):
    header, start = read_header(path)
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: format version {header.get('format_version')}, expected {FORMAT_VERSION}")
    if cfg is not None and header["shape_key"] != cfg.shape_key():
        raise CheckpointError(f"{path}: checkpoint shapes {header['shape_key']} do not match config {cfg.shape_key()}")
    with open(path, "rb") as fh:
        fh.seek(start)
        blob = fh.read()
    if len(blob) != header["data_bytes"]:
        raise CheckpointError(f"{path}: truncated data ({len(blob)} of {header['data_bytes']} bytes)")
    gen, disc = {}, {}
    for e in header["tensors"]:
        arr = np.frombuffer(blob, dtype=np.dtype("<" + e["dtype"]), count=int(np.prod(e["shape"], dtype=np.int64)),
                            offset=e["offset"]).reshape(e["shape"]).astype(e["dtype"])
        group, name = e["name"].split(".", 1)
        (gen if group == "gen" else disc)[name] = nx.Tensor(arr.copy(), requires_grad=True, name=name)
    if cfg is not None:
        gshapes, dshapes = param_shapes(cfg)
        for want, have, label in ((gshapes, gen, "generator"), (dshapes, disc, "discriminator")):
            got = {k: tuple(v.shape) for k, v in have.items()}
            if got != {k: tuple(s) for k, s in want.items()}:
                raise CheckpointError(f"{path}: {label} tensors do not match config")
    return ModelParams(gen, disc, header["shape_key"])
