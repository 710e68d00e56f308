"""Training/inference configuration and its plain-text ``key = value`` format."""
import dataclasses
import hashlib
import json
from dataclasses import dataclass, fields

from .augment import HeadShapeParams


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    resolution: int = 64
    seed: int = 0
    steps: int = 2000
    batch_size: int = 1
    dtype: str = "float64"

    # optimiser
    lr_g: float = 1e-4
    lr_d: float = 4e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    # augmentation
    eps: float = 0.5
    rotation: tuple = (-10.0, 10.0)
    scale: tuple = (0.9, 1.2)
    squeeze: tuple = (0.8, 1.25)
    translate: tuple = (-0.05, 0.05)
    dilation: tuple = (0, 7)
    hair_dir: str = ""
    jitter: bool = True
    brightness: tuple = (0.8, 1.2)
    contrast: tuple = (0.8, 1.2)
    saturation: tuple = (0.8, 1.2)
    chroma: tuple = (0.0, 1.0, 0.0)

    # attention
    tau: float = 0.5
    patch: int = 4

    # loss weights
    lambda_rec: float = 10.0
    lambda_hc: float = 10.0
    lambda_mask: float = 10.0
    lambda_per: float = 1.0
    lambda_adv: float = 1.0
    adversarial: bool = True
    perceptual_seed: int = 1234

    # architecture
    enc_channels: int = 32
    channels: int = 64
    d_k: int = 64
    ff_hidden: int = 64
    fg_hidden: int = 16
    disc_channels: int = 16
    skips: bool = True  # encoder features routed into the decoder

    # bookkeeping
    ckpt_every: int = 500

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.resolution <= 0 or self.resolution % (4 * self.patch):
            raise ConfigError(f"resolution {self.resolution} must be a positive multiple of 4 * patch ({4 * self.patch})")
        if self.lr_g <= 0 or self.lr_d <= 0:
            raise ConfigError("learning rates must be positive")
        if not 0.0 < self.eps < 1.0:
            raise ConfigError("eps must lie in (0, 1)")
        if not 0.0 < self.tau < 1.0:
            raise ConfigError("tau must lie in (0, 1)")
        if self.dtype not in ("float64", "float32"):
            raise ConfigError("dtype must be float64 or float32")
        if self.batch_size < 1 or self.steps < 0:
            raise ConfigError("batch_size must be >= 1 and steps >= 0")
        for name in ("lambda_rec", "lambda_hc", "lambda_mask", "lambda_per", "lambda_adv"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        try:
            self.head_shape()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def head_shape(self):
        return HeadShapeParams(self.rotation, self.scale, self.squeeze, self.translate, self.dilation)

    @property
    def feature_size(self):
        return self.resolution // 4

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def shape_key(self):
        """Fields that determine parameter shapes."""
        keys = ("resolution", "patch", "enc_channels", "channels", "d_k", "ff_hidden", "fg_hidden", "disc_channels", "skips")
        return {k: getattr(self, k) for k in keys}

    def shape_hash(self):
        blob = json.dumps(self.shape_key(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


_FIELDS = {f.name: f for f in fields(TrainConfig)}


def _convert(name, raw):
    f = _FIELDS.get(name)
    if f is None:
        raise ConfigError(f"unknown config key {name!r}")
    default = f.default
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            parts = [p for p in raw.replace("(", "").replace(")", "").split(",") if p.strip()]
            kind = type(default[0])
            vals = tuple(kind(p) for p in parts)
            if len(vals) != len(default):
                raise ValueError(f"expected {len(default)} values")
            return vals
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r} ({exc})") from None


def parse_overrides(pairs):
    """``["key=value", ...]`` -> typed dict."""
    out = {}
    for item in pairs:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        k, v = item.split("=", 1)
        out[k.strip()] = _convert(k.strip(), v)
    return out


def load_config(path=None, overrides=None):
    values = {}
    if path is not None:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key = value")
                k, v = line.split("=", 1)
                values[k.strip()] = _convert(k.strip(), v)
    values.update(overrides or {})
    return TrainConfig(**values)


def dump_config(cfg, path):
    with open(path, "w") as fh:
        for k, v in cfg.to_dict().items():
            if isinstance(v, tuple):
                v = ", ".join(str(x) for x in v)
            fh.write(f"{k} = {v}\n")
