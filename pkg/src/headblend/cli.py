"""Command-line entry point.

Exit codes: 0 ok, 1 usage/config error, 2 data error, 3 numeric failure.
"""
import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import masks as mk
from .augment import HairBank, h2_union
from .config import ConfigError, TrainConfig, dump_config, load_config, parse_overrides
from .data import DataError, build_network_inputs, load_corpus, load_sample, write_synthetic_corpus
from .losses import metrics
from .model import CheckpointError, NumericError, load_params, read_header
from .numerics import make_rng
from .train import infer, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="config override (repeatable)")
    p.add_argument("--seed", type=int, help="overrides the config seed")


def _config(args, base=None):
    over = parse_overrides(args.set)
    if args.seed is not None:
        over["seed"] = args.seed
    if args.config is None and base is not None:
        return base.replace(**over)
    return load_config(args.config, over)


def _ckpt_config(path):
    """Config stored in a checkpoint header, or defaults when absent."""
    saved = read_header(path)[0].get("config") or {}
    fields = TrainConfig.__dataclass_fields__
    vals = {k: tuple(v) if isinstance(v, list) else v for k, v in saved.items() if k in fields}
    return TrainConfig(**vals)


def _bank(cfg, hair):
    path = hair or cfg.hair_dir
    return HairBank.from_dir(path) if path else None


def cmd_synth(args):
    corpus, hair = write_synthetic_corpus(args.out, args.n, args.resolution, args.seed or 0, args.hair)
    print(f"corpus: {corpus}\nhair: {hair}")


def cmd_augment(args):
    cfg = _config(args)
    corpus = load_corpus(args.corpus, cfg.resolution)
    bank = _bank(cfg, args.hair)
    out = Path(args.out)
    for i, s in enumerate(corpus):
        rng = make_rng(cfg.seed, 21, i)
        m_union, m_ip = h2_union(s.head, cfg.head_shape(), bank, cfg.eps, rng)
        inp = build_network_inputs(s.image, s.head, s.image, s.parsing, m_union, cfg.chroma)
        d = out / s.name
        d.mkdir(parents=True, exist_ok=True)
        mk.write_mask(d / "m_union.png", m_union)
        mk.write_mask(d / "m_ip.png", m_ip)
        mk.write_image(d / "x.png", inp.x)
    print(f"wrote {len(corpus)} samples to {out}")


def cmd_train(args):
    cfg = _config(args)
    corpus = load_corpus(args.corpus, cfg.resolution)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, out / "config.txt")

    def progress(row):
        if args.verbose or row["step"] % 100 == 0:
            print(f"step {row['step']:6d}  total {row['total']:.5f}  rec {row['rec']:.5f}  d {row['d_loss']:.4f}", flush=True)

    train(corpus, cfg, out, bank=_bank(cfg, args.hair), progress=progress)
    print(f"checkpoint: {out / 'checkpoint.bin'}")


def _load(args):
    cfg = _config(args, _ckpt_config(args.ckpt))
    params = load_params(args.ckpt, cfg)
    return cfg, params


def _write_attention(out, res):
    for name, a in res.attention.items():
        mk.write_heatmap(out / f"attn_{name}.png", a)
    mk.write_mask(out / "M.png", res.mask)


def cmd_infer(args):
    cfg, params = _load(args)
    res = infer(load_sample(args.source), load_sample(args.target), params, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mk.write_image(out / "Y.png", res.y)
    _write_attention(out, res)
    print(f"wrote {out / 'Y.png'}")


def cmd_viz_attn(args):
    cfg, params = _load(args)
    res = infer(load_sample(args.source), load_sample(args.target), params, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_attention(out, res)
    # foreground/background patch split, one pixel per patch
    n = int(round(np.sqrt(res.partition.n)))
    mk.write_mask(out / "patch_labels.png", res.partition.labels().reshape(n, n).astype(np.uint8))
    print(f"wrote attention maps to {out}")


def _pngs(d):
    d = Path(d)
    if not d.is_dir():
        raise DataError(f"{d}: not a directory")
    return {p.relative_to(d).as_posix(): p for p in sorted(d.rglob("*.png"))}


def cmd_metrics(args):
    a, b = _pngs(args.dir_a), _pngs(args.dir_b)
    common = sorted(set(a) & set(b))
    if not common:
        raise DataError("no matching PNG files in the two directories")
    rows = []
    for name in common:
        x, y = mk.read_image(a[name]), mk.read_image(b[name])
        if x.shape != y.shape:
            raise DataError(f"{name}: sizes differ {x.shape} vs {y.shape}")
        rows.append(metrics(x, y))
        if args.verbose:
            print(f"{name}: PSNR {rows[-1][0]:.2f} dB  SSIM {rows[-1][1]:.4f}  L1 {rows[-1][2]:.6f}")
    p, s, l = np.mean(rows, axis=0)
    print(f"PSNR {p:.2f} dB  SSIM {s:.4f}  L1 {l:.6f}  ({len(rows)} images)")


def build_parser():
    parser = _Parser(prog="headblend", description="Head blending toy pipeline")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic corpus and hair bank")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--hair", type=int, default=4, help="number of hair masks")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("augment", help="emit H2 masks and network inputs for a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--hair")
    _common(p)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train", help="train on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--hair")
    _common(p)
    p.set_defaults(func=cmd_train)

    for name, func, text in (("infer", cmd_infer, "blend a source head onto a target"),
                             ("viz-attn", cmd_viz_attn, "dump attention heatmaps and the predicted mask")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--source", required=True)
        p.add_argument("--target", required=True)
        p.add_argument("--ckpt", required=True)
        p.add_argument("--out", default=".")
        _common(p)
        p.set_defaults(func=func)

    p = sub.add_parser("metrics", help="PSNR/SSIM/L1 between same-named PNGs of two directories")
    p.add_argument("dir_a")
    p.add_argument("dir_b")
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"headblend: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"headblend: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FileNotFoundError, NotADirectoryError) as exc:
        parser.print_usage(sys.stderr)
        print(f"headblend: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DataError, CheckpointError, mk.MaskError) as exc:
        print(f"headblend: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
