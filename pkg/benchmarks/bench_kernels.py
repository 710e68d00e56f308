"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from headblend import kernels
from headblend.kernels import _fallback


def cases(rng):
    x = rng.normal(size=(32, 64, 64))
    cols = _fallback.im2col(x, 3, 1, 1)
    m = (rng.random((256, 256)) < 0.02).astype(np.uint8)
    off = kernels.disk_offsets(5)
    inv = np.array([[0.95, 0.1, 3.0], [-0.1, 1.05, -2.0]])
    return {
        "im2col 32x64x64 k3": lambda mod: mod.im2col(x, 3, 1, 1),
        "col2im 32x64x64 k3": lambda mod: mod.col2im(cols, x.shape, 3, 1, 1),
        "dilate 256x256 r5": lambda mod: mod.dilate(m, off),
        "warp 256x256": lambda mod: mod.warp_nearest(m, inv),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    backends = {"numpy": _fallback}
    try:
        backends["cython"] = kernels.get_backend("cython")
    except ImportError:
        print("compiled kernels not built; timing the numpy fallback only")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<22}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for name, fn in cases(rng).items():
        times = {b: min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat)) for b, mod in backends.items()}
        line = f"{name:<22}" + "".join(f"{t * 1e3:>10.3f}ms" for t in times.values())
        if len(times) > 1:
            line += f"{times['numpy'] / times['cython']:>11.1f}x"
        print(line)


if __name__ == "__main__":
    main()
