"""Compare the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from obsreward import _kernels_py

try:
    from obsreward import _kernels
except ImportError:  # extension not built
    _kernels = None


def _cases():
    rng = np.random.default_rng(0)
    streams = np.arange(100_000, dtype=np.uint64) | np.uint64(1 << 48)
    diffs_small = np.ascontiguousarray(rng.normal(size=(500, 10)))
    diffs_large = np.ascontiguousarray(rng.normal(size=(20_000, 20)))
    w10, w20 = rng.normal(size=10), rng.normal(size=20)
    return {
        "counter_uniforms 100k x 32": lambda k: k.counter_uniforms(7, streams, 32),
        "bt_loss_grad 500 x 10": lambda k: k.bt_loss_grad(diffs_small, w10, 1e-3),
        "bt_loss_grad 20k x 20": lambda k: k.bt_loss_grad(diffs_large, w20, 1e-3),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = [("python", _kernels_py)] + ([("cython", _kernels)] if _kernels else [])
    print(f"{'kernel':<30}" + "".join(f"{name:>14}" for name, _ in backends) + ("      speedup" if _kernels else ""))
    for label, fn in _cases().items():
        times = []
        for _, mod in backends:
            n = max(1, int(0.2 / max(timeit.timeit(lambda: fn(mod), number=1), 1e-6)))
            best = min(timeit.repeat(lambda: fn(mod), number=n, repeat=args.repeat)) / n
            times.append(best)
        row = f"{label:<30}" + "".join(f"{t * 1e3:>11.3f} ms" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:>12.1f}x"
        print(row)


if __name__ == "__main__":
    main()
