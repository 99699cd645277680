#!/usr/bin/env python3
"""Benchmark the compiled packing kernels against the pure-Python fallback.

The fill loops dominate dataset generation (every structured draw packs the
instance twice, the EA packs four times per fitness call), so this is the
number that decides how long a tau sweep takes.

    python benchmarks/bench_packing.py [--count 2000]
"""

import argparse
import time

import numpy as np

from binselect import _fills_py
from binselect.generate import GeneratorSpec, sample_instance, stream_rng

try:
    from binselect import _fills_cy
except ImportError:
    _fills_cy = None

KERNELS = ("first_fit_fills", "best_fit_fills", "worst_fit_fills", "next_fit_fills")


def bench(module, instances, capacity):
    out = {}
    for name in KERNELS:
        fn = getattr(module, name)
        start = time.perf_counter()
        for items in instances:
            fn(items, capacity)
        out[name] = time.perf_counter() - start
    return out


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--count", type=int, default=2000, help="instances per preset")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    if _fills_cy is None:
        print("compiled extension not built; run `pip install -e .` with Cython available")

    for preset in ("ds2", "ds4"):
        spec = GeneratorSpec.preset(preset)
        instances = [np.asarray(
            sample_instance(spec, stream_rng(args.seed, i), f"b{i}").items,
            dtype=np.int64) for i in range(args.count)]

        py = bench(_fills_py, instances, spec.capacity)
        cy = bench(_fills_cy, instances, spec.capacity) if _fills_cy else None

        print(f"\n{preset}: {args.count} instances of {spec.n_items} items, "
              f"capacity {spec.capacity}")
        print(f"{'kernel':<18} {'python':>10} {'cython':>10} {'speedup':>9}")
        for name in KERNELS:
            label = name.replace("_fills", "")
            if cy is not None:
                print(f"{label:<18} {py[name]:>9.3f}s {cy[name]:>9.3f}s "
                      f"{py[name] / cy[name]:>8.1f}x")
            else:
                print(f"{label:<18} {py[name]:>9.3f}s {'-':>10} {'-':>9}")

        if cy is not None:
            for name in KERNELS:
                fn_py = getattr(_fills_py, name)
                fn_cy = getattr(_fills_cy, name)
                for items in instances[:200]:
                    assert list(fn_py(items, spec.capacity)) == \
                        list(fn_cy(items, spec.capacity)), f"{name} backends disagree"
            print("backend agreement verified on 200 instances per kernel")


if __name__ == "__main__":
    main()
