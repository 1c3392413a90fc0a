#!/usr/bin/env python3
"""Benchmark the compiled edit-distance kernel against the pure-Python lane.

The kernel dominates key-build time (one Levenshtein per retrieved candidate
pair, millions of short pairs at vocabulary scale), so this is the number that
decides whether building the extension is worth it on a given machine.

Usage:
    python3 benchmarks/bench_editdist.py            # kernel microbenchmark
    python3 benchmarks/bench_editdist.py --build    # plus end-to-end key builds
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from alienlang import _editdist_py
from alienlang import editdist

try:
    from alienlang import _speedups
except ImportError:
    _speedups = None


def make_pairs(count: int, min_len: int = 3, max_len: int = 12, seed: int = 0):
    rng = np.random.default_rng(seed)
    def string():
        size = int(rng.integers(min_len, max_len + 1))
        return bytes(rng.integers(97, 123, size=size, dtype=np.uint8))
    left = [string() for _ in range(count)]
    right = [string() for _ in range(count)]
    return left, right


def time_batch(impl, left, right, repeats: int = 3) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        impl.levenshtein_batch(left, right)
        best = min(best, time.perf_counter() - start)
    return best


def kernel_benchmark(count: int) -> None:
    left, right = make_pairs(count)
    print(f"kernel benchmark: {count:,} pairs of 3-12 byte strings")
    rows = []
    py_time = time_batch(_editdist_py, left, right)
    rows.append(("python", py_time))
    if _speedups is not None:
        c_time = time_batch(_speedups, left, right)
        rows.append(("c", c_time))
    for name, seconds in rows:
        print(f"  {name:>7}: {seconds:8.3f}s  ({count / seconds:12,.0f} pairs/s)")
    if _speedups is not None:
        print(f"  speedup: {py_time / c_time:.1f}x")
    else:
        print("  compiled extension not built; only the fallback lane was timed")


BUILD_SNIPPET = r"""
import sys, time
import numpy as np
sys.path.insert(0, "tests")
from helpers import random_vocab, unit_store
from alienlang import BuildConfig, build_key, editdist
rng = np.random.default_rng(0)
vocab = random_vocab(rng, {n}, specials=8)
store = unit_store(rng, {n}, 32)
start = time.monotonic()
build_key(vocab, store, BuildConfig(k=20, seed=0, greedy_batch=512))
print(f"{{editdist.BACKEND}} {{time.monotonic() - start:.2f}}")
"""


def build_benchmark(n: int) -> None:
    print(f"end-to-end key build: {n:,} tokens, d=32, k=20")
    for force_pure in (False, True):
        env = dict(os.environ)
        env["ALIENLANG_PURE_PYTHON"] = "1" if force_pure else "0"
        out = subprocess.run(
            [sys.executable, "-c", BUILD_SNIPPET.format(n=n)],
            capture_output=True,
            text=True,
            env=env,
            check=True,
        ).stdout.strip()
        backend, seconds = out.split()
        print(f"  {backend:>7}: {float(seconds):8.2f}s")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--pairs", type=int, default=1_000_000)
    parser.add_argument("--build", action="store_true", help="also time end-to-end key builds")
    parser.add_argument("--build-size", type=int, default=16_384)
    args = parser.parse_args()
    print(f"active backend in this process: {editdist.BACKEND}")
    kernel_benchmark(args.pairs)
    if args.build:
        build_benchmark(args.build_size)


if __name__ == "__main__":
    main()
