"""Pure-Python Levenshtein kernels (fallback lane).

Same contract as the compiled module in ``_speedups.pyx``; selected at import
time by :mod:`alienlang.editdist` when the extension is unavailable or
disabled.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def levenshtein(a: bytes, b: bytes) -> int:
    if a == b:
        return 0
    la, lb = len(a), len(b)
    if la == 0:
        return lb
    if lb == 0:
        return la
    if la < lb:  # keep the DP row short
        a, b = b, a
        la, lb = lb, la
    prev = list(range(lb + 1))
    cur = [0] * (lb + 1)
    for i in range(1, la + 1):
        cur[0] = i
        ca = a[i - 1]
        for j in range(1, lb + 1):
            cost = 0 if ca == b[j - 1] else 1
            cur[j] = min(prev[j - 1] + cost, prev[j] + 1, cur[j - 1] + 1)
        prev, cur = cur, prev
    return prev[lb]


def levenshtein_batch(left: list[bytes], right: list[bytes]) -> np.ndarray:
    if len(left) != len(right):
        raise ValueError("paired batches must have equal length")
    out = np.empty(len(left), dtype=np.int32)
    for idx, (a, b) in enumerate(zip(left, right)):
        out[idx] = levenshtein(a, b)
    return out
