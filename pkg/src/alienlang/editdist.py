"""Edit-distance entry points with backend selection.

Prefers the compiled extension; falls back to pure Python when it is missing
or when ``ALIENLANG_PURE_PYTHON=1`` is set.  ``BACKEND`` reports which lane is
active so tests and the benchmark can compare both.
"""

from __future__ import annotations

import os

import numpy as np

if os.environ.get("ALIENLANG_PURE_PYTHON", "") not in ("", "0"):
    from . import _editdist_py as _impl
else:
    try:
        from . import _speedups as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _editdist_py as _impl

BACKEND: str = _impl.BACKEND

levenshtein = _impl.levenshtein
levenshtein_batch = _impl.levenshtein_batch


def normalized_levenshtein(a: bytes, b: bytes) -> float:
    """Levenshtein distance divided by max(|a|, |b|); 0.0 for two empties."""
    denom = max(len(a), len(b))
    if denom == 0:
        return 0.0
    return levenshtein(a, b) / denom


def normalized_batch(left: list[bytes], right: list[bytes]) -> np.ndarray:
    raw = levenshtein_batch(left, right).astype(np.float64)
    denom = np.maximum(
        np.fromiter((len(a) for a in left), dtype=np.float64, count=len(left)),
        np.fromiter((len(b) for b in right), dtype=np.float64, count=len(right)),
    )
    np.divide(raw, denom, out=raw, where=denom > 0)
    return raw
