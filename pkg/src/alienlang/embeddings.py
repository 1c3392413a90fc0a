"""Token embedding stores: loading, normalization, proxy synthesis, exact kNN.

Retrieval is exact top-k cosine via blocked dense inner products.  At the
vocabulary scales this toolkit targets (up to a few hundred thousand rows,
small d) exact retrieval is affordable and removes approximation as a
correctness variable; blocking is purely a memory optimization.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ArgumentError, CoverageError, DegenerateInputError, FormatError
from .vocab import Vocabulary, reference_tokenize

_MAGIC = b"AEMB"
_VERSION = 1
_NORM_TOL = 1e-5


@dataclass(frozen=True)
class EmbeddingStore:
    """Dense per-token vectors, row-indexed by token_id.

    Rows are held as float64 internally regardless of the on-disk precision;
    the binary format stores little-endian float32.
    """

    rows: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2:
            raise FormatError("embedding matrix must be 2-dimensional")
        if not np.isfinite(rows).all():
            raise FormatError("embedding matrix contains non-finite values")
        if self.normalized:
            norms = np.linalg.norm(rows, axis=1)
            if not np.allclose(norms, 1.0, atol=_NORM_TOL):
                raise FormatError("normalized flag set but rows are not unit length")
        object.__setattr__(self, "rows", rows)

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def d(self) -> int:
        return self.rows.shape[1]

    def row(self, token_id: int) -> np.ndarray:
        if not 0 <= token_id < self.n:
            raise CoverageError(f"no embedding row for token id {token_id}")
        return self.rows[token_id]


def load_embeddings(path: str | Path) -> EmbeddingStore:
    """Load the binary ("AEMB") or word2vec-style text format."""
    path = Path(path)
    with open(path, "rb") as fp:
        head = fp.read(4)
    if head == _MAGIC:
        return _load_binary(path)
    return _load_text(path)


def _load_binary(path: Path) -> EmbeddingStore:
    data = path.read_bytes()
    if len(data) < 16:
        raise FormatError("binary embedding file truncated before header")
    magic, version, n, d = struct.unpack("<4sIII", data[:16])
    if magic != _MAGIC:
        raise FormatError("bad magic bytes")
    if version != _VERSION:
        raise FormatError(f"unsupported embedding format version {version}")
    expected = 16 + 4 * n * d
    if len(data) != expected:
        raise FormatError(f"expected {expected} bytes, file has {len(data)}")
    rows = np.frombuffer(data, dtype="<f4", offset=16).reshape(n, d)
    if not np.isfinite(rows).all():
        raise FormatError("embedding matrix contains non-finite values")
    return EmbeddingStore(rows=rows.astype(np.float64))


def _load_text(path: Path) -> EmbeddingStore:
    with open(path, "r", encoding="utf-8") as fp:
        header = fp.readline().split()
        if len(header) != 2:
            raise FormatError('text embedding file must start with an "n d" header')
        try:
            n, d = int(header[0]), int(header[1])
        except ValueError as e:
            raise FormatError("non-integer dimensions in header") from e
        rows = np.full((n, d), np.nan, dtype=np.float64)
        seen: set[int] = set()
        for lineno, line in enumerate(fp, start=2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != d + 1:
                raise FormatError(f"line {lineno}: expected id plus {d} values")
            tid = int(parts[0])
            if not 0 <= tid < n:
                raise FormatError(f"line {lineno}: token id {tid} outside [0, {n})")
            if tid in seen:
                raise FormatError(f"line {lineno}: duplicate row for token id {tid}")
            seen.add(tid)
            rows[tid] = [float(v) for v in parts[1:]]
    if len(seen) != n:
        raise FormatError(f"text file declared {n} rows but provided {len(seen)}")
    if not np.isfinite(rows).all():
        raise FormatError("embedding matrix contains non-finite values")
    return EmbeddingStore(rows=rows)


def save_embeddings(store: EmbeddingStore, path: str | Path, fmt: str = "binary") -> None:
    path = Path(path)
    if fmt == "binary":
        f32 = store.rows.astype("<f4")
        with open(path, "wb") as fp:
            fp.write(struct.pack("<4sIII", _MAGIC, _VERSION, store.n, store.d))
            fp.write(f32.tobytes())
    elif fmt == "text":
        with open(path, "w", encoding="utf-8") as fp:
            fp.write(f"{store.n} {store.d}\n")
            for tid in range(store.n):
                vals = " ".join(repr(float(v)) for v in store.rows[tid])
                fp.write(f"{tid} {vals}\n")
    else:
        raise ArgumentError(f"unknown embedding format {fmt!r}")


def normalize(store: EmbeddingStore) -> EmbeddingStore:
    """Scale every row to unit L2 norm; zero rows are rejected."""
    norms = np.linalg.norm(store.rows, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise DegenerateInputError(f"zero-norm embedding row(s): {zero[:5].tolist()}")
    return EmbeddingStore(rows=store.rows / norms[:, None], normalized=True)


def proxy_embed(
    token_string: bytes, proxy_vocab: Vocabulary, proxy_store: EmbeddingStore
) -> np.ndarray:
    """Represent a target token as the mean of its proxy subpiece vectors.

    Subpieces come from tokenizing the token's surface string under the proxy
    vocabulary, so neighborhoods can be computed without target-model access.
    """
    pieces = reference_tokenize(token_string, proxy_vocab)
    if len(pieces) == 0:
        raise CoverageError("empty token string has no subpieces")
    acc = np.zeros(proxy_store.d, dtype=np.float64)
    for tid in pieces:
        acc += proxy_store.row(tid)
    return acc / len(pieces)


def derive_proxy_store(
    target_vocab: Vocabulary, proxy_vocab: Vocabulary, proxy_store: EmbeddingStore
) -> EmbeddingStore:
    """Proxy-derived store covering every target token id (rows 0..max_id)."""
    max_id = max(target_vocab.id_to_token)
    rows = np.zeros((max_id + 1, proxy_store.d), dtype=np.float64)
    for tid, tok in target_vocab.id_to_token.items():
        rows[tid] = proxy_embed(tok, proxy_vocab, proxy_store)
    return EmbeddingStore(rows=rows)


def _topk_from_sims(
    sims: np.ndarray, cand_ids: np.ndarray, k: int, exclude: int | None
) -> tuple[np.ndarray, np.ndarray]:
    """Exact top-k of one similarity row with (-sim, id) ordering.

    Ties at the k-th position are resolved to the lowest token ids, matching
    the exhaustive-sort contract.
    """
    if exclude is not None:
        keep = cand_ids != exclude
        sims = sims[keep]
        cand_ids = cand_ids[keep]
    m = sims.shape[0]
    if m == 0:
        return np.empty(0, dtype=cand_ids.dtype), np.empty(0, dtype=sims.dtype)
    kk = min(k, m)
    if kk < m:
        part = np.argpartition(-sims, kk - 1)
        kth = sims[part[kk - 1]]
        definite = np.flatnonzero(sims > kth)
        tied = np.flatnonzero(sims == kth)
        need = kk - definite.size
        tied_sorted = tied[np.argsort(cand_ids[tied], kind="stable")][:need]
        chosen = np.concatenate([definite, tied_sorted])
    else:
        chosen = np.arange(m)
    order = np.lexsort((cand_ids[chosen], -sims[chosen]))
    chosen = chosen[order]
    return cand_ids[chosen], sims[chosen]


def knn(
    store: EmbeddingStore,
    query_id: int,
    k: int,
    candidate_set: Iterable[int],
) -> list[int]:
    """Exact top-k cosine neighbors of a token among a candidate set.

    The query token itself is excluded from results.  Requires a normalized
    store (cosine equals the dot product).  Ties break by ascending token id.
    """
    if k <= 0:
        raise ArgumentError("k must be a positive integer")
    if not store.normalized:
        raise ArgumentError("knn requires a normalized store")
    cand_ids = np.fromiter(sorted(set(candidate_set)), dtype=np.int64)
    if cand_ids.size and (cand_ids[0] < 0 or cand_ids[-1] >= store.n):
        raise CoverageError("candidate set contains ids without embedding rows")
    q = store.row(query_id)
    sims = store.rows[cand_ids] @ q
    ids, _ = _topk_from_sims(sims, cand_ids, k, exclude=query_id)
    return ids.tolist()


def topk_cosine(
    store: EmbeddingStore,
    query_ids: Sequence[int],
    k: int,
    candidate_ids: Sequence[int],
    block: int = 512,
) -> tuple[np.ndarray, np.ndarray]:
    """Batched exact top-k over a shared candidate set.

    Returns (neighbor_ids, sims) of shape (len(query_ids), k'), where
    k' = min(k, usable candidates).  Each query is excluded from its own
    neighbor list.  Results are independent of the block width.
    """
    if k <= 0:
        raise ArgumentError("k must be a positive integer")
    if not store.normalized:
        raise ArgumentError("topk_cosine requires a normalized store")
    cand = np.asarray(sorted(set(candidate_ids)), dtype=np.int64)
    queries = np.asarray(query_ids, dtype=np.int64)
    width = min(k, cand.size)
    out_ids = np.full((queries.size, width), -1, dtype=np.int64)
    out_sims = np.full((queries.size, width), -np.inf, dtype=np.float64)
    if width == 0:
        return out_ids, out_sims
    cand_rows = store.rows[cand]
    block = max(1, block)
    for start in range(0, queries.size, block):
        stop = min(start + block, queries.size)
        sims_block = store.rows[queries[start:stop]] @ cand_rows.T
        for r in range(stop - start):
            qid = int(queries[start + r])
            ids_r, sims_r = _topk_from_sims(sims_block[r], cand, k, exclude=qid)
            out_ids[start + r, : ids_r.size] = ids_r
            out_sims[start + r, : sims_r.size] = sims_r
    return out_ids, out_sims
