"""Build, score, serialize, and diagnose vocabulary bijection keys.

A key is a seeded involutive permutation over the masked subset of non-special
token IDs.  Construction is greedy: the masked IDs are partitioned into seeded
buckets; within each bucket every token's top-k cosine neighbors are retrieved
once, and tokens are traversed in ascending order, each unpaired token pairing
with its best-scoring still-available neighbor.  Neighborless leftovers are
paired by a seeded shuffle; an odd leftover becomes a recorded fixed point.

The pair score trades surface opacity against embedding closeness:

    score(i, j) = edit(s_i, s_j) - mu * (1 - cos(e_i, e_j))

with the edit term length-normalized by default (``raw`` mode keeps plain
Levenshtein).  Higher is better.  All tie-breaks are ascending token id so a
key is a pure function of (vocabulary, embeddings, config).
"""

from __future__ import annotations

import json
import math
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable

import numpy as np

from . import editdist
from .embeddings import EmbeddingStore, topk_cosine
from .errors import ArgumentError, CompatibilityError, CoverageError, FormatError
from .seeding import derive_rng, derive_seed
from .vocab import Vocabulary

KEY_FORMAT_VERSION = 1

EDIT_MODES = ("normalized", "raw")


@dataclass(frozen=True)
class BuildConfig:
    """Key construction parameters.  Defaults mirror the published setup."""

    k: int = 100
    mu: float = 1.0
    rho: float = 1.0
    seed: int = 0
    buckets: int = 1
    greedy_batch: int = 50
    edit_mode: str = "normalized"

    def __post_init__(self):
        if self.k < 1:
            raise ArgumentError("k must be >= 1")
        if self.mu < 0:
            raise ArgumentError("mu must be >= 0")
        if not 0.0 <= self.rho <= 1.0:
            raise ArgumentError("rho must lie in [0, 1]")
        if self.buckets < 1:
            raise ArgumentError("buckets must be >= 1")
        if self.greedy_batch < 1:
            raise ArgumentError("greedy_batch must be >= 1")
        if self.edit_mode not in EDIT_MODES:
            raise ArgumentError(f"edit_mode must be one of {EDIT_MODES}")


@dataclass(frozen=True)
class BijectionKey:
    """The client-held secret: an involutive mapping over the masked IDs.

    ``mapping`` is total on ``mask`` (fixed points map to themselves) and is
    its own inverse.  ``bucket_of`` records the bucket layout used during
    construction; it is derivable from (seed, buckets, id) and therefore not
    serialized.
    """

    version: int
    vocab_fingerprint: int
    config: BuildConfig
    mask: frozenset[int]
    mapping: dict[int, int]
    bucket_of: dict[int, int]
    fixed_points: tuple[int, ...]

    def apply(self, token_id: int) -> int:
        return self.mapping.get(token_id, token_id)

    def validate(self) -> None:
        """Check the structural invariants; raises FormatError on violation."""
        if set(self.mapping) != self.mask:
            raise FormatError("mapping domain differs from mask")
        for i, j in self.mapping.items():
            if j not in self.mask:
                raise FormatError(f"mapping image {j} escapes the mask")
            if self.mapping.get(j) != i:
                raise FormatError(f"involution broken at pair ({i}, {j})")
        fixed = {i for i, j in self.mapping.items() if i == j}
        if fixed != set(self.fixed_points):
            raise FormatError("fixed_points list disagrees with mapping")


def bucket_index(seed: int, buckets: int, token_id: int) -> int:
    """Seeded bucket assignment for one token id.

    Per-id hashing keeps the layout independent of rho: changing the mask adds
    or removes members from cells but never moves a token between cells.
    """
    if buckets == 1:
        return 0
    return derive_seed("bucket", seed, token_id) % buckets


def score_strings(
    a: bytes, b: bytes, ea: np.ndarray, eb: np.ndarray, mu: float, edit_mode: str = "normalized"
) -> float:
    """Pair score from raw surfaces and embedding vectors (higher is better)."""
    if edit_mode == "raw":
        edit = float(editdist.levenshtein(a, b))
    elif edit_mode == "normalized":
        edit = editdist.normalized_levenshtein(a, b)
    else:
        raise ArgumentError(f"edit_mode must be one of {EDIT_MODES}")
    na = float(np.linalg.norm(ea))
    nb = float(np.linalg.norm(eb))
    if na == 0.0 or nb == 0.0:
        raise ArgumentError("cannot score a zero embedding vector")
    cos = float(np.dot(ea, eb)) / (na * nb)
    return edit - mu * (1.0 - cos)


def pair_score(
    i: int,
    j: int,
    vocab: Vocabulary,
    store: EmbeddingStore,
    mu: float = 1.0,
    edit_mode: str = "normalized",
) -> float:
    """Score candidate pair (i, j); symmetric, defined for distinct non-specials."""
    if i == j:
        raise ArgumentError("pair_score requires two distinct tokens")
    if i in vocab.specials or j in vocab.specials:
        raise ArgumentError("special tokens cannot be paired")
    return score_strings(
        vocab.token_of(i), vocab.token_of(j), store.row(i), store.row(j), mu, edit_mode
    )


def select_mask(seed: int, rho: float, permutable: Iterable[int]) -> frozenset[int]:
    """Choose the masked subset I_rho: a seeded-shuffle prefix of size floor(rho*|I|).

    Deterministic in (seed, rho, permutable); the shuffle stream is domain
    separated, so masks for the same seed are nested across rho values.
    """
    if not 0.0 <= rho <= 1.0:
        raise ArgumentError("rho must lie in [0, 1]")
    ids = np.asarray(sorted(set(permutable)), dtype=np.int64)
    size = math.floor(rho * ids.size)
    if size == 0:
        return frozenset()
    if size == ids.size:
        return frozenset(ids.tolist())
    rng = derive_rng("mask", seed)
    return frozenset(rng.permutation(ids)[:size].tolist())


def _greedy_pair_cell(
    members: list[int],
    vocab: Vocabulary,
    store: EmbeddingStore,
    config: BuildConfig,
    cell: int,
) -> tuple[dict[int, int], list[int]]:
    """Pair one bucket cell; returns (mapping fragment, fixed points)."""
    mapping: dict[int, int] = {}
    fixed: list[int] = []
    m = len(members)
    if m == 0:
        return mapping, fixed
    if m == 1:
        mapping[members[0]] = members[0]
        return mapping, [members[0]]

    member_arr = np.asarray(members, dtype=np.int64)
    nbr_ids, nbr_sims = topk_cosine(
        store, member_arr, config.k, member_arr, block=config.greedy_batch
    )
    width = nbr_ids.shape[1]

    # Score every retrieved candidate pair in one batch; the greedy loop then
    # only consults precomputed scores.
    left: list[bytes] = []
    right: list[bytes] = []
    flat_rows: list[int] = []
    for r in range(m):
        s_i = vocab.token_of(members[r])
        for c in range(width):
            j = int(nbr_ids[r, c])
            if j < 0:
                continue
            left.append(s_i)
            right.append(vocab.token_of(j))
            flat_rows.append(r * width + c)
    if config.edit_mode == "raw":
        edits = editdist.levenshtein_batch(left, right).astype(np.float64)
    else:
        edits = editdist.normalized_batch(left, right)
    scores = np.full((m, width), -np.inf, dtype=np.float64)
    if flat_rows:
        flat = scores.reshape(-1)
        flat[flat_rows] = edits - config.mu * (1.0 - nbr_sims.reshape(-1)[flat_rows])

    # Candidate order per row: best score first, ties to the lower token id.
    order = np.empty((m, width), dtype=np.int64) if width else np.empty((m, 0), dtype=np.int64)
    for r in range(m):
        order[r] = np.lexsort((nbr_ids[r], -scores[r]))

    pos_of = {tid: r for r, tid in enumerate(members)}
    available = np.ones(m, dtype=bool)
    for r in range(m):  # members are ascending by construction
        if not available[r]:
            continue
        i = members[r]
        best = -1
        for c in order[r]:
            j = int(nbr_ids[r, c])
            if j < 0 or not np.isfinite(scores[r, c]):
                break
            rj = pos_of[j]
            if available[rj]:
                best = rj
                break
        if best >= 0:
            j = members[best]
            mapping[i] = j
            mapping[j] = i
            available[r] = False
            available[best] = False

    leftovers = [members[r] for r in np.flatnonzero(available)]
    if leftovers:
        rng = derive_rng("fallback", config.seed, cell)
        shuffled = rng.permutation(np.asarray(leftovers, dtype=np.int64)).tolist()
        if len(shuffled) % 2 == 1:
            fp = shuffled.pop()
            mapping[fp] = fp
            fixed.append(fp)
        for a, b in zip(shuffled[0::2], shuffled[1::2]):
            mapping[a] = b
            mapping[b] = a
    return mapping, fixed


def build_key(
    vocab: Vocabulary,
    store: EmbeddingStore,
    config: BuildConfig,
    threads: int | None = None,
) -> BijectionKey:
    """Construct a key: mask, bucket, retrieve, greedily pair, fall back.

    Deterministic in (vocab, store, config); bucket cells are independent, so
    the result does not depend on how many threads build them.
    """
    if not store.normalized:
        raise ArgumentError("build_key requires a normalized store")
    permutable = vocab.permutable_ids
    mask = select_mask(config.seed, config.rho, permutable)
    missing = [i for i in mask if i >= store.n]
    if missing:
        raise CoverageError(f"embedding row missing for masked id(s) {sorted(missing)[:5]}")

    bucket_of = {i: bucket_index(config.seed, config.buckets, i) for i in sorted(mask)}
    cells: dict[int, list[int]] = {}
    for i in sorted(mask):
        cells.setdefault(bucket_of[i], []).append(i)

    mapping: dict[int, int] = {}
    fixed_points: list[int] = []
    items = sorted(cells.items())
    if threads and threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {
                cell: pool.submit(_greedy_pair_cell, members, vocab, store, config, cell)
                for cell, members in items
            }
            results = [(cell, futures[cell].result()) for cell, _ in items]
    else:
        results = [
            (cell, _greedy_pair_cell(members, vocab, store, config, cell))
            for cell, members in items
        ]
    for _, (frag, fixed) in sorted(results):
        mapping.update(frag)
        fixed_points.extend(fixed)

    key = BijectionKey(
        version=KEY_FORMAT_VERSION,
        vocab_fingerprint=vocab.fingerprint,
        config=config,
        mask=mask,
        mapping=mapping,
        bucket_of=bucket_of,
        fixed_points=tuple(sorted(fixed_points)),
    )
    key.validate()
    return key


def objective_value(key: BijectionKey, vocab: Vocabulary, store: EmbeddingStore) -> float:
    """Summed pair objective over the mask, counting each pair once per direction."""
    if key.vocab_fingerprint != vocab.fingerprint:
        raise CompatibilityError("key was built for a different vocabulary")
    total = 0.0
    for i, j in key.mapping.items():
        if i == j:
            continue  # fixed points contribute zero
        total += score_strings(
            vocab.token_of(i),
            vocab.token_of(j),
            store.row(i),
            store.row(j),
            key.config.mu,
            key.config.edit_mode,
        )
    return total


def key_overlap(a: BijectionKey, b: BijectionKey) -> float:
    """Percentage of jointly masked ids on which two keys agree; 0 if disjoint."""
    if a.vocab_fingerprint != b.vocab_fingerprint:
        raise CompatibilityError("keys belong to different vocabularies")
    common = a.mask & b.mask
    if not common:
        return 0.0
    agree = sum(1 for i in common if a.mapping[i] == b.mapping[i])
    return 100.0 * agree / len(common)


@dataclass(frozen=True)
class OpacityReport:
    """Surface-change summary of a key's mapped pairs."""

    pair_count: int
    fixed_point_count: int
    mean_normalized_edit: float | None
    median_normalized_edit: float | None
    unchanged_fraction: float | None
    empty_mapping: bool

    def to_dict(self) -> dict:
        return {
            "pair_count": self.pair_count,
            "fixed_point_count": self.fixed_point_count,
            "mean_normalized_edit": self.mean_normalized_edit,
            "median_normalized_edit": self.median_normalized_edit,
            "unchanged_fraction": self.unchanged_fraction,
            "empty_mapping": self.empty_mapping,
        }


def opacity_report(key: BijectionKey, vocab: Vocabulary) -> OpacityReport:
    if key.vocab_fingerprint != vocab.fingerprint:
        raise CompatibilityError("key was built for a different vocabulary")
    if not key.mask:
        return OpacityReport(0, 0, None, None, None, empty_mapping=True)
    dists = []
    unchanged = 0
    pair_count = 0
    for i in sorted(key.mask):
        j = key.mapping[i]
        s_i, s_j = vocab.token_of(i), vocab.token_of(j)
        if s_i == s_j:
            unchanged += 1
        if i < j:
            pair_count += 1
            dists.append(editdist.normalized_levenshtein(s_i, s_j))
    return OpacityReport(
        pair_count=pair_count,
        fixed_point_count=len(key.fixed_points),
        mean_normalized_edit=statistics.fmean(dists) if dists else None,
        median_normalized_edit=statistics.median(dists) if dists else None,
        unchanged_fraction=unchanged / len(key.mask),
        empty_mapping=False,
    )


def save_key(key: BijectionKey, path: str | Path) -> None:
    """Serialize to the versioned JSON key format (byte-deterministic)."""
    pairs = sorted((i, j) for i, j in key.mapping.items() if i < j)
    doc = {
        "version": key.version,
        "vocab_fingerprint": f"{key.vocab_fingerprint:016x}",
        "config": {
            "k": key.config.k,
            "mu": key.config.mu,
            "rho": key.config.rho,
            "seed": key.config.seed,
            "buckets": key.config.buckets,
            "greedy_batch": key.config.greedy_batch,
            "edit_mode": key.config.edit_mode,
        },
        "fixed_points": list(key.fixed_points),
        "mapping": [[i, j] for i, j in pairs],
    }
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"
    Path(path).write_bytes(blob.encode("ascii"))


def load_key(path: str | Path) -> BijectionKey:
    """Load and structurally validate a key file."""
    try:
        doc = json.loads(Path(path).read_text(encoding="ascii"))
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise FormatError(f"key file is not valid JSON: {e}") from e
    if not isinstance(doc, dict) or doc.get("version") != KEY_FORMAT_VERSION:
        raise FormatError(f"unsupported key format version {doc.get('version')!r}")
    try:
        fingerprint = int(doc["vocab_fingerprint"], 16)
        cfg = doc["config"]
        config = BuildConfig(
            k=cfg["k"],
            mu=cfg["mu"],
            rho=cfg["rho"],
            seed=cfg["seed"],
            buckets=cfg["buckets"],
            greedy_batch=cfg["greedy_batch"],
            edit_mode=cfg["edit_mode"],
        )
        raw_pairs = doc["mapping"]
        fixed_points = tuple(int(i) for i in doc["fixed_points"])
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"key file missing or malformed field: {e}") from e

    mapping: dict[int, int] = {}
    seen: set[int] = set()
    for entry in raw_pairs:
        if not (isinstance(entry, list) and len(entry) == 2):
            raise FormatError(f"malformed mapping entry {entry!r}")
        i, j = int(entry[0]), int(entry[1])
        if not i < j:
            raise FormatError(f"mapping pair [{i}, {j}] violates i < j")
        if i in seen or j in seen:
            raise FormatError(f"token id reused across pairs near [{i}, {j}]: involution broken")
        seen.update((i, j))
        mapping[i] = j
        mapping[j] = i
    for fp in fixed_points:
        if fp in seen:
            raise FormatError(f"fixed point {fp} also appears in a pair: involution broken")
        seen.add(fp)
        mapping[fp] = fp

    mask = frozenset(seen)
    bucket_of = {i: bucket_index(config.seed, config.buckets, i) for i in sorted(mask)}
    key = BijectionKey(
        version=KEY_FORMAT_VERSION,
        vocab_fingerprint=fingerprint,
        config=config,
        mask=mask,
        mapping=mapping,
        bucket_of=bucket_of,
        fixed_points=fixed_points,
    )
    key.validate()
    return key


def identity_key(vocab: Vocabulary, config: BuildConfig | None = None) -> BijectionKey:
    """A rho=0 key for the vocabulary: empty mask, encode is identity."""
    config = replace(config or BuildConfig(), rho=0.0)
    return BijectionKey(
        version=KEY_FORMAT_VERSION,
        vocab_fingerprint=vocab.fingerprint,
        config=config,
        mask=frozenset(),
        mapping={},
        bucket_of={},
        fixed_points=(),
    )


def key_from_pairs(
    vocab: Vocabulary,
    pairs: Iterable[tuple[int, int]],
    config: BuildConfig | None = None,
    fixed_points: Iterable[int] = (),
) -> BijectionKey:
    """Assemble a key from explicit pairs (diagnostics and tests)."""
    config = config or BuildConfig()
    mapping: dict[int, int] = {}
    for i, j in pairs:
        if i == j:
            raise ArgumentError("use fixed_points for identity entries")
        if i in vocab.specials or j in vocab.specials:
            raise ArgumentError("special tokens cannot be paired")
        if i in mapping or j in mapping:
            raise ArgumentError(f"token id reused in pairs near ({i}, {j})")
        mapping[i] = j
        mapping[j] = i
    fps = tuple(sorted(set(fixed_points)))
    for fp in fps:
        if fp in mapping:
            raise ArgumentError(f"fixed point {fp} also appears in a pair")
        mapping[fp] = fp
    mask = frozenset(mapping)
    bucket_of = {i: bucket_index(config.seed, config.buckets, i) for i in sorted(mask)}
    key = BijectionKey(
        version=KEY_FORMAT_VERSION,
        vocab_fingerprint=vocab.fingerprint,
        config=config,
        mask=mask,
        mapping=mapping,
        bucket_of=bucket_of,
        fixed_points=fps,
    )
    key.validate()
    return key
