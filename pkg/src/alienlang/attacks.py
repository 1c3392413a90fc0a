"""Observer-side recovery attacks and text-similarity scoring.

Each attack separates inference from scoring: the hypothesis-generation
functions never see the true key, and the public entry points accept either a
key or any object exposing the same scoring surface (``decode(alien_id)`` and
``masked_ids()``).  That seam is what lets tests prove the key cannot leak
into the inference path.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy import sparse

from .bijection import BijectionKey
from .embeddings import EmbeddingStore
from .errors import ArgumentError, CoverageError, FormatError
from .vocab import TokenSequence


@dataclass
class AttackReport:
    """Per-attack recovery statistics."""

    attack_name: str
    parameters: dict
    token_recovery: float | None = None
    bijection_recovery: float | None = None
    bleu: float | None = None
    rouge_l: float | None = None
    evaluated_count: int = 0
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("token_recovery", "bijection_recovery", "rouge_l"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise ArgumentError(f"{name} must lie in [0, 1], got {value}")
        if self.bleu is not None and not 0.0 <= self.bleu <= 100.0:
            raise ArgumentError(f"bleu must lie in [0, 100], got {self.bleu}")

    def to_dict(self) -> dict:
        return {
            "attack_name": self.attack_name,
            "parameters": self.parameters,
            "token_recovery": self.token_recovery,
            "bijection_recovery": self.bijection_recovery,
            "bleu": self.bleu,
            "rouge_l": self.rouge_l,
            "evaluated_count": self.evaluated_count,
            "details": self.details,
        }


class TruthOracle:
    """Scoring-only adapter around a key, mapping, or callback.

    ``decode`` returns the true plaintext id for an alien id; ``masked_ids``
    is the permuted set the attacker is graded against.
    """

    def __init__(self, decode: Callable[[int], int], masked_ids: frozenset[int]):
        self._decode = decode
        self._mask = masked_ids

    @classmethod
    def of(cls, truth, mask: Iterable[int] | None = None) -> "TruthOracle":
        if isinstance(truth, TruthOracle):
            return truth
        if isinstance(truth, BijectionKey):
            return cls(truth.apply, truth.mask)
        if isinstance(truth, Mapping):
            table = dict(truth)
            if mask is None:
                mask = table.keys()
            return cls(lambda i: table.get(i, i), frozenset(mask))
        if callable(truth):
            if mask is None:
                raise ArgumentError("a scoring callback needs an explicit mask")
            return cls(truth, frozenset(mask))
        raise ArgumentError(f"cannot build a truth oracle from {type(truth).__name__}")

    def decode(self, alien_id: int) -> int:
        return self._decode(alien_id)

    def masked_ids(self) -> frozenset[int]:
        return self._mask


def _flatten(corpus) -> list[int]:
    if isinstance(corpus, TokenSequence):
        return list(corpus.ids)
    out: list[int] = []
    for item in corpus:
        if isinstance(item, TokenSequence):
            out.extend(item.ids)
        elif isinstance(item, (list, tuple)):
            out.extend(int(i) for i in item)
        else:
            out.append(int(item))
    return out


def _rank_by_frequency(tokens: Sequence[int]) -> list[int]:
    """Token ids ranked by descending frequency, ties by ascending id."""
    counts = Counter(tokens)
    return sorted(counts, key=lambda t: (-counts[t], t))


def frequency_hypotheses(
    alien_corpus, reference_corpus, top_m: int
) -> list[tuple[int, int]]:
    """Rank-matching hypotheses: r-th most frequent alien <- r-th reference token.

    Pure inference: no key involved.
    """
    alien = _flatten(alien_corpus)
    reference = _flatten(reference_corpus)
    if not alien or not reference:
        raise ArgumentError("corpora must be non-empty")
    if top_m < 1:
        raise ArgumentError("top_m must be >= 1")
    alien_ranks = _rank_by_frequency(alien)[:top_m]
    ref_ranks = _rank_by_frequency(reference)[: len(alien_ranks)]
    return list(zip(alien_ranks, ref_ranks))


def frequency_attack(
    alien_corpus,
    reference_corpus,
    truth,
    top_m: int,
    mask: Iterable[int] | None = None,
) -> AttackReport:
    """O1: frequency-rank matching between an alien corpus and a reference corpus.

    ``token_recovery`` is correct hypotheses about masked tokens over the full
    permuted set; ``head_recovery`` (details) is the hit rate over the
    attempted head, which is the meaningful number for identity keys.
    """
    oracle = TruthOracle.of(truth, mask)
    hypotheses = frequency_hypotheses(alien_corpus, reference_corpus, top_m)
    masked = oracle.masked_ids()
    correct_total = sum(1 for a, p in hypotheses if oracle.decode(a) == p)
    correct_masked = sum(1 for a, p in hypotheses if a in masked and oracle.decode(a) == p)
    return AttackReport(
        attack_name="frequency",
        parameters={"top_m": top_m},
        token_recovery=(correct_masked / len(masked)) if masked else 0.0,
        evaluated_count=len(hypotheses),
        details={
            "head_recovery": correct_total / len(hypotheses),
            "correct_masked": correct_masked,
            "mask_size": len(masked),
        },
    )


def _context_signatures(
    sequences: Iterable[Sequence[int]],
    radius: int,
    translate: dict[int, int] | None,
    targets: set[int] | None,
) -> dict[int, Counter]:
    """Multiset context signatures within a symmetric window.

    ``translate`` restricts contexts to known-mapped neighbors and maps them
    into plaintext id space; ``targets`` limits which center tokens collect
    signatures.
    """
    sigs: dict[int, Counter] = {}
    for seq in sequences:
        ids = list(seq.ids) if isinstance(seq, TokenSequence) else list(seq)
        n = len(ids)
        for t, center in enumerate(ids):
            if targets is not None and center not in targets:
                continue
            sig = sigs.setdefault(center, Counter())
            lo = max(0, t - radius)
            hi = min(n, t + radius + 1)
            for u in range(lo, hi):
                if u == t:
                    continue
                neighbor = ids[u]
                if translate is None:
                    sig[neighbor] += 1
                elif neighbor in translate:
                    sig[translate[neighbor]] += 1
    return sigs


def ngram_hypotheses(
    leaked_pairs: Sequence[tuple],
    eval_corpus: Sequence[tuple],
    n: int,
    reference_corpus: Sequence | None = None,
) -> tuple[dict[int, int], dict[int, int]]:
    """Phase 1 known map from positional alignment, phase 2 context extrapolation.

    Returns (known alien->plain map, guesses for unseen alien tokens).
    ``reference_corpus`` holds the plaintext sequences the attacker mines for
    candidate context statistics, e.g. a public corpus from a similar
    distribution; it defaults to the plaintext sides of the leaked pairs,
    which is all the aligned plaintext the observer actually possesses.  The
    evaluation pairs contribute only their alien sides to inference; their
    plaintext sides are the secret being recovered.  Candidates already
    consumed by known mappings are excluded, since the attacker knows the
    mapping is a bijection.  Pure inference: no key involved.
    """
    if n < 2:
        raise ArgumentError("n-gram order must be >= 2")

    def sides(pairs):
        plain_side, alien_side = [], []
        for plain, alien in pairs:
            p = list(plain.ids) if isinstance(plain, TokenSequence) else list(plain)
            a = list(alien.ids) if isinstance(alien, TokenSequence) else list(alien)
            plain_side.append(p)
            alien_side.append(a)
        return plain_side, alien_side

    leaked_plain, leaked_alien = sides(leaked_pairs)
    _, eval_alien = sides(eval_corpus)

    known: dict[int, int] = {}
    for p_seq, a_seq in zip(leaked_plain, leaked_alien):
        if len(p_seq) != len(a_seq):
            raise FormatError("leaked pairs must be positionally aligned (equal lengths)")
        for p, a in zip(p_seq, a_seq):
            known[a] = p

    if reference_corpus is None:
        reference = leaked_plain
    else:
        reference = [
            list(seq.ids) if isinstance(seq, TokenSequence) else list(seq)
            for seq in reference_corpus
        ]
    ref_freq = Counter(t for seq in reference for t in seq)
    consumed = set(known.values())
    candidates = sorted(t for t in ref_freq if t not in consumed)
    radius = n - 1

    unseen_targets = {
        t for seq in eval_alien for t in seq if t not in known
    }
    alien_sigs = _context_signatures(eval_alien, radius, translate=known, targets=unseen_targets)
    plain_sigs = _context_signatures(
        reference, radius, translate=None, targets=set(candidates)
    )

    guesses: dict[int, int] = {}
    if not candidates:
        return known, guesses

    cand_index = {c: idx for idx, c in enumerate(candidates)}
    cand_freq = np.array([ref_freq[c] for c in candidates], dtype=np.int64)
    cand_ids = np.array(candidates, dtype=np.int64)

    # Sparse candidate-by-context matrix for fast multiset intersections.
    context_values = sorted({v for sig in plain_sigs.values() for v in sig})
    ctx_index = {v: idx for idx, v in enumerate(context_values)}
    rows, cols, data = [], [], []
    for cand, sig in plain_sigs.items():
        r = cand_index[cand]
        for v, cnt in sig.items():
            rows.append(r)
            cols.append(ctx_index[v])
            data.append(cnt)
    matrix = sparse.csc_matrix(
        (data, (rows, cols)), shape=(len(candidates), max(len(context_values), 1))
    )

    # Default guess for empty signatures: highest frequency, then lowest id.
    default_order = np.lexsort((cand_ids, -cand_freq))
    default_guess = int(cand_ids[default_order[0]])

    for alien_tok in sorted(unseen_targets):
        sig = alien_sigs.get(alien_tok)
        if not sig:
            guesses[alien_tok] = default_guess
            continue
        scores = np.zeros(len(candidates), dtype=np.int64)
        touched = False
        for v, cnt in sig.items():
            col = ctx_index.get(v)
            if col is None:
                continue
            start, stop = matrix.indptr[col], matrix.indptr[col + 1]
            if start == stop:
                continue
            idx = matrix.indices[start:stop]
            vals = matrix.data[start:stop]
            scores[idx] += np.minimum(vals, cnt)
            touched = True
        if not touched:
            guesses[alien_tok] = default_guess
            continue
        order = np.lexsort((cand_ids, -cand_freq, -scores))
        guesses[alien_tok] = int(cand_ids[order[0]])
    return known, guesses


def ngram_attack(
    leaked_pairs: Sequence[tuple],
    eval_corpus: Sequence[tuple],
    n: int,
    truth,
    mask: Iterable[int] | None = None,
    reference_corpus: Sequence | None = None,
) -> AttackReport:
    """O2: known-plaintext leakage plus n-gram context extrapolation.

    ``token_recovery`` covers all evaluated alien types (known mappings are
    free for the attacker); ``bijection_recovery`` covers only masked tokens
    absent from the leaked pairs, with never-guessed tokens counting as
    misses.  ``None`` when nothing is unseen.
    """
    oracle = TruthOracle.of(truth, mask)
    known, guesses = ngram_hypotheses(leaked_pairs, eval_corpus, n, reference_corpus)
    masked = oracle.masked_ids()

    correct_unseen = sum(1 for a, g in guesses.items() if oracle.decode(a) == g)
    evaluated = len(known) + len(guesses)
    token_recovery = (len(known) + correct_unseen) / evaluated if evaluated else 0.0

    unseen_mask = [a for a in masked if a not in known]
    if unseen_mask:
        correct_masked_unseen = sum(
            1 for a in unseen_mask if a in guesses and oracle.decode(a) == guesses[a]
        )
        bijection_recovery = correct_masked_unseen / len(unseen_mask)
    else:
        bijection_recovery = None

    return AttackReport(
        attack_name="ngram",
        parameters={"n": n, "pair_budget": len(leaked_pairs)},
        token_recovery=token_recovery,
        bijection_recovery=bijection_recovery,
        evaluated_count=evaluated,
        details={
            "known_tokens": len(known),
            "guessed_tokens": len(guesses),
            "unseen_mask_size": len(unseen_mask),
        },
    )


def nn_hypotheses(
    store: EmbeddingStore, masked: Sequence[int], block: int = 1024
) -> dict[int, int]:
    """O3 inference: each masked token's top-1 cosine neighbor within the mask."""
    if not store.normalized:
        raise ArgumentError("nn attack requires a normalized store")
    ids = np.asarray(sorted(masked), dtype=np.int64)
    if ids.size and ids[-1] >= store.n:
        raise CoverageError("mask contains ids without embedding rows")
    guesses: dict[int, int] = {}
    if ids.size < 2:
        return guesses
    rows = store.rows[ids]
    for start in range(0, ids.size, block):
        stop = min(start + block, ids.size)
        sims = rows[start:stop] @ rows.T
        for r in range(stop - start):
            row = sims[r].copy()
            row[start + r] = -np.inf  # exclude self
            best = row.max()
            tied = np.flatnonzero(row == best)
            guesses[int(ids[start + r])] = int(ids[tied[0]])  # ids ascending
    return guesses


def nn_mapping_attack(
    store: EmbeddingStore, truth, mask: Iterable[int] | None = None
) -> AttackReport:
    """O3: nearest-neighbor mapping recovery from embedding space."""
    oracle = TruthOracle.of(truth, mask)
    masked = sorted(oracle.masked_ids())
    guesses = nn_hypotheses(store, masked)
    correct = sum(1 for a, g in guesses.items() if oracle.decode(a) == g)
    return AttackReport(
        attack_name="nn_mapping",
        parameters={"mask_size": len(masked)},
        token_recovery=(correct / len(masked)) if masked else 0.0,
        evaluated_count=len(masked),
        details={"correct": correct},
    )


def _ngrams(tokens: Sequence[str], order: int) -> Counter:
    return Counter(tuple(tokens[i : i + order]) for i in range(len(tokens) - order + 1))


def bleu(candidates: Sequence[str], references: Sequence[str]) -> float:
    """Corpus-level BLEU in [0, 100].

    Uniform weights over 1..4-gram precisions, brevity penalty, whitespace
    tokenization, and add-one smoothing on n-gram counts for orders >= 2.
    """
    if len(candidates) != len(references):
        raise ArgumentError("candidate and reference lists must have equal length")
    if not candidates:
        raise ArgumentError("cannot score an empty corpus")
    matched = [0] * 5
    total = [0] * 5
    cand_len = 0
    ref_len = 0
    for cand, ref in zip(candidates, references):
        cand_toks = cand.split()
        ref_toks = ref.split()
        cand_len += len(cand_toks)
        ref_len += len(ref_toks)
        for order in range(1, 5):
            cand_counts = _ngrams(cand_toks, order)
            ref_counts = _ngrams(ref_toks, order)
            total[order] += sum(cand_counts.values())
            matched[order] += sum(
                min(cnt, ref_counts[gram]) for gram, cnt in cand_counts.items()
            )
    if cand_len == 0 or matched[1] == 0:
        return 0.0
    log_precision = 0.0
    for order in range(1, 5):
        if order == 1:
            m, t = matched[1], total[1]
        else:
            m, t = matched[order] + 1, total[order] + 1
        if m == 0 or t == 0:
            return 0.0
        log_precision += 0.25 * math.log(m / t)
    brevity = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / cand_len)
    return 100.0 * brevity * math.exp(log_precision)


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidates: Sequence[str], references: Sequence[str]) -> float:
    """Mean LCS F-measure over whitespace tokens, in [0, 1]."""
    if len(candidates) != len(references):
        raise ArgumentError("candidate and reference lists must have equal length")
    if not candidates:
        raise ArgumentError("cannot score an empty corpus")
    scores = []
    for cand, ref in zip(candidates, references):
        cand_toks = cand.split()
        ref_toks = ref.split()
        lcs = _lcs_length(cand_toks, ref_toks)
        if lcs == 0:
            scores.append(0.0)
            continue
        precision = lcs / len(cand_toks)
        recall = lcs / len(ref_toks)
        scores.append(2 * precision * recall / (precision + recall))
    return sum(scores) / len(scores)
