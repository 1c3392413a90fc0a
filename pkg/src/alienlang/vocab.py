"""Vocabularies, the reference tokenizer, and pretokenized ID streams.

Token strings are byte sequences throughout, so vocabularies containing
raw-byte tokens load and round-trip losslessly.  In the JSON vocab file,
non-UTF-8 bytes are carried as lone-surrogate escapes (``"\\udcff"`` is the
single byte 0xFF); Python's json module accepts these in both directions.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ArgumentError, CoverageError, FormatError, UnknownTokenError


def _surrogate_encode(s: str) -> bytes:
    return s.encode("utf-8", errors="surrogateescape")


def _surrogate_decode(b: bytes) -> str:
    return b.decode("utf-8", errors="surrogateescape")


def _fingerprint(id_to_token: dict[int, bytes], specials: frozenset[int]) -> int:
    """64-bit content hash over sorted (id, string) pairs plus the special set."""
    h = hashlib.blake2b(digest_size=8)
    h.update(b"vocab-fp-v1")
    for tid in sorted(id_to_token):
        tok = id_to_token[tid]
        h.update(struct.pack("<QQ", tid, len(tok)))
        h.update(tok)
    h.update(b"|specials|")
    for tid in sorted(specials):
        h.update(struct.pack("<Q", tid))
    return int.from_bytes(h.digest(), "big")


@dataclass(frozen=True)
class TokenSequence:
    """An ordered token-ID sequence tied to a vocabulary fingerprint."""

    ids: tuple[int, ...]
    fingerprint: int | None = None

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self):
        return iter(self.ids)


@dataclass(frozen=True)
class Vocabulary:
    """Immutable token-string <-> token-ID table with a designated special set."""

    id_to_token: dict[int, bytes]
    token_to_id: dict[bytes, int]
    specials: frozenset[int]
    fingerprint: int
    # match lengths tried by the greedy tokenizer, longest first
    _lengths_desc: tuple[int, ...] = field(repr=False, default=())

    @classmethod
    def from_entries(
        cls,
        entries: Iterable[tuple[bytes, int]],
        special_ids: Iterable[int] = (),
    ) -> "Vocabulary":
        id_to_token: dict[int, bytes] = {}
        token_to_id: dict[bytes, int] = {}
        for tok, tid in entries:
            if not isinstance(tok, bytes):
                tok = _surrogate_encode(tok)
            if len(tok) == 0:
                raise FormatError("empty token string is not allowed")
            if tid < 0:
                raise FormatError(f"negative token id {tid}")
            if tid in id_to_token:
                raise FormatError(f"duplicate token id {tid}")
            if tok in token_to_id:
                raise FormatError(f"duplicate token string {tok!r}")
            id_to_token[tid] = tok
            token_to_id[tok] = tid
        specials = frozenset(special_ids)
        missing = specials - id_to_token.keys()
        if missing:
            raise UnknownTokenError(f"special ids not in vocabulary: {sorted(missing)}")
        lengths = tuple(sorted({len(t) for t in token_to_id}, reverse=True))
        return cls(
            id_to_token=id_to_token,
            token_to_id=token_to_id,
            specials=specials,
            fingerprint=_fingerprint(id_to_token, specials),
            _lengths_desc=lengths,
        )

    def __len__(self) -> int:
        return len(self.id_to_token)

    @property
    def permutable_ids(self) -> tuple[int, ...]:
        """All non-special token IDs, ascending (the set I)."""
        return tuple(tid for tid in sorted(self.id_to_token) if tid not in self.specials)

    def token_of(self, tid: int) -> bytes:
        try:
            return self.id_to_token[tid]
        except KeyError:
            raise UnknownTokenError(f"unknown token id {tid}") from None

    def id_of(self, token: bytes) -> int:
        try:
            return self.token_to_id[token]
        except KeyError:
            raise UnknownTokenError(f"unknown token string {token!r}") from None

    def sequence(self, ids: Iterable[int]) -> TokenSequence:
        """Wrap raw IDs as a TokenSequence, validating membership."""
        ids = tuple(ids)
        for tid in ids:
            if tid not in self.id_to_token:
                raise UnknownTokenError(f"unknown token id {tid}")
        return TokenSequence(ids=ids, fingerprint=self.fingerprint)


def load_vocab(path: str | Path, specials_path: str | Path | None = None) -> Vocabulary:
    """Load a vocabulary from a JSON object {token_string: id}.

    The optional specials file is a JSON array of token strings; each must
    resolve to a vocabulary entry.
    """

    def reject_duplicates(pairs):
        seen = set()
        out = {}
        for key, value in pairs:
            if key in seen:
                raise FormatError(f"duplicate token string {key!r} in vocab file")
            seen.add(key)
            out[key] = value
        return out

    raw = Path(path).read_text(encoding="utf-8", errors="surrogateescape")
    try:
        obj = json.loads(raw, object_pairs_hook=reject_duplicates)
    except json.JSONDecodeError as e:
        raise FormatError(f"vocab file is not valid JSON: {e}") from e
    if not isinstance(obj, dict):
        raise FormatError("vocab file must be a JSON object mapping token to id")
    entries = []
    for tok_str, tid in obj.items():
        if not isinstance(tid, int) or isinstance(tid, bool):
            raise FormatError(f"token id for {tok_str!r} is not an integer")
        entries.append((_surrogate_encode(tok_str), tid))

    special_ids: list[int] = []
    if specials_path is not None:
        try:
            spec_list = json.loads(
                Path(specials_path).read_text(encoding="utf-8", errors="surrogateescape")
            )
        except json.JSONDecodeError as e:
            raise FormatError(f"specials file is not valid JSON: {e}") from e
        if not isinstance(spec_list, list):
            raise FormatError("specials file must be a JSON array of token strings")
        token_map = {tok: tid for tok, tid in entries}
        for tok_str in spec_list:
            tok = _surrogate_encode(tok_str)
            if tok not in token_map:
                raise UnknownTokenError(f"special token {tok_str!r} absent from vocab")
            special_ids.append(token_map[tok])

    return Vocabulary.from_entries(entries, special_ids)


def save_vocab(vocab: Vocabulary, path: str | Path, specials_path: str | Path | None = None) -> None:
    """Write a vocabulary (and optionally its specials) back to JSON files."""
    obj = {_surrogate_decode(tok): tid for tid, tok in sorted(vocab.id_to_token.items())}
    Path(path).write_text(json.dumps(obj, ensure_ascii=True, indent=0) + "\n", encoding="utf-8")
    if specials_path is not None:
        names = [_surrogate_decode(vocab.id_to_token[tid]) for tid in sorted(vocab.specials)]
        Path(specials_path).write_text(json.dumps(names, ensure_ascii=True) + "\n", encoding="utf-8")


def reference_tokenize(text: bytes, vocab: Vocabulary) -> TokenSequence:
    """Greedy longest-match tokenization from the left.

    Deterministic by construction, and concatenating the matched token strings
    reproduces the input exactly, which gives the detokenize round-trip for
    free.  This is a reference tokenizer, not a BPE reimplementation; real
    tokenizers interoperate through pretokenized ID streams instead.
    """
    if not isinstance(text, bytes):
        raise ArgumentError("reference_tokenize expects bytes")
    ids: list[int] = []
    table = vocab.token_to_id
    lengths = vocab._lengths_desc
    pos = 0
    n = len(text)
    while pos < n:
        remaining = n - pos
        for length in lengths:
            if length > remaining:
                continue
            tid = table.get(text[pos : pos + length])
            if tid is not None:
                ids.append(tid)
                pos += length
                break
        else:
            raise CoverageError(
                f"no token matches input at byte offset {pos} "
                f"(next bytes: {text[pos : pos + 8]!r})"
            )
    return TokenSequence(ids=tuple(ids), fingerprint=vocab.fingerprint)


def detokenize(ids: TokenSequence | Sequence[int], vocab: Vocabulary) -> bytes:
    """Concatenate token strings in order."""
    seq = ids.ids if isinstance(ids, TokenSequence) else ids
    return b"".join(vocab.token_of(tid) for tid in seq)


def read_pretokenized(path: str | Path, vocab: Vocabulary | None = None) -> list[TokenSequence]:
    """Read a pretokenized stream: one sequence of space-separated IDs per line.

    When a vocabulary is given, IDs are validated against it and sequences
    carry its fingerprint.
    """
    sequences: list[TokenSequence] = []
    with open(path, "r", encoding="utf-8") as fp:
        for lineno, line in enumerate(fp, start=1):
            line = line.strip()
            try:
                ids = tuple(int(tok) for tok in line.split()) if line else ()
            except ValueError as e:
                raise FormatError(f"line {lineno}: not a space-separated ID list") from e
            if vocab is not None:
                sequences.append(vocab.sequence(ids))
            else:
                sequences.append(TokenSequence(ids=ids))
    return sequences


def write_pretokenized(sequences: Iterable[TokenSequence | Sequence[int]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fp:
        for seq in sequences:
            ids = seq.ids if isinstance(seq, TokenSequence) else seq
            fp.write(" ".join(str(i) for i in ids) + "\n")
