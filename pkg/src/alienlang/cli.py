"""Command-line surface: one binary, subcommand per workflow.

Exit codes: 0 success, 1 runtime failure, 2 usage error.  Every subcommand is
byte-deterministic on identical inputs except ``attack probe`` (network).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .attacks import frequency_attack, ngram_attack, nn_mapping_attack
from .bijection import (
    BuildConfig,
    build_key,
    load_key,
    opacity_report,
    save_key,
)
from .embeddings import load_embeddings, normalize
from .errors import FormatError, ToolkitError
from .probe import EndpointConfig, llm_inverse_probe
from .report import emit_summary, matrix_to_csv, overlap_matrix
from .translator import (
    ID_STREAM_MAGIC,
    alienize_dataset,
    decode_ids,
    decode_text,
    encode_ids,
    encode_text,
    read_id_stream,
    write_id_stream,
)
from .vocab import load_vocab, read_pretokenized, write_pretokenized


def _add_vocab_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--vocab", required=True, help="vocabulary JSON file")
    p.add_argument("--specials", default=None, help="JSON array of special token strings")


def _load_vocab(args) -> "Vocabulary":
    return load_vocab(args.vocab, args.specials)


def _cmd_build_key(args) -> int:
    vocab = _load_vocab(args)
    store = normalize(load_embeddings(args.embeddings))
    config = BuildConfig(
        k=args.k,
        mu=args.mu,
        rho=args.rho,
        seed=args.seed,
        buckets=args.buckets,
        greedy_batch=args.greedy_batch,
        edit_mode=args.edit_mode,
    )
    if config.rho == 0.0:
        print("warning: rho=0 produces an identity key", file=sys.stderr)
    key = build_key(vocab, store, config, threads=args.threads)
    save_key(key, args.out)
    rep = opacity_report(key, vocab)
    print(f"key written to {args.out}")
    print(f"  masked tokens      : {len(key.mask)}")
    print(f"  pairs / fixed pts  : {rep.pair_count} / {rep.fixed_point_count}")
    if rep.mean_normalized_edit is not None:
        print(f"  mean norm. edit    : {rep.mean_normalized_edit:.4f}")
        print(f"  median norm. edit  : {rep.median_normalized_edit:.4f}")
        print(f"  unchanged fraction : {rep.unchanged_fraction:.4f}")
    return 0


def _cmd_encode(args) -> int:
    vocab = _load_vocab(args)
    key = load_key(args.key)
    if args.ids:
        sequences = read_pretokenized(args.input, vocab)
        encoded = [encode_ids(s, key) for s in sequences]
        write_id_stream(args.output, encoded, key.vocab_fingerprint)
        return 0
    data = Path(args.input).read_bytes()
    doc = encode_text(data, key, vocab, strict=args.strict)
    if doc.retokenization_safe:
        Path(args.output).write_bytes(doc.rendered)
    else:
        print(
            "warning: rendering is not retokenization-safe; writing ID stream",
            file=sys.stderr,
        )
        write_id_stream(args.output, [doc.ids], key.vocab_fingerprint)
    return 0


def _cmd_decode(args) -> int:
    vocab = _load_vocab(args)
    key = load_key(args.key)
    data = Path(args.input).read_bytes()
    if args.ids:
        if data.startswith(ID_STREAM_MAGIC.encode("ascii")):
            sequences = read_id_stream(args.input, key.vocab_fingerprint)
        else:
            sequences = read_pretokenized(args.input, vocab)
        write_pretokenized([decode_ids(s, key) for s in sequences], args.output)
        return 0
    plain = decode_text(data, key, vocab) if data else b""
    Path(args.output).write_bytes(plain)
    return 0


def _cmd_emit_dataset(args) -> int:
    vocab = _load_vocab(args)
    key = load_key(args.key)
    summary = alienize_dataset(args.input, key, vocab, args.output, strict=args.strict)
    print(
        f"records={summary.records} tokens={summary.tokens} "
        f"unsafe_renderings={summary.unsafe_renderings}"
    )
    return 0


def _read_pairs(path: str, vocab) -> list[tuple]:
    pairs = []
    with open(path, "r", encoding="utf-8") as fp:
        for lineno, line in enumerate(fp, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                pairs.append((tuple(obj["plain"]), tuple(obj["alien"])))
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise FormatError(f"{path}:{lineno}: bad pair record: {e}") from e
    return pairs


def _cmd_attack(args) -> int:
    reports = []
    if args.kind == "freq":
        vocab = _load_vocab(args)
        key = load_key(args.key)
        alien = [s.ids for s in read_pretokenized(args.alien, vocab)]
        reference = [s.ids for s in read_pretokenized(args.reference, vocab)]
        rep = frequency_attack(alien, reference, key, top_m=args.top_m)
        reports.append(rep)
        print(
            f"frequency: token_recovery={rep.token_recovery:.6f} "
            f"head_recovery={rep.details['head_recovery']:.4f}"
        )
    elif args.kind == "ngram":
        vocab = _load_vocab(args)
        key = load_key(args.key)
        leaked = _read_pairs(args.leaked, vocab)
        eval_pairs = _read_pairs(args.eval, vocab)
        reference = None
        if args.reference:
            reference = [s.ids for s in read_pretokenized(args.reference, vocab)]
        rep = ngram_attack(leaked, eval_pairs, n=args.n, truth=key, reference_corpus=reference)
        reports.append(rep)
        br = "n/a" if rep.bijection_recovery is None else f"{rep.bijection_recovery:.6f}"
        print(f"ngram(n={args.n}): token_recovery={rep.token_recovery:.6f} bijection_recovery={br}")
    elif args.kind == "nn":
        key = load_key(args.key)
        store = normalize(load_embeddings(args.embeddings))
        rep = nn_mapping_attack(store, key)
        reports.append(rep)
        print(f"nn_mapping: token_recovery={rep.token_recovery:.6f}")
    elif args.kind == "probe":
        endpoint = args.endpoint or os.environ.get("ALIEN_ENDPOINT", "")
        token = args.token or os.environ.get("ALIEN_TOKEN", "")
        if not endpoint:
            raise FormatError("no endpoint: pass --endpoint or set ALIEN_ENDPOINT")
        eval_set = []
        with open(args.eval, "r", encoding="utf-8") as fp:
            for lineno, line in enumerate(fp, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    eval_set.append((obj["alien"], obj["reference"]))
                except (json.JSONDecodeError, KeyError, TypeError) as e:
                    raise FormatError(f"{args.eval}:{lineno}: bad eval record: {e}") from e
        template = (
            Path(args.template).read_text(encoding="utf-8") if args.template else None
        )
        config = EndpointConfig(
            base_url=endpoint,
            auth_token=token,
            model=args.model,
            timeout=args.timeout,
            concurrency=args.concurrency,
        )
        kwargs = {"transcript_path": args.transcript} if args.transcript else {}
        if template:
            kwargs["prompt_template"] = template
        rep = llm_inverse_probe(config, args.shots, eval_set, **kwargs)
        reports.append(rep)
        print(f"probe(shots={args.shots}): bleu={rep.bleu:.2f} rouge_l={rep.rouge_l:.4f}")
    if args.report:
        emit_summary(reports, args.report)
    return 0


def _cmd_overlap(args) -> int:
    keys = [load_key(p) for p in args.keys]
    matrix = overlap_matrix(keys)
    if args.out:
        emit_summary([matrix], args.out)
    if args.csv:
        matrix_to_csv(matrix, args.csv)
    for seed, row in zip(matrix.seeds, matrix.values):
        print(f"seed {seed}: " + " ".join(f"{v:7.3f}" for v in row))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="alienlang",
        description="Build vocabulary bijection keys, translate text, and stress-test keys.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-key", help="construct a key from a vocabulary and embeddings")
    _add_vocab_args(p)
    p.add_argument("--embeddings", required=True, help="embedding file (AEMB binary or text)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rho", type=float, default=1.0, help="alienization ratio in [0,1]")
    p.add_argument("--mu", type=float, default=1.0, help="similarity trade-off weight")
    p.add_argument("--k", type=int, default=100, help="neighbor count for candidate reduction")
    p.add_argument("--buckets", type=int, default=1)
    p.add_argument("--greedy-batch", type=int, default=50, help="kNN query batching width")
    p.add_argument("--edit-mode", choices=["normalized", "raw"], default="normalized")
    p.add_argument("--threads", type=int, default=os.cpu_count())
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_build_key)

    p = sub.add_parser("encode", help="plaintext -> alien")
    _add_vocab_args(p)
    p.add_argument("--key", required=True)
    p.add_argument("--strict", action="store_true", help="fail on unstable renderings")
    p.add_argument("--ids", action="store_true", help="input is pretokenized ID lines")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("decode", help="alien -> plaintext")
    _add_vocab_args(p)
    p.add_argument("--key", required=True)
    p.add_argument("--ids", action="store_true", help="write plain ID lines instead of text")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("emit-dataset", help="alienize a JSONL fine-tuning corpus")
    _add_vocab_args(p)
    p.add_argument("--key", required=True)
    p.add_argument("--strict", action="store_true")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.set_defaults(func=_cmd_emit_dataset)

    p = sub.add_parser("attack", help="run a recovery attack against a key")
    kind = p.add_subparsers(dest="kind", required=True)

    q = kind.add_parser("freq", help="frequency-rank matching (O1)")
    _add_vocab_args(q)
    q.add_argument("--key", required=True)
    q.add_argument("--alien", required=True, help="alien corpus, pretokenized ID lines")
    q.add_argument("--reference", required=True, help="reference corpus, pretokenized ID lines")
    q.add_argument("--top-m", type=int, default=1000)
    q.add_argument("--report", default=None)
    q.set_defaults(func=_cmd_attack)

    q = kind.add_parser("ngram", help="known-pairs n-gram extrapolation (O2)")
    _add_vocab_args(q)
    q.add_argument("--key", required=True)
    q.add_argument("--leaked", required=True, help='JSONL of {"plain": [...], "alien": [...]}')
    q.add_argument("--eval", required=True, help="JSONL of aligned pairs to extrapolate over")
    q.add_argument(
        "--reference",
        default=None,
        help="public plaintext corpus (pretokenized ID lines); default: leaked plaintext only",
    )
    q.add_argument("--n", type=int, default=3, help="n-gram order (window radius n-1)")
    q.add_argument("--report", default=None)
    q.set_defaults(func=_cmd_attack)

    q = kind.add_parser("nn", help="embedding nearest-neighbor mapping (O3)")
    q.add_argument("--key", required=True)
    q.add_argument("--embeddings", required=True)
    q.add_argument("--report", default=None)
    q.set_defaults(func=_cmd_attack)

    q = kind.add_parser("probe", help="LLM inverse-translation probe (O2, network)")
    q.add_argument("--endpoint", default=None, help="chat endpoint base URL (or ALIEN_ENDPOINT)")
    q.add_argument("--token", default=None, help="bearer token (or ALIEN_TOKEN)")
    q.add_argument("--model", default="default")
    q.add_argument("--shots", type=int, default=0, choices=[0, 1, 5, 20])
    q.add_argument("--eval", required=True, help='JSONL of {"alien": str, "reference": str}')
    q.add_argument("--template", default=None, help="prompt template file with {alien}")
    q.add_argument("--timeout", type=float, default=30.0)
    q.add_argument("--concurrency", type=int, default=4, help="max in-flight requests")
    q.add_argument("--transcript", default=None)
    q.add_argument("--report", default=None)
    q.set_defaults(func=_cmd_attack)

    p = sub.add_parser("overlap", help="pairwise overlap diagnostics across keys")
    p.add_argument("--keys", nargs="+", required=True)
    p.add_argument("--out", default=None, help="summary JSON output")
    p.add_argument("--csv", default=None, help="CSV matrix output")
    p.set_defaults(func=_cmd_overlap)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ToolkitError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
