"""Command-line interface: convert, query, bench.

Exit codes: 0 success, 1 expected failures (bad input format, malformed
records, unknown keys, bad arguments), 2 I/O failures.
"""
from __future__ import annotations

import argparse
import os
import sys
import tempfile
import time

import numpy as np

from .core import Tier
from .errors import VecstoreError
from .ingest import detect_format, parse_embeddings
from .reader import open_store
from .session import QuerySession
from .synthetic import build_synthetic_store, gaussian_records
from .writer import write_store
from . import search


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Argument parser that reports usage problems with exit code 1."""

    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _build_parser() -> _Parser:
    parser = _Parser(prog="vecstore", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True,
                               parser_class=_Parser)

    convert = sub.add_parser("convert",
                             help="compile an embedding file into a store")
    convert.add_argument("-i", "--input", required=True, help="source embedding file")
    convert.add_argument("-o", "--output", required=True, help="store file to write")
    tier_group = convert.add_mutually_exclusive_group()
    tier_group.add_argument("-s", "--skip-subword", action="store_true",
                            help="skip the n-gram index (LIGHT store)")
    tier_group.add_argument("-a", "--build-ann", action="store_true",
                            help="build the approximate-search forest (HEAVY store)")
    convert.add_argument("-p", "--precision", type=int, default=7,
                         help="decimal digits kept by quantization (default 7)")
    convert.add_argument("--ngram-min", type=int, default=3)
    convert.add_argument("--ngram-max", type=int, default=6)
    convert.add_argument("--trees", type=int, default=search.DEFAULT_TREES)
    convert.add_argument("--leaf-cap", type=int, default=search.DEFAULT_LEAF_CAP)
    convert.add_argument("--seed", type=int, default=search.DEFAULT_BUILD_SEED)
    convert.set_defaults(func=cmd_convert)

    query = sub.add_parser("query",
                           help="look up vectors and similarities in a store")
    query.add_argument("store", help="store file")
    qsub = query.add_subparsers(dest="subcommand", required=True,
                                parser_class=_Parser)

    vector = qsub.add_parser("vector")
    vector.add_argument("keys", nargs="+")
    vector.set_defaults(func=cmd_query_vector)

    similar = qsub.add_parser("similar")
    similar.add_argument("key")
    similar.add_argument("-k", "--topn", type=int, default=10)
    similar.add_argument("--approximate", action="store_true")
    similar.add_argument("--effort", type=float, default=1.0)
    similar.set_defaults(func=cmd_query_similar)

    analogy = qsub.add_parser("analogy")
    analogy.add_argument("--positive", nargs="+", required=True)
    analogy.add_argument("--negative", nargs="*", default=[])
    analogy.add_argument("--method", choices=("add", "mul"), default="add")
    analogy.add_argument("-k", "--topn", type=int, default=10)
    analogy.set_defaults(func=cmd_query_analogy)

    contains = qsub.add_parser("contains")
    contains.add_argument("keys", nargs="+")
    contains.set_defaults(func=cmd_query_contains)

    bench = sub.add_parser("bench",
                           help="time store operations")
    bench.add_argument("store", nargs="?", help="existing store file")
    bench.add_argument("--synthetic", nargs=2, type=int, metavar=("N", "D"),
                       help="build and bench a synthetic store of N keys, D dims")
    bench.add_argument("--tier", choices=("light", "medium", "heavy"), default="heavy",
                       help="tier for the synthetic store (default heavy)")
    bench.add_argument("--precision", type=int, default=7)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--knn", action="store_true",
                       help="require the approximate-search suite")
    bench.add_argument("--no-baseline", action="store_true",
                       help="skip the naive text-load baseline")
    bench.set_defaults(func=cmd_bench)
    return parser


def cmd_convert(args) -> int:
    if args.skip_subword:
        tier = Tier.LIGHT
    elif args.build_ann:
        tier = Tier.HEAVY
    else:
        tier = Tier.MEDIUM
    ext = os.path.splitext(args.input)[1]
    with open(args.input, "rb") as stream:
        head = stream.read(4096)
        stream.seek(0)
        fmt = detect_format(ext, head)
        records = parse_embeddings(stream, fmt)
        meta = write_store(
            records, args.output, tier=tier, precision=args.precision,
            ngram_min=args.ngram_min, ngram_max=args.ngram_max,
            n_trees=args.trees, leaf_cap=args.leaf_cap, build_seed=args.seed,
        )
    size = os.path.getsize(args.output)
    print(f"format={fmt.value} keys={meta.key_count} dimension={meta.dimension} "
          f"tier={meta.tier.name} precision={meta.quantization.precision} "
          f"dropped_zero={meta.dropped_zero_vectors} duplicates={meta.duplicate_keys} "
          f"bytes={size} output={args.output}")
    return 0


def _format_vector(vec: np.ndarray) -> str:
    return " ".join(f"{float(x):.8g}" for x in vec)


def cmd_query_vector(args) -> int:
    with open_store(args.store) as reader:
        session = QuerySession(reader)
        for key in args.keys:
            print(f"{key} {_format_vector(session.query(key))}")
    return 0


def cmd_query_similar(args) -> int:
    with open_store(args.store) as reader:
        session = QuerySession(reader)
        method = "approximate" if args.approximate else "exact"
        hits = session.most_similar(args.key, topn=args.topn,
                                    method=method, effort=args.effort)
        for hit in hits:
            print(f"{hit.key}\t{hit.similarity:.6f}")
    return 0


def cmd_query_analogy(args) -> int:
    with open_store(args.store) as reader:
        session = QuerySession(reader)
        hits = session.analogy(args.positive, args.negative,
                               method=args.method, topn=args.topn)
        for hit in hits:
            print(f"{hit.key}\t{hit.similarity:.6f}")
    return 0


def cmd_query_contains(args) -> int:
    with open_store(args.store) as reader:
        session = QuerySession(reader)
        for key in args.keys:
            print("true" if session.contains(key) else "false")
    return 0


def _time(fn, repeat: int = 1) -> tuple[float, object]:
    best = float("inf")
    result = None
    for _ in range(repeat):
        start = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - start)
    return best, result


def _naive_text_load(path: str) -> dict[str, np.ndarray]:
    table = {}
    with open(path, "r", encoding="utf-8") as stream:
        for line in stream:
            fields = line.split()
            if len(fields) < 2:
                continue
            table[fields[0]] = np.array([float(x) for x in fields[1:]], dtype=np.float32)
    return table


def cmd_bench(args) -> int:
    if (args.store is None) == (args.synthetic is None):
        raise _UsageError("bench: give a store path or --synthetic N D, not both")
    rows: list[tuple[str, float, str]] = []

    def record(name: str, value: float, unit: str = "s"):
        rows.append((name, value, unit))

    tmp_dir = None
    baseline_text = None
    try:
        if args.synthetic:
            n, d = args.synthetic
            tmp_dir = tempfile.mkdtemp(prefix="vecstore-bench-")
            store_path = os.path.join(tmp_dir, "bench.store")
            build_s, _ = _time(lambda: build_synthetic_store(
                store_path, n, d, tier=Tier.parse(args.tier),
                precision=args.precision, seed=args.seed))
            record("build", build_s)
            if not args.no_baseline:
                baseline_text = os.path.join(tmp_dir, "bench.txt")
                with open(baseline_text, "w", encoding="utf-8") as out:
                    for key, vec in gaussian_records(n, d, args.seed):
                        out.write(key + " " + " ".join(f"{x:.6f}" for x in vec) + "\n")
        else:
            store_path = args.store

        open_s, reader = _time(lambda: open_store(store_path))
        record("open_cold", open_s)
        record("open_bytes_read", float(reader.bytes_read_at_open), "B")
        if args.knn and reader.metadata.tier < Tier.HEAVY:
            reader.close()
            raise VecstoreError(
                f"--knn needs a HEAVY store, this one is {reader.metadata.tier.name}"
            )

        session = QuerySession(reader)
        count = reader.metadata.key_count
        probe_keys = [reader.key_at(i * count // 40 % count) for i in range(40)]
        single = probe_keys[0]
        cold_s, _ = _time(lambda: session.query(single))
        record("single_key_cold", cold_s)
        warm_s, _ = _time(lambda: session.query(single), repeat=3)
        record("single_key_warm", warm_s)
        bulk = probe_keys[1:26]
        cold_b, _ = _time(lambda: session.query(bulk))
        record("bulk25_cold", cold_b)
        warm_b, _ = _time(lambda: session.query(bulk), repeat=3)
        record("bulk25_warm", warm_b)

        knn_key = probe_keys[26]
        exact_s, _ = _time(lambda: search.exact_topk(reader, session.query(knn_key), 10))
        record("exact_knn_cold", exact_s)
        exact_w, _ = _time(lambda: session.most_similar(knn_key, topn=10), repeat=2)
        record("exact_knn_warm_cached", exact_w)

        if reader.metadata.tier >= Tier.HEAVY:
            ann_s, forest = _time(reader.load_ann)
            record("ann_load", ann_s)
            qvec = session.query(knn_key)
            for effort in (1.0, 0.1):
                approx_s, _ = _time(
                    lambda: search.approx_topk(forest, reader, qvec, 10, effort),
                    repeat=3)
                record(f"approx_knn_effort_{effort:g}", approx_s)

        if baseline_text is not None:
            base_s, _ = _time(lambda: _naive_text_load(baseline_text))
            record("baseline_text_load", base_s)
            if open_s > 0:
                record("load_ratio_baseline_over_open", base_s / open_s, "x")

        reader.close()
    finally:
        if tmp_dir is not None:
            import shutil
            shutil.rmtree(tmp_dir, ignore_errors=True)

    width = max(len(name) for name, _, _ in rows)
    for name, value, unit in rows:
        if unit == "s":
            print(f"{name:<{width}}  {value * 1000:10.3f} ms")
        else:
            print(f"{name:<{width}}  {value:10.0f} {unit}")
    for name, value, unit in rows:
        print(f"::{name}={value:.9g}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except VecstoreError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
