#!/usr/bin/env python3
"""Benchmark the compiled n-gram kernel against the pure-Python fallback.

Builds a synthetic corpus, then times index construction and detection with
each kernel. Run from the repo root:

    python benchmarks/bench_ngram.py --mb 50
"""

from __future__ import annotations

import argparse
import random
import string
import time

from codeio_forge.decontam import DEFAULT_N, _kernel_py, normalize

try:
    from codeio_forge import _ngramcore
except ImportError:
    _ngramcore = None


def synthetic_corpus(megabytes: int, seed: int = 42) -> list[str]:
    rng = random.Random(seed)
    vocabulary = [
        "".join(rng.choice(string.ascii_lowercase) for _ in range(rng.randint(3, 9)))
        for _ in range(50_000)
    ]
    documents: list[str] = []
    total = 0
    target = megabytes * 1024 * 1024
    while total < target:
        doc = " ".join(rng.choice(vocabulary) for _ in range(300))
        documents.append(doc)
        total += len(doc) + 1
    return documents


def bench_kernel(name: str, kernel, token_docs: list[list[str]], n: int) -> dict:
    grams: set[str] = set()
    started = time.perf_counter()
    windows = 0
    for tokens in token_docs:
        windows += kernel.add_document_grams(tokens, n, grams)
    build_seconds = time.perf_counter() - started

    started = time.perf_counter()
    hits = 0
    for tokens in token_docs[:2000]:
        hits += kernel.count_gram_hits(tokens, n, grams)
    detect_seconds = time.perf_counter() - started

    return {
        "kernel": name,
        "grams": len(grams),
        "windows": windows,
        "build_seconds": build_seconds,
        "detect_seconds": detect_seconds,
        "hits": hits,
    }


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--mb", type=int, default=50, help="corpus size in MiB")
    parser.add_argument("--n", type=int, default=DEFAULT_N)
    args = parser.parse_args()

    print(f"generating {args.mb} MiB synthetic corpus ...")
    documents = synthetic_corpus(args.mb)
    started = time.perf_counter()
    token_docs = [normalize(doc) for doc in documents]
    print(f"normalized {len(documents)} documents in {time.perf_counter() - started:.1f}s")

    kernels = [("pure", _kernel_py)]
    if _ngramcore is not None:
        kernels.append(("compiled", _ngramcore))
    else:
        print("compiled kernel not available; benchmarking pure only")

    results = [bench_kernel(name, kernel, token_docs, args.n) for name, kernel in kernels]
    print(f"\n{'kernel':<10} {'grams':>12} {'build (s)':>10} {'Mgrams/s':>10} {'detect (s)':>11}")
    for row in results:
        rate = row["windows"] / row["build_seconds"] / 1e6
        print(
            f"{row['kernel']:<10} {row['grams']:>12,} {row['build_seconds']:>10.2f} "
            f"{rate:>10.2f} {row['detect_seconds']:>11.3f}"
        )
    if len(results) == 2:
        speedup = results[0]["build_seconds"] / results[1]["build_seconds"]
        print(f"\ncompiled kernel build speedup over pure: {speedup:.2f}x")
        assert results[0]["grams"] == results[1]["grams"], "kernels disagree!"
        assert results[0]["hits"] == results[1]["hits"], "kernels disagree on detection!"
        print("kernels agree on gram sets and detection counts")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
