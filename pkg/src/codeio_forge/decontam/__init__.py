"""13-gram leakage detection between benchmark questions and training text.

Normalization lowercases, strips punctuation and digit characters, and
splits on whitespace; a question is flagged as potentially leaked when any
of its normalized 13-grams appears anywhere in the training corpus. Grams
are stored as the joined token windows themselves, so membership is exact
with zero false positives by construction.

The windowing hot loop has a compiled kernel with a pure-Python fallback,
chosen at import time (CODEIO_FORGE_PURE=1 forces the fallback).
"""

from __future__ import annotations

import os
import string
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from ..errors import EmptyBenchmark

if os.environ.get("CODEIO_FORGE_PURE"):
    from . import _kernel_py as _kernel

    KERNEL = "pure"
else:
    try:
        from .. import _ngramcore as _kernel  # type: ignore[no-redef]

        KERNEL = "compiled"
    except ImportError:
        from . import _kernel_py as _kernel  # type: ignore[no-redef]

        KERNEL = "pure"

DEFAULT_N = 13

DIGIT_MODE_CHARS = "chars"  # strip digit characters out of tokens
DIGIT_MODE_TOKENS = "tokens"  # drop all-digit tokens whole, keep digits inside words

_STRIP_PUNCT_AND_DIGITS = str.maketrans("", "", string.punctuation + string.digits)
_STRIP_PUNCT = str.maketrans("", "", string.punctuation)


def normalize(text: str, digit_mode: str = DIGIT_MODE_CHARS) -> list[str]:
    """Lowercase, remove punctuation and numbers, split on whitespace."""
    if digit_mode == DIGIT_MODE_CHARS:
        tokens = text.lower().translate(_STRIP_PUNCT_AND_DIGITS).split()
        return tokens
    if digit_mode == DIGIT_MODE_TOKENS:
        tokens = text.lower().translate(_STRIP_PUNCT).split()
        return [t for t in tokens if not t.isdigit()]
    raise ValueError(f"unknown digit_mode: {digit_mode!r}")


@dataclass(frozen=True)
class DetectResult:
    leaked: bool
    matching_grams: int


class NGramIndex:
    """Set of all normalized n-grams over a training corpus."""

    def __init__(self, n: int = DEFAULT_N, digit_mode: str = DIGIT_MODE_CHARS):
        if n < 1:
            raise ValueError("n must be >= 1")
        self.n = n
        self.digit_mode = digit_mode
        self._grams: set[str] = set()

    def __len__(self) -> int:
        return len(self._grams)

    def add_document(self, text: str) -> int:
        """Index every n-gram of one document; returns the window count."""
        return _kernel.add_document_grams(normalize(text, self.digit_mode), self.n, self._grams)

    @classmethod
    def build(
        cls, documents: Iterable[str], n: int = DEFAULT_N, digit_mode: str = DIGIT_MODE_CHARS
    ) -> "NGramIndex":
        index = cls(n=n, digit_mode=digit_mode)
        for doc in documents:
            index.add_document(doc)
        return index

    def contains(self, gram_tokens: Sequence[str]) -> bool:
        if len(gram_tokens) != self.n:
            raise ValueError(f"expected a {self.n}-token gram")
        return " ".join(gram_tokens) in self._grams

    def merge(self, other: "NGramIndex") -> "NGramIndex":
        """Union another shard's grams into this index (shard-parallel builds)."""
        if (other.n, other.digit_mode) != (self.n, self.digit_mode):
            raise ValueError("cannot merge indexes with different n or normalization")
        self._grams |= other._grams
        return self

    def detect(self, question: str) -> DetectResult:
        """Leaked iff any normalized n-gram of the question is indexed."""
        tokens = normalize(question, self.digit_mode)
        hits = _kernel.count_gram_hits(tokens, self.n, self._grams)
        return DetectResult(leaked=hits > 0, matching_grams=hits)


def leakage_report(
    benchmarks: Mapping[str, Sequence[str]], index: NGramIndex
) -> dict:
    """Per-benchmark leaked percentage, one decimal place."""
    rows = {}
    for name, questions in benchmarks.items():
        if not questions:
            raise EmptyBenchmark(f"benchmark {name!r} has no questions")
        leaked = sum(1 for q in questions if index.detect(q).leaked)
        rows[name] = {
            "total": len(questions),
            "leaked": leaked,
            "ratio_percent": round(100.0 * leaked / len(questions), 1),
        }
    return {
        "n": index.n,
        "normalization": {
            "lowercase": True,
            "strip": "punctuation+digits",
            "digit_mode": index.digit_mode,
            "token_level": True,
        },
        "kernel": KERNEL,
        "benchmarks": rows,
    }
