"""Pure-Python n-gram windowing kernel (fallback for the compiled one).

Grams are space-joined token windows; tokens never contain whitespace, so
the joined string is a collision-free encoding of the window. Windows are
sliced out of one pre-joined string instead of re-joining per window, which
keeps the loop near C speed.
"""

from __future__ import annotations


def add_document_grams(tokens: list[str], n: int, out: set[str]) -> int:
    ntok = len(tokens)
    if ntok < n:
        return 0
    joined = " ".join(tokens)
    offsets = [0] * (ntok + 1)
    pos = 0
    for i, tok in enumerate(tokens):
        pos += len(tok) + 1
        offsets[i + 1] = pos
    add = out.add
    windows = ntok - n + 1
    for i in range(windows):
        add(joined[offsets[i] : offsets[i + n] - 1])
    return windows


def count_gram_hits(tokens: list[str], n: int, index: set[str]) -> int:
    ntok = len(tokens)
    if ntok < n:
        return 0
    joined = " ".join(tokens)
    offsets = [0] * (ntok + 1)
    pos = 0
    for i, tok in enumerate(tokens):
        pos += len(tok) + 1
        offsets[i + 1] = pos
    hits = 0
    for i in range(ntok - n + 1):
        if joined[offsets[i] : offsets[i + n] - 1] in index:
            hits += 1
    return hits
