# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled n-gram windowing kernel.

Semantics match codeio_forge.decontam._kernel_py exactly: grams are
space-joined token windows sliced from one pre-joined string. The win over
the pure kernel is running the window loop and set inserts without
per-iteration interpreter overhead.
"""

from cpython.list cimport PyList_GET_SIZE, PyList_GET_ITEM
from cpython.set cimport PySet_Add, PySet_Contains
from cpython.unicode cimport PyUnicode_GET_LENGTH, PyUnicode_Substring
from libc.stdlib cimport free, malloc


def add_document_grams(list tokens, Py_ssize_t n, set out):
    cdef Py_ssize_t ntok = PyList_GET_SIZE(tokens)
    if ntok < n:
        return 0
    joined = " ".join(tokens)
    cdef Py_ssize_t *offsets = <Py_ssize_t *> malloc((ntok + 1) * sizeof(Py_ssize_t))
    if offsets == NULL:
        raise MemoryError()
    cdef Py_ssize_t i, pos = 0, windows = ntok - n + 1
    try:
        offsets[0] = 0
        for i in range(ntok):
            pos += PyUnicode_GET_LENGTH(<object> PyList_GET_ITEM(tokens, i)) + 1
            offsets[i + 1] = pos
        for i in range(windows):
            PySet_Add(out, PyUnicode_Substring(joined, offsets[i], offsets[i + n] - 1))
    finally:
        free(offsets)
    return windows


def count_gram_hits(list tokens, Py_ssize_t n, set index):
    cdef Py_ssize_t ntok = PyList_GET_SIZE(tokens)
    if ntok < n:
        return 0
    joined = " ".join(tokens)
    cdef Py_ssize_t *offsets = <Py_ssize_t *> malloc((ntok + 1) * sizeof(Py_ssize_t))
    if offsets == NULL:
        raise MemoryError()
    cdef Py_ssize_t i, pos = 0, hits = 0
    try:
        offsets[0] = 0
        for i in range(ntok):
            pos += PyUnicode_GET_LENGTH(<object> PyList_GET_ITEM(tokens, i)) + 1
            offsets[i + 1] = pos
        for i in range(ntok - n + 1):
            if PySet_Contains(index, PyUnicode_Substring(joined, offsets[i], offsets[i + n] - 1)):
                hits += 1
    finally:
        free(offsets)
    return hits
