from __future__ import annotations

import random
import string

import pytest

from codeio_forge.decontam import (
    DIGIT_MODE_TOKENS,
    KERNEL,
    NGramIndex,
    _kernel_py,
    leakage_report,
    normalize,
)
from codeio_forge.errors import EmptyBenchmark


def test_normalize_examples():
    assert normalize("Two Sum, 123 times!") == ["two", "sum", "times"]
    assert normalize("   ") == []
    assert normalize("A B C D") == ["a", "b", "c", "d"]


def test_normalize_digit_modes():
    # chars mode strips digits inside tokens; tokens mode keeps them but drops
    # all-digit tokens whole.
    assert normalize("abc1def 123 x2") == ["abcdef", "x"]
    assert normalize("abc1def 123 x2", DIGIT_MODE_TOKENS) == ["abc1def", "x2"]


def words(n: int, seed: int = 0) -> list[str]:
    rng = random.Random(seed)
    return ["".join(rng.choice(string.ascii_lowercase) for _ in range(5)) for _ in range(n)]


def test_window_arithmetic():
    index = NGramIndex(n=13)
    assert index.add_document(" ".join(words(13))) == 1
    assert len(index) == 1
    assert NGramIndex(n=13).add_document(" ".join(words(12))) == 0
    index20 = NGramIndex(n=13)
    assert index20.add_document(" ".join(words(20))) == 8  # 20 - 13 + 1


def test_planted_13_token_overlap_detected():
    vocabulary = words(200, seed=1)
    rng = random.Random(2)
    train_doc = " ".join(rng.choice(vocabulary) for _ in range(60))
    index = NGramIndex.build([train_doc])
    planted = " ".join(train_doc.split()[10:23])  # 13 contiguous tokens
    question = "Intro words here. " + planted + " trailing question?"
    result = index.detect(question)
    assert result.leaked
    assert result.matching_grams >= 1


def test_12_token_overlap_not_detected():
    vocabulary = words(200, seed=1)
    rng = random.Random(3)
    train_tokens = [rng.choice(vocabulary) for _ in range(60)]
    index = NGramIndex.build([" ".join(train_tokens)])
    # 12 shared tokens, then break the window with an unseen token.
    question = " ".join(train_tokens[10:22]) + " zzzunseen " + " ".join(train_tokens[40:52])
    assert not index.detect(question).leaked


def test_short_question_never_leaks():
    index = NGramIndex.build(["whatever " * 30])
    assert not index.detect(" ".join(words(12))).leaked
    assert not index.detect("").leaked


def test_monotone_under_index_growth():
    docs = [" ".join(words(30, seed=s)) for s in range(5)]
    question = " ".join(words(30, seed=2))  # equals docs[2]'s text
    small = NGramIndex.build(docs[:2])
    big = NGramIndex.build(docs)
    assert not small.detect(question).leaked
    assert big.detect(question).leaked
    # growing an index never un-leaks a question
    for doc in docs:
        assert big.detect(doc).leaked or len(normalize(doc)) < 13


def test_leakage_report_ratios():
    base = words(400, seed=5)
    train = " ".join(base)
    index = NGramIndex.build([train])
    leaked_question = " ".join(base[100:113])
    clean_question = " ".join(words(13, seed=99))
    benchmarks = {
        "planted": [leaked_question] * 43 + [clean_question] * 157,
        "clean": [clean_question] * 10,
        "all": [leaked_question] * 4,
    }
    report = leakage_report(benchmarks, index)
    assert report["benchmarks"]["planted"]["ratio_percent"] == 21.5
    assert report["benchmarks"]["clean"]["ratio_percent"] == 0.0
    assert report["benchmarks"]["all"]["ratio_percent"] == 100.0
    assert report["n"] == 13
    assert report["kernel"] == KERNEL


def test_empty_benchmark_raises():
    with pytest.raises(EmptyBenchmark):
        leakage_report({"empty": []}, NGramIndex())


def test_shard_merge_equals_single_build():
    docs = [" ".join(words(30, seed=s)) for s in range(6)]
    whole = NGramIndex.build(docs, n=7)
    left = NGramIndex.build(docs[:3], n=7)
    right = NGramIndex.build(docs[3:], n=7)
    left.merge(right)
    assert len(left) == len(whole)
    for doc in docs:
        assert left.detect(doc).matching_grams == whole.detect(doc).matching_grams
    with pytest.raises(ValueError):
        left.merge(NGramIndex.build(docs, n=5))


def test_kernels_agree():
    rng = random.Random(11)
    vocabulary = words(50, seed=7)
    docs = [" ".join(rng.choice(vocabulary) for _ in range(rng.randint(5, 40))) for _ in range(30)]
    index = NGramIndex.build(docs, n=5)
    pure = set()
    for doc in docs:
        _kernel_py.add_document_grams(normalize(doc), 5, pure)
    assert pure == index._grams  # same grams regardless of kernel
    for doc in docs:
        tokens = normalize(doc)
        assert _kernel_py.count_gram_hits(tokens, 5, index._grams) == index.detect(doc).matching_grams
