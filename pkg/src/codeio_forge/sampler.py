"""Samples input/output pairs per unified sample under per-source quotas.

Seeds are derived deterministically from (sample id, attempt index), so a
corpus can be regenerated bit-identically without persisting generator
state. Duplicate inputs, failed executions, and over-limit values are
discarded; a sample that yields nothing is dropped with a logged reason.
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Optional, Sequence, TypeVar

from .errors import InvalidRatio
from .execpool import ExecLimits, ExecMode, ExecPool, ExecRequest, ExecResult
from .model import SourceTag, UnifiedSample, parse_io_description, structural_limits_check
from .serde import canonical_json, stable_hash64

logger = logging.getLogger(__name__)

PAIRS_SCHEMA = "codeio_pairs_v1"

DEFAULT_QUOTAS = {
    SourceTag.CODEMIX: 3,
    SourceTag.PYEDU_R: 6,
    SourceTag.OTHER: 10,
}


@dataclass(frozen=True)
class IOPair:
    sample_id: str
    pair_index: int
    input: Mapping[str, Any]
    output: Any
    generator_seed: int

    def to_json_obj(self) -> dict:
        return {
            "schema": PAIRS_SCHEMA,
            "sample_id": self.sample_id,
            "pair_index": self.pair_index,
            "input": dict(self.input),
            "output": self.output,
            "generator_seed": self.generator_seed,
        }

    @classmethod
    def from_json_obj(cls, obj: Mapping[str, Any]) -> "IOPair":
        return cls(
            sample_id=obj["sample_id"],
            pair_index=int(obj["pair_index"]),
            input=obj["input"],
            output=obj["output"],
            generator_seed=int(obj["generator_seed"]),
        )


@dataclass(frozen=True)
class QuotaPolicy:
    """Per-source pair quotas plus the attempt budget multiplier.

    Real generators collide and fail often enough that average yields sit
    below quota; the attempt budget (attempts_factor x quota) bounds wasted
    executions per sample.
    """

    quotas: Mapping[SourceTag, int] = field(default_factory=lambda: dict(DEFAULT_QUOTAS))
    attempts_factor: int = 5

    def __post_init__(self) -> None:
        for tag, quota in self.quotas.items():
            if quota < 1:
                raise ValueError(f"quota for {tag} must be >= 1")
        if self.attempts_factor < 1:
            raise ValueError("attempts_factor must be >= 1")

    def quota_for(self, tag: SourceTag) -> int:
        return self.quotas[tag]

    def max_attempts(self, tag: SourceTag) -> int:
        return self.attempts_factor * self.quota_for(tag)


def derive_seed(sample_id: str, attempt: int | str) -> int:
    """Stable 64-bit generator seed for one (sample, attempt). Frozen format."""
    return stable_hash64(f"{sample_id}\x1f{attempt}")


def _exec(pool: ExecPool, request: ExecRequest) -> ExecResult:
    return pool.submit(request)


def check_determinism(
    sample: UnifiedSample, pool: ExecPool, limits: Optional[ExecLimits] = None
) -> ExecResult:
    """Probe one generated input and run the worker's determinism check on it."""
    limits = limits or ExecLimits()
    probe = _exec(
        pool,
        ExecRequest(
            request_id=f"{sample.id}:det:gen",
            mode=ExecMode.RUN_GENERATOR,
            reference_code=sample.reference_code,
            entrypoint_name=sample.entrypoint_name,
            generator_code=sample.generator_code,
            seed=derive_seed(sample.id, "det"),
            limits=limits,
        ),
    )
    if not probe.ok or not isinstance(probe.value, dict):
        return probe
    return _exec(
        pool,
        ExecRequest(
            request_id=f"{sample.id}:det:check",
            mode=ExecMode.DETERMINISM_CHECK,
            reference_code=sample.reference_code,
            entrypoint_name=sample.entrypoint_name,
            args=probe.value,
            limits=limits,
        ),
    )


def sample_pairs(
    sample: UnifiedSample,
    policy: QuotaPolicy,
    pool: ExecPool,
    limits: Optional[ExecLimits] = None,
) -> list[IOPair]:
    """Generate up to the source quota of distinct, executable I/O pairs.

    The caller is expected to have gated the sample through the determinism
    check. Returns a possibly-short (or empty) list; pair_index is dense
    from 0 in generation order.
    """
    limits = limits or ExecLimits()
    quota = policy.quota_for(sample.source_tag)
    budget = policy.max_attempts(sample.source_tag)
    declared = parse_io_description(sample.io_description)
    declared_names = set(declared.input_names) if declared else None

    pairs: list[IOPair] = []
    seen_inputs: set[str] = set()
    drop_reasons: dict[str, int] = {}

    for attempt in range(budget):
        if len(pairs) >= quota:
            break
        seed = derive_seed(sample.id, attempt)
        gen = _exec(
            pool,
            ExecRequest(
                request_id=f"{sample.id}:gen:{attempt}",
                mode=ExecMode.RUN_GENERATOR,
                reference_code=sample.reference_code,
                entrypoint_name=sample.entrypoint_name,
                generator_code=sample.generator_code,
                seed=seed,
                limits=limits,
            ),
        )
        if not gen.ok:
            drop_reasons[f"gen_{gen.status.value}"] = drop_reasons.get(f"gen_{gen.status.value}", 0) + 1
            continue
        if not isinstance(gen.value, dict):
            drop_reasons["gen_not_a_map"] = drop_reasons.get("gen_not_a_map", 0) + 1
            continue
        input_args = gen.value
        if declared_names is not None and set(input_args.keys()) != declared_names:
            drop_reasons["input_keys_mismatch"] = drop_reasons.get("input_keys_mismatch", 0) + 1
            continue
        key = canonical_json(input_args)
        if key in seen_inputs:
            drop_reasons["duplicate_input"] = drop_reasons.get("duplicate_input", 0) + 1
            continue
        seen_inputs.add(key)
        run = _exec(
            pool,
            ExecRequest(
                request_id=f"{sample.id}:run:{attempt}",
                mode=ExecMode.RUN_ENTRYPOINT,
                reference_code=sample.reference_code,
                entrypoint_name=sample.entrypoint_name,
                args=input_args,
                limits=limits,
            ),
        )
        if not run.ok:
            drop_reasons[f"run_{run.status.value}"] = drop_reasons.get(f"run_{run.status.value}", 0) + 1
            continue
        if not structural_limits_check(input_args) or not structural_limits_check(run.value):
            drop_reasons["structural_limits"] = drop_reasons.get("structural_limits", 0) + 1
            continue
        pairs.append(
            IOPair(
                sample_id=sample.id,
                pair_index=len(pairs),
                input=input_args,
                output=run.value,
                generator_seed=seed,
            )
        )

    if not pairs:
        logger.info("sample %s yielded no pairs (reasons: %s)", sample.id, drop_reasons or "none")
    return pairs


def limit_pairs_per_sample(
    grouped: Mapping[str, Sequence[IOPair]], k_ratio: float
) -> dict[str, list[IOPair]]:
    """Keep the ceil(k_ratio * n) lowest-indexed pairs of each sample."""
    if not (0 < k_ratio <= 1):
        raise InvalidRatio(f"k_ratio must be in (0, 1], got {k_ratio}")
    reduced: dict[str, list[IOPair]] = {}
    for sample_id, pairs in grouped.items():
        ordered = sorted(pairs, key=lambda p: p.pair_index)
        keep = math.ceil(k_ratio * len(ordered))
        reduced[sample_id] = ordered[:keep]
    return reduced


T = TypeVar("T")


def subsample_instances(instances: Sequence[T], fraction: float, seed: int) -> list[T]:
    """Seeded uniform subsample without replacement, preserving input order.

    Size is fraction * n rounded half-up. fraction == 1 returns a copy.
    """
    if not (0 < fraction <= 1):
        raise InvalidRatio(f"fraction must be in (0, 1], got {fraction}")
    if fraction == 1:
        return list(instances)
    n = len(instances)
    k = int(math.floor(fraction * n + 0.5))
    rng = random.Random(seed)
    chosen = sorted(rng.sample(range(n), k))
    return [instances[i] for i in chosen]


def group_pairs(pairs: Iterable[IOPair]) -> dict[str, list[IOPair]]:
    grouped: dict[str, list[IOPair]] = {}
    for pair in pairs:
        grouped.setdefault(pair.sample_id, []).append(pair)
    return grouped
