"""Drives the LLM to turn raw code files into unified samples.

The flow per file: render the transformation prompt, parse the five-section
completion, validate the structural invariants, then smoke-test once
(generate one input, execute the entrypoint on it) so downstream stages
only ever see executable samples. Classification and the success-rate
difficulty band are separate, optional gates.
"""

from __future__ import annotations

import importlib.resources
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Optional

from .errors import EvaluatorUnavailable
from .execpool import ExecLimits, ExecMode, ExecPool, ExecRequest
from .gateway import ChatTurn, Gateway
from .model import (
    ClassificationLabel,
    RawCodeFile,
    SourceTag,
    TransformParseError,
    UnifiedSample,
    parse_transform_output,
    validate_unified_sample,
)
from .sampler import derive_seed
from .serde import sha256_hex

logger = logging.getLogger(__name__)

TRANSFORM_PROMPT_ASSET = "transform_prompt_v1.txt"
CLASSIFY_PROMPT_ASSET = "classify_prompt_v1.txt"

SUCCESS_RATE_LOW = 0.10
SUCCESS_RATE_HIGH = 0.90


def _load_asset(name: str) -> str:
    return (
        importlib.resources.files("codeio_forge").joinpath("assets", name).read_text("utf-8")
    )


TRANSFORM_PROMPT: str = _load_asset(TRANSFORM_PROMPT_ASSET)
CLASSIFY_PROMPT: str = _load_asset(CLASSIFY_PROMPT_ASSET)


def transform_prompt_for(file: RawCodeFile) -> str:
    return TRANSFORM_PROMPT.replace("{raw_code}", file.text)


def classify_prompt_for(file: RawCodeFile) -> str:
    return CLASSIFY_PROMPT.replace("{raw_code}", file.text)


def transform_asset_hash() -> str:
    return sha256_hex(TRANSFORM_PROMPT)


class TransformStatus(str, Enum):
    TRANSFORMED = "Transformed"
    PARSE_FAILED = "ParseFailed"
    VALIDATION_FAILED = "ValidationFailed"
    EXEC_CHECK_FAILED = "ExecCheckFailed"


@dataclass(frozen=True)
class TransformOutcome:
    raw_id: str
    status: TransformStatus
    sample: Optional[UnifiedSample] = None
    failure_detail: str = ""

    def __post_init__(self) -> None:
        if (self.status == TransformStatus.TRANSFORMED) != (self.sample is not None):
            raise ValueError("sample must be present exactly when status is Transformed")


def transform_raw_file(
    file: RawCodeFile,
    gateway: Gateway,
    exec_pool: ExecPool,
    limits: Optional[ExecLimits] = None,
) -> TransformOutcome:
    """Transform one raw file; every content failure is a status, not an exception."""
    reply = gateway.complete([ChatTurn("user", transform_prompt_for(file))])
    try:
        sample = parse_transform_output(reply.content, id=file.id, source_tag=file.source_tag)
    except TransformParseError as exc:
        return TransformOutcome(
            raw_id=file.id, status=TransformStatus.PARSE_FAILED, failure_detail=str(exc)
        )

    report = validate_unified_sample(sample)
    if not report.ok:
        return TransformOutcome(
            raw_id=file.id,
            status=TransformStatus.VALIDATION_FAILED,
            failure_detail=",".join(report.violations),
        )

    detail = _smoke_test(sample, exec_pool, limits or ExecLimits())
    if detail is not None:
        return TransformOutcome(
            raw_id=file.id, status=TransformStatus.EXEC_CHECK_FAILED, failure_detail=detail
        )
    return TransformOutcome(raw_id=file.id, status=TransformStatus.TRANSFORMED, sample=sample)


def _smoke_test(sample: UnifiedSample, pool: ExecPool, limits: ExecLimits) -> Optional[str]:
    """One generator call fed into one entrypoint call; None means success."""
    gen = pool.submit(
        ExecRequest(
            request_id=f"{sample.id}:smoke:gen",
            mode=ExecMode.RUN_GENERATOR,
            reference_code=sample.reference_code,
            entrypoint_name=sample.entrypoint_name,
            generator_code=sample.generator_code,
            seed=derive_seed(sample.id, "smoke"),
            limits=limits,
        )
    )
    if not gen.ok:
        return f"generator: {gen.status.value}: {gen.error_message}"
    if not isinstance(gen.value, dict):
        return "generator: did not return an argument map"
    run = pool.submit(
        ExecRequest(
            request_id=f"{sample.id}:smoke:run",
            mode=ExecMode.RUN_ENTRYPOINT,
            reference_code=sample.reference_code,
            entrypoint_name=sample.entrypoint_name,
            args=gen.value,
            limits=limits,
        )
    )
    if not run.ok:
        return f"entrypoint: {run.status.value}: {run.error_message}"
    return None


# ---------------------------------------------------------------------------
# Classification and filtering
# ---------------------------------------------------------------------------

_LABEL_LOOKUP = {label.value.lower(): label for label in ClassificationLabel}
_LABEL_ALIASES = {
    "algorithms": ClassificationLabel.ALGORITHMS,
    "algorithm": ClassificationLabel.ALGORITHMS,
    "logic puzzles": ClassificationLabel.LOGIC_PUZZLES,
    "logicpuzzles": ClassificationLabel.LOGIC_PUZZLES,
    "math-related tasks": ClassificationLabel.MATH_RELATED,
    "math-related": ClassificationLabel.MATH_RELATED,
    "mathrelated": ClassificationLabel.MATH_RELATED,
    "scientific computation": ClassificationLabel.SCIENTIFIC_COMPUTATION,
    "scientificcomputation": ClassificationLabel.SCIENTIFIC_COMPUTATION,
    "system modeling": ClassificationLabel.SYSTEM_MODELING,
    "systemmodeling": ClassificationLabel.SYSTEM_MODELING,
    "other complex reasoning": ClassificationLabel.OTHER_COMPLEX_REASONING,
    "othercomplexreasoning": ClassificationLabel.OTHER_COMPLEX_REASONING,
    "non-reasoning": ClassificationLabel.NON_REASONING,
    "non-reasoning codes": ClassificationLabel.NON_REASONING,
    "nonreasoning": ClassificationLabel.NON_REASONING,
}


def classify_file(file: RawCodeFile, gateway: Gateway) -> ClassificationLabel:
    """Exactly one label per file; unparseable answers fall back with a warning."""
    reply = gateway.complete([ChatTurn("user", classify_prompt_for(file))])
    normalized = reply.content.strip().lower().strip(" .:`'\"*")
    label = _LABEL_LOOKUP.get(normalized) or _LABEL_ALIASES.get(normalized)
    if label is None:
        logger.warning(
            "unrecognized classification %r for file %s; using OtherComplexReasoning",
            reply.content[:60],
            file.id,
        )
        return ClassificationLabel.OTHER_COMPLEX_REASONING
    return label


# Labels excluded from the reasoning-focused subset of the educational corpus:
# algorithmic content overlaps the main corpus and non-reasoning adds noise.
PYEDU_R_EXCLUDED = frozenset(
    {ClassificationLabel.ALGORITHMS, ClassificationLabel.NON_REASONING}
)


def keep_for_source(source_tag: SourceTag, label: ClassificationLabel) -> bool:
    if source_tag == SourceTag.PYEDU_R:
        return label not in PYEDU_R_EXCLUDED
    return True


@dataclass(frozen=True)
class BandDecision:
    keep: bool
    rate: float


def filter_by_success_rate(
    file: RawCodeFile,
    evaluator: Optional[Callable[[RawCodeFile], float]],
    low: float = SUCCESS_RATE_LOW,
    high: float = SUCCESS_RATE_HIGH,
) -> BandDecision:
    """Keep files whose derived completion-task success rate sits in [low, high].

    Both boundaries are inclusive. The evaluator is a plug-in (a scorer over
    some completion task derived from the file); without one this filter is
    unavailable rather than silently pass-through.
    """
    if evaluator is None:
        raise EvaluatorUnavailable("no success-rate evaluator configured")
    rate = float(evaluator(file))
    if not (0.0 <= rate <= 1.0):
        raise ValueError(f"evaluator returned a rate outside [0, 1]: {rate}")
    return BandDecision(keep=low <= rate <= high, rate=rate)


def transform_many(
    files: Iterable[RawCodeFile],
    gateway: Gateway,
    exec_pool: ExecPool,
    limits: Optional[ExecLimits] = None,
) -> list[TransformOutcome]:
    return [transform_raw_file(f, gateway, exec_pool, limits) for f in files]
