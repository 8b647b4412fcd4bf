"""Checks model answers: extraction, comparison, re-execution, and feedback.

Output predictions are compared against the stored ground truth; input
predictions are accepted semantically — any predicted input whose executed
output matches the truth counts, not just the originally sampled one. Every
check ends in exactly one verdict kind, and wrong answers carry the
feedback text that drives the revision turn.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Mapping, Optional, Sequence

from .errors import EmptyInput, MissingResponse
from .execpool import ExecMode, ExecPool, ExecRequest, ExecStatus, ExecLimits
from .model import UnifiedSample
from .prompts import Direction, PredictionInstance
from .serde import display_json

VERDICT_SCHEMA = "codeio_verdict_v1"


class VerdictKind(str, Enum):
    CORRECT = "Correct"
    WRONG_ANSWER = "WrongAnswer"
    FORMAT_ERROR = "FormatError"
    ARGUMENT_MISMATCH = "ArgumentMismatch"
    RUNTIME_ERROR = "RuntimeError"
    TIMEOUT = "Timeout"
    SIZE_LIMIT = "SizeLimit"


@dataclass(frozen=True)
class Verdict:
    instance_id: str
    turn_index: int
    kind: VerdictKind
    feedback_text: str
    extracted: Any = None
    observed_output: Any = None

    def to_json_obj(self) -> dict:
        return {
            "schema": VERDICT_SCHEMA,
            "instance_id": self.instance_id,
            "turn_index": self.turn_index,
            "kind": self.kind.value,
            "feedback_text": self.feedback_text,
            "extracted": self.extracted,
            "observed_output": self.observed_output,
        }

    @classmethod
    def from_json_obj(cls, obj: Mapping[str, Any]) -> "Verdict":
        return cls(
            instance_id=obj["instance_id"],
            turn_index=int(obj["turn_index"]),
            kind=VerdictKind(obj["kind"]),
            feedback_text=obj["feedback_text"],
            extracted=obj.get("extracted"),
            observed_output=obj.get("observed_output"),
        )


@dataclass(frozen=True)
class EqualityPolicy:
    """How predicted and true values are compared.

    Defaults are exact-with-numeric-coercion: 1 equals 1.0, everything else
    strict. Tolerances exist for corpora with real-valued outputs.
    """

    numeric_cross_type: bool = True
    abs_tol: float = 0.0
    rel_tol: float = 0.0
    list_order_significant: bool = True

    def __post_init__(self) -> None:
        if self.abs_tol < 0 or self.rel_tol < 0:
            raise ValueError("tolerances must be >= 0")


@dataclass(frozen=True)
class FeedbackTemplates:
    """Feedback texts appended after a verification; operator-overridable.

    The input-mismatch wording is load-bearing: stitched multi-turn
    responses embed it verbatim, so golden datasets pin it.
    """

    success: str = "Success"
    input_mismatch: str = (
        "[Mismatch] Your input is not feasible! Given the output {truth}, "
        "your predicted input is {predicted}, which actually gets a wrong output as {observed}"
    )
    output_mismatch: str = (
        "[Mismatch] Your output is not correct! Given the input {given_input}, "
        "your predicted output is {predicted} which is wrong!"
    )
    format_error: str = (
        "[Format Error] Your response does not contain a final answer in the required "
        'json format: {shape}'
    )
    argument_mismatch: str = (
        "[Argument Mismatch] Your predicted input {predicted} does not match "
        "the input variables of the function! {error}"
    )
    runtime_error: str = (
        "[Runtime Error] Executing the code with your predicted input {predicted} "
        "raised an error: {error}"
    )
    timeout: str = (
        "[Timeout] Executing the code with your predicted input {predicted} "
        "exceeded the runtime limit!"
    )
    size_limit: str = (
        "[Size Limit] Executing the code with your predicted input {predicted} "
        "produced a value exceeding the complexity limits!"
    )


ANSWER_SHAPES = {
    Direction.PREDICT_INPUT: '{"input": <your input>}',
    Direction.PREDICT_OUTPUT: '{"output": <your output>}',
}


class AnswerFormatError(ValueError):
    """No JSON object carrying the expected top-level key parsed out of the text."""


_MISSING = object()


def extract_answer(response: str, direction: Direction) -> Any:
    """Pull the final answer out of a CoT response.

    Scans every JSON object literal in the text (fenced or not) whose
    top-level key matches the direction and returns the value of the last
    one — CoT responses restate candidate answers before committing.
    """
    key = "input" if direction == Direction.PREDICT_INPUT else "output"
    decoder = json.JSONDecoder()
    found: Any = _MISSING
    pos = response.find("{")
    while pos != -1:
        try:
            obj, _end = decoder.raw_decode(response, pos)
        except ValueError:
            pass
        else:
            if isinstance(obj, dict) and key in obj:
                found = obj[key]
        pos = response.find("{", pos + 1)
    if found is _MISSING:
        raise AnswerFormatError(f'no {{"{key}": ...}} object found in response')
    return found


def _numbers_equal(a: float, b: float, policy: EqualityPolicy) -> bool:
    if a == b:
        return True
    if policy.abs_tol or policy.rel_tol:
        return math.isclose(a, b, rel_tol=policy.rel_tol, abs_tol=policy.abs_tol)
    return False


def _match_unordered(predicted: list, truth: list, policy: EqualityPolicy) -> bool:
    # Maximum bipartite matching (Kuhn's): symmetric because the element
    # relation is symmetric and we require a perfect matching.
    n = len(predicted)
    match_of_truth: list[int] = [-1] * n

    def try_assign(i: int, visited: list[bool]) -> bool:
        for j in range(n):
            if visited[j] or not compare_outputs(predicted[i], truth[j], policy):
                continue
            visited[j] = True
            if match_of_truth[j] == -1 or try_assign(match_of_truth[j], visited):
                match_of_truth[j] = i
                return True
        return False

    return all(try_assign(i, [False] * n) for i in range(n))


def compare_outputs(predicted: Any, truth: Any, policy: EqualityPolicy) -> bool:
    """Deep equality under the policy; type mismatches beyond numeric coercion fail."""
    if isinstance(predicted, bool) or isinstance(truth, bool):
        return isinstance(predicted, bool) and isinstance(truth, bool) and predicted == truth
    if isinstance(predicted, (int, float)) and isinstance(truth, (int, float)):
        if not policy.numeric_cross_type and (
            isinstance(predicted, float) != isinstance(truth, float)
        ):
            return False
        return _numbers_equal(predicted, truth, policy)
    if predicted is None or truth is None:
        return predicted is None and truth is None
    if isinstance(predicted, str) and isinstance(truth, str):
        return predicted == truth
    if isinstance(predicted, list) and isinstance(truth, list):
        if len(predicted) != len(truth):
            return False
        if policy.list_order_significant:
            return all(compare_outputs(p, t, policy) for p, t in zip(predicted, truth))
        return _match_unordered(predicted, truth, policy)
    if isinstance(predicted, dict) and isinstance(truth, dict):
        if predicted.keys() != truth.keys():
            return False
        return all(compare_outputs(predicted[k], truth[k], policy) for k in truth)
    return False


def verify_output_prediction(
    instance: PredictionInstance,
    response: str,
    policy: EqualityPolicy = EqualityPolicy(),
    templates: FeedbackTemplates = FeedbackTemplates(),
    turn_index: int = 0,
) -> Verdict:
    assert instance.direction == Direction.PREDICT_OUTPUT
    try:
        predicted = extract_answer(response, Direction.PREDICT_OUTPUT)
    except AnswerFormatError:
        return Verdict(
            instance_id=instance.instance_id,
            turn_index=turn_index,
            kind=VerdictKind.FORMAT_ERROR,
            feedback_text=templates.format_error.format(
                shape=ANSWER_SHAPES[Direction.PREDICT_OUTPUT]
            ),
        )
    if compare_outputs(predicted, instance.ground_truth_output, policy):
        return Verdict(
            instance_id=instance.instance_id,
            turn_index=turn_index,
            kind=VerdictKind.CORRECT,
            feedback_text=templates.success,
            extracted=predicted,
        )
    return Verdict(
        instance_id=instance.instance_id,
        turn_index=turn_index,
        kind=VerdictKind.WRONG_ANSWER,
        feedback_text=templates.output_mismatch.format(
            given_input=display_json(dict(instance.ground_truth_input)),
            predicted=display_json(predicted),
        ),
        extracted=predicted,
    )


_EXEC_TO_VERDICT = {
    ExecStatus.ARGUMENT_MISMATCH: VerdictKind.ARGUMENT_MISMATCH,
    ExecStatus.TIMEOUT: VerdictKind.TIMEOUT,
    ExecStatus.SIZE_LIMIT: VerdictKind.SIZE_LIMIT,
}


def verify_input_prediction(
    instance: PredictionInstance,
    sample: UnifiedSample,
    response: str,
    pool: ExecPool,
    policy: EqualityPolicy = EqualityPolicy(),
    templates: FeedbackTemplates = FeedbackTemplates(),
    turn_index: int = 0,
    limits: Optional[ExecLimits] = None,
) -> Verdict:
    assert instance.direction == Direction.PREDICT_INPUT
    try:
        predicted = extract_answer(response, Direction.PREDICT_INPUT)
    except AnswerFormatError:
        predicted = _MISSING
    if predicted is _MISSING or not isinstance(predicted, dict):
        return Verdict(
            instance_id=instance.instance_id,
            turn_index=turn_index,
            kind=VerdictKind.FORMAT_ERROR,
            feedback_text=templates.format_error.format(
                shape=ANSWER_SHAPES[Direction.PREDICT_INPUT]
            ),
        )

    result = pool.submit(
        ExecRequest(
            request_id=f"verify:{instance.instance_id}:{turn_index}",
            mode=ExecMode.RUN_ENTRYPOINT,
            reference_code=sample.reference_code,
            entrypoint_name=sample.entrypoint_name,
            args=predicted,
            limits=limits or ExecLimits(),
        )
    )
    pred_json = display_json(predicted)
    if result.ok:
        if compare_outputs(result.value, instance.ground_truth_output, policy):
            return Verdict(
                instance_id=instance.instance_id,
                turn_index=turn_index,
                kind=VerdictKind.CORRECT,
                feedback_text=templates.success,
                extracted=predicted,
                observed_output=None,
            )
        return Verdict(
            instance_id=instance.instance_id,
            turn_index=turn_index,
            kind=VerdictKind.WRONG_ANSWER,
            feedback_text=templates.input_mismatch.format(
                truth=display_json(instance.ground_truth_output),
                predicted=pred_json,
                observed=display_json(result.value),
            ),
            extracted=predicted,
            observed_output=result.value,
        )
    kind = _EXEC_TO_VERDICT.get(result.status, VerdictKind.RUNTIME_ERROR)
    if kind == VerdictKind.ARGUMENT_MISMATCH:
        feedback = templates.argument_mismatch.format(predicted=pred_json, error=result.error_message)
    elif kind == VerdictKind.TIMEOUT:
        feedback = templates.timeout.format(predicted=pred_json)
    elif kind == VerdictKind.SIZE_LIMIT:
        feedback = templates.size_limit.format(predicted=pred_json)
    else:
        feedback = templates.runtime_error.format(predicted=pred_json, error=result.error_message)
    return Verdict(
        instance_id=instance.instance_id,
        turn_index=turn_index,
        kind=kind,
        feedback_text=feedback,
        extracted=predicted,
    )


# ---------------------------------------------------------------------------
# Output-prediction benchmark scoring (problem-level all-or-nothing)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BenchmarkProblem:
    problem_id: str
    test_cases: Sequence[tuple[Any, Any]]  # (input, true output)
    languages: Sequence[str] = ("en",)


@dataclass(frozen=True)
class BenchmarkScore:
    per_problem: Mapping[str, int]
    accuracy: float


def score_output_benchmark(
    problems: Sequence[BenchmarkProblem],
    responses: Mapping[tuple[str, str, int], str],
    policy: EqualityPolicy = EqualityPolicy(),
) -> BenchmarkScore:
    """A problem scores 1 iff every case under every language verifies correct."""
    if not problems:
        raise EmptyInput("no problems to score")
    per_problem: dict[str, int] = {}
    for problem in problems:
        point = 1
        for language in problem.languages:
            for case_index, (_case_input, truth) in enumerate(problem.test_cases):
                key = (problem.problem_id, language, case_index)
                if key not in responses:
                    raise MissingResponse(f"missing response for {key}")
                try:
                    predicted = extract_answer(responses[key], Direction.PREDICT_OUTPUT)
                except AnswerFormatError:
                    point = 0
                    continue
                if not compare_outputs(predicted, truth, policy):
                    point = 0
        per_problem[problem.problem_id] = point
    accuracy = sum(per_problem.values()) / len(per_problem)
    return BenchmarkScore(per_problem=per_problem, accuracy=accuracy)
