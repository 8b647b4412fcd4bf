from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from codeio_forge.errors import EmptyInput, MissingResponse
from codeio_forge.execpool import ExecStatus, MockWorkerScript
from codeio_forge.prompts import Direction, FormatVariant, PredictionInstance
from codeio_forge.verify import (
    AnswerFormatError,
    BenchmarkProblem,
    EqualityPolicy,
    VerdictKind,
    compare_outputs,
    extract_answer,
    score_output_benchmark,
    verify_input_prediction,
    verify_output_prediction,
)

from conftest import SUBARRAY_REFERENCE_CODE, mock_pool


def make_instance(direction: Direction, truth_input: dict, truth_output) -> PredictionInstance:
    return PredictionInstance(
        instance_id=f"t:p0:{'in' if direction == Direction.PREDICT_INPUT else 'out'}",
        sample_id="t",
        pair_index=0,
        direction=direction,
        format_variant=FormatVariant.QCODE_COT,
        prompt="prompt",
        ground_truth_input=truth_input,
        ground_truth_output=truth_output,
    )


# ---------------------------------------------------------------------------
# extract_answer
# ---------------------------------------------------------------------------


def test_extract_fenced_final_answer():
    text = (
        "Reasoning first...\n```json\n"
        '{"input": {"target": 10, "numbers": [1, 3, 2, 2, 5, 1]}}\n'
        "```\nDone."
    )
    assert extract_answer(text, Direction.PREDICT_INPUT) == {
        "target": 10,
        "numbers": [1, 3, 2, 2, 5, 1],
    }


def test_extract_takes_last_candidate():
    text = 'Maybe {"output": 1}. On reflection, the answer is {"output": 2}.'
    assert extract_answer(text, Direction.PREDICT_OUTPUT) == 2


def test_extract_ignores_other_keys_and_nested_blocks():
    text = 'Scratch: {"result": 5} then final {"outer": {"output": 9}} and {"output": 3}'
    assert extract_answer(text, Direction.PREDICT_OUTPUT) == 3


def test_extract_no_json_raises():
    with pytest.raises(AnswerFormatError):
        extract_answer("no structured answer here", Direction.PREDICT_OUTPUT)
    with pytest.raises(AnswerFormatError):
        extract_answer('{"output": 1}', Direction.PREDICT_INPUT)


# ---------------------------------------------------------------------------
# compare_outputs
# ---------------------------------------------------------------------------


def test_numeric_cross_type_flag():
    on = EqualityPolicy()
    off = EqualityPolicy(numeric_cross_type=False)
    assert compare_outputs(1, 1.0, on)
    assert not compare_outputs(1, 1.0, off)
    assert compare_outputs(1.0, 1.0, off)


def test_bools_are_not_numbers():
    policy = EqualityPolicy()
    assert not compare_outputs(True, 1, policy)
    assert not compare_outputs(0, False, policy)
    assert compare_outputs(True, True, policy)


def test_list_order_significance():
    assert not compare_outputs([1, 2], [2, 1], EqualityPolicy())
    assert compare_outputs([1, 2], [2, 1], EqualityPolicy(list_order_significant=False))
    assert not compare_outputs([1, 1], [1, 2], EqualityPolicy(list_order_significant=False))


def test_relative_tolerance():
    strict = EqualityPolicy()
    loose = EqualityPolicy(rel_tol=1e-6)
    assert not compare_outputs({"speeds": [0.5]}, {"speeds": [0.5000001]}, strict)
    assert compare_outputs({"speeds": [0.5]}, {"speeds": [0.5000001]}, loose)


def test_type_mismatches_unequal():
    policy = EqualityPolicy()
    assert not compare_outputs("1", 1, policy)
    assert not compare_outputs([1], {"0": 1}, policy)
    assert not compare_outputs(None, 0, policy)
    assert compare_outputs(None, None, policy)


json_values = st.recursive(
    st.none()
    | st.booleans()
    | st.integers(-1000, 1000)
    | st.floats(allow_nan=False, allow_infinity=False, width=32)
    | st.text(max_size=8),
    lambda children: st.lists(children, max_size=4)
    | st.dictionaries(st.text(max_size=4), children, max_size=4),
    max_leaves=12,
)

policies = st.builds(
    EqualityPolicy,
    numeric_cross_type=st.booleans(),
    abs_tol=st.sampled_from([0.0, 1e-9, 0.01]),
    rel_tol=st.sampled_from([0.0, 1e-6]),
    list_order_significant=st.booleans(),
)


@settings(max_examples=120, deadline=None)
@given(value=json_values, policy=policies)
def test_compare_reflexive(value, policy):
    assert compare_outputs(value, value, policy)


@settings(max_examples=120, deadline=None)
@given(a=json_values, b=json_values, policy=policies)
def test_compare_symmetric(a, b, policy):
    assert compare_outputs(a, b, policy) == compare_outputs(b, a, policy)


# ---------------------------------------------------------------------------
# verify_output_prediction
# ---------------------------------------------------------------------------


def test_output_correct_gets_success_feedback():
    instance = make_instance(Direction.PREDICT_OUTPUT, {"x": 5, "y": 6, "z": 7}, True)
    verdict = verify_output_prediction(instance, 'So: {"output": true}')
    assert verdict.kind == VerdictKind.CORRECT
    assert verdict.feedback_text == "Success"


def test_output_wrong_feedback_embeds_values():
    instance = make_instance(Direction.PREDICT_OUTPUT, {"n": 3}, 6)
    verdict = verify_output_prediction(instance, '{"output": 5}')
    assert verdict.kind == VerdictKind.WRONG_ANSWER
    assert verdict.feedback_text == (
        '[Mismatch] Your output is not correct! Given the input {"n": 3}, '
        "your predicted output is 5 which is wrong!"
    )


def test_output_format_error_names_shape():
    instance = make_instance(Direction.PREDICT_OUTPUT, {"n": 3}, 6)
    verdict = verify_output_prediction(instance, "I cannot answer")
    assert verdict.kind == VerdictKind.FORMAT_ERROR
    assert '{"output": <your output>}' in verdict.feedback_text


def _complete_staircase_rows(n: int) -> int:
    # Brute force: largest k whose full staircase k*(k+1)/2 still fits in n coins.
    k = 0
    while (k + 1) * (k + 2) // 2 <= n:
        k += 1
    return k


def test_staircase_output_prediction():
    # n coins build rows of 1, 2, 3, ... coins; answer = complete rows.
    assert _complete_staircase_rows(5) == 2
    instance = make_instance(Direction.PREDICT_OUTPUT, {"n": 5}, _complete_staircase_rows(5))
    verdict = verify_output_prediction(
        instance, 'Rows 1 and 2 use 3 coins, row 3 needs 3 more but only 2 remain.\n{"output": 2}'
    )
    assert verdict.kind == VerdictKind.CORRECT
    for n, expected in [(0, 0), (1, 1), (2, 1), (3, 2), (6, 3), (7, 3), (10, 4)]:
        instance = make_instance(Direction.PREDICT_OUTPUT, {"n": n}, _complete_staircase_rows(n))
        assert (
            verify_output_prediction(instance, f'{{"output": {_complete_staircase_rows(n)}}}').kind
            == VerdictKind.CORRECT
        )


# ---------------------------------------------------------------------------
# verify_input_prediction against the subarray fixture (golden two-turn flow)
# ---------------------------------------------------------------------------

SUB_ENTRY = "main_solution"


def subarray_pool_script() -> MockWorkerScript:
    script = MockWorkerScript()
    script.add_run(
        SUBARRAY_REFERENCE_CODE, SUB_ENTRY, {"target": 10, "numbers": [1, 2, 3, 4, 5]}, value=3
    )
    script.add_run(
        SUBARRAY_REFERENCE_CODE, SUB_ENTRY, {"target": 10, "numbers": [1, 3, 2, 2, 5, 1]}, value=4
    )
    script.add_run(
        SUBARRAY_REFERENCE_CODE, SUB_ENTRY, {"target": 1, "numbers": [1]},
        status=ExecStatus.ARGUMENT_MISMATCH.value, error_message="unexpected keyword",
    )
    return script


def subarray_instance() -> PredictionInstance:
    return make_instance(
        Direction.PREDICT_INPUT, {"target": 10, "numbers": [2, 3, 1, 2, 4, 3]}, 4
    )


def test_input_wrong_answer_carries_observed_output(subarray_sample):
    instance = subarray_instance()
    with mock_pool(subarray_pool_script()) as pool:
        verdict = verify_input_prediction(
            instance, subarray_sample,
            'Answer: {"input": {"target": 10, "numbers": [1, 2, 3, 4, 5]}}', pool,
        )
    assert verdict.kind == VerdictKind.WRONG_ANSWER
    assert verdict.observed_output == 3
    assert verdict.feedback_text == (
        "[Mismatch] Your input is not feasible! Given the output 4, your predicted "
        'input is {"target": 10, "numbers": [1, 2, 3, 4, 5]}, which actually gets '
        "a wrong output as 3"
    )


def test_input_any_feasible_input_accepted(subarray_sample):
    # Not the originally sampled input; accepted because it executes to 4.
    instance = subarray_instance()
    with mock_pool(subarray_pool_script()) as pool:
        verdict = verify_input_prediction(
            instance, subarray_sample,
            '{"input": {"target": 10, "numbers": [1, 3, 2, 2, 5, 1]}}', pool,
        )
    assert verdict.kind == VerdictKind.CORRECT
    assert verdict.feedback_text == "Success"


def test_input_argument_mismatch(subarray_sample):
    instance = subarray_instance()
    with mock_pool(subarray_pool_script()) as pool:
        verdict = verify_input_prediction(
            instance, subarray_sample, '{"input": {"target": 1, "numbers": [1]}}', pool
        )
    assert verdict.kind == VerdictKind.ARGUMENT_MISMATCH


def test_input_non_dict_is_format_error(subarray_sample):
    instance = subarray_instance()
    with mock_pool(subarray_pool_script()) as pool:
        verdict = verify_input_prediction(instance, subarray_sample, '{"input": 4}', pool)
    assert verdict.kind == VerdictKind.FORMAT_ERROR


# ---------------------------------------------------------------------------
# Benchmark scoring
# ---------------------------------------------------------------------------


def _responses_for(problems, answers):
    responses = {}
    for problem in problems:
        for language in problem.languages:
            for idx in range(len(problem.test_cases)):
                value = answers[(problem.problem_id, language, idx)]
                responses[(problem.problem_id, language, idx)] = f'{{"output": {value}}}'
    return responses


def test_all_correct_scores_one():
    problem = BenchmarkProblem("p1", [({"n": 5}, 2), ({"n": 10}, 4)], languages=["en", "zh"])
    answers = {("p1", lang, i): [2, 4][i] for lang in ("en", "zh") for i in range(2)}
    score = score_output_benchmark([problem], _responses_for([problem], answers))
    assert score.per_problem["p1"] == 1
    assert score.accuracy == 1.0


def test_three_of_four_correct_scores_zero():
    problem = BenchmarkProblem("p1", [({"n": 5}, 2), ({"n": 10}, 4)], languages=["en", "zh"])
    answers = {("p1", lang, i): [2, 4][i] for lang in ("en", "zh") for i in range(2)}
    answers[("p1", "zh", 1)] = 999
    score = score_output_benchmark([problem], _responses_for([problem], answers))
    assert score.per_problem["p1"] == 0
    assert score.accuracy == 0.0


def test_missing_response_raises():
    problem = BenchmarkProblem("p1", [({"n": 5}, 2)])
    with pytest.raises(MissingResponse):
        score_output_benchmark([problem], {})


def test_empty_problem_list_raises():
    with pytest.raises(EmptyInput):
        score_output_benchmark([], {})
