from __future__ import annotations

import pytest

from codeio_forge.errors import EmptyInput
from codeio_forge.gateway import ScriptedGateway, assistant, history_key, user
from codeio_forge.prompts import Direction, FormatVariant, PredictionInstance, render_prompt
from codeio_forge.revise import (
    ResponseVerifier,
    RevisionTrace,
    StitchTemplates,
    TraceTurn,
    collect_turn1,
    revise,
    revision_stats,
    revision_stats_by_direction,
    stitch,
)
from codeio_forge.sampler import IOPair
from codeio_forge.verify import Verdict, VerdictKind

from conftest import GOLDEN_DIR, DATA_DIR, mock_pool, read_fixture_text
from test_verify import subarray_pool_script


def verdict(kind: VerdictKind, feedback: str, turn_index: int = 0) -> Verdict:
    return Verdict(instance_id="i", turn_index=turn_index, kind=kind, feedback_text=feedback)


def trace_of(*turns: TraceTurn) -> RevisionTrace:
    return RevisionTrace(instance_id="i", turns=tuple(turns))


# ---------------------------------------------------------------------------
# stitch golden files
# ---------------------------------------------------------------------------


def test_stitch_single_turn_correct_golden():
    turn = TraceTurn(
        response=(
            "The function doubles its argument, so for `n = 3` the result is `6`.\n\n"
            '```json\n{"output": 6}\n```'
        ),
        verdict=verdict(VerdictKind.CORRECT, "Success"),
    )
    assert stitch(trace_of(turn)) == read_fixture_text(GOLDEN_DIR / "single_turn_correct.txt")


def test_stitch_two_turn_still_wrong_golden():
    turn1 = TraceTurn(
        response=(
            "The function looks like it adds two to its argument, so for `n = 3` I get `5`.\n\n"
            '```json\n{"output": 5}\n```'
        ),
        verdict=verdict(
            VerdictKind.WRONG_ANSWER,
            '[Mismatch] Your output is not correct! Given the input {"n": 3}, '
            "your predicted output is 5 which is wrong!",
        ),
    )
    turn2 = TraceTurn(
        response=(
            "Maybe it adds four instead, so for `n = 3` the result would be `7`.\n\n"
            '```json\n{"output": 7}\n```'
        ),
        verdict=verdict(VerdictKind.WRONG_ANSWER, "irrelevant for final turns", 1),
    )
    assert stitch(trace_of(turn1, turn2)) == read_fixture_text(
        GOLDEN_DIR / "two_turn_still_wrong.txt"
    )


def test_stitch_is_injective_on_distinct_feedback():
    base = TraceTurn("resp", verdict(VerdictKind.WRONG_ANSWER, "feedback A"))
    other = TraceTurn("resp", verdict(VerdictKind.WRONG_ANSWER, "feedback B"))
    tail = TraceTurn("fixed", verdict(VerdictKind.CORRECT, "Success", 1))
    assert stitch(trace_of(base, tail)) != stitch(trace_of(other, tail))


def test_templates_must_be_non_empty():
    with pytest.raises(ValueError):
        StitchTemplates(check_opener="")


def test_templates_from_yaml(tmp_path):
    path = tmp_path / "templates.yaml"
    path.write_text("success_closer: Nailed it!\n", encoding="utf-8")
    templates = StitchTemplates.from_file(str(path))
    assert templates.success_closer == "Nailed it!"
    assert templates.check_opener == "Let me check if I did it correctly ......"


# ---------------------------------------------------------------------------
# Golden two-turn flow end to end: scripted turns through verify + revise + stitch
# ---------------------------------------------------------------------------


def test_golden_two_turn_flow(subarray_sample):
    pair = IOPair(
        sample_id="subarray", pair_index=0,
        input={"target": 10, "numbers": [2, 3, 1, 2, 4, 3]}, output=4, generator_seed=0,
    )
    instance = PredictionInstance(
        instance_id="subarray:p0:in",
        sample_id="subarray",
        pair_index=0,
        direction=Direction.PREDICT_INPUT,
        format_variant=FormatVariant.Q_COT,
        prompt=render_prompt(subarray_sample, pair, Direction.PREDICT_INPUT, FormatVariant.Q_COT),
        ground_truth_input=dict(pair.input),
        ground_truth_output=4,
    )
    turn1_text = read_fixture_text(DATA_DIR / "subarray_turn1.txt")
    turn2_text = read_fixture_text(DATA_DIR / "subarray_turn2.txt")

    expected_feedback = (
        "[Mismatch] Your input is not feasible! Given the output 4, your predicted "
        'input is {"target": 10, "numbers": [1, 2, 3, 4, 5]}, which actually gets '
        "a wrong output as 3"
    )
    gateway = ScriptedGateway(
        {
            history_key([user(instance.prompt)]): turn1_text,
            history_key(
                [user(instance.prompt), assistant(turn1_text), user(expected_feedback)]
            ): turn2_text,
        }
    )
    with mock_pool(subarray_pool_script()) as pool:
        verifier = ResponseVerifier({"subarray": subarray_sample}, pool)
        traces = collect_turn1([instance], gateway, verifier)
        assert traces[0].turns[0].verdict.kind == VerdictKind.WRONG_ANSWER
        assert traces[0].turns[0].verdict.feedback_text == expected_feedback
        revised = revise(traces, {instance.instance_id: instance}, gateway, verifier)

    trace = revised[0]
    assert len(trace.turns) == 2
    assert trace.final_kind == VerdictKind.CORRECT
    stitched = stitch(trace)
    assert stitched == read_fixture_text(GOLDEN_DIR / "subarray_stitched.txt")


def test_correct_turn1_issues_no_second_request(subarray_sample, jug_sample):
    pair = IOPair(sample_id="jug", pair_index=0, input={"x": 5, "y": 6, "z": 7}, output=True,
                  generator_seed=0)
    instance = PredictionInstance(
        instance_id="jug:p0:out", sample_id="jug", pair_index=0,
        direction=Direction.PREDICT_OUTPUT, format_variant=FormatVariant.QCODE_COT,
        prompt=render_prompt(jug_sample, pair, Direction.PREDICT_OUTPUT),
        ground_truth_input=dict(pair.input), ground_truth_output=True,
    )
    gateway = ScriptedGateway({history_key([user(instance.prompt)]): '{"output": true}'})
    verifier = ResponseVerifier({"jug": jug_sample}, pool=None)
    traces = collect_turn1([instance], gateway, verifier)
    assert traces[0].final_kind == VerdictKind.CORRECT
    revised = revise(traces, {instance.instance_id: instance}, gateway, verifier)
    assert revised[0] is traces[0]
    assert len(gateway.calls) == 1  # termination: no turn-2 request


def test_collect_turn1_empty():
    verifier = ResponseVerifier({}, pool=None)
    assert collect_turn1([], ScriptedGateway({}), verifier) == []


def test_transport_failure_drops_instance(jug_sample):
    pair = IOPair(sample_id="jug", pair_index=0, input={"x": 1, "y": 1, "z": 1}, output=True,
                  generator_seed=0)
    instance = PredictionInstance(
        instance_id="jug:p0:out", sample_id="jug", pair_index=0,
        direction=Direction.PREDICT_OUTPUT, format_variant=FormatVariant.QCODE_COT,
        prompt=render_prompt(jug_sample, pair, Direction.PREDICT_OUTPUT),
        ground_truth_input=dict(pair.input), ground_truth_output=True,
    )
    traces = collect_turn1([instance], ScriptedGateway({}), ResponseVerifier({}, None))
    assert traces == []


def test_third_turn_attempted_when_max_turns_three(jug_sample):
    pair = IOPair(sample_id="jug", pair_index=0, input={"x": 5, "y": 6, "z": 7}, output=True,
                  generator_seed=0)
    instance = PredictionInstance(
        instance_id="jug:p0:out", sample_id="jug", pair_index=0,
        direction=Direction.PREDICT_OUTPUT, format_variant=FormatVariant.QCODE_COT,
        prompt=render_prompt(jug_sample, pair, Direction.PREDICT_OUTPUT),
        ground_truth_input=dict(pair.input), ground_truth_output=True,
    )
    wrong = '{"output": false}'
    feedback = (
        '[Mismatch] Your output is not correct! Given the input {"x": 5, "y": 6, "z": 7}, '
        "your predicted output is false which is wrong!"
    )
    h1 = [user(instance.prompt)]
    h2 = h1 + [assistant(wrong), user(feedback)]
    h3 = h2 + [assistant(wrong), user(feedback)]
    gateway = ScriptedGateway(
        {history_key(h1): wrong, history_key(h2): wrong, history_key(h3): wrong}
    )
    verifier = ResponseVerifier({"jug": jug_sample}, pool=None)
    traces = collect_turn1([instance], gateway, verifier)
    revised = revise(traces, {instance.instance_id: instance}, gateway, verifier, max_turns=3)
    assert len(revised[0].turns) == 3
    assert len(gateway.calls) == 3


# ---------------------------------------------------------------------------
# revision_stats
# ---------------------------------------------------------------------------


def synthetic_trace(instance_id: str, kinds: list[VerdictKind]) -> RevisionTrace:
    turns = tuple(
        TraceTurn(
            response=f"resp{i}",
            verdict=Verdict(
                instance_id=instance_id, turn_index=i, kind=kind,
                feedback_text="Success" if kind == VerdictKind.CORRECT else "nope",
            ),
        )
        for i, kind in enumerate(kinds)
    )
    return RevisionTrace(instance_id=instance_id, turns=turns)


def test_revision_stats_example():
    traces = []
    for i in range(5):
        traces.append(synthetic_trace(f"ok{i}", [VerdictKind.CORRECT]))
    traces.append(synthetic_trace("fixed", [VerdictKind.WRONG_ANSWER, VerdictKind.CORRECT]))
    for i in range(4):
        traces.append(
            synthetic_trace(f"still{i}", [VerdictKind.WRONG_ANSWER, VerdictKind.WRONG_ANSWER])
        )
    stats = revision_stats(traces)
    assert stats.n == 10
    assert stats.turn1_correct_ratio == 0.5
    assert stats.revised_ratio_per_turn == (0.2,)
    assert stats.final_correct_ratio == 0.6


def test_revision_stats_all_correct_turn1():
    traces = [synthetic_trace(f"t{i}", [VerdictKind.CORRECT]) for i in range(3)]
    stats = revision_stats(traces)
    assert stats.turn1_correct_ratio == 1.0
    assert stats.revised_ratio_per_turn == ()
    assert stats.final_correct_ratio == 1.0


def test_revision_stats_empty_input():
    with pytest.raises(EmptyInput):
        revision_stats([])


def test_revision_stats_by_direction_sums_to_aggregate():
    def inst(instance_id: str, direction: Direction) -> PredictionInstance:
        return PredictionInstance(
            instance_id=instance_id, sample_id="s", pair_index=0, direction=direction,
            format_variant=FormatVariant.QCODE_COT, prompt=f"p {instance_id}",
            ground_truth_input={"n": 1}, ground_truth_output=1,
        )

    traces = [
        synthetic_trace("a", [VerdictKind.CORRECT]),
        synthetic_trace("b", [VerdictKind.WRONG_ANSWER, VerdictKind.CORRECT]),
        synthetic_trace("c", [VerdictKind.WRONG_ANSWER, VerdictKind.WRONG_ANSWER]),
        synthetic_trace("d", [VerdictKind.FORMAT_ERROR, VerdictKind.CORRECT]),
    ]
    instances = {
        "a": inst("a", Direction.PREDICT_INPUT),
        "b": inst("b", Direction.PREDICT_INPUT),
        "c": inst("c", Direction.PREDICT_OUTPUT),
        "d": inst("d", Direction.PREDICT_OUTPUT),
    }
    per_direction = revision_stats_by_direction(traces, instances)
    aggregate = revision_stats(traces)
    assert sum(s.n for s in per_direction.values()) == aggregate.n
    assert sum(s.turn1_correct for s in per_direction.values()) == aggregate.turn1_correct
    assert (
        sum(s.final_correct for s in per_direction.values()) == aggregate.final_correct
    )
