"""Collects CoT responses and runs the feedback-driven revision loop.

A trace holds one response + verdict per turn. A correct verdict terminates
the trace; wrong traces get the verdict's feedback appended as a user turn
and one more completion, up to the configured turn cap. Stitching then
concatenates turns and check/feedback connectives into the single training
response used by the multi-turn dataset variant.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Mapping, Optional, Sequence

import yaml

from .errors import EmptyInput
from .execpool import ExecLimits, ExecPool
from .gateway import ChatTurn, Gateway, GatewayError
from .model import UnifiedSample
from .prompts import Direction, PredictionInstance
from .verify import (
    EqualityPolicy,
    FeedbackTemplates,
    Verdict,
    VerdictKind,
    verify_input_prediction,
    verify_output_prediction,
)

logger = logging.getLogger(__name__)

TRACES_SCHEMA = "codeio_traces_v1"
DEFAULT_MAX_TURNS = 2


@dataclass(frozen=True)
class StitchTemplates:
    """Connective strings for assembling multi-turn responses.

    The failure closer (still wrong after the last turn) ships as a default
    and is recorded in dataset metadata; override per corpus taste.
    """

    check_opener: str = "Let me check if I did it correctly ......"
    failure_bridge: str = "Oops! Something went wrong and I find this"
    retry_lead: str = "Well ......"
    success_closer: str = "Yes, that's correct! I made it!"
    failure_closer: str = "No, I still cannot get it right, so I will stop here."

    def __post_init__(self) -> None:
        for name in (
            "check_opener",
            "failure_bridge",
            "retry_lead",
            "success_closer",
            "failure_closer",
        ):
            if not getattr(self, name):
                raise ValueError(f"stitch template {name} must be non-empty")

    @classmethod
    def from_file(cls, path: str) -> "StitchTemplates":
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
        return cls(**data)

    def to_json_obj(self) -> dict:
        return {
            "check_opener": self.check_opener,
            "failure_bridge": self.failure_bridge,
            "retry_lead": self.retry_lead,
            "success_closer": self.success_closer,
            "failure_closer": self.failure_closer,
        }


@dataclass(frozen=True)
class TraceTurn:
    response: str
    verdict: Verdict


@dataclass(frozen=True)
class RevisionTrace:
    instance_id: str
    turns: tuple[TraceTurn, ...]

    def __post_init__(self) -> None:
        if not self.turns:
            raise ValueError("a trace holds at least one turn")

    @property
    def final_kind(self) -> VerdictKind:
        return self.turns[-1].verdict.kind

    @property
    def turn1_kind(self) -> VerdictKind:
        return self.turns[0].verdict.kind

    def to_json_obj(self) -> dict:
        return {
            "schema": TRACES_SCHEMA,
            "instance_id": self.instance_id,
            "turns": [
                {"response": t.response, "verdict": t.verdict.to_json_obj()} for t in self.turns
            ],
            "final_kind": self.final_kind.value,
        }

    @classmethod
    def from_json_obj(cls, obj: Mapping[str, Any]) -> "RevisionTrace":
        turns = tuple(
            TraceTurn(response=t["response"], verdict=Verdict.from_json_obj(t["verdict"]))
            for t in obj["turns"]
        )
        return cls(instance_id=obj["instance_id"], turns=turns)


class ResponseVerifier:
    """Direction-aware verification bound to the sample set and exec pool."""

    def __init__(
        self,
        samples: Mapping[str, UnifiedSample],
        pool: Optional[ExecPool],
        policy: EqualityPolicy = EqualityPolicy(),
        templates: FeedbackTemplates = FeedbackTemplates(),
        limits: Optional[ExecLimits] = None,
    ):
        self._samples = samples
        self._pool = pool
        self._policy = policy
        self._templates = templates
        self._limits = limits or ExecLimits()

    def verify(self, instance: PredictionInstance, response: str, turn_index: int) -> Verdict:
        if instance.direction == Direction.PREDICT_OUTPUT:
            return verify_output_prediction(
                instance, response, self._policy, self._templates, turn_index
            )
        if self._pool is None:
            raise ValueError("input-prediction verification needs an exec pool")
        sample = self._samples[instance.sample_id]
        return verify_input_prediction(
            instance,
            sample,
            response,
            self._pool,
            self._policy,
            self._templates,
            turn_index,
            self._limits,
        )


def _history_for(
    instance: PredictionInstance, turns: Sequence[TraceTurn], feedback_role: str
) -> list[ChatTurn]:
    history = [ChatTurn("user", instance.prompt)]
    for turn in turns:
        history.append(ChatTurn("assistant", turn.response))
        history.append(ChatTurn(feedback_role, turn.verdict.feedback_text))
    return history


def collect_turn1(
    instances: Sequence[PredictionInstance],
    gateway: Gateway,
    verifier: ResponseVerifier,
    workers: int = 1,
) -> list[RevisionTrace]:
    """One completion + verdict per instance.

    Transport failures drop the instance from the run (logged and counted);
    content failures become verdict kinds, never exceptions.
    """

    def one(instance: PredictionInstance) -> Optional[RevisionTrace]:
        try:
            reply = gateway.complete([ChatTurn("user", instance.prompt)])
        except GatewayError as exc:
            logger.warning("transport failure on %s: %s", instance.instance_id, exc)
            return None
        verdict = verifier.verify(instance, reply.content, turn_index=0)
        return RevisionTrace(
            instance_id=instance.instance_id,
            turns=(TraceTurn(response=reply.content, verdict=verdict),),
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            raw = list(executor.map(one, instances))
    else:
        raw = [one(inst) for inst in instances]
    traces = [t for t in raw if t is not None]
    failed = len(raw) - len(traces)
    if failed:
        logger.warning("%d instances dropped on transport failures", failed)
    return traces


def revise(
    traces: Sequence[RevisionTrace],
    instances: Mapping[str, PredictionInstance],
    gateway: Gateway,
    verifier: ResponseVerifier,
    max_turns: int = DEFAULT_MAX_TURNS,
    feedback_role: str = "user",
    workers: int = 1,
) -> list[RevisionTrace]:
    """Extend non-correct traces with feedback-driven regeneration turns.

    Correct traces pass through untouched; a correct verdict at any turn
    stops further requests for that trace.
    """

    def one(trace: RevisionTrace) -> RevisionTrace:
        instance = instances[trace.instance_id]
        turns = list(trace.turns)
        while len(turns) < max_turns and turns[-1].verdict.kind != VerdictKind.CORRECT:
            history = _history_for(instance, turns, feedback_role)
            try:
                reply = gateway.complete(history)
            except GatewayError as exc:
                logger.warning("transport failure revising %s: %s", trace.instance_id, exc)
                break
            verdict = verifier.verify(instance, reply.content, turn_index=len(turns))
            turns.append(TraceTurn(response=reply.content, verdict=verdict))
        if len(turns) == len(trace.turns):
            return trace
        return RevisionTrace(instance_id=trace.instance_id, turns=tuple(turns))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(one, traces))
    return [one(t) for t in traces]


def stitch(trace: RevisionTrace, templates: StitchTemplates = StitchTemplates()) -> str:
    """Concatenate turns and connectives into the final training response.

    Layout per turn: the response (revision turns open with the retry lead),
    then a check line — success closer when correct, the failure bridge plus
    the verdict feedback when another turn follows, or the failure closer
    when the trace ends still wrong.
    """
    pieces: list[str] = []
    last = len(trace.turns) - 1
    for index, turn in enumerate(trace.turns):
        if index == 0:
            pieces.append(turn.response)
        else:
            pieces.append(f"{templates.retry_lead} {turn.response}")
        if turn.verdict.kind == VerdictKind.CORRECT:
            pieces.append(f"{templates.check_opener} {templates.success_closer}")
        elif index < last:
            pieces.append(
                f"{templates.check_opener} {templates.failure_bridge}\n\n{turn.verdict.feedback_text}"
            )
        else:
            pieces.append(f"{templates.check_opener} {templates.failure_closer}")
    return "\n\n".join(pieces)


@dataclass(frozen=True)
class RevisionStats:
    n: int
    turn1_correct: int
    turn1_correct_ratio: float
    revised_ratio_per_turn: tuple[float, ...]
    corrected_per_turn: tuple[int, ...]
    entering_wrong_per_turn: tuple[int, ...]
    final_correct: int
    final_correct_ratio: float

    def to_json_obj(self) -> dict:
        return {
            "n": self.n,
            "turn1_correct": self.turn1_correct,
            "turn1_correct_ratio": self.turn1_correct_ratio,
            "revised_ratio_per_turn": list(self.revised_ratio_per_turn),
            "corrected_per_turn": list(self.corrected_per_turn),
            "entering_wrong_per_turn": list(self.entering_wrong_per_turn),
            "final_correct": self.final_correct,
            "final_correct_ratio": self.final_correct_ratio,
        }


def revision_stats(traces: Sequence[RevisionTrace]) -> RevisionStats:
    """Exact ratios over the trace set.

    revised_ratio_per_turn[k] is the fraction of traces still wrong after
    turn k+1 that the following revision turn corrected.
    """
    if not traces:
        raise EmptyInput("no traces")
    n = len(traces)
    turn1_correct = sum(1 for t in traces if t.turn1_kind == VerdictKind.CORRECT)
    max_turns = max(len(t.turns) for t in traces)
    corrected: list[int] = []
    entering: list[int] = []
    for k in range(max_turns - 1):
        entering_wrong = [
            t for t in traces if len(t.turns) > k and t.turns[k].verdict.kind != VerdictKind.CORRECT
        ]
        fixed = [
            t
            for t in entering_wrong
            if len(t.turns) > k + 1 and t.turns[k + 1].verdict.kind == VerdictKind.CORRECT
        ]
        entering.append(len(entering_wrong))
        corrected.append(len(fixed))
    final_correct = sum(1 for t in traces if t.final_kind == VerdictKind.CORRECT)
    return RevisionStats(
        n=n,
        turn1_correct=turn1_correct,
        turn1_correct_ratio=turn1_correct / n,
        revised_ratio_per_turn=tuple(
            (c / e) if e else 0.0 for c, e in zip(corrected, entering)
        ),
        corrected_per_turn=tuple(corrected),
        entering_wrong_per_turn=tuple(entering),
        final_correct=final_correct,
        final_correct_ratio=final_correct / n,
    )


def revision_stats_by_direction(
    traces: Sequence[RevisionTrace], instances: Mapping[str, PredictionInstance]
) -> dict[Direction, RevisionStats]:
    """Per-direction stat blocks; counts sum to the aggregate's."""
    buckets: dict[Direction, list[RevisionTrace]] = {}
    for trace in traces:
        direction = instances[trace.instance_id].direction
        buckets.setdefault(direction, []).append(trace)
    return {direction: revision_stats(group) for direction, group in buckets.items()}
