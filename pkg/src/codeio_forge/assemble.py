"""Emits final training records for each dataset variant, plus corpus stats.

Variants: the plain single-turn corpus (all turn-1 responses, right or
wrong), the stitched multi-turn corpus, rejection sampling (correct turn-1
only), wrong answers replaced by bare ground-truth JSON, and the
code-as-response layout (one record per sample).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

from .errors import EmptyInput, VariantUnsupported
from .model import SourceTag, UnifiedSample
from .prompts import Direction, FormatVariant, PredictionInstance, render_prompt
from .revise import RevisionTrace, StitchTemplates, stitch
from .serde import display_json
from .verify import VerdictKind

TRAIN_SCHEMA = "codeio_train_v1"


class RecordVariant(str, Enum):
    CODEIO = "codeio"
    CODEIOPP = "codeiopp"
    REJECT_SAMPLED = "reject_sampled"
    WRONG_TO_GT = "wrong_to_gt"
    QCODE = "qcode"


@dataclass(frozen=True)
class TrainingRecord:
    record_id: str
    sample_id: str
    prompt: str
    response: str
    variant: RecordVariant
    source_tag: SourceTag
    pair_index: Optional[int] = None
    direction: Optional[Direction] = None
    turn_count: int = 1
    final_kind: Optional[VerdictKind] = None
    turn1_kind: Optional[VerdictKind] = None

    def __post_init__(self) -> None:
        if not self.prompt or not self.response:
            raise ValueError("training records need a non-empty prompt and response")

    def to_json_obj(self) -> dict:
        return {
            "schema": TRAIN_SCHEMA,
            "record_id": self.record_id,
            "sample_id": self.sample_id,
            "pair_index": self.pair_index,
            "prompt": self.prompt,
            "response": self.response,
            "variant": self.variant.value,
            "direction": self.direction.value if self.direction else None,
            "source_tag": self.source_tag.value,
            "turn_count": self.turn_count,
            "final_kind": self.final_kind.value if self.final_kind else None,
            "turn1_kind": self.turn1_kind.value if self.turn1_kind else None,
        }

    @classmethod
    def from_json_obj(cls, obj: Mapping[str, Any]) -> "TrainingRecord":
        return cls(
            record_id=obj["record_id"],
            sample_id=obj["sample_id"],
            pair_index=obj.get("pair_index"),
            prompt=obj["prompt"],
            response=obj["response"],
            variant=RecordVariant(obj["variant"]),
            direction=Direction(obj["direction"]) if obj.get("direction") else None,
            source_tag=SourceTag(obj["source_tag"]),
            turn_count=int(obj.get("turn_count", 1)),
            final_kind=VerdictKind(obj["final_kind"]) if obj.get("final_kind") else None,
            turn1_kind=VerdictKind(obj["turn1_kind"]) if obj.get("turn1_kind") else None,
        )


def _bare_truth_response(instance: PredictionInstance) -> str:
    if instance.direction == Direction.PREDICT_OUTPUT:
        return display_json({"output": instance.ground_truth_output})
    return display_json({"input": dict(instance.ground_truth_input)})


def assemble(
    traces: Sequence[RevisionTrace],
    instances: Mapping[str, PredictionInstance],
    variant: RecordVariant,
    templates: StitchTemplates = StitchTemplates(),
    samples: Optional[Mapping[str, UnifiedSample]] = None,
) -> list[TrainingRecord]:
    """Build the training records for one dataset variant.

    All trace-backed variants keep one record per completed trace except
    rejection sampling, which keeps only correct turn-1 traces. The
    code-as-response variant ignores traces and emits one record per sample
    seen in the instance set (it needs the samples mapping for the code).
    """
    if variant == RecordVariant.QCODE:
        if samples is None:
            raise ValueError("q_code assembly needs the samples mapping")
        seen: list[str] = []
        for instance in instances.values():
            if instance.sample_id not in seen:
                seen.append(instance.sample_id)
        records = []
        for sample_id in seen:
            sample = samples[sample_id]
            records.append(
                TrainingRecord(
                    record_id=f"{sample_id}:qcode",
                    sample_id=sample_id,
                    prompt=render_prompt(sample, variant=FormatVariant.Q_CODE),
                    response=sample.reference_code,
                    variant=variant,
                    source_tag=sample.source_tag,
                    turn_count=0,
                )
            )
        return records

    records = []
    for trace in traces:
        instance = instances[trace.instance_id]
        source_tag = _source_tag_for(instance, samples)
        turn1 = trace.turns[0]
        if variant == RecordVariant.CODEIO:
            response: Optional[str] = turn1.response
            turn_count, final_kind = 1, trace.turn1_kind
        elif variant == RecordVariant.CODEIOPP:
            response = stitch(trace, templates)
            turn_count, final_kind = len(trace.turns), trace.final_kind
        elif variant == RecordVariant.REJECT_SAMPLED:
            response = turn1.response if trace.turn1_kind == VerdictKind.CORRECT else None
            turn_count, final_kind = 1, trace.turn1_kind
        elif variant == RecordVariant.WRONG_TO_GT:
            if trace.turn1_kind == VerdictKind.CORRECT:
                response = turn1.response
            else:
                response = _bare_truth_response(instance)
            turn_count, final_kind = 1, trace.turn1_kind
        else:
            raise VariantUnsupported(str(variant))
        if response is None:
            continue
        records.append(
            TrainingRecord(
                record_id=f"{trace.instance_id}#{variant.value}",
                sample_id=instance.sample_id,
                pair_index=instance.pair_index,
                prompt=instance.prompt,
                response=response,
                variant=variant,
                direction=instance.direction,
                source_tag=source_tag,
                turn_count=turn_count,
                final_kind=final_kind,
                turn1_kind=trace.turn1_kind,
            )
        )
    return records


def _source_tag_for(
    instance: PredictionInstance, samples: Optional[Mapping[str, UnifiedSample]]
) -> SourceTag:
    if samples and instance.sample_id in samples:
        return samples[instance.sample_id].source_tag
    return SourceTag.OTHER


@dataclass(frozen=True)
class CorpusStats:
    total: int
    counts_by_variant: Mapping[str, int]
    counts_by_direction: Mapping[str, int]
    counts_by_source: Mapping[str, int]
    direction_balance: float  # input-prediction share of direction-bearing records
    mean_pairs_per_sample: float
    turn1_correct_ratio: float

    def to_json_obj(self) -> dict:
        return {
            "total": self.total,
            "counts_by_variant": dict(self.counts_by_variant),
            "counts_by_direction": dict(self.counts_by_direction),
            "counts_by_source": dict(self.counts_by_source),
            "direction_balance": self.direction_balance,
            "mean_pairs_per_sample": self.mean_pairs_per_sample,
            "turn1_correct_ratio": self.turn1_correct_ratio,
        }


def corpus_stats(records: Sequence[TrainingRecord]) -> CorpusStats:
    if not records:
        raise EmptyInput("no records")
    by_variant: dict[str, int] = {}
    by_direction: dict[str, int] = {}
    by_source: dict[str, int] = {}
    pair_keys: set[tuple[str, int]] = set()
    sample_ids: set[str] = set()
    directed = 0
    input_directed = 0
    turn1_known = 0
    turn1_correct = 0
    for record in records:
        by_variant[record.variant.value] = by_variant.get(record.variant.value, 0) + 1
        by_source[record.source_tag.value] = by_source.get(record.source_tag.value, 0) + 1
        sample_ids.add(record.sample_id)
        if record.direction is not None:
            directed += 1
            by_direction[record.direction.value] = by_direction.get(record.direction.value, 0) + 1
            if record.direction == Direction.PREDICT_INPUT:
                input_directed += 1
        if record.pair_index is not None:
            pair_keys.add((record.sample_id, record.pair_index))
        if record.turn1_kind is not None:
            turn1_known += 1
            if record.turn1_kind == VerdictKind.CORRECT:
                turn1_correct += 1
    return CorpusStats(
        total=len(records),
        counts_by_variant=by_variant,
        counts_by_direction=by_direction,
        counts_by_source=by_source,
        direction_balance=(input_directed / directed) if directed else 0.0,
        mean_pairs_per_sample=(len(pair_keys) / len(sample_ids)) if sample_ids else 0.0,
        turn1_correct_ratio=(turn1_correct / turn1_known) if turn1_known else 0.0,
    )


def write_dataset(
    records: Sequence[TrainingRecord],
    directory: str | Path,
    shard_size: int = 100_000,
    metadata: Optional[Mapping[str, Any]] = None,
) -> list[Path]:
    """Write sharded JSONL plus a metadata sidecar; returns the shard paths.

    Shard contents are a pure function of the record sequence, so reruns on
    identical inputs produce byte-identical files.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    shards: list[Path] = []
    if shard_size < 1:
        raise ValueError("shard_size must be >= 1")
    total_shards = max(1, -(-len(records) // shard_size))
    for shard_index in range(total_shards):
        chunk = records[shard_index * shard_size : (shard_index + 1) * shard_size]
        path = directory / f"part-{shard_index:05d}.jsonl"
        with open(path, "w", encoding="utf-8") as fh:
            for record in chunk:
                fh.write(json.dumps(record.to_json_obj(), ensure_ascii=False))
                fh.write("\n")
        shards.append(path)
    sidecar = {
        "schema": TRAIN_SCHEMA,
        "record_count": len(records),
        "shards": [p.name for p in shards],
    }
    if metadata:
        sidecar.update(metadata)
    with open(directory / "metadata.json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, ensure_ascii=False, sort_keys=True, indent=2)
        fh.write("\n")
    return shards


def read_dataset(directory: str | Path) -> list[TrainingRecord]:
    directory = Path(directory)
    records: list[TrainingRecord] = []
    for path in sorted(directory.glob("part-*.jsonl")):
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    records.append(TrainingRecord.from_json_obj(json.loads(line)))
    return records
