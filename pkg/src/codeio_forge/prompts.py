"""Renders prediction prompts and builds prediction instances from I/O pairs.

The prompt template lives in assets/prediction_prompt_v1.json as named
slots; rendering assembles the slots in a fixed order so tests can assert
ordering without pinning full text everywhere. Embedded values use
canonical JSON so identical inputs always produce byte-identical prompts.
"""

from __future__ import annotations

import importlib.resources
import json
from dataclasses import dataclass
from enum import Enum
from typing import Any, Iterable, Mapping, Optional

from .errors import VariantMismatch
from .model import UnifiedSample
from .sampler import IOPair
from .serde import canonical_json, sha256_hex

INSTANCES_SCHEMA = "codeio_instances_v1"

PROMPT_TEMPLATE_ASSET = "prediction_prompt_v1.json"


class Direction(str, Enum):
    PREDICT_INPUT = "input"
    PREDICT_OUTPUT = "output"


class FormatVariant(str, Enum):
    """Prompt/response layout axis: what sits in the prompt vs the response."""

    QCODE_COT = "qcode_cot"  # query + code in prompt, CoT response (default)
    Q_COT = "q_cot"  # query only in prompt, CoT response
    CODE_COT = "code_cot"  # code only in prompt, CoT response
    Q_CODECOT = "q_codecot"  # query in prompt, code + CoT as response
    Q_CODE = "q_code"  # query in prompt, bare code as response


_VARIANTS_WITH_QUERY = {
    FormatVariant.QCODE_COT,
    FormatVariant.Q_COT,
    FormatVariant.Q_CODECOT,
    FormatVariant.Q_CODE,
}
_VARIANTS_WITH_CODE_IN_PROMPT = {FormatVariant.QCODE_COT, FormatVariant.CODE_COT}


class DirectionPolicy(str, Enum):
    BOTH_50_50 = "both"
    INPUT_ONLY = "input-only"
    OUTPUT_ONLY = "output-only"


def _load_template() -> dict:
    data = importlib.resources.files("codeio_forge").joinpath("assets", PROMPT_TEMPLATE_ASSET)
    return json.loads(data.read_text(encoding="utf-8"))


TEMPLATE: dict = _load_template()


def template_hash() -> str:
    """Hash of the template asset, recorded in run manifests for provenance."""
    return sha256_hex(json.dumps(TEMPLATE, sort_keys=True))


@dataclass(frozen=True)
class PredictionInstance:
    instance_id: str
    sample_id: str
    pair_index: int
    direction: Direction
    format_variant: FormatVariant
    prompt: str
    ground_truth_input: Mapping[str, Any]
    ground_truth_output: Any

    def to_json_obj(self) -> dict:
        return {
            "schema": INSTANCES_SCHEMA,
            "instance_id": self.instance_id,
            "sample_id": self.sample_id,
            "pair_index": self.pair_index,
            "direction": self.direction.value,
            "format_variant": self.format_variant.value,
            "prompt": self.prompt,
            "ground_truth_input": dict(self.ground_truth_input),
            "ground_truth_output": self.ground_truth_output,
        }

    @classmethod
    def from_json_obj(cls, obj: Mapping[str, Any]) -> "PredictionInstance":
        return cls(
            instance_id=obj["instance_id"],
            sample_id=obj["sample_id"],
            pair_index=int(obj["pair_index"]),
            direction=Direction(obj["direction"]),
            format_variant=FormatVariant(obj["format_variant"]),
            prompt=obj["prompt"],
            ground_truth_input=obj["ground_truth_input"],
            ground_truth_output=obj["ground_truth_output"],
        )


def render_prompt(
    sample: UnifiedSample,
    pair: Optional[IOPair] = None,
    direction: Optional[Direction] = None,
    variant: FormatVariant = FormatVariant.QCODE_COT,
) -> str:
    """Assemble the prediction prompt for one pair and direction.

    Segment order: preamble + query (variants with Q), the requirements
    header + io description, the shown value ("Given the following
    output/input:"), the direction-specific final-answer instruction, and
    (variants with code in the prompt) the tip line + reference code.

    The q_code variant is a per-sample code-as-response layout: it takes no
    pair or direction and renders only the query and requirements.
    """
    if variant == FormatVariant.Q_CODE:
        if pair is not None or direction is not None:
            raise VariantMismatch("q_code prompts are per-sample; pair/direction do not apply")
    else:
        if pair is None or direction is None:
            raise VariantMismatch(f"variant {variant.value} needs a pair and a direction")

    segments: list[str] = []
    if variant in _VARIANTS_WITH_QUERY:
        segments.append(TEMPLATE["preamble"])
        segments.append(sample.query.strip())
    segments.append(TEMPLATE["io_header"])
    segments.append(sample.io_description.strip("\n"))

    if variant != FormatVariant.Q_CODE:
        assert pair is not None and direction is not None
        if direction == Direction.PREDICT_INPUT:
            segments.append(TEMPLATE["given_output_header"])
            segments.append(canonical_json(pair.output))
            segments.append(TEMPLATE["ask_input"])
        else:
            segments.append(TEMPLATE["given_input_header"])
            segments.append(canonical_json(dict(pair.input)))
            segments.append(TEMPLATE["ask_output"])

    if variant in _VARIANTS_WITH_CODE_IN_PROMPT:
        segments.append(TEMPLATE["tip"])
        segments.append(sample.reference_code.strip("\n"))

    return "\n\n".join(segments)


def instance_id_for(sample_id: str, pair_index: int, direction: Direction) -> str:
    suffix = "in" if direction == Direction.PREDICT_INPUT else "out"
    return f"{sample_id}:p{pair_index}:{suffix}"


def build_instances(
    samples: Mapping[str, UnifiedSample],
    pairs: Iterable[IOPair],
    direction_policy: DirectionPolicy = DirectionPolicy.BOTH_50_50,
    variant: FormatVariant = FormatVariant.QCODE_COT,
) -> list[PredictionInstance]:
    """One instance per (pair, direction); both directions under the 50/50 policy."""
    if variant == FormatVariant.Q_CODE:
        raise VariantMismatch(
            "q_code records are assembled one per sample by the dataset assembler"
        )
    if direction_policy == DirectionPolicy.BOTH_50_50:
        directions = (Direction.PREDICT_INPUT, Direction.PREDICT_OUTPUT)
    elif direction_policy == DirectionPolicy.INPUT_ONLY:
        directions = (Direction.PREDICT_INPUT,)
    else:
        directions = (Direction.PREDICT_OUTPUT,)

    instances: list[PredictionInstance] = []
    for pair in pairs:
        sample = samples[pair.sample_id]
        for direction in directions:
            instances.append(
                PredictionInstance(
                    instance_id=instance_id_for(pair.sample_id, pair.pair_index, direction),
                    sample_id=pair.sample_id,
                    pair_index=pair.pair_index,
                    direction=direction,
                    format_variant=variant,
                    prompt=render_prompt(sample, pair, direction, variant),
                    ground_truth_input=dict(pair.input),
                    ground_truth_output=pair.output,
                )
            )
    return instances
