"""Shared fixtures: canonical samples, the 12-sample fixture corpus, and
scriptable gateway/pool scaffolding for fully offline pipeline runs."""

from __future__ import annotations

import textwrap
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import pytest

from codeio_forge.execpool import ExecPool, MockWorkerScript, PoolConfig
from codeio_forge.gateway import ChatTurn, Gateway, assistant, history_key
from codeio_forge.model import SourceTag, UnifiedSample
from codeio_forge.prompts import Direction, PredictionInstance
from codeio_forge.sampler import QuotaPolicy, derive_seed
from codeio_forge.serde import display_json

DATA_DIR = Path(__file__).parent / "data"
GOLDEN_DIR = Path(__file__).parent / "golden"


def read_fixture_text(path: Path) -> str:
    """File content with exactly one trailing newline stripped."""
    text = path.read_text(encoding="utf-8")
    return text[:-1] if text.endswith("\n") else text


# ---------------------------------------------------------------------------
# Canonical samples
# ---------------------------------------------------------------------------

JUG_REFERENCE_CODE = textwrap.dedent(
    '''\
    # import necessary packages
    import random

    # main function
    def main_solution(x, y, z):
        """
        Determines if it is possible to measure exactly z liters using two jugs with capacities x and y liters.

        :param x: int, capacity of the first jug in liters
        :param y: int, capacity of the second jug in liters
        :param z: int, the desired amount of water to measure in liters
        :return: bool, True if it is possible to measure exactly z liters, False otherwise
        """
        if z == 0:
            return True
        if x + y < z:
            return False
        if x > y:
            x, y = y, x
        if x == 0:
            return y == z
        while y % x != 0:
            y, x = x, y % x
        return z % x == 0
    '''
)

JUG_IO_DESCRIPTION = textwrap.dedent(
    """\
    Input:
        `x` (int): The capacity of the first jug in liters.
        `y` (int): The capacity of the second jug in liters.
        `z` (int): The desired amount of water to measure in liters.

    Output:
        `return` (bool): True if it is possible to measure exactly z liters using the two jugs, False otherwise."""
)

JUG_QUERY = (
    "Given two jugs with capacities of `x` and `y` liters, is it possible to measure "
    "exactly `z` liters of water using these two jugs? What is the result of this "
    "measurement attempt?"
)

JUG_GENERATOR_CODE = textwrap.dedent(
    """\
    def input_generator():
        import random
        return {
            "x": random.randint(0, 8),
            "y": random.randint(0, 8),
            "z": random.randint(0, 10),
        }
    """
)


@pytest.fixture(scope="session")
def jug_sample() -> UnifiedSample:
    return UnifiedSample(
        id="jug",
        source_tag=SourceTag.OTHER,
        reference_code=JUG_REFERENCE_CODE,
        io_description=JUG_IO_DESCRIPTION,
        generator_code=JUG_GENERATOR_CODE,
        query=JUG_QUERY,
    )


SUBARRAY_REFERENCE_CODE = textwrap.dedent(
    """\
    def main_solution(target, numbers):
        best = len(numbers) + 1
        window_sum = 0
        left = 0
        for right, value in enumerate(numbers):
            window_sum += value
            while window_sum >= target:
                best = min(best, right - left + 1)
                window_sum -= numbers[left]
                left += 1
        return 0 if best == len(numbers) + 1 else best
    """
)

SUBARRAY_IO_DESCRIPTION = textwrap.dedent(
    """\
    Input:
        - `target` (int): The target sum that the subarray should at least reach.
        - `numbers` (list of int): A list of integers representing the array from which the subarray is to be found.

    Output:
        - `return` (int): The length of the shortest contiguous subarray whose sum is at least the target. Returns 0 if no such subarray exists."""
)

SUBARRAY_QUERY = (
    "Given a list of integers `numbers` and an integer `target`, determine the length "
    "of the shortest contiguous subarray whose sum is at least `target`. If no such "
    "subarray exists, return 0. How can you find this shortest subarray length "
    "efficiently?"
)

SUBARRAY_GENERATOR_CODE = textwrap.dedent(
    """\
    def input_generator():
        import random
        n = random.randint(1, 12)
        return {
            "target": random.randint(1, 40),
            "numbers": [random.randint(1, 9) for _ in range(n)],
        }
    """
)


@pytest.fixture(scope="session")
def subarray_sample() -> UnifiedSample:
    return UnifiedSample(
        id="subarray",
        source_tag=SourceTag.CODEMIX,
        reference_code=SUBARRAY_REFERENCE_CODE,
        io_description=SUBARRAY_IO_DESCRIPTION,
        generator_code=SUBARRAY_GENERATOR_CODE,
        query=SUBARRAY_QUERY,
    )


ACCEL_REFERENCE_CODE = textwrap.dedent(
    """\
    # import necessary packages
    import numpy as np

    # main function
    def main_solution(acceleration, time, initial_speed, initial_displacement):
        # Convert inputs to numpy arrays if they are not already
        acceleration = np.array(acceleration)
        time = np.array(time)

        # Initialize variables
        current_speed = initial_speed
        current_disp = initial_displacement

        # Calculate speed and displacement
        speeds = []
        displacements = []

        for i in range(1, len(time)):
            delta_t = time[i] - time[i-1]
            curr_acc = acceleration[i]
            current_speed = current_speed + curr_acc * delta_t
            speeds.append(current_speed)

            current_disp = current_disp + (initial_speed + current_speed) / 2 * delta_t
            displacements.append(current_disp)

            initial_speed = current_speed

        # Convert outputs to JSON serializable format
        speeds = [float(speed) for speed in speeds]
        displacements = [float(disp) for disp in displacements]

        return {"speeds": speeds, "displacements": displacements}
    """
)

ACCEL_IO_DESCRIPTION = textwrap.dedent(
    """\
    Input:
        acceleration (list of float): List of vertical acceleration values at each time point.
        time (list of float): List of time points corresponding to the acceleration values.
        initial_speed (float): Initial speed at the first time point.
        initial_displacement (float): Initial displacement at the first time point.

    Output:
        return (dict): A dictionary with two keys:
        - speeds (list of float): List of calculated speeds at each time point.
        - displacements (list of float): List of calculated displacements at each time point."""
)

ACCEL_QUERY = (
    "Given a set of vertical acceleration data and corresponding time points, how can "
    "we determine the speed and displacement of a vehicle at each time point, starting "
    "from an initial speed and displacement?"
)

ACCEL_GENERATOR_CODE = textwrap.dedent(
    """\
    def input_generator():
        # Generate random acceleration data
        acceleration = [np.random.uniform(-10, 10) for _ in range(10)]

        # Generate corresponding time data
        time = [0.1 * i for i in range(10)]

        # Generate initial speed and displacement
        initial_speed = np.random.uniform(0, 10)
        initial_displacement = np.random.uniform(0, 10)

        return {
            "acceleration": acceleration,
            "time": time,
            "initial_speed": initial_speed,
            "initial_displacement": initial_displacement
        }
    """
)


@pytest.fixture(scope="session")
def accel_sample() -> UnifiedSample:
    return UnifiedSample(
        id="accel",
        source_tag=SourceTag.PYEDU_R,
        reference_code=ACCEL_REFERENCE_CODE,
        io_description=ACCEL_IO_DESCRIPTION,
        generator_code=ACCEL_GENERATOR_CODE,
        query=ACCEL_QUERY,
    )


# ---------------------------------------------------------------------------
# Fixture corpus: 12 deterministic samples, 4 per source tag
# ---------------------------------------------------------------------------

FIXTURE_MODULUS = 1000003


def fixture_sample_code(constant: int) -> str:
    return (
        "def main_solution(n):\n"
        f"    return {{\"value\": (n * 7 + {constant}) % {FIXTURE_MODULUS}}}\n"
    )


FIXTURE_GENERATOR_CODE = (
    "def input_generator():\n"
    "    import random\n"
    "    return {\"n\": random.randint(0, 999999)}\n"
)

FIXTURE_IO_DESCRIPTION = (
    "Input:\n"
    "    n (int): A non-negative integer to transform.\n"
    "\n"
    "Output:\n"
    "    return (dict): A dictionary with one key:\n"
    "    - value (int): the transformed number."
)


def fixture_output_for(constant: int, n: int) -> dict:
    return {"value": (n * 7 + constant) % FIXTURE_MODULUS}


def fixture_constant(index: int) -> int:
    return index * 37 + 11


# Inputs reserved for scripted wrong answers; they execute to outputs no
# generator-produced input can reach (negative values).
WRONG_INPUT_BASE = 800000


def wrong_input_for(pair_index: int) -> dict:
    return {"n": WRONG_INPUT_BASE + pair_index}


def wrong_output_for(pair_index: int) -> dict:
    return {"value": -1 - pair_index}


def build_fixture_corpus(
    policy: Optional[QuotaPolicy] = None,
) -> tuple[dict[str, UnifiedSample], MockWorkerScript]:
    """12 unified samples (4 per source) plus a complete mock exec script.

    Generators are collision-free: attempt k yields {"n": k}, so every
    sample fills its source quota exactly. The script also covers the
    determinism/smoke probes and the reserved wrong inputs used by
    wrong-answer scenarios.
    """
    policy = policy or QuotaPolicy()
    samples: dict[str, UnifiedSample] = {}
    script = MockWorkerScript()
    tags = [SourceTag.CODEMIX] * 4 + [SourceTag.PYEDU_R] * 4 + [SourceTag.OTHER] * 4
    for index, tag in enumerate(tags):
        sample_id = f"fx{index:02d}"
        constant = fixture_constant(index)
        code = fixture_sample_code(constant)
        sample = UnifiedSample(
            id=sample_id,
            source_tag=tag,
            reference_code=code,
            io_description=FIXTURE_IO_DESCRIPTION,
            generator_code=FIXTURE_GENERATOR_CODE,
            query=f"Given a non-negative integer `n`, what is (7*n + {constant}) modulo {FIXTURE_MODULUS}?",
        )
        samples[sample_id] = sample

        entry_name = sample.entrypoint_name
        for attempt in range(policy.max_attempts(tag)):
            seed = derive_seed(sample_id, attempt)
            script.add_generator(FIXTURE_GENERATOR_CODE, seed, value={"n": attempt})
            script.add_run(code, entry_name, {"n": attempt}, value=fixture_output_for(constant, attempt))
        for probe in ("det", "smoke"):
            probe_input = {"n": 900000 + index}
            script.add_generator(
                FIXTURE_GENERATOR_CODE, derive_seed(sample_id, probe), value=probe_input
            )
            script.add_run(
                code, entry_name, probe_input, value=fixture_output_for(constant, probe_input["n"])
            )
        for pair_index in range(12):
            script.add_run(
                code, entry_name, wrong_input_for(pair_index), value=wrong_output_for(pair_index)
            )
    return samples, script


@pytest.fixture()
def fixture_corpus() -> tuple[dict[str, UnifiedSample], MockWorkerScript]:
    return build_fixture_corpus()


def mock_pool(script: MockWorkerScript, workers: int = 2, **kwargs) -> ExecPool:
    config = PoolConfig(worker_count=workers, **kwargs)
    return ExecPool.with_mock(script, config)


# ---------------------------------------------------------------------------
# Scenario gateway: answers per instance, records a replayable script
# ---------------------------------------------------------------------------


def correct_completion(instance: PredictionInstance) -> str:
    """A CoT-shaped completion whose final answer is the ground truth."""
    if instance.direction == Direction.PREDICT_OUTPUT:
        answer = display_json({"output": instance.ground_truth_output})
    else:
        answer = display_json({"input": dict(instance.ground_truth_input)})
    return f"Working through the code step by step.\n\n```json\n{answer}\n```"


def wrong_completion(instance: PredictionInstance) -> str:
    """A completion whose final answer is verifiably wrong for the fixture corpus."""
    if instance.direction == Direction.PREDICT_OUTPUT:
        truth = instance.ground_truth_output
        wrong = {"value": truth["value"] + 1} if isinstance(truth, dict) else [truth]
        answer = display_json({"output": wrong})
    else:
        answer = display_json({"input": wrong_input_for(instance.pair_index)})
    return f"I believe the answer is:\n\n```json\n{answer}\n```"


class ScenarioGateway(Gateway):
    """Gateway that answers from a per-instance policy and records a script.

    The policy maps (instance, turn_index) -> completion text. Recorded
    history->completion pairs replay through ScriptedGateway, which is how
    the CLI determinism tests get their mock script files.
    """

    def __init__(
        self,
        instances: Sequence[PredictionInstance],
        policy: Callable[[PredictionInstance, int], str],
    ):
        self._by_prompt = {i.prompt: i for i in instances}
        self._policy = policy
        self.recorded: dict[str, str] = {}
        self.calls: list[str] = []

    def complete(self, history: Sequence[ChatTurn]) -> ChatTurn:
        if not history or history[-1].role != "user":
            raise ValueError("history must end with a user turn")
        prompt = history[0].content
        instance = self._by_prompt[prompt]
        turn_index = sum(1 for t in history if t.role == "assistant")
        text = self._policy(instance, turn_index)
        key = history_key(history)
        self.recorded[key] = text
        self.calls.append(instance.instance_id)
        return assistant(text)


def mixed_policy(ordinals: Mapping[str, int]) -> Callable[[PredictionInstance, int], str]:
    """Half the instances answer correctly at turn 1; of the wrong half,
    every fifth gets corrected at turn 2, the rest stay wrong."""

    def policy(instance: PredictionInstance, turn_index: int) -> str:
        ordinal = ordinals[instance.instance_id]
        if turn_index == 0:
            return correct_completion(instance) if ordinal % 2 == 0 else wrong_completion(instance)
        wrong_ordinal = (ordinal - 1) // 2
        if wrong_ordinal % 5 == 0:
            return correct_completion(instance)
        return wrong_completion(instance)

    return policy


def build_pipeline_case(case_dir: Path) -> dict:
    """Materialize a fully offline pipeline case on disk.

    Writes unified.jsonl, the exec mock fixture file, and a gateway script
    covering every turn the generate stage will request (recorded by running
    the same deterministic collect/revise path in memory). Returns the paths
    plus the in-memory protagonists for assertions.
    """
    import json

    from codeio_forge.prompts import DirectionPolicy, build_instances
    from codeio_forge.revise import ResponseVerifier, collect_turn1, revise
    from codeio_forge.sampler import QuotaPolicy, sample_pairs
    from codeio_forge.serde import write_jsonl

    case_dir.mkdir(parents=True, exist_ok=True)
    samples, exec_script = build_fixture_corpus()
    unified_path = case_dir / "unified.jsonl"
    write_jsonl(unified_path, (s.to_json_obj() for s in samples.values()))
    exec_script_path = case_dir / "exec_script.json"
    exec_script.save(str(exec_script_path))

    policy = QuotaPolicy()
    with mock_pool(exec_script) as pool:
        pairs = []
        for sample in samples.values():
            pairs.extend(sample_pairs(sample, policy, pool))
        instances = build_instances(samples, pairs, DirectionPolicy.BOTH_50_50)
        ordinals = {inst.instance_id: i for i, inst in enumerate(instances)}
        gateway = ScenarioGateway(instances, mixed_policy(ordinals))
        verifier = ResponseVerifier(samples, pool)
        traces = collect_turn1(instances, gateway, verifier)
        traces = revise(traces, {i.instance_id: i for i in instances}, gateway, verifier)

    gateway_script_path = case_dir / "gateway_script.json"
    with open(gateway_script_path, "w", encoding="utf-8") as fh:
        json.dump(gateway.recorded, fh, ensure_ascii=False, sort_keys=True)

    return {
        "dir": case_dir,
        "unified": unified_path,
        "exec_script": exec_script_path,
        "gateway_script": gateway_script_path,
        "samples": samples,
        "pairs": pairs,
        "instances": instances,
        "traces": traces,
    }


def pipeline_config(case: Mapping, out_dir: Path, stages: Sequence[str]) -> dict:
    return {
        "seed": 0,
        "stages": list(stages),
        "paths": {
            "unified": str(case["unified"]),
            "pairs": str(out_dir / "pairs.jsonl"),
            "instances": str(out_dir / "instances.jsonl"),
            "traces": str(out_dir / "traces.jsonl"),
            "dataset_dir": str(out_dir / "dataset"),
            "decontam_report": str(out_dir / "leakage.json"),
            "manifest": str(out_dir / "manifest.json"),
            "bench": [],
        },
        "gateway": {"mode": "mock", "script": str(case["gateway_script"])},
        "pool": {"mode": "mock", "script": str(case["exec_script"]), "workers": 2},
        "assemble": {
            "variants": ["codeio", "codeiopp", "reject_sampled", "wrong_to_gt"],
            "shard_size": 50,
        },
    }
