"""The forge command line: every pipeline stage plus a config-driven runner.

Subcommands: transform, sample, prompts, generate, verify, assemble,
decontam, stats, score-bench, exec-selftest, and run (full pipeline from a
YAML config with ${ENV} interpolation). Outputs are written atomically: a
stage writes <path>.partial and renames on success, so an aborted run
leaves its partial output marked.
"""

from __future__ import annotations

import argparse
import glob as globmod
import json
import logging
import os
import re
import shlex
import shutil
import sys
import time
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

import yaml

from . import __version__
from .assemble import RecordVariant, assemble, corpus_stats, read_dataset, write_dataset
from .decontam import DEFAULT_N, DIGIT_MODE_CHARS, KERNEL, NGramIndex, leakage_report
from .errors import EvaluatorUnavailable, ForgeError
from .execpool import (
    ExecPool,
    MockWorkerScript,
    PoolConfig,
    default_worker_cmd,
    selftest,
)
from .gateway import Gateway, GatewayConfig, HttpGateway, ScriptedGateway
from .model import RawCodeFile, SourceTag, UnifiedSample
from .prompts import (
    DirectionPolicy,
    FormatVariant,
    PredictionInstance,
    build_instances,
    template_hash,
)
from .revise import (
    ResponseVerifier,
    RevisionTrace,
    StitchTemplates,
    collect_turn1,
    revise,
    revision_stats,
)
from .sampler import IOPair, QuotaPolicy, check_determinism, sample_pairs
from .serde import read_jsonl, write_jsonl
from .transform import (
    classify_file,
    filter_by_success_rate,
    keep_for_source,
    transform_asset_hash,
    transform_raw_file,
)
from .verify import BenchmarkProblem, EqualityPolicy, score_output_benchmark

logger = logging.getLogger(__name__)

MANIFEST_SCHEMA = "codeio_manifest_v1"


class PipelineStageError(ForgeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


# ---------------------------------------------------------------------------
# Config loading
# ---------------------------------------------------------------------------

_ENV_PATTERN = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


def _interpolate_env(value: Any) -> Any:
    if isinstance(value, str):

        def repl(match: re.Match) -> str:
            name = match.group(1)
            if name not in os.environ:
                raise ForgeError(f"config references unset environment variable {name}")
            return os.environ[name]

        return _ENV_PATTERN.sub(repl, value)
    if isinstance(value, list):
        return [_interpolate_env(v) for v in value]
    if isinstance(value, dict):
        return {k: _interpolate_env(v) for k, v in value.items()}
    return value


def load_config(path: str | Path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    return _interpolate_env(raw)


def _quota_policy_from(cfg: Mapping[str, Any]) -> QuotaPolicy:
    quotas = {
        SourceTag.CODEMIX: int(cfg.get("codemix", 3)),
        SourceTag.PYEDU_R: int(cfg.get("pyedur", 6)),
        SourceTag.OTHER: int(cfg.get("other", 10)),
    }
    return QuotaPolicy(quotas=quotas, attempts_factor=int(cfg.get("attempts_factor", 5)))


def _equality_policy_from(cfg: Mapping[str, Any]) -> EqualityPolicy:
    return EqualityPolicy(
        numeric_cross_type=bool(cfg.get("numeric_cross_type", True)),
        abs_tol=float(cfg.get("abs_tol", 0.0)),
        rel_tol=float(cfg.get("rel_tol", 0.0)),
        list_order_significant=bool(cfg.get("list_order_significant", True)),
    )


def _stitch_templates_from(cfg: Mapping[str, Any]) -> StitchTemplates:
    return StitchTemplates(**cfg) if cfg else StitchTemplates()


def parse_quota_flag(spec: str) -> QuotaPolicy:
    """Parse "codemix=3,pyedur=6,other=10" into a quota policy."""
    values: dict[str, int] = {}
    for part in spec.split(","):
        key, _, number = part.partition("=")
        values[key.strip().lower()] = int(number)
    return _quota_policy_from(values)


def build_gateway(cfg: Mapping[str, Any]) -> Gateway:
    mode = cfg.get("mode", "http")
    if mode == "mock":
        return ScriptedGateway.from_file(cfg["script"])
    gateway_config = GatewayConfig(
        endpoint=cfg.get("endpoint") or os.environ.get("CODEIO_LLM_ENDPOINT", ""),
        model=cfg.get("model", "deepseek-v2.5"),
        max_retries=int(cfg.get("max_retries", 3)),
        timeout=float(cfg.get("timeout", 120.0)),
        concurrency=int(cfg.get("concurrency", 8)),
        temperature=float(cfg.get("temperature", 0.7)),
    )
    return HttpGateway(gateway_config, api_key=cfg.get("api_key"))


def build_pool(cfg: Mapping[str, Any]) -> ExecPool:
    mode = cfg.get("mode", "subprocess")
    workers = int(cfg.get("workers", 2))
    config = PoolConfig(
        worker_count=workers,
        worker_cmd=tuple(cfg.get("worker_cmd") or default_worker_cmd()),
        wall_seconds=float(cfg.get("wall_seconds", 5.0)),
        max_queue_depth=int(cfg.get("max_queue_depth", 4096)),
    )
    if mode == "mock":
        script = MockWorkerScript.load(cfg["script"])
        return ExecPool.with_mock(script, config)
    return ExecPool.with_subprocess(config)


# ---------------------------------------------------------------------------
# Atomic output helper
# ---------------------------------------------------------------------------


class _AtomicPath:
    """Write to <path>.partial; rename into place only on success."""

    def __init__(self, final: str | Path, is_dir: bool = False):
        self.final = Path(final)
        self.partial = Path(str(final) + ".partial")
        self.is_dir = is_dir

    def __enter__(self) -> Path:
        if self.partial.exists():
            if self.partial.is_dir():
                shutil.rmtree(self.partial)
            else:
                self.partial.unlink()
        self.final.parent.mkdir(parents=True, exist_ok=True)
        if self.is_dir:
            self.partial.mkdir(parents=True)
        return self.partial

    def __exit__(self, exc_type, exc, tb) -> None:
        if exc_type is not None:
            return  # leave the .partial marker behind
        if self.final.exists():
            if self.final.is_dir():
                shutil.rmtree(self.final)
            else:
                self.final.unlink()
        os.replace(self.partial, self.final)


# ---------------------------------------------------------------------------
# Stage implementations
# ---------------------------------------------------------------------------


def _load_raw(path: str | Path) -> list[RawCodeFile]:
    return [
        RawCodeFile(
            id=row["id"],
            source_tag=SourceTag(row["source_tag"]),
            text=row["text"],
            metadata=row.get("metadata", {}),
        )
        for row in read_jsonl(path)
    ]


def _load_unified(path: str | Path) -> dict[str, UnifiedSample]:
    samples = {}
    for row in read_jsonl(path):
        sample = UnifiedSample.from_json_obj(row)
        samples[sample.id] = sample
    return samples


def _load_pairs(path: str | Path) -> list[IOPair]:
    return [IOPair.from_json_obj(row) for row in read_jsonl(path)]


def _load_instances(path: str | Path) -> list[PredictionInstance]:
    return [PredictionInstance.from_json_obj(row) for row in read_jsonl(path)]


def _load_traces(path: str | Path) -> list[RevisionTrace]:
    return [RevisionTrace.from_json_obj(row) for row in read_jsonl(path)]


def stage_transform(
    raw_path: str,
    out_path: str,
    gateway: Gateway,
    pool: ExecPool,
    classify: bool = False,
    band: Optional[tuple[float, float]] = None,
    rates: Optional[Mapping[str, float]] = None,
) -> dict:
    files = _load_raw(raw_path)
    counts = {"input": len(files), "transformed": 0, "band_dropped": 0, "class_dropped": 0}
    failures: dict[str, int] = {}
    kept_samples: list[UnifiedSample] = []
    for file in files:
        if band is not None:
            evaluator = (lambda f: rates[f.id]) if rates and file.id in rates else None
            try:
                decision = filter_by_success_rate(file, evaluator, band[0], band[1])
            except EvaluatorUnavailable:
                raise
            if not decision.keep:
                counts["band_dropped"] += 1
                continue
        if classify:
            label = classify_file(file, gateway)
            if not keep_for_source(file.source_tag, label):
                counts["class_dropped"] += 1
                continue
        outcome = transform_raw_file(file, gateway, pool)
        if outcome.status.value != "Transformed":
            failures[outcome.status.value] = failures.get(outcome.status.value, 0) + 1
            continue
        assert outcome.sample is not None
        kept_samples.append(outcome.sample)
    counts["transformed"] = len(kept_samples)
    counts["failures"] = failures
    with _AtomicPath(out_path) as partial:
        write_jsonl(partial, (s.to_json_obj() for s in kept_samples))
    return counts


def stage_sample(
    unified_path: str, out_path: str, pool: ExecPool, policy: QuotaPolicy
) -> dict:
    samples = _load_unified(unified_path)
    pairs: list[IOPair] = []
    counts = {"samples": len(samples), "nondeterministic": 0, "no_pairs": 0}
    for sample in samples.values():
        det = check_determinism(sample, pool)
        if not det.ok:
            counts["nondeterministic"] += 1
            logger.info("skipping %s: %s %s", sample.id, det.status.value, det.error_message)
            continue
        got = sample_pairs(sample, policy, pool)
        if not got:
            counts["no_pairs"] += 1
            continue
        pairs.extend(got)
    counts["pairs"] = len(pairs)
    with _AtomicPath(out_path) as partial:
        write_jsonl(partial, (p.to_json_obj() for p in pairs))
    return counts


def stage_prompts(
    unified_path: str,
    pairs_path: str,
    out_path: str,
    direction: DirectionPolicy,
    variant: FormatVariant,
) -> dict:
    samples = _load_unified(unified_path)
    pairs = _load_pairs(pairs_path)
    instances = build_instances(samples, pairs, direction, variant)
    with _AtomicPath(out_path) as partial:
        write_jsonl(partial, (i.to_json_obj() for i in instances))
    return {"pairs": len(pairs), "instances": len(instances)}


def stage_generate(
    unified_path: str,
    instances_path: str,
    out_path: str,
    gateway: Gateway,
    pool: ExecPool,
    max_turns: int,
    templates: StitchTemplates,
    policy: EqualityPolicy,
    workers: int = 1,
) -> dict:
    samples = _load_unified(unified_path)
    instances = _load_instances(instances_path)
    verifier = ResponseVerifier(samples, pool, policy)
    traces = collect_turn1(instances, gateway, verifier, workers=workers)
    if max_turns > 1:
        by_id = {i.instance_id: i for i in instances}
        traces = revise(traces, by_id, gateway, verifier, max_turns=max_turns, workers=workers)
    with _AtomicPath(out_path) as partial:
        write_jsonl(partial, (t.to_json_obj() for t in traces))
    stats = revision_stats(traces).to_json_obj() if traces else {}
    return {"instances": len(instances), "traces": len(traces), "revision_stats": stats}


def stage_verify(
    unified_path: str,
    instances_path: str,
    responses_path: str,
    out_path: str,
    pool: ExecPool,
    policy: EqualityPolicy,
) -> dict:
    samples = _load_unified(unified_path)
    instances = {i.instance_id: i for i in _load_instances(instances_path)}
    verifier = ResponseVerifier(samples, pool, policy)
    verdicts = []
    for row in read_jsonl(responses_path):
        instance = instances[row["instance_id"]]
        verdicts.append(verifier.verify(instance, row["response"], int(row.get("turn_index", 0))))
    with _AtomicPath(out_path) as partial:
        write_jsonl(partial, (v.to_json_obj() for v in verdicts))
    kinds: dict[str, int] = {}
    for verdict in verdicts:
        kinds[verdict.kind.value] = kinds.get(verdict.kind.value, 0) + 1
    return {"verdicts": len(verdicts), "kinds": kinds}


def stage_assemble(
    unified_path: str,
    instances_path: str,
    traces_path: str,
    out_dir: str,
    variants: Sequence[RecordVariant],
    templates: StitchTemplates,
    shard_size: int,
    provenance: Optional[Mapping[str, Any]] = None,
) -> dict:
    samples = _load_unified(unified_path)
    instances = {i.instance_id: i for i in _load_instances(instances_path)}
    traces = _load_traces(traces_path)
    counts = {}
    with _AtomicPath(out_dir, is_dir=True) as partial:
        for variant in variants:
            records = assemble(traces, instances, variant, templates, samples)
            metadata = {
                "variant": variant.value,
                "stitch_templates": templates.to_json_obj(),
                "prompt_template_sha256": template_hash(),
            }
            if provenance:
                metadata.update(provenance)
            write_dataset(records, partial / variant.value, shard_size, metadata)
            counts[variant.value] = len(records)
    return {"records": counts, "traces": len(traces)}


def _dataset_documents(train_paths: Sequence[str]) -> list[str]:
    docs = []
    for path in train_paths:
        for row in read_jsonl(path):
            prompt = row.get("prompt", "")
            response = row.get("response", "")
            docs.append(f"{prompt}\n{response}")
    return docs


def stage_decontam(
    train_paths: Sequence[str],
    bench_globs: Sequence[str],
    report_path: str,
    n: int = DEFAULT_N,
    digit_mode: str = DIGIT_MODE_CHARS,
) -> dict:
    expanded_train: list[str] = []
    for pattern in train_paths:
        matched = sorted(globmod.glob(pattern))
        expanded_train.extend(matched or [pattern])
    index = NGramIndex.build(_dataset_documents(expanded_train), n=n, digit_mode=digit_mode)
    benchmarks: dict[str, list[str]] = {}
    for pattern in bench_globs:
        for path in sorted(globmod.glob(pattern)) or [pattern]:
            questions = []
            for row in read_jsonl(path):
                questions.append(row.get("question") or row.get("text") or row.get("prompt") or "")
            benchmarks[Path(path).stem] = questions
    report = leakage_report(benchmarks, index)
    report["indexed_grams"] = len(index)
    with _AtomicPath(report_path) as partial:
        with open(partial, "w", encoding="utf-8") as fh:
            json.dump(report, fh, ensure_ascii=False, sort_keys=True, indent=2)
            fh.write("\n")
    return {
        "indexed_grams": len(index),
        "benchmarks": {k: v["ratio_percent"] for k, v in report["benchmarks"].items()},
    }


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------

STAGE_ORDER = ("transform", "sample", "prompts", "generate", "assemble", "decontam")


def run_pipeline(config: Mapping[str, Any], config_dir: Path | None = None) -> dict:
    """Run the enabled stages in order; returns the manifest.

    Raises PipelineStageError naming the first failing stage. Already-written
    stage outputs stay in place; the failing stage leaves a .partial output.
    """
    def resolve(value):
        if config_dir is None:
            return value
        if isinstance(value, str) and not os.path.isabs(value):
            return str(config_dir / value)
        if isinstance(value, list):
            return [resolve(v) for v in value]
        return value

    paths = {k: resolve(v) for k, v in config.get("paths", {}).items()}
    stages = list(config.get("stages", STAGE_ORDER))
    unknown = [s for s in stages if s not in STAGE_ORDER]
    if unknown:
        raise ForgeError(f"unknown stages: {unknown}")
    ordered = [s for s in STAGE_ORDER if s in stages]

    manifest: dict[str, Any] = {
        "schema": MANIFEST_SCHEMA,
        "version": __version__,
        "seed": config.get("seed", 0),
        "prompt_template_sha256": template_hash(),
        "transform_prompt_sha256": transform_asset_hash(),
        "ngram_kernel": KERNEL,
        "started_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "stages": {},
    }

    gateway: Optional[Gateway] = None
    pool: Optional[ExecPool] = None

    def need_gateway() -> Gateway:
        nonlocal gateway
        if gateway is None:
            gateway = build_gateway(config.get("gateway", {}))
        return gateway

    def need_pool() -> ExecPool:
        nonlocal pool
        if pool is None:
            pool = build_pool(config.get("pool", {})).start()
        return pool

    templates = _stitch_templates_from(config.get("stitch", {}))
    equality = _equality_policy_from(config.get("equality", {}))
    quota = _quota_policy_from(config.get("quota", {}))

    try:
        for stage in ordered:
            try:
                if stage == "transform":
                    tcfg = config.get("transform", {})
                    rates = None
                    if tcfg.get("rates"):
                        with open(tcfg["rates"], "r", encoding="utf-8") as fh:
                            rates = json.load(fh)
                    band = tuple(tcfg["band"]) if tcfg.get("band") else None
                    result = stage_transform(
                        paths["raw"],
                        paths["unified"],
                        need_gateway(),
                        need_pool(),
                        classify=bool(tcfg.get("classify", False)),
                        band=band,  # type: ignore[arg-type]
                        rates=rates,
                    )
                elif stage == "sample":
                    result = stage_sample(paths["unified"], paths["pairs"], need_pool(), quota)
                elif stage == "prompts":
                    pcfg = config.get("prompts", {})
                    result = stage_prompts(
                        paths["unified"],
                        paths["pairs"],
                        paths["instances"],
                        DirectionPolicy(pcfg.get("direction", "both")),
                        FormatVariant(pcfg.get("variant", "qcode_cot")),
                    )
                elif stage == "generate":
                    gcfg = config.get("generate", {})
                    result = stage_generate(
                        paths["unified"],
                        paths["instances"],
                        paths["traces"],
                        need_gateway(),
                        need_pool(),
                        max_turns=int(gcfg.get("max_turns", 2)),
                        templates=templates,
                        policy=equality,
                        workers=int(gcfg.get("workers", 1)),
                    )
                elif stage == "assemble":
                    acfg = config.get("assemble", {})
                    variants = [RecordVariant(v) for v in acfg.get("variants", ["codeio", "codeiopp"])]
                    result = stage_assemble(
                        paths["unified"],
                        paths["instances"],
                        paths["traces"],
                        paths["dataset_dir"],
                        variants,
                        templates,
                        shard_size=int(acfg.get("shard_size", 100_000)),
                        provenance={"seed": config.get("seed", 0)},
                    )
                elif stage == "decontam":
                    dcfg = config.get("decontam", {})
                    train = dcfg.get("train") or [
                        str(Path(paths["dataset_dir"]) / "*" / "part-*.jsonl")
                    ]
                    result = stage_decontam(
                        train,
                        paths.get("bench", []),
                        paths["decontam_report"],
                        n=int(dcfg.get("n", DEFAULT_N)),
                        digit_mode=dcfg.get("digit_mode", DIGIT_MODE_CHARS),
                    )
                else:  # pragma: no cover - guarded above
                    raise ForgeError(stage)
            except Exception as exc:
                raise PipelineStageError(stage, exc) from exc
            manifest["stages"][stage] = result
    finally:
        if pool is not None:
            pool.close()

    manifest["finished_at"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    if "manifest" in paths:
        with _AtomicPath(paths["manifest"]) as partial:
            with open(partial, "w", encoding="utf-8") as fh:
                json.dump(manifest, fh, ensure_ascii=False, sort_keys=True, indent=2)
                fh.write("\n")
    return manifest


# ---------------------------------------------------------------------------
# argparse wiring
# ---------------------------------------------------------------------------


def _add_pool_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--pool-mode", choices=["mock", "subprocess"], default="subprocess")
    parser.add_argument("--pool-script", help="mock exec fixture file (JSON)")
    parser.add_argument("--workers", type=int, default=2)
    parser.add_argument(
        "--worker-cmd", help="launch command for real sandbox workers, e.g. 'python -m codeio_worker'"
    )


def _pool_from_args(args: argparse.Namespace) -> ExecPool:
    cfg: dict[str, Any] = {
        "mode": args.pool_mode,
        "workers": args.workers,
    }
    if args.pool_script:
        cfg["script"] = args.pool_script
    if args.worker_cmd:
        cfg["worker_cmd"] = shlex.split(args.worker_cmd)
    return build_pool(cfg)


def _add_gateway_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--gateway-mode", choices=["mock", "http"], default="http")
    parser.add_argument("--gateway-script", help="mock gateway script file (JSON)")
    parser.add_argument("--endpoint", help="chat-completions endpoint URL")
    parser.add_argument("--model", default="deepseek-v2.5")
    parser.add_argument("--temperature", type=float, default=0.7)


def _gateway_from_args(args: argparse.Namespace) -> Gateway:
    cfg: dict[str, Any] = {
        "mode": args.gateway_mode,
        "model": args.model,
        "temperature": args.temperature,
    }
    if args.gateway_script:
        cfg["script"] = args.gateway_script
    if args.endpoint:
        cfg["endpoint"] = args.endpoint
    return build_gateway(cfg)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="forge", description="Code I/O prediction corpus builder"
    )
    parser.add_argument("--version", action="version", version=f"forge {__version__}")
    parser.add_argument("--log-level", default="INFO")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transform", help="raw code files -> unified samples")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--classify", action="store_true")
    p.add_argument("--band", help="success-rate band lo:hi, e.g. 0.10:0.90")
    p.add_argument("--rates", help="JSON file mapping file id -> success rate")
    _add_gateway_flags(p)
    _add_pool_flags(p)

    p = sub.add_parser("sample", help="unified samples -> I/O pairs")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--quota", default="codemix=3,pyedur=6,other=10")
    p.add_argument("--attempts-factor", type=int, default=5)
    _add_pool_flags(p)

    p = sub.add_parser("prompts", help="pairs -> prediction instances")
    p.add_argument("--unified", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--direction", choices=[d.value for d in DirectionPolicy], default="both")
    p.add_argument("--variant", choices=[v.value for v in FormatVariant], default="qcode_cot")

    p = sub.add_parser("generate", help="instances -> verified revision traces")
    p.add_argument("--unified", required=True)
    p.add_argument("--instances", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-turns", type=int, default=2)
    p.add_argument("--templates", help="stitch templates YAML file")
    p.add_argument("--gen-workers", type=int, default=1)
    _add_gateway_flags(p)
    _add_pool_flags(p)

    p = sub.add_parser("verify", help="check an external responses file")
    p.add_argument("--unified", required=True)
    p.add_argument("--instances", required=True)
    p.add_argument("--responses", required=True)
    p.add_argument("--out", required=True)
    _add_pool_flags(p)

    p = sub.add_parser("assemble", help="traces -> training dataset shards")
    p.add_argument("--unified", required=True)
    p.add_argument("--instances", required=True)
    p.add_argument("--traces", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument(
        "--variant",
        action="append",
        choices=[v.value for v in RecordVariant],
        help="repeatable; defaults to codeio + codeiopp",
    )
    p.add_argument("--templates", help="stitch templates YAML file")
    p.add_argument("--shard-size", type=int, default=100_000)

    p = sub.add_parser("decontam", help="13-gram leakage report")
    p.add_argument("--train", nargs="+", required=True, help="training JSONL files or globs")
    p.add_argument("--bench", nargs="+", required=True, help="benchmark JSONL files or globs")
    p.add_argument("--n", type=int, default=DEFAULT_N)
    p.add_argument("--digit-mode", choices=["chars", "tokens"], default="chars")
    p.add_argument("--report", required=True)

    p = sub.add_parser("stats", help="corpus statistics for a dataset directory")
    p.add_argument("--dataset", required=True, help="dataset directory (shards + metadata)")

    p = sub.add_parser("score-bench", help="problem-level output-prediction scoring")
    p.add_argument("--problems", required=True)
    p.add_argument("--responses", required=True)

    p = sub.add_parser("exec-selftest", help="handshake + canary against real workers")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--worker-cmd", help="launch command, e.g. 'python -m codeio_worker'")

    p = sub.add_parser("run", help="run the configured pipeline stages")
    p.add_argument("--config", required=True)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.INFO))

    try:
        if args.command == "transform":
            band = None
            if args.band:
                lo, _, hi = args.band.partition(":")
                band = (float(lo), float(hi))
            rates = None
            if args.rates:
                with open(args.rates, "r", encoding="utf-8") as fh:
                    rates = json.load(fh)
            with _pool_from_args(args) as pool:
                result = stage_transform(
                    args.input, args.out, _gateway_from_args(args), pool,
                    classify=args.classify, band=band, rates=rates,
                )
        elif args.command == "sample":
            policy = parse_quota_flag(args.quota)
            policy = QuotaPolicy(quotas=policy.quotas, attempts_factor=args.attempts_factor)
            with _pool_from_args(args) as pool:
                result = stage_sample(args.input, args.out, pool, policy)
        elif args.command == "prompts":
            result = stage_prompts(
                args.unified, args.pairs, args.out,
                DirectionPolicy(args.direction), FormatVariant(args.variant),
            )
        elif args.command == "generate":
            templates = StitchTemplates.from_file(args.templates) if args.templates else StitchTemplates()
            with _pool_from_args(args) as pool:
                result = stage_generate(
                    args.unified, args.instances, args.out,
                    _gateway_from_args(args), pool,
                    max_turns=args.max_turns, templates=templates,
                    policy=EqualityPolicy(), workers=args.gen_workers,
                )
        elif args.command == "verify":
            with _pool_from_args(args) as pool:
                result = stage_verify(
                    args.unified, args.instances, args.responses, args.out,
                    pool, EqualityPolicy(),
                )
        elif args.command == "assemble":
            templates = StitchTemplates.from_file(args.templates) if args.templates else StitchTemplates()
            variants = [RecordVariant(v) for v in (args.variant or ["codeio", "codeiopp"])]
            result = stage_assemble(
                args.unified, args.instances, args.traces, args.out_dir,
                variants, templates, args.shard_size,
            )
        elif args.command == "decontam":
            result = stage_decontam(
                args.train, args.bench, args.report, n=args.n, digit_mode=args.digit_mode
            )
        elif args.command == "stats":
            records = read_dataset(args.dataset)
            result = corpus_stats(records).to_json_obj()
        elif args.command == "score-bench":
            problems = [
                BenchmarkProblem(
                    problem_id=row["problem_id"],
                    languages=row.get("languages", ["en"]),
                    test_cases=[tuple(case) for case in row["test_cases"]],
                )
                for row in read_jsonl(args.problems)
            ]
            responses = {
                (row["problem_id"], row["language"], int(row["case_index"])): row["response"]
                for row in read_jsonl(args.responses)
            }
            score = score_output_benchmark(problems, responses)
            result = {"accuracy": score.accuracy, "per_problem": dict(score.per_problem)}
        elif args.command == "exec-selftest":
            config = PoolConfig(
                worker_count=args.workers,
                worker_cmd=tuple(shlex.split(args.worker_cmd) if args.worker_cmd else default_worker_cmd()),
            )
            with ExecPool.with_subprocess(config) as pool:
                canary = selftest(pool)
            result = {
                "protocol": "codeio_exec_v1",
                "workers": args.workers,
                "canary_status": canary.status.value,
                "canary_value": canary.value,
            }
            if not canary.ok or canary.value != 1:
                print(json.dumps(result, indent=2))
                return 1
        elif args.command == "run":
            config_path = Path(args.config)
            config = load_config(config_path)
            try:
                result = run_pipeline(config, config_dir=config_path.parent)
            except PipelineStageError as exc:
                print(f"pipeline failed at stage: {exc.stage}", file=sys.stderr)
                print(str(exc), file=sys.stderr)
                return 2
        else:  # pragma: no cover
            raise AssertionError(args.command)
    except ForgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    print(json.dumps(result, ensure_ascii=False, indent=2, default=str))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
