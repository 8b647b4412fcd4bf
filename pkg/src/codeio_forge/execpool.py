"""Worker-pool front end for the code execution protocol (codeio_exec_v1).

A worker is any process speaking newline-delimited JSON over stdin/stdout:
it announces itself with a handshake line ``{"proto": "codeio_exec_v1"}``
and then answers one request object per line with one result object per
line, matched by request_id. The pool owns worker lifecycles: dispatch,
watchdog timeouts (wall limit + grace), kill/respawn, and one crash retry
per request.

Two channel implementations are provided: a subprocess channel for real
workers, and an in-process mock worker backed by a fixture table keyed by
(code hash, args) so the rest of the pipeline can be tested without ever
executing corpus code.
"""

from __future__ import annotations

import json
import logging
import queue
import subprocess
import sys
import threading
import time
from concurrent.futures import Future
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Mapping, Optional, Sequence

from .errors import ForgeError
from .serde import canonical_json, sha256_hex

logger = logging.getLogger(__name__)

PROTOCOL = "codeio_exec_v1"
HANDSHAKE_LINE = json.dumps({"proto": PROTOCOL})

DEFAULT_WALL_SECONDS = 5.0
GRACE_SECONDS = 1.0


class ExecMode(str, Enum):
    RUN_GENERATOR = "RunGenerator"
    RUN_ENTRYPOINT = "RunEntrypoint"
    DETERMINISM_CHECK = "DeterminismCheck"


class ExecStatus(str, Enum):
    OK = "Ok"
    TIMEOUT = "Timeout"
    RUNTIME_ERROR = "RuntimeError"
    ARGUMENT_MISMATCH = "ArgumentMismatch"
    SIZE_LIMIT = "SizeLimit"
    NON_SERIALIZABLE = "NonSerializable"
    NON_DETERMINISTIC = "NonDeterministic"
    IMPORT_BLOCKED = "ImportBlocked"


@dataclass(frozen=True)
class ExecLimits:
    wall_seconds: float = DEFAULT_WALL_SECONDS

    def __post_init__(self) -> None:
        if self.wall_seconds <= 0:
            raise ValueError("wall_seconds must be > 0")


@dataclass(frozen=True)
class ExecRequest:
    request_id: str
    mode: ExecMode
    reference_code: str
    entrypoint_name: str = "main_solution"
    generator_code: str = ""
    args: Optional[Mapping[str, Any]] = None
    limits: ExecLimits = field(default_factory=ExecLimits)
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        if self.mode == ExecMode.RUN_GENERATOR:
            if not self.generator_code:
                raise ValueError("RunGenerator request needs generator_code")
            if self.seed is None:
                raise ValueError("RunGenerator request needs a seed")
        else:
            if self.args is None:
                raise ValueError(f"{self.mode.value} request needs args")

    def to_wire(self) -> dict:
        return {
            "request_id": self.request_id,
            "mode": self.mode.value,
            "reference_code": self.reference_code,
            "entrypoint_name": self.entrypoint_name,
            "generator_code": self.generator_code,
            "args": dict(self.args) if self.args is not None else None,
            "limits": {"wall_seconds": self.limits.wall_seconds},
            "seed": self.seed,
        }


@dataclass(frozen=True)
class ExecResult:
    request_id: str
    status: ExecStatus
    value: Any = None
    error_message: str = ""
    wall_ms: int = 0

    def __post_init__(self) -> None:
        if self.status != ExecStatus.OK and self.value is not None:
            object.__setattr__(self, "value", None)

    @property
    def ok(self) -> bool:
        return self.status == ExecStatus.OK

    @classmethod
    def from_wire(cls, obj: Mapping[str, Any]) -> "ExecResult":
        return cls(
            request_id=str(obj.get("request_id", "")),
            status=ExecStatus(obj["status"]),
            value=obj.get("value"),
            error_message=str(obj.get("error_message", "") or ""),
            wall_ms=int(obj.get("wall_ms", 0) or 0),
        )


class PoolError(ForgeError):
    pass


class PoolSaturated(PoolError):
    """The request queue is full; callers must throttle."""


class WorkerCrashed(PoolError):
    """A worker died while handling this request and the retry budget is spent."""


class WorkerStartError(PoolError):
    """A worker failed to launch or did not complete the protocol handshake."""


@dataclass(frozen=True)
class PoolConfig:
    worker_count: int = 1
    worker_cmd: Sequence[str] = ()
    wall_seconds: float = DEFAULT_WALL_SECONDS
    grace_seconds: float = GRACE_SECONDS
    max_queue_depth: int = 4096
    max_respawns: int = 16
    startup_seconds: float = 10.0

    def __post_init__(self) -> None:
        if self.worker_count < 1:
            raise ValueError("worker_count must be >= 1")
        if self.wall_seconds <= 0:
            raise ValueError("wall_seconds must be > 0")


def default_worker_cmd() -> list[str]:
    """Launch command for the companion sandbox worker package."""
    return [sys.executable, "-m", "codeio_worker"]


# ---------------------------------------------------------------------------
# Worker channels
# ---------------------------------------------------------------------------


class ChannelClosed(Exception):
    pass


class WorkerChannel:
    """Line-oriented duplex channel to one worker."""

    def start(self) -> None:
        raise NotImplementedError

    def send_line(self, line: str) -> None:
        raise NotImplementedError

    def recv_line(self, timeout: float) -> Optional[str]:
        """One line without its newline; None on timeout; ChannelClosed on EOF."""
        raise NotImplementedError

    def kill(self) -> None:
        raise NotImplementedError


_EOF = object()


class SubprocessChannel(WorkerChannel):
    def __init__(self, argv: Sequence[str]):
        self._argv = list(argv)
        self._proc: Optional[subprocess.Popen] = None
        self._lines: "queue.Queue[object]" = queue.Queue()

    def start(self) -> None:
        try:
            self._proc = subprocess.Popen(
                self._argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise WorkerStartError(f"cannot launch worker {self._argv}: {exc}") from exc
        threading.Thread(target=self._read_loop, daemon=True).start()

    def _read_loop(self) -> None:
        proc = self._proc
        assert proc is not None and proc.stdout is not None
        for line in proc.stdout:
            self._lines.put(line.rstrip("\n"))
        self._lines.put(_EOF)

    def send_line(self, line: str) -> None:
        proc = self._proc
        if proc is None or proc.stdin is None or proc.poll() is not None:
            raise ChannelClosed("worker process is gone")
        try:
            proc.stdin.write(line + "\n")
            proc.stdin.flush()
        except (BrokenPipeError, ValueError, OSError) as exc:
            raise ChannelClosed(str(exc)) from exc

    def recv_line(self, timeout: float) -> Optional[str]:
        try:
            item = self._lines.get(timeout=timeout)
        except queue.Empty:
            return None
        if item is _EOF:
            raise ChannelClosed("worker closed stdout")
        return item  # type: ignore[return-value]

    def kill(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.kill()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                pass


class MockWorkerChannel(WorkerChannel):
    """In-process worker thread serving the protocol from a fixture table."""

    def __init__(self, script: "MockWorkerScript"):
        self._script = script
        self._inbox: "queue.Queue[object]" = queue.Queue()
        self._outbox: "queue.Queue[object]" = queue.Queue()
        self._stop = threading.Event()

    def start(self) -> None:
        self._outbox.put(HANDSHAKE_LINE)
        threading.Thread(target=self._serve, daemon=True).start()

    def _serve(self) -> None:
        while not self._stop.is_set():
            try:
                item = self._inbox.get(timeout=0.05)
            except queue.Empty:
                continue
            if item is _EOF:
                break
            response = self._script.respond(str(item), self._stop)
            if response is None:  # crash behavior or killed while hanging
                self._outbox.put(_EOF)
                return
            self._outbox.put(response)

    def send_line(self, line: str) -> None:
        if self._stop.is_set():
            raise ChannelClosed("mock worker killed")
        self._inbox.put(line)

    def recv_line(self, timeout: float) -> Optional[str]:
        try:
            item = self._outbox.get(timeout=timeout)
        except queue.Empty:
            return None
        if item is _EOF:
            raise ChannelClosed("mock worker terminated")
        return item  # type: ignore[return-value]

    def kill(self) -> None:
        self._stop.set()
        self._inbox.put(_EOF)


# ---------------------------------------------------------------------------
# Mock fixture table
# ---------------------------------------------------------------------------

MOCK_SCRIPT_SCHEMA = "codeio_mock_exec_v1"

BEHAVIOR_HANG_UNTIL_LIMIT = "hang_until_limit"  # worker self-reports Timeout at the wall limit
BEHAVIOR_HANG = "hang"  # worker never answers; exercises the pool watchdog
BEHAVIOR_CRASH = "crash"  # worker dies mid-request; exercises respawn + retry


def run_key_hash(reference_code: str, entrypoint_name: str) -> str:
    return sha256_hex(reference_code + "\x00" + entrypoint_name)


class MockWorkerScript:
    """Fixture table mapping (code hash, args or seed) to canned results.

    Entries are plain dicts with one of:
      value:      JSON value -> Ok result
      status:     ExecStatus name (+ optional error_message)
      behavior:   hang_until_limit | hang | crash
    plus optional sleep_ms applied before answering.
    """

    def __init__(self) -> None:
        self._generators: dict[tuple[str, int], dict] = {}
        self._runs: dict[tuple[str, str], dict] = {}
        self._determinism: dict[tuple[str, str], dict] = {}

    # -- builders ---------------------------------------------------------

    def add_generator(self, generator_code: str, seed: int, **entry: Any) -> None:
        self._generators[(sha256_hex(generator_code), int(seed))] = entry

    def add_generator_series(
        self, generator_code: str, seeds: Sequence[int], fn: Callable[[int], Any]
    ) -> None:
        for seed in seeds:
            self.add_generator(generator_code, seed, value=fn(seed))

    def add_run(
        self, reference_code: str, entrypoint_name: str, args: Mapping[str, Any], **entry: Any
    ) -> None:
        key = (run_key_hash(reference_code, entrypoint_name), canonical_json(args))
        self._runs[key] = entry

    def add_run_fn(
        self,
        reference_code: str,
        entrypoint_name: str,
        inputs: Sequence[Mapping[str, Any]],
        fn: Callable[[Mapping[str, Any]], Any],
    ) -> None:
        for args in inputs:
            self.add_run(reference_code, entrypoint_name, args, value=fn(args))

    def add_determinism(
        self, reference_code: str, entrypoint_name: str, args: Mapping[str, Any], **entry: Any
    ) -> None:
        key = (run_key_hash(reference_code, entrypoint_name), canonical_json(args))
        self._determinism[key] = entry

    # -- persistence ------------------------------------------------------

    def to_json_obj(self) -> dict:
        def unpack(table: dict, kind: str) -> list[dict]:
            rows = []
            for key, entry in sorted(table.items(), key=lambda kv: (kv[0][0], str(kv[0][1]))):
                row = {"entry": entry}
                if kind == "generators":
                    row["code_sha256"], row["seed"] = key
                else:
                    row["code_sha256"], row["args_json"] = key
                rows.append(row)
            return rows

        return {
            "schema": MOCK_SCRIPT_SCHEMA,
            "generators": unpack(self._generators, "generators"),
            "runs": unpack(self._runs, "runs"),
            "determinism": unpack(self._determinism, "determinism"),
        }

    @classmethod
    def from_json_obj(cls, obj: Mapping[str, Any]) -> "MockWorkerScript":
        if obj.get("schema") != MOCK_SCRIPT_SCHEMA:
            raise ValueError(f"unsupported mock script schema: {obj.get('schema')!r}")
        script = cls()
        for row in obj.get("generators", []):
            script._generators[(row["code_sha256"], int(row["seed"]))] = row["entry"]
        for row in obj.get("runs", []):
            script._runs[(row["code_sha256"], row["args_json"])] = row["entry"]
        for row in obj.get("determinism", []):
            script._determinism[(row["code_sha256"], row["args_json"])] = row["entry"]
        return script

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_obj(), fh, ensure_ascii=False, sort_keys=True)

    @classmethod
    def load(cls, path: str) -> "MockWorkerScript":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_obj(json.load(fh))

    # -- protocol service ---------------------------------------------------

    def _lookup(self, req: Mapping[str, Any]) -> dict:
        mode = req.get("mode")
        if mode == ExecMode.RUN_GENERATOR.value:
            key = (sha256_hex(req.get("generator_code", "")), int(req.get("seed") or 0))
            entry = self._generators.get(key)
        else:
            code_key = run_key_hash(req.get("reference_code", ""), req.get("entrypoint_name", ""))
            args_key = canonical_json(req.get("args"))
            if mode == ExecMode.DETERMINISM_CHECK.value:
                entry = self._determinism.get((code_key, args_key))
                if entry is None:
                    # Re-running the same fixture twice trivially agrees.
                    entry = self._runs.get((code_key, args_key))
            else:
                entry = self._runs.get((code_key, args_key))
        if entry is None:
            return {
                "status": ExecStatus.RUNTIME_ERROR.value,
                "error_message": f"mock fixture miss: mode={mode} request_id={req.get('request_id')}",
            }
        return entry

    def respond(self, line: str, stop: threading.Event) -> Optional[str]:
        started = time.monotonic()
        try:
            req = json.loads(line)
        except json.JSONDecodeError as exc:
            return json.dumps({"proto_error": f"invalid json: {exc}", "request_id": None})
        entry = self._lookup(req)

        behavior = entry.get("behavior")
        wall_seconds = float((req.get("limits") or {}).get("wall_seconds", DEFAULT_WALL_SECONDS))
        if behavior == BEHAVIOR_CRASH:
            return None
        if behavior == BEHAVIOR_HANG:
            while not stop.wait(0.005):
                pass
            return None
        if behavior == BEHAVIOR_HANG_UNTIL_LIMIT:
            # Simulates an overrunning computation the worker itself cuts off.
            while time.monotonic() - started < wall_seconds:
                if stop.wait(0.005):
                    return None
            return json.dumps(
                {
                    "request_id": req.get("request_id"),
                    "status": ExecStatus.TIMEOUT.value,
                    "value": None,
                    "error_message": "wall limit exceeded",
                    "wall_ms": int((time.monotonic() - started) * 1000),
                }
            )

        sleep_ms = int(entry.get("sleep_ms", 0))
        if sleep_ms:
            if stop.wait(sleep_ms / 1000.0):
                return None

        status = entry.get("status", ExecStatus.OK.value)
        value = entry.get("value") if status == ExecStatus.OK.value else None
        return json.dumps(
            {
                "request_id": req.get("request_id"),
                "status": status,
                "value": value,
                "error_message": entry.get("error_message", ""),
                "wall_ms": int((time.monotonic() - started) * 1000),
            }
        )


# ---------------------------------------------------------------------------
# The pool
# ---------------------------------------------------------------------------


@dataclass
class _Task:
    request: ExecRequest
    future: Future
    attempts: int = 0


_SENTINEL = _Task(
    request=ExecRequest(
        request_id="__sentinel__", mode=ExecMode.RUN_ENTRYPOINT, reference_code="", args={}
    ),
    future=Future(),
)


class ExecPool:
    """Dispatches execution requests across a fleet of protocol workers.

    Results are matched to requests by request_id, each request is answered
    exactly once, and a request interrupted by a worker crash is retried once
    on a fresh worker before surfacing WorkerCrashed.
    """

    def __init__(self, config: PoolConfig, channel_factory: Callable[[], WorkerChannel]):
        self._config = config
        self._factory = channel_factory
        self._queue: "queue.Queue[_Task]" = queue.Queue(maxsize=config.max_queue_depth)
        self._threads: list[threading.Thread] = []
        self._channels: list[Optional[WorkerChannel]] = []
        self._live_workers = 0
        self._lock = threading.Lock()
        self._started = False
        self._closed = False

    @classmethod
    def with_mock(cls, script: MockWorkerScript, config: Optional[PoolConfig] = None) -> "ExecPool":
        config = config or PoolConfig()
        return cls(config, lambda: MockWorkerChannel(script))

    @classmethod
    def with_subprocess(cls, config: PoolConfig) -> "ExecPool":
        argv = list(config.worker_cmd) or default_worker_cmd()
        return cls(config, lambda: SubprocessChannel(argv))

    # -- lifecycle ----------------------------------------------------------

    def start(self) -> "ExecPool":
        if self._started:
            return self
        for slot in range(self._config.worker_count):
            channel = self._spawn_channel()
            self._channels.append(channel)
            thread = threading.Thread(target=self._worker_loop, args=(slot,), daemon=True)
            self._threads.append(thread)
        self._live_workers = self._config.worker_count
        self._started = True
        for thread in self._threads:
            thread.start()
        return self

    def _spawn_channel(self) -> WorkerChannel:
        channel = self._factory()
        channel.start()
        try:
            line = channel.recv_line(timeout=self._config.startup_seconds)
        except ChannelClosed as exc:
            raise WorkerStartError(f"worker exited before handshake: {exc}") from exc
        if line is None:
            channel.kill()
            raise WorkerStartError("no handshake from worker within startup window")
        try:
            hello = json.loads(line)
        except json.JSONDecodeError as exc:
            channel.kill()
            raise WorkerStartError(f"bad handshake line: {line!r}") from exc
        if hello.get("proto") != PROTOCOL:
            channel.kill()
            raise WorkerStartError(f"protocol mismatch: {hello!r}")
        return channel

    def close(self) -> None:
        if not self._started or self._closed:
            self._closed = True
            return
        self._closed = True
        for _ in self._threads:
            self._queue.put(_SENTINEL)
        for thread in self._threads:
            thread.join(timeout=10)
        for channel in self._channels:
            if channel is not None:
                channel.kill()

    def __enter__(self) -> "ExecPool":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.close()

    # -- submission -----------------------------------------------------------

    def submit(self, request: ExecRequest) -> ExecResult:
        future = self.submit_async(request)
        result = future.result()
        return result

    def submit_async(self, request: ExecRequest) -> Future:
        if not self._started:
            raise PoolError("pool not started")
        if self._closed:
            raise PoolError("pool closed")
        with self._lock:
            if self._live_workers == 0:
                raise WorkerCrashed("no live workers remain")
        future: Future = Future()
        try:
            self._queue.put_nowait(_Task(request=request, future=future))
        except queue.Full:
            raise PoolSaturated(f"queue depth {self._config.max_queue_depth} exceeded")
        return future

    def submit_batch(self, requests: Sequence[ExecRequest]) -> list[ExecResult]:
        futures = [self.submit_async(req) for req in requests]
        return [f.result() for f in futures]

    # -- worker threads -------------------------------------------------------

    def _worker_loop(self, slot: int) -> None:
        crash_respawns = 0
        while True:
            task = self._queue.get()
            if task is _SENTINEL:
                return
            while True:  # at most twice per task (one crash retry)
                try:
                    outcome = self._serve(slot, task)
                except ChannelClosed:
                    outcome = "crashed"
                if outcome == "done":
                    break
                if outcome == "crashed":
                    # Timeout recycles are normal operation; only crashes
                    # count against the restart budget.
                    crash_respawns += 1
                    if crash_respawns > self._config.max_respawns:
                        logger.error("worker slot %d exhausted respawn budget", slot)
                        if not task.future.done():
                            task.future.set_exception(
                                WorkerCrashed(f"worker slot {slot} exceeded respawn budget")
                            )
                        self._retire_slot(slot)
                        return
                old = self._channels[slot]
                if old is not None:
                    old.kill()
                try:
                    self._channels[slot] = self._spawn_channel()
                except WorkerStartError as exc:
                    logger.error("worker slot %d failed to respawn: %s", slot, exc)
                    if not task.future.done():
                        task.future.set_exception(WorkerCrashed(str(exc)))
                    self._retire_slot(slot)
                    return
                if outcome == "crashed" and task.attempts == 0 and not task.future.done():
                    task.attempts += 1
                    continue  # retry the same request on the fresh worker
                if outcome == "crashed" and not task.future.done():
                    task.future.set_exception(
                        WorkerCrashed(f"request {task.request.request_id} lost twice")
                    )
                break

    def _retire_slot(self, slot: int) -> None:
        with self._lock:
            self._live_workers -= 1
            last = self._live_workers == 0
        if last:
            # Nobody is left to serve the queue; fail fast instead of hanging.
            while True:
                try:
                    task = self._queue.get_nowait()
                except queue.Empty:
                    return
                if task is not _SENTINEL and not task.future.done():
                    task.future.set_exception(WorkerCrashed("no live workers remain"))

    def _serve(self, slot: int, task: _Task) -> str:
        """Returns "done", "timeout" (worker must be recycled), or "crashed"."""
        channel = self._channels[slot]
        assert channel is not None
        request = task.request
        started = time.monotonic()
        deadline = started + request.limits.wall_seconds + self._config.grace_seconds
        channel.send_line(json.dumps(request.to_wire()))
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                elapsed_ms = int((time.monotonic() - started) * 1000)
                channel.kill()
                self._channels[slot] = None
                if not task.future.done():
                    task.future.set_result(
                        ExecResult(
                            request_id=request.request_id,
                            status=ExecStatus.TIMEOUT,
                            error_message="no response within wall limit + grace; worker killed",
                            wall_ms=elapsed_ms,
                        )
                    )
                return "timeout"
            line = channel.recv_line(timeout=remaining)
            if line is None:
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError:
                logger.warning("worker slot %d sent a non-JSON line; treating as crash", slot)
                raise ChannelClosed("garbled worker output")
            if payload.get("request_id") != request.request_id:
                logger.debug("ignoring stale response for %r", payload.get("request_id"))
                continue
            try:
                result = ExecResult.from_wire(payload)
            except (ValueError, KeyError):
                logger.warning("worker slot %d sent an invalid result; treating as crash", slot)
                raise ChannelClosed("invalid worker result")
            if not task.future.done():
                task.future.set_result(result)
            if result.status == ExecStatus.TIMEOUT:
                # The overrun computation may still be running inside the
                # worker; recycle the process rather than trust its state.
                channel.kill()
                self._channels[slot] = None
                return "timeout"
            return "done"


def selftest(pool: ExecPool) -> ExecResult:
    """Handshake already happened at start(); push one canary request through."""
    canary = ExecRequest(
        request_id="selftest-canary",
        mode=ExecMode.RUN_ENTRYPOINT,
        reference_code="def main_solution(x):\n    return x\n",
        entrypoint_name="main_solution",
        args={"x": 1},
        limits=ExecLimits(wall_seconds=5.0),
    )
    return pool.submit(canary)


CANARY_REFERENCE_CODE = "def main_solution(x):\n    return x\n"
