"""Executes corpus code in fresh namespaces under wall-clock and size limits.

Each request gets a new module namespace with guarded builtins: imports of
networking, subprocess-spawning, and filesystem-manipulation modules are
refused, and open() only works read-only. The wall limit is enforced with
an interval timer, which interrupts Python-level loops; a computation stuck
in native code is the pool's problem (it kills the whole worker after the
grace window).

Outputs are coerced to plain JSON values (numpy scalars and arrays become
numbers and lists) before the strict size check, mirroring how reference
code is expected to return JSON-serializable values.
"""

from __future__ import annotations

import ast
import builtins
import contextlib
import inspect
import io
import math
import random
import signal
import time
import traceback
from dataclasses import dataclass
from typing import Any, Callable, Mapping, Optional

try:
    import numpy as np
except ImportError:  # pragma: no cover - numpy is a declared dependency
    np = None

from .sizecheck import strict_size_check

DEFAULT_WALL_SECONDS = 5.0
STDERR_LIMIT = 2048

STATUS_OK = "Ok"
STATUS_TIMEOUT = "Timeout"
STATUS_RUNTIME_ERROR = "RuntimeError"
STATUS_ARGUMENT_MISMATCH = "ArgumentMismatch"
STATUS_SIZE_LIMIT = "SizeLimit"
STATUS_NON_SERIALIZABLE = "NonSerializable"
STATUS_NON_DETERMINISTIC = "NonDeterministic"
STATUS_IMPORT_BLOCKED = "ImportBlocked"

# Module roots whose import ends the request: network access, process
# spawning, and bulk filesystem manipulation.
IMPORT_DENYLIST = frozenset(
    {
        "socket",
        "ssl",
        "subprocess",
        "shutil",
        "requests",
        "urllib",
        "http",
        "ftplib",
        "smtplib",
        "telnetlib",
        "xmlrpc",
        "multiprocessing",
        "ctypes",
        "pty",
        "webbrowser",
        "paramiko",
        "aiohttp",
        "httpx",
    }
)

# Static markers of nondeterminism in reference code. A dotted usage counts
# when it equals a marker or extends one (np.random.uniform under np.random).
NONDETERMINISM_IMPORTS = frozenset({"random", "secrets", "uuid"})
NONDETERMINISM_DOTTED = (
    "np.random",
    "numpy.random",
    "os.urandom",
    "uuid",
    "secrets",
    "time.time",
    "time.time_ns",
    "time.monotonic",
    "time.perf_counter",
    "datetime.now",
    "datetime.utcnow",
    "datetime.today",
    "datetime.datetime.now",
    "datetime.datetime.utcnow",
    "datetime.datetime.today",
    "datetime.date.today",
    "date.today",
)


class ImportBlockedError(Exception):
    pass


class WallTimeout(Exception):
    pass


class NotSerializable(Exception):
    pass


def _guarded_import(name, globals=None, locals=None, fromlist=(), level=0):
    root = name.split(".")[0]
    if root in IMPORT_DENYLIST:
        raise ImportBlockedError(f"import of {name!r} is blocked")
    return builtins.__import__(name, globals, locals, fromlist, level)


def _guarded_open(file, mode="r", *args, **kwargs):
    if any(flag in mode for flag in "wax+"):
        raise ImportBlockedError(f"open(mode={mode!r}) is blocked: filesystem writes are not allowed")
    return builtins.open(file, mode, *args, **kwargs)


def fresh_namespace() -> dict:
    guarded = dict(vars(builtins))
    guarded["__import__"] = _guarded_import
    guarded["open"] = _guarded_open
    return {"__builtins__": guarded, "__name__": "__corpus__"}


# ---------------------------------------------------------------------------
# JSON coercion
# ---------------------------------------------------------------------------


def _coerce_key(key: Any) -> str:
    if isinstance(key, str):
        return key
    if key is True:
        return "true"
    if key is False:
        return "false"
    if key is None:
        return "null"
    if isinstance(key, int):
        return str(key)
    if isinstance(key, float):
        return repr(key)
    raise NotSerializable(f"map key of type {type(key).__name__} is not JSON-compatible")


def to_jsonable(value: Any) -> Any:
    """Coerce a runtime value to a plain JSON value, or raise NotSerializable."""
    if np is not None:
        if isinstance(value, np.bool_):
            return bool(value)
        if isinstance(value, np.integer):
            return int(value)
        if isinstance(value, np.floating):
            value = float(value)
        elif isinstance(value, np.ndarray):
            return [to_jsonable(item) for item in value.tolist()]
    if value is None or isinstance(value, (bool, str, int)):
        return value
    if isinstance(value, float):
        if not math.isfinite(value):
            raise NotSerializable(f"non-finite float {value!r}")
        return value
    if isinstance(value, (list, tuple)):
        return [to_jsonable(item) for item in value]
    if isinstance(value, dict):
        return {_coerce_key(k): to_jsonable(v) for k, v in value.items()}
    raise NotSerializable(f"value of type {type(value).__name__} is not JSON-serializable")


# ---------------------------------------------------------------------------
# Guarded execution
# ---------------------------------------------------------------------------


@dataclass
class Execution:
    status: str
    value: Any = None
    error_message: str = ""
    wall_ms: int = 0


def _truncate(text: str) -> str:
    """Middle-out truncation: keep the frame listing and the message tail."""
    if len(text) <= STDERR_LIMIT:
        return text
    half = (STDERR_LIMIT - 20) // 2
    return f"{text[:half]}\n...[truncated]...\n{text[-half:]}"


def _call_guarded(fn: Callable[[], Any], wall_seconds: float) -> Execution:
    """Run fn under the wall timer with stdout discarded and stderr captured."""

    def on_alarm(signum, frame):
        raise WallTimeout()

    stdout_sink = io.StringIO()
    stderr_sink = io.StringIO()
    previous = signal.signal(signal.SIGALRM, on_alarm)
    started = time.monotonic()
    try:
        signal.setitimer(signal.ITIMER_REAL, wall_seconds)
        with contextlib.redirect_stdout(stdout_sink), contextlib.redirect_stderr(stderr_sink):
            value = fn()
        elapsed = int((time.monotonic() - started) * 1000)
        return Execution(status=STATUS_OK, value=value, wall_ms=elapsed)
    except WallTimeout:
        elapsed = int((time.monotonic() - started) * 1000)
        return Execution(
            status=STATUS_TIMEOUT,
            error_message=f"wall limit of {wall_seconds}s exceeded",
            wall_ms=elapsed,
        )
    except ImportBlockedError as exc:
        elapsed = int((time.monotonic() - started) * 1000)
        return Execution(status=STATUS_IMPORT_BLOCKED, error_message=str(exc), wall_ms=elapsed)
    except BaseException:
        elapsed = int((time.monotonic() - started) * 1000)
        detail = traceback.format_exc(limit=10)
        stderr_text = stderr_sink.getvalue()
        if stderr_text:
            detail = f"{detail}\nstderr:\n{stderr_text}"
        return Execution(
            status=STATUS_RUNTIME_ERROR, error_message=_truncate(detail), wall_ms=elapsed
        )
    finally:
        signal.setitimer(signal.ITIMER_REAL, 0)
        signal.signal(signal.SIGALRM, previous)


def _finalize_value(execution: Execution) -> Execution:
    """Coerce an Ok result to JSON and size-check it."""
    if execution.status != STATUS_OK:
        return execution
    try:
        coerced = to_jsonable(execution.value)
    except NotSerializable as exc:
        return Execution(
            status=STATUS_NON_SERIALIZABLE, error_message=str(exc), wall_ms=execution.wall_ms
        )
    if not strict_size_check(coerced):
        return Execution(
            status=STATUS_SIZE_LIMIT,
            error_message="value exceeds the strict object-size limits",
            wall_ms=execution.wall_ms,
        )
    return Execution(status=STATUS_OK, value=coerced, wall_ms=execution.wall_ms)


def _load_entrypoint(reference_code: str, entrypoint_name: str, namespace: dict) -> Callable:
    exec(compile(reference_code, "<reference_code>", "exec"), namespace)
    fn = namespace.get(entrypoint_name)
    if not callable(fn):
        raise NameError(f"entrypoint {entrypoint_name!r} is not defined by the reference code")
    return fn


def _generator_name(generator_code: str) -> str:
    tree = ast.parse(generator_code)
    names = [n.name for n in tree.body if isinstance(n, (ast.FunctionDef, ast.AsyncFunctionDef))]
    if "input_generator" in names:
        return "input_generator"
    if len(names) == 1:
        return names[0]
    raise NameError("generator code must define exactly one zero-argument function")


def _seed_everything(seed: int) -> None:
    random.seed(seed)
    if np is not None:
        np.random.seed(seed % 2**32)


# ---------------------------------------------------------------------------
# Request handlers
# ---------------------------------------------------------------------------


def _args_within_limits(args: Mapping[str, Any]) -> bool:
    """Strict size check applied per argument.

    The generator's return value is the entrypoint's keyword-argument map;
    the inputs whose complexity is bounded are the argument values, not the
    plumbing dict around them (a handful of list arguments would otherwise
    blow the whole-object byte budget while each input stays tiny). The
    container rule still bounds the map itself, and every key and value gets
    the full recursive check.
    """
    if len(args) >= 20:
        return False
    return all(strict_size_check(k) and strict_size_check(v) for k, v in args.items())


def run_generator(
    reference_code: str, generator_code: str, seed: int, wall_seconds: float = DEFAULT_WALL_SECONDS
) -> Execution:
    """Seed both RNG families, call the generator once, size-check its map."""

    def invoke():
        namespace = fresh_namespace()
        exec(compile(reference_code, "<reference_code>", "exec"), namespace)
        exec(compile(generator_code, "<generator_code>", "exec"), namespace)
        generator = namespace[_generator_name(generator_code)]
        _seed_everything(seed)
        return generator()

    execution = _call_guarded(invoke, wall_seconds)
    if execution.status != STATUS_OK:
        return execution
    try:
        coerced = to_jsonable(execution.value)
    except NotSerializable as exc:
        return Execution(
            status=STATUS_NON_SERIALIZABLE, error_message=str(exc), wall_ms=execution.wall_ms
        )
    if not isinstance(coerced, dict):
        return Execution(
            status=STATUS_NON_SERIALIZABLE,
            error_message="generator must return a map of entrypoint arguments",
            wall_ms=execution.wall_ms,
        )
    if not _args_within_limits(coerced):
        return Execution(
            status=STATUS_SIZE_LIMIT,
            error_message="a generated argument exceeds the strict object-size limits",
            wall_ms=execution.wall_ms,
        )
    return Execution(status=STATUS_OK, value=coerced, wall_ms=execution.wall_ms)


def run_entrypoint(
    reference_code: str,
    entrypoint_name: str,
    args: Mapping[str, Any],
    wall_seconds: float = DEFAULT_WALL_SECONDS,
) -> Execution:
    """Call the entrypoint with args as keyword arguments."""
    namespace = fresh_namespace()
    load = _call_guarded(
        lambda: _load_entrypoint(reference_code, entrypoint_name, namespace), wall_seconds
    )
    if load.status != STATUS_OK:
        return load
    fn = load.value
    try:
        inspect.signature(fn).bind(**dict(args))
    except TypeError as exc:
        return Execution(status=STATUS_ARGUMENT_MISMATCH, error_message=str(exc))
    return _finalize_value(_call_guarded(lambda: fn(**dict(args)), wall_seconds))


def _scan_nondeterminism(reference_code: str) -> Optional[str]:
    try:
        tree = ast.parse(reference_code)
    except SyntaxError:
        return None  # execution will surface the real error
    for node in ast.walk(tree):
        if isinstance(node, ast.Import):
            for alias in node.names:
                if alias.name.split(".")[0] in NONDETERMINISM_IMPORTS:
                    return f"import {alias.name}"
        elif isinstance(node, ast.ImportFrom):
            if node.module and node.module.split(".")[0] in NONDETERMINISM_IMPORTS:
                return f"from {node.module} import ..."
        elif isinstance(node, ast.Attribute):
            chain = _dotted_chain(node)
            if chain:
                for marker in NONDETERMINISM_DOTTED:
                    if chain == marker or chain.startswith(marker + "."):
                        return chain
    return None


def _dotted_chain(node: ast.Attribute) -> Optional[str]:
    parts = [node.attr]
    current = node.value
    while isinstance(current, ast.Attribute):
        parts.append(current.attr)
        current = current.value
    if isinstance(current, ast.Name):
        parts.append(current.id)
        return ".".join(reversed(parts))
    return None


def determinism_check(
    reference_code: str,
    entrypoint_name: str,
    args: Mapping[str, Any],
    wall_seconds: float = DEFAULT_WALL_SECONDS,
) -> Execution:
    """Static randomness scan plus a run-twice equality check."""
    marker = _scan_nondeterminism(reference_code)
    if marker is not None:
        return Execution(
            status=STATUS_NON_DETERMINISTIC,
            error_message=f"randomness marker in reference code: {marker}",
        )
    first = run_entrypoint(reference_code, entrypoint_name, args, wall_seconds)
    if first.status != STATUS_OK:
        return first
    second = run_entrypoint(reference_code, entrypoint_name, args, wall_seconds)
    if second.status != STATUS_OK:
        return second
    # Report the slower of the two runs so wall_ms stays within the limit.
    wall_ms = max(first.wall_ms, second.wall_ms)
    if first.value != second.value:
        return Execution(
            status=STATUS_NON_DETERMINISTIC,
            error_message="two executions with identical arguments returned different values",
            wall_ms=wall_ms,
        )
    return Execution(status=STATUS_OK, value=first.value, wall_ms=wall_ms)


def handle_request(request: Mapping[str, Any]) -> dict:
    """Dispatch one protocol request object to its handler."""
    mode = request.get("mode")
    limits = request.get("limits") or {}
    wall_seconds = float(limits.get("wall_seconds") or DEFAULT_WALL_SECONDS)
    reference_code = request.get("reference_code") or ""
    entrypoint_name = request.get("entrypoint_name") or "main_solution"

    if mode == "RunGenerator":
        execution = run_generator(
            reference_code,
            request.get("generator_code") or "",
            int(request.get("seed") or 0),
            wall_seconds,
        )
    elif mode == "RunEntrypoint":
        execution = run_entrypoint(
            reference_code, entrypoint_name, request.get("args") or {}, wall_seconds
        )
    elif mode == "DeterminismCheck":
        execution = determinism_check(
            reference_code, entrypoint_name, request.get("args") or {}, wall_seconds
        )
    else:
        execution = Execution(
            status=STATUS_RUNTIME_ERROR, error_message=f"unknown mode {mode!r}"
        )

    return {
        "request_id": request.get("request_id"),
        "status": execution.status,
        "value": execution.value if execution.status == STATUS_OK else None,
        "error_message": execution.error_message,
        "wall_ms": execution.wall_ms,
    }
