"""The codeio_exec_v1 stdio loop.

One handshake line announces the protocol, then the worker answers one JSON
request per line with one JSON result per line. Malformed lines get a
protocol-error object instead of crashing the process; user code's stdout
is swallowed inside the runtime so this stream stays protocol-only.
"""

from __future__ import annotations

import json
import sys

from .runtime import handle_request

PROTOCOL = "codeio_exec_v1"

VALID_MODES = {"RunGenerator", "RunEntrypoint", "DeterminismCheck"}


def _emit(obj: dict) -> None:
    sys.stdout.write(json.dumps(obj, ensure_ascii=False))
    sys.stdout.write("\n")
    sys.stdout.flush()


def _protocol_error(message: str, request_id=None) -> dict:
    return {"proto_error": message, "request_id": request_id}


def serve(stdin=None) -> int:
    stdin = stdin if stdin is not None else sys.stdin
    _emit({"proto": PROTOCOL})
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError as exc:
            _emit(_protocol_error(f"invalid json: {exc}"))
            continue
        if not isinstance(request, dict):
            _emit(_protocol_error("request must be a JSON object"))
            continue
        request_id = request.get("request_id")
        if not isinstance(request_id, str) or not request_id:
            _emit(_protocol_error("missing or invalid request_id", None))
            continue
        if request.get("mode") not in VALID_MODES:
            _emit(_protocol_error(f"unknown mode {request.get('mode')!r}", request_id))
            continue
        try:
            response = handle_request(request)
        except Exception as exc:  # the worker must never die on a request
            response = {
                "request_id": request_id,
                "status": "RuntimeError",
                "value": None,
                "error_message": f"worker internal error: {exc}",
                "wall_ms": 0,
            }
        _emit(response)
    return 0


def main() -> int:
    try:
        return serve()
    except (KeyboardInterrupt, BrokenPipeError):
        return 0


if __name__ == "__main__":
    raise SystemExit(main())
