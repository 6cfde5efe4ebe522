"""Reference tool adapter: line-oriented JSON over stdin/stdout.

One request per line, one response per line, always in order:

  {"id": N, "op": "hello"}                 -> name/version/ops/deterministic
  {"id": N, "op": "classify", ...}         -> {"class": str, "scores": {...}?}
  {"id": N, "op": "segment", ...}          -> {"segments": [{label, mask, score?}]}
  {"id": N, "op": "infill", ...}           -> {"out_path": str}

Malformed input lines get an ok=false response instead of killing the
process. Plug your own model in by passing callables to AdapterConfig;
the bundled hooks are pure arithmetic so the protocol can be tested
without any ML runtime.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from typing import Callable

__version__ = "0.1.0"


@dataclass
class AdapterConfig:
    """Ops to expose and the callable handling each of them.

    Each hook receives the parsed request dict and returns the response
    payload dict. The hello response advertises exactly the configured
    ops and the declared determinism flag.
    """

    name: str = "cofscan-adapter"
    version: str = __version__
    deterministic: bool = True
    hooks: dict[str, Callable[[dict], dict]] = field(default_factory=dict)

    def hello_payload(self) -> dict:
        return {
            "name": self.name,
            "version": self.version,
            "ops": sorted(self.hooks),
            "deterministic": self.deterministic,
        }


def _respond(stdout, request_id, ok: bool, payload: dict | None = None, error: str | None = None):
    obj: dict = {"id": request_id, "ok": ok}
    if error is not None:
        obj["error"] = error
    if payload is not None:
        obj["payload"] = payload
    stdout.write(json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n")
    stdout.flush()


def serve(config: AdapterConfig, stdin=None, stdout=None) -> int:
    """Answer requests until stdin closes. Returns the exit status."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
            request_id = request["id"]
            op = request["op"]
        except (json.JSONDecodeError, KeyError, TypeError):
            _respond(stdout, -1, False, error="parse")
            continue
        if op == "hello":
            _respond(stdout, request_id, True, payload=config.hello_payload())
            continue
        hook = config.hooks.get(op)
        if hook is None:
            _respond(stdout, request_id, False, error=f"unsupported op {op!r}")
            continue
        try:
            payload = hook(request)
        except Exception as exc:  # a broken hook must not kill the loop
            _respond(stdout, request_id, False, error=f"{type(exc).__name__}: {exc}")
            continue
        _respond(stdout, request_id, True, payload=payload)
    return 0
