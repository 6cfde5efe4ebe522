"""Line-oriented JSON subprocess protocol for external models.

Wire format, one JSON object per line, UTF-8, no embedded newlines:

  request:  {"id": N, "op": "hello"|"classify"|"segment"|"infill",
             "image_path": str, "mask": {...}, "prompt": str, "out_path": str}
            (keys beyond id/op only where the op needs them; mask inline
            as RLE JSON, images always by filesystem path)
  response: {"id": N, "ok": bool, "error": str?, "payload": {...}}

The engine opens with {"id": 0, "op": "hello"} and the tool must answer
before any other traffic; the hello payload declares name, version, the
supported ops, and whether the tool is deterministic. Exactly one
request is in flight per process; ids increase monotonically and every
response must echo the id of the outstanding request. Parallelism comes
from a pool of identical processes, never from pipelining.
"""

from __future__ import annotations

import json
import queue
import subprocess
import threading
from dataclasses import dataclass
from pathlib import Path

from .errors import (
    HandshakeTimeout,
    ProtocolViolation,
    SpawnFailed,
    ToolError,
)
from .imagecore import PixelMask

HANDSHAKE_TIMEOUT = 10.0
CALL_TIMEOUT = 120.0

_EOF = object()
_POOL_DEAD = object()


@dataclass(frozen=True)
class ToolInfo:
    name: str
    version: str
    ops: tuple[str, ...]
    deterministic: bool


class ExternalTool:
    """One spawned tool process with the hello handshake completed."""

    def __init__(
        self,
        command: list[str],
        env: dict | None = None,
        call_timeout: float = CALL_TIMEOUT,
        handshake_timeout: float = HANDSHAKE_TIMEOUT,
    ):
        self.command = list(command)
        self.call_timeout = call_timeout
        self._lock = threading.Lock()
        self._next_id = 0
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                encoding="utf-8",
                env=env,
            )
        except OSError as exc:
            raise SpawnFailed(f"{self.command}: {exc}") from exc
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()
        try:
            response = self._roundtrip({"id": 0, "op": "hello"}, handshake_timeout)
        except ToolError as exc:
            self.close()
            if exc.kind == "timeout":
                raise HandshakeTimeout(str(exc)) from exc
            raise ProtocolViolation(str(exc)) from exc
        payload = response.get("payload") or {}
        try:
            self.info = ToolInfo(
                name=str(payload["name"]),
                version=str(payload.get("version", "")),
                ops=tuple(payload["ops"]),
                deterministic=bool(payload["deterministic"]),
            )
        except (KeyError, TypeError) as exc:
            self.close()
            raise ProtocolViolation(f"bad hello payload: {payload!r}") from exc

    @property
    def name(self) -> str:
        return self.info.name

    def _read_loop(self):
        stdout = self._proc.stdout
        assert stdout is not None
        for line in stdout:
            self._lines.put(line)
        self._lines.put(_EOF)

    def _roundtrip(self, request: dict, timeout: float) -> dict:
        if self._proc.poll() is not None:
            raise ToolError("crashed", "tool process has exited")
        line = json.dumps(request, sort_keys=True, separators=(",", ":"))
        try:
            assert self._proc.stdin is not None
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ToolError("crashed", f"write failed: {exc}") from exc
        try:
            raw = self._lines.get(timeout=timeout)
        except queue.Empty:
            raise ToolError("timeout", f"no response within {timeout}s")
        if raw is _EOF:
            raise ToolError("crashed", "tool exited mid-call")
        try:
            response = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ToolError("malformed", f"unparseable response line: {raw!r}") from exc
        if not isinstance(response, dict) or response.get("id") != request["id"]:
            raise ToolError(
                "malformed",
                f"response id {response.get('id')!r} != request id {request['id']!r}",
            )
        if not response.get("ok"):
            raise ToolError("remote-error", str(response.get("error", "unspecified")))
        return response

    def call(self, op: str, **fields) -> dict:
        """Send one request and wait for its response payload."""
        if op not in self.info.ops:
            raise ToolError("remote-error", f"tool {self.name!r} does not offer {op!r}")
        with self._lock:
            self._next_id += 1
            request = {"id": self._next_id, "op": op, **fields}
            response = self._roundtrip(request, self.call_timeout)
        return response.get("payload") or {}

    def alive(self) -> bool:
        return self._proc.poll() is None

    def close(self):
        if self._proc.poll() is None:
            try:
                if self._proc.stdin:
                    self._proc.stdin.close()
                self._proc.wait(timeout=5)
            except (OSError, subprocess.TimeoutExpired):
                self._proc.kill()
                self._proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def tool_spawn(
    command: list[str],
    env: dict | None = None,
    call_timeout: float = CALL_TIMEOUT,
    handshake_timeout: float = HANDSHAKE_TIMEOUT,
) -> ExternalTool:
    return ExternalTool(
        command, env=env, call_timeout=call_timeout, handshake_timeout=handshake_timeout
    )


def call_classify(tool: ExternalTool, image_path: str | Path) -> dict:
    return tool.call("classify", image_path=str(image_path))


def call_segment(tool: ExternalTool, image_path: str | Path, prompt: str | None = None) -> list:
    fields: dict = {"image_path": str(image_path)}
    if prompt is not None:
        fields["prompt"] = prompt
    payload = tool.call("segment", **fields)
    segments = payload.get("segments")
    if not isinstance(segments, list):
        raise ToolError("malformed", f"segment payload missing segments: {payload!r}")
    return segments


def call_infill(
    tool: ExternalTool,
    image_path: str | Path,
    mask: PixelMask,
    out_path: str | Path,
    prompt: str | None = None,
) -> str:
    fields: dict = {
        "image_path": str(image_path),
        "mask": mask.to_json_dict(),
        "out_path": str(out_path),
    }
    if prompt is not None:
        fields["prompt"] = prompt
    payload = tool.call("infill", **fields)
    result = payload.get("out_path")
    if not result:
        raise ToolError("malformed", f"infill payload missing out_path: {payload!r}")
    return str(result)


class ToolPool:
    """Hands out exclusive process leases; restarts crashed members.

    The restart budget covers the whole run (default 2); once spent,
    every further lease request fails with ToolError("unavailable") so
    remaining candidates degrade to recorded failures instead of
    aborting the scan.
    """

    def __init__(
        self,
        command: list[str],
        size: int = 1,
        max_restarts: int = 2,
        env: dict | None = None,
        call_timeout: float = CALL_TIMEOUT,
    ):
        self.command = list(command)
        self._env = env
        self._call_timeout = call_timeout
        self._max_restarts = max_restarts
        self._restarts = 0
        self._lock = threading.Lock()
        self._idle: queue.Queue = queue.Queue()
        self._members: list[ExternalTool] = []
        for _ in range(max(1, size)):
            tool = self._spawn()
            self._members.append(tool)
            self._idle.put(tool)
        self.info = self._members[0].info

    def _spawn(self) -> ExternalTool:
        return tool_spawn(self.command, env=self._env, call_timeout=self._call_timeout)

    def call(self, op: str, **fields) -> dict:
        tool = self._lease()
        try:
            payload = tool.call(op, **fields)
        except ToolError as exc:
            if exc.kind in ("crashed", "timeout"):
                tool.close()
                self._replace(tool)
            else:
                self._idle.put(tool)
            raise
        self._idle.put(tool)
        return payload

    def _lease(self) -> ExternalTool:
        while True:
            item = self._idle.get()
            if item is _POOL_DEAD:
                self._idle.put(_POOL_DEAD)  # keep waking other waiters
                raise ToolError("unavailable", "no healthy tool process left")
            if item.alive():
                return item
            self._replace(item)

    def _replace(self, dead: ExternalTool) -> None:
        """Swap a dead member for a fresh one, or poison the pool when the
        restart budget is spent and no member remains."""
        fresh = None
        with self._lock:
            if dead in self._members:
                self._members.remove(dead)
            if self._restarts < self._max_restarts:
                self._restarts += 1
                try:
                    fresh = self._spawn()
                except (SpawnFailed, HandshakeTimeout, ProtocolViolation):
                    fresh = None
            if fresh is not None:
                self._members.append(fresh)
            pool_empty = not self._members
        if fresh is not None:
            self._idle.put(fresh)
        elif pool_empty:
            self._idle.put(_POOL_DEAD)

    def close(self):
        with self._lock:
            members = list(self._members)
            self._members.clear()
        for tool in members:
            tool.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
