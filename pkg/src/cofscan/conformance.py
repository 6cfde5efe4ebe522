"""Engine-side conformance checks for external tool adapters.

Run against any command implementing the subprocess protocol; every
check streams through a real spawned process, so passing here means the
tool will behave under a real scan. Checks degrade to recorded
failures, never exceptions, so a report is always produced.
"""

from __future__ import annotations

import json
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CofscanError, ToolError
from .imagecore import PixelMask, RasterImage, rle_encode
from .toolproto import ExternalTool, tool_spawn


@dataclass
class ConformanceCheck:
    name: str
    ok: bool
    detail: str = ""


def _test_image(path: Path) -> RasterImage:
    rng = np.random.default_rng(7)
    arr = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
    image = RasterImage(arr)
    image.save(path)
    return image


def run_conformance(command: list[str], call_timeout: float = 30.0) -> list[ConformanceCheck]:
    checks: list[ConformanceCheck] = []
    try:
        tool = tool_spawn(command, call_timeout=call_timeout)
    except CofscanError as exc:
        return [ConformanceCheck("hello", False, str(exc))]
    with tool, tempfile.TemporaryDirectory() as tmp:
        tmpdir = Path(tmp)
        info = tool.info
        checks.append(
            ConformanceCheck(
                "hello",
                bool(info.name) and bool(info.ops),
                f"name={info.name!r} ops={info.ops} deterministic={info.deterministic}",
            )
        )

        image_path = tmpdir / "probe.png"
        image = _test_image(image_path)

        if "classify" in info.ops:
            checks.append(_check_classify(tool, image_path))
            checks.append(_check_sequential(tool, image_path))
        if "segment" in info.ops:
            checks.append(_check_segment(tool, image_path, image))
        if "infill" in info.ops:
            checks.append(_check_infill(tool, image_path, image, tmpdir))
        checks.append(_check_malformed_line(tool, image_path))
    return checks


def _check_classify(tool: ExternalTool, image_path: Path) -> ConformanceCheck:
    try:
        first = tool.call("classify", image_path=str(image_path))
        second = tool.call("classify", image_path=str(image_path))
    except ToolError as exc:
        return ConformanceCheck("classify-roundtrip", False, str(exc))
    label = first.get("class")
    if not label or not isinstance(label, str):
        return ConformanceCheck("classify-roundtrip", False, f"bad payload {first!r}")
    if tool.info.deterministic and second.get("class") != label:
        return ConformanceCheck(
            "classify-roundtrip", False, "declared deterministic but answers drifted"
        )
    return ConformanceCheck("classify-roundtrip", True, f"class={label!r}")


def _check_sequential(tool: ExternalTool, image_path: Path) -> ConformanceCheck:
    try:
        for _ in range(10):
            tool.call("classify", image_path=str(image_path))
    except ToolError as exc:
        return ConformanceCheck("sequential-calls", False, str(exc))
    return ConformanceCheck("sequential-calls", True, "10 in-order round trips")


def _check_segment(tool: ExternalTool, image_path: Path, image: RasterImage) -> ConformanceCheck:
    try:
        payload = tool.call("segment", image_path=str(image_path))
        segments = payload["segments"]
        for item in segments:
            mask = PixelMask.from_json_dict(item["mask"])
            if (mask.width, mask.height) != (image.width, image.height):
                return ConformanceCheck(
                    "segment-roundtrip", False, "mask dimensions disagree with image"
                )
            if not item.get("label"):
                return ConformanceCheck("segment-roundtrip", False, "segment without label")
    except (ToolError, CofscanError, KeyError, TypeError) as exc:
        return ConformanceCheck("segment-roundtrip", False, repr(exc))
    return ConformanceCheck("segment-roundtrip", True, f"{len(segments)} segments")


def _check_infill(tool: ExternalTool, image_path: Path, image: RasterImage, tmpdir: Path) -> ConformanceCheck:
    grid = np.zeros((image.height, image.width), dtype=bool)
    grid[2:6, 3:9] = True
    out_path = tmpdir / "infill_out.png"
    try:
        payload = tool.call(
            "infill",
            image_path=str(image_path),
            mask=rle_encode(grid).to_json_dict(),
            out_path=str(out_path),
        )
        result = Path(payload["out_path"])
        edited = RasterImage.load(result)
    except (ToolError, CofscanError, KeyError, OSError) as exc:
        return ConformanceCheck("infill-roundtrip", False, repr(exc))
    if (edited.width, edited.height) != (image.width, image.height):
        return ConformanceCheck("infill-roundtrip", False, "result dimensions changed")
    return ConformanceCheck("infill-roundtrip", True, str(result))


def _check_malformed_line(tool: ExternalTool, image_path: Path) -> ConformanceCheck:
    """A garbage line must produce one error response, not kill the tool."""
    try:
        assert tool._proc.stdin is not None
        tool._proc.stdin.write("this is not json\n")
        tool._proc.stdin.flush()
        raw = tool._lines.get(timeout=10.0)
        if not isinstance(raw, str):
            return ConformanceCheck("malformed-line", False, "tool died on garbage input")
        response = json.loads(raw)
        if response.get("ok"):
            return ConformanceCheck("malformed-line", False, "garbage accepted as ok")
    except Exception as exc:
        return ConformanceCheck("malformed-line", False, repr(exc))
    # the process must still answer real requests afterwards
    if "classify" in tool.info.ops:
        try:
            tool.call("classify", image_path=str(image_path))
        except ToolError as exc:
            return ConformanceCheck("malformed-line", False, f"tool unusable after garbage: {exc}")
    return ConformanceCheck("malformed-line", True, "error response, process alive")


def format_report(checks: list[ConformanceCheck]) -> str:
    lines = []
    for check in checks:
        status = "PASS" if check.ok else "FAIL"
        lines.append(f"{status} {check.name}: {check.detail}")
    return "\n".join(lines)
