import sys
from pathlib import Path

import pytest

from conftest import adapter_command, random_image
from cofscan import conformance
from cofscan.errors import HandshakeTimeout, ProtocolViolation, SpawnFailed, ToolError
from cofscan.toolproto import ToolPool, tool_spawn

TOOLS = Path(__file__).parent / "tools"


def fixture_tool(name: str, *args: str) -> list[str]:
    return [sys.executable, str(TOOLS / name), *args]


class TestSpawnAndHandshake:
    def test_echo_hello(self):
        with tool_spawn(fixture_tool("echo_tool.py")) as tool:
            assert tool.info.name == "echo"
            assert tool.info.ops == ("classify",)
            assert tool.info.deterministic

    def test_missing_binary(self):
        with pytest.raises(SpawnFailed):
            tool_spawn(["/nonexistent/binary"])

    def test_garbage_handshake(self):
        with pytest.raises(ProtocolViolation):
            tool_spawn(fixture_tool("misc_tools.py", "garbage"))

    def test_handshake_timeout(self):
        # "slow" answers hello fine; a tool that never answers is simulated
        # with a shell that swallows stdin
        with pytest.raises(HandshakeTimeout):
            tool_spawn([sys.executable, "-c", "import time; time.sleep(3600)"], handshake_timeout=0.5)


class TestCalls:
    def test_classify_roundtrip(self, tmp_path, rng):
        image_path = tmp_path / "x.png"
        random_image(rng, 4, 4).save(image_path)
        with tool_spawn(fixture_tool("echo_tool.py", "zebra")) as tool:
            payload = tool.call("classify", image_path=str(image_path))
            assert payload == {"class": "zebra"}

    def test_unadvertised_op_refused_engine_side(self, tmp_path):
        with tool_spawn(fixture_tool("echo_tool.py")) as tool:
            with pytest.raises(ToolError) as err:
                tool.call("segment", image_path="whatever")
            assert err.value.kind == "remote-error"

    def test_crash_mid_call(self):
        with tool_spawn(fixture_tool("crashy_tool.py", "2")) as tool:
            tool.call("classify", image_path="a")
            with pytest.raises(ToolError) as err:
                tool.call("classify", image_path="b")
            assert err.value.kind == "crashed"

    def test_out_of_order_id(self):
        with tool_spawn(fixture_tool("misc_tools.py", "wrong-id")) as tool:
            with pytest.raises(ToolError) as err:
                tool.call("classify", image_path="a")
            assert err.value.kind == "malformed"

    def test_call_timeout(self):
        with tool_spawn(fixture_tool("misc_tools.py", "slow"), call_timeout=0.5) as tool:
            with pytest.raises(ToolError) as err:
                tool.call("classify", image_path="a")
            assert err.value.kind == "timeout"


class TestPool:
    def test_restart_budget(self):
        pool = ToolPool(fixture_tool("crashy_tool.py", "2"), size=1, max_restarts=2)
        try:
            outcomes = []
            for _ in range(8):
                try:
                    pool.call("classify", image_path="x")
                    outcomes.append("ok")
                except ToolError as exc:
                    outcomes.append(exc.kind)
            # each process serves one call then dies on the second;
            # two restarts allowed -> 3 processes, then unavailable
            assert outcomes == [
                "ok",
                "crashed",
                "ok",
                "crashed",
                "ok",
                "crashed",
                "unavailable",
                "unavailable",
            ]
        finally:
            pool.close()

    def test_pool_of_two_processes(self, tmp_path, rng):
        image_path = tmp_path / "x.png"
        random_image(rng, 4, 4).save(image_path)
        pool = ToolPool(fixture_tool("echo_tool.py", "ok"), size=2)
        try:
            for _ in range(6):
                assert pool.call("classify", image_path=str(image_path))["class"] == "ok"
        finally:
            pool.close()


class TestConformanceSuite:
    def test_bundled_adapter_passes(self, tmp_path):
        palette = tmp_path / "palette.json"
        palette.write_text('{"#ff0000": "red", "#0000ff": "blue"}')
        checks = conformance.run_conformance(
            adapter_command(
                "--classify",
                "dominant-color",
                "--palette",
                str(palette),
                "--infill",
                "echo",
                "--segment",
                "full-image",
            )
        )
        report = conformance.format_report(checks)
        assert all(c.ok for c in checks), report
        names = {c.name for c in checks}
        assert {"hello", "classify-roundtrip", "segment-roundtrip", "infill-roundtrip", "malformed-line"} <= names

    def test_constant_adapter_passes(self):
        checks = conformance.run_conformance(adapter_command("--classify", "constant", "--label", "zz"))
        assert all(c.ok for c in checks), conformance.format_report(checks)

    def test_garbage_tool_fails(self):
        checks = conformance.run_conformance(fixture_tool("misc_tools.py", "garbage"))
        assert not checks[0].ok
