import io
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from cofscan_adapter import AdapterConfig, serve
from cofscan_adapter.hooks import (
    constant_classifier,
    decode_mask,
    dominant_color_classifier,
    echo_infill,
    full_image_segmenter,
    parse_hex,
    solid_infill,
)


def run_requests(args: list[str], lines: list[str]) -> list[dict]:
    proc = subprocess.run(
        [sys.executable, "-m", "cofscan_adapter", *args],
        input="".join(line + "\n" for line in lines),
        capture_output=True,
        text=True,
        timeout=30,
    )
    assert proc.returncode == 0, proc.stderr
    return [json.loads(line) for line in proc.stdout.splitlines() if line.strip()]


def save_png(path: Path, arr: np.ndarray) -> None:
    Image.fromarray(arr.astype(np.uint8), mode="RGB").save(path, format="PNG")


class TestProtocolLoop:
    def test_hello_advertises_configured_ops(self):
        responses = run_requests(
            ["--classify", "constant", "--label", "x", "--infill", "echo"],
            [json.dumps({"id": 0, "op": "hello"})],
        )
        assert responses == [
            {
                "id": 0,
                "ok": True,
                "payload": {
                    "name": "cofscan-adapter",
                    "version": responses[0]["payload"]["version"],
                    "ops": ["classify", "infill"],
                    "deterministic": True,
                },
            }
        ]

    def test_one_response_per_request_in_order(self, tmp_path):
        image = tmp_path / "img.png"
        save_png(image, np.zeros((4, 4, 3)))
        lines = [json.dumps({"id": 0, "op": "hello"})]
        for i in range(1, 6):
            lines.append(json.dumps({"id": i, "op": "classify", "image_path": str(image)}))
        responses = run_requests(["--classify", "constant", "--label", "k"], lines)
        assert [r["id"] for r in responses] == [0, 1, 2, 3, 4, 5]
        assert all(r["ok"] for r in responses)

    def test_malformed_line_answers_parse_error_and_survives(self, tmp_path):
        image = tmp_path / "img.png"
        save_png(image, np.zeros((2, 2, 3)))
        responses = run_requests(
            ["--classify", "constant"],
            [
                "this is garbage",
                json.dumps({"id": 5, "op": "classify", "image_path": str(image)}),
            ],
        )
        assert responses[0] == {"id": -1, "ok": False, "error": "parse"}
        assert responses[1]["ok"] and responses[1]["id"] == 5

    def test_unsupported_op(self):
        responses = run_requests(
            ["--classify", "constant"],
            [json.dumps({"id": 1, "op": "segment", "image_path": "x"})],
        )
        assert responses[0]["ok"] is False
        assert "unsupported" in responses[0]["error"]

    def test_missing_palette_file_fails_at_startup(self):
        proc = subprocess.run(
            [
                sys.executable,
                "-m",
                "cofscan_adapter",
                "--classify",
                "dominant-color",
                "--palette",
                "/nonexistent.json",
            ],
            input="",
            capture_output=True,
            text=True,
        )
        assert proc.returncode != 0

    def test_hook_io_error_is_an_error_response(self, tmp_path):
        # classify against a missing image: the hook raises, the loop
        # answers ok=false and keeps serving
        palette = tmp_path / "palette.json"
        palette.write_text('{"#ff0000": "red"}')
        image = tmp_path / "ok.png"
        save_png(image, np.zeros((2, 2, 3)))
        responses = run_requests(
            ["--classify", "dominant-color", "--palette", str(palette)],
            [
                json.dumps({"id": 1, "op": "classify", "image_path": "/missing.png"}),
                json.dumps({"id": 2, "op": "classify", "image_path": str(image)}),
            ],
        )
        assert responses[0]["ok"] is False
        assert responses[1]["ok"] is True

    def test_broken_request_to_valid_hook(self, tmp_path):
        responses = run_requests(
            ["--classify", "constant"],
            [json.dumps({"id": 2, "op": "classify"})],  # constant ignores paths
        )
        assert responses[0]["ok"] is True

    def test_missing_config_exits_nonzero(self):
        proc = subprocess.run(
            [sys.executable, "-m", "cofscan_adapter"],
            input="",
            capture_output=True,
            text=True,
        )
        assert proc.returncode != 0


class TestHooks:
    def test_dominant_color_majority_and_tie(self, tmp_path):
        palette = {(255, 0, 0): "red", (0, 0, 255): "blue"}
        classify = dominant_color_classifier(palette, "none")
        arr = np.zeros((1, 4, 3))
        arr[0, :3] = (255, 0, 0)
        arr[0, 3] = (0, 0, 255)
        save_png(tmp_path / "maj.png", arr)
        assert classify({"image_path": str(tmp_path / "maj.png")}) == {"class": "red"}

        tie = np.zeros((1, 4, 3))
        tie[0, :2] = (255, 0, 0)
        tie[0, 2:] = (0, 0, 255)
        save_png(tmp_path / "tie.png", tie)
        # smallest RGB wins the tie: (0,0,255) -> blue
        assert classify({"image_path": str(tmp_path / "tie.png")}) == {"class": "blue"}

        gray = np.full((2, 2, 3), 9)
        save_png(tmp_path / "gray.png", gray)
        assert classify({"image_path": str(tmp_path / "gray.png")}) == {"class": "none"}

    def test_constant(self):
        assert constant_classifier("z")({}) == {"class": "z"}

    def test_echo_infill_copies_bytes(self, tmp_path):
        src = tmp_path / "in.png"
        save_png(src, np.arange(12).reshape(2, 2, 3))
        out = tmp_path / "out.png"
        payload = echo_infill({"image_path": str(src), "out_path": str(out)})
        assert payload == {"out_path": str(out)}
        assert out.read_bytes() == src.read_bytes()

    def test_solid_infill_fills_mask(self, tmp_path):
        src = tmp_path / "in.png"
        save_png(src, np.zeros((2, 3, 3)))
        out = tmp_path / "out.png"
        mask = {"width": 3, "height": 2, "runs": [1, 2, 3]}
        solid_infill((0, 255, 0))(
            {"image_path": str(src), "mask": mask, "out_path": str(out)}
        )
        with Image.open(out) as im:
            arr = np.asarray(im)
        grid = decode_mask(mask)
        assert (arr[grid] == (0, 255, 0)).all()
        assert (arr[~grid] == 0).all()

    def test_decode_mask_validates_total(self):
        with pytest.raises(ValueError):
            decode_mask({"width": 2, "height": 2, "runs": [9]})

    def test_full_image_segment(self, tmp_path):
        src = tmp_path / "in.png"
        save_png(src, np.zeros((3, 5, 3)))
        payload = full_image_segmenter("scene")({"image_path": str(src)})
        seg = payload["segments"][0]
        assert seg["label"] == "scene"
        assert seg["mask"] == {"width": 5, "height": 3, "runs": [0, 15]}

    def test_dominant_color_segmenter(self, tmp_path):
        from cofscan_adapter.hooks import dominant_color_segmenter, encode_mask

        arr = np.zeros((2, 3, 3))
        arr[0] = (9, 9, 9)
        arr[1, 0] = (9, 9, 9)
        src = tmp_path / "img.png"
        save_png(src, arr)
        payload = dominant_color_segmenter()({"image_path": str(src)})
        seg = payload["segments"][0]
        assert seg["label"] == "background"
        # (9,9,9) covers row 0 and first pixel of row 1: runs 0,4,2
        assert seg["mask"] == {"width": 3, "height": 2, "runs": [0, 4, 2]}

    def test_encode_mask_round_trips_through_decode(self):
        from cofscan_adapter.hooks import encode_mask

        rng = np.random.default_rng(4)
        for _ in range(25):
            grid = rng.random((int(rng.integers(1, 12)), int(rng.integers(1, 12)))) < 0.5
            assert (decode_mask(encode_mask(grid)) == grid).all()

    def test_parse_hex(self):
        assert parse_hex("#0a0B0c") == (10, 11, 12)
        with pytest.raises(ValueError):
            parse_hex("red")


class TestServeLibrary:
    def test_in_process_loop(self):
        config = AdapterConfig(name="lib", hooks={"classify": lambda req: {"class": "q"}})
        stdin = io.StringIO(
            json.dumps({"id": 0, "op": "hello"})
            + "\n"
            + json.dumps({"id": 1, "op": "classify", "image_path": "x"})
            + "\n"
        )
        stdout = io.StringIO()
        assert serve(config, stdin=stdin, stdout=stdout) == 0
        lines = [json.loads(l) for l in stdout.getvalue().splitlines()]
        assert lines[0]["payload"]["name"] == "lib"
        assert lines[1]["payload"] == {"class": "q"}

    def test_failing_hook_reports_error(self):
        def bad(req):
            raise RuntimeError("boom")

        config = AdapterConfig(hooks={"classify": bad})
        stdin = io.StringIO(json.dumps({"id": 1, "op": "classify"}) + "\n")
        stdout = io.StringIO()
        serve(config, stdin=stdin, stdout=stdout)
        response = json.loads(stdout.getvalue())
        assert response["ok"] is False
        assert "boom" in response["error"]
