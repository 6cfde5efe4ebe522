import math

import numpy as np
import pytest

from conftest import nonempty_random_mask, random_image
from cofscan.editors import (
    EditSpec,
    edit_gaussian_blur,
    edit_mean_fill,
    edit_solid_fill,
)
from cofscan.errors import ConfigError, DimensionMismatch, EmptyMask
from cofscan.imagecore import RasterImage, rle_decode, rle_encode


def blur_oracle(arr: np.ndarray, sigma: float) -> np.ndarray:
    """Direct 2-D kernel summation with clamp-to-edge indexing."""
    radius = math.ceil(3.0 * sigma)
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    k1 = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    k1 /= k1.sum()
    k2 = np.outer(k1, k1)
    h, w = arr.shape[:2]
    out = np.zeros_like(arr, dtype=np.float64)
    for y in range(h):
        for x in range(w):
            acc = np.zeros(3)
            for dy in range(-radius, radius + 1):
                for dx in range(-radius, radius + 1):
                    sy = min(max(y + dy, 0), h - 1)
                    sx = min(max(x + dx, 0), w - 1)
                    acc += k2[dy + radius, dx + radius] * arr[sy, sx]
            out[y, x] = acc
    return out


class TestGaussianBlur:
    def test_constant_image_is_identity(self, rng):
        arr = np.full((10, 12, 3), 137, dtype=np.uint8)
        image = RasterImage(arr)
        mask = nonempty_random_mask(rng, 12, 10)
        assert edit_gaussian_blur(image, mask, 2.0) == image

    def test_empty_mask_is_identity(self, rng):
        image = random_image(rng, 8, 8)
        empty = rle_encode(np.zeros((8, 8), dtype=bool))
        assert edit_gaussian_blur(image, empty, 1.5) == image

    def test_outside_mask_untouched(self, rng):
        for _ in range(10):
            image = random_image(rng, 16, 12)
            mask = nonempty_random_mask(rng, 16, 12)
            out = edit_gaussian_blur(image, mask, 1.0)
            grid = rle_decode(mask)
            assert np.array_equal(out.array[~grid], image.array[~grid])

    def test_impulse_matches_kernel_summation(self):
        arr = np.zeros((9, 9, 3), dtype=np.uint8)
        arr[4, 4] = 255
        image = RasterImage(arr)
        full = rle_encode(np.ones((9, 9), dtype=bool))
        out = edit_gaussian_blur(image, full, 1.0)
        expected = blur_oracle(arr.astype(np.float64), 1.0)
        assert np.abs(out.array.astype(np.int64) - np.rint(expected).astype(np.int64)).max() <= 1

    def test_edge_clamping_matches_oracle(self, rng):
        arr = rng.integers(0, 256, size=(7, 8, 3), dtype=np.uint8)
        image = RasterImage(arr)
        full = rle_encode(np.ones((7, 8), dtype=bool))
        out = edit_gaussian_blur(image, full, 1.3)
        expected = blur_oracle(arr.astype(np.float64), 1.3)
        assert np.abs(out.array.astype(np.int64) - np.rint(expected).astype(np.int64)).max() <= 1

    def test_deterministic(self, rng):
        image = random_image(rng, 20, 14)
        mask = nonempty_random_mask(rng, 20, 14)
        assert edit_gaussian_blur(image, mask, 2.5) == edit_gaussian_blur(image, mask, 2.5)

    def test_dimension_mismatch(self, rng):
        with pytest.raises(DimensionMismatch):
            edit_gaussian_blur(random_image(rng, 4, 4), nonempty_random_mask(rng, 5, 4), 1.0)

    def test_default_sigma_scales_with_size(self, rng):
        image = random_image(rng, 100, 40)
        mask = nonempty_random_mask(rng, 100, 40)
        # default sigma for a 100-wide image is 5; explicit must agree
        assert edit_gaussian_blur(image, mask) == edit_gaussian_blur(image, mask, 5.0)
        small = random_image(rng, 10, 10)
        small_mask = nonempty_random_mask(rng, 10, 10)
        assert edit_gaussian_blur(small, small_mask) == edit_gaussian_blur(small, small_mask, 2.0)


class TestSolidFill:
    def test_fills_exactly(self, rng):
        image = random_image(rng, 6, 6)
        mask = nonempty_random_mask(rng, 6, 6)
        out = edit_solid_fill(image, mask, (1, 2, 3))
        grid = rle_decode(mask)
        assert (out.array[grid] == (1, 2, 3)).all()
        assert np.array_equal(out.array[~grid], image.array[~grid])

    def test_empty_mask_identity(self, rng):
        image = random_image(rng, 5, 5)
        empty = rle_encode(np.zeros((5, 5), dtype=bool))
        assert edit_solid_fill(image, empty, (9, 9, 9)) == image

    def test_full_mask_uniform(self, rng):
        image = random_image(rng, 5, 5)
        full = rle_encode(np.ones((5, 5), dtype=bool))
        out = edit_solid_fill(image, full, (7, 8, 9))
        assert (out.array == (7, 8, 9)).all()

    def test_idempotent(self, rng):
        image = random_image(rng, 7, 7)
        mask = nonempty_random_mask(rng, 7, 7)
        once = edit_solid_fill(image, mask, (0, 255, 0))
        assert edit_solid_fill(once, mask, (0, 255, 0)) == once

    def test_color_validation(self, rng):
        image = random_image(rng, 3, 3)
        mask = nonempty_random_mask(rng, 3, 3)
        with pytest.raises(ConfigError):
            edit_solid_fill(image, mask, (256, 0, 0))


class TestMeanFill:
    def test_two_pixel_mean(self):
        arr = np.zeros((1, 2, 3), dtype=np.uint8)
        arr[0, 1] = (10, 20, 30)
        image = RasterImage(arr)
        full = rle_encode(np.ones((1, 2), dtype=bool))
        out = edit_mean_fill(image, full)
        assert (out.array == (5, 10, 15)).all()

    def test_uniform_region_identity(self):
        arr = np.full((4, 4, 3), 50, dtype=np.uint8)
        image = RasterImage(arr)
        mask = rle_encode(np.eye(4, dtype=bool))
        assert edit_mean_fill(image, mask) == image

    def test_rounds_half_up(self):
        arr = np.zeros((1, 2, 3), dtype=np.uint8)
        arr[0, 0] = (1, 1, 1)
        arr[0, 1] = (2, 2, 2)  # mean 1.5 -> 2
        image = RasterImage(arr)
        full = rle_encode(np.ones((1, 2), dtype=bool))
        assert (edit_mean_fill(image, full).array == 2).all()

    def test_matches_bruteforce_mean(self, rng):
        for _ in range(15):
            image = random_image(rng, 9, 9)
            mask = nonempty_random_mask(rng, 9, 9)
            grid = rle_decode(mask)
            sums = [0, 0, 0]
            count = 0
            for y in range(9):
                for x in range(9):
                    if grid[y][x]:
                        count += 1
                        for c in range(3):
                            sums[c] += int(image.array[y, x, c])
            expected = tuple(math.floor(s / count + 0.5) for s in sums)
            out = edit_mean_fill(image, mask)
            assert tuple(out.array[grid][0]) == expected
            assert np.array_equal(out.array[~grid], image.array[~grid])

    def test_empty_mask_raises(self, rng):
        image = random_image(rng, 3, 3)
        empty = rle_encode(np.zeros((3, 3), dtype=bool))
        with pytest.raises(EmptyMask):
            edit_mean_fill(image, empty)

    def test_idempotent(self, rng):
        image = random_image(rng, 8, 8)
        mask = nonempty_random_mask(rng, 8, 8)
        once = edit_mean_fill(image, mask)
        assert edit_mean_fill(once, mask) == once


class TestExternalInfill:
    def test_echo_fixture_is_identity(self, rng, tmp_path):
        from conftest import adapter_command
        from cofscan.editors import edit_external_infill
        from cofscan.toolproto import tool_spawn

        image = random_image(rng, 7, 5)
        src = tmp_path / "in.png"
        image.save(src)
        mask = nonempty_random_mask(rng, 7, 5)
        with tool_spawn(adapter_command("--infill", "echo")) as tool:
            out = edit_external_infill(tool, src, mask, tmp_path / "out.png")
        assert out == image
        assert (tmp_path / "out.png").is_file()  # result stays on disk

    def test_solid_fixture_equals_builtin_fill(self, rng, tmp_path):
        from conftest import adapter_command
        from cofscan.editors import edit_external_infill
        from cofscan.toolproto import tool_spawn

        image = random_image(rng, 8, 8)
        src = tmp_path / "in.png"
        image.save(src)
        mask = nonempty_random_mask(rng, 8, 8)
        with tool_spawn(adapter_command("--infill", "solid", "--color", "#00ff00")) as tool:
            out = edit_external_infill(tool, src, mask, tmp_path / "out.png")
        assert out == edit_solid_fill(image, mask, (0, 255, 0))

    def test_wrong_dimensions_rejected(self, rng, tmp_path):
        import sys
        from pathlib import Path as P

        from cofscan.editors import edit_external_infill
        from cofscan.toolproto import tool_spawn

        tool_script = P(__file__).parent / "tools" / "misc_tools.py"
        image = random_image(rng, 6, 6)
        src = tmp_path / "in.png"
        image.save(src)
        mask = nonempty_random_mask(rng, 6, 6)
        with tool_spawn([sys.executable, str(tool_script), "badinfill"]) as tool:
            with pytest.raises(DimensionMismatch):
                edit_external_infill(tool, src, mask, tmp_path / "out.png")


class TestEditSpec:
    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigError):
            EditSpec(edit_id="x", kind="sharpen")

    def test_bad_sigma_rejected(self):
        with pytest.raises(ConfigError):
            EditSpec(edit_id="b", kind="gaussian_blur", params={"sigma": 0})

    def test_solid_fill_needs_color(self):
        with pytest.raises(ConfigError):
            EditSpec(edit_id="f", kind="solid_fill", params={})

    def test_hex_and_list_colors_accepted(self):
        EditSpec(edit_id="f1", kind="solid_fill", params={"color": "#00ff00"})
        EditSpec(edit_id="f2", kind="solid_fill", params={"color": [0, 255, 0]})
        EditSpec(edit_id="f3", kind="solid_fill", params={"color": "next-class"})

    def test_empty_edit_id_rejected(self):
        with pytest.raises(ConfigError):
            EditSpec(edit_id="", kind="mean_fill")
