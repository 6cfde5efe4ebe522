import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from conftest import fixture_row, make_fixture_run
from cofscan.cli import main
from cofscan.datasets import gen_colored_mnist


@pytest.fixture
def runner():
    return CliRunner()


def watermark_mix_run(tmp_path) -> Path:
    rows = [
        fixture_row(image_id="i1", label="watermark"),
        fixture_row(image_id="i2", label="watermark"),
        fixture_row(image_id="i3", label="grass"),
        fixture_row(image_id="i4", label="zebra"),
    ]
    return make_fixture_run(tmp_path / "t1run", rows)


class TestMakeDataset:
    def test_colored_mnist_counts(self, runner, tmp_path):
        result = runner.invoke(
            main, ["make-dataset", "colored-mnist", "--n", "2", "--out", str(tmp_path / "ds")]
        )
        assert result.exit_code == 0, result.output
        assert "wrote 20 images" in result.output
        assert len(list((tmp_path / "ds" / "images").glob("*.png"))) == 20

    def test_watermark_summary(self, runner, tmp_path):
        result = runner.invoke(
            main,
            [
                "make-dataset",
                "watermark",
                "--n-per-class",
                "40",
                "--fraction",
                "0.1",
                "--stratified",
                "--out",
                str(tmp_path / "ds"),
            ],
        )
        assert result.exit_code == 0, result.output
        assert "watermarked: 4" in result.output
        assert "top-left: 1" in result.output

    def test_unknown_kind_exits_2(self, runner, tmp_path):
        result = runner.invoke(main, ["make-dataset", "voronoi", "--out", str(tmp_path)])
        assert result.exit_code == 2

    def test_bad_fraction_exits_2(self, runner, tmp_path):
        result = runner.invoke(
            main,
            ["make-dataset", "watermark", "--fraction", "1.5", "--out", str(tmp_path / "x")],
        )
        assert result.exit_code == 2


def write_scan_config(tmp_path, dataset, out_name="run", **extra) -> Path:
    config = {
        "dataset": str(dataset),
        "out_dir": str(tmp_path / out_name),
        "segmenter": {"kind": "dominant_color"},
        "classifier": {"kind": "dominant_color_rule", "from_dataset": True},
        "edits": [{"edit_id": "next", "kind": "solid_fill", "color": "next-class"}],
        **extra,
    }
    path = tmp_path / f"{out_name}.json"
    path.write_text(json.dumps(config))
    return path


class TestScanCommand:
    def test_scan_fixture(self, runner, tmp_path):
        gen_colored_mnist(tmp_path / "ds", n_per_class=1, seed=0)
        config = write_scan_config(tmp_path, tmp_path / "ds")
        result = runner.invoke(main, ["scan", str(config)])
        assert result.exit_code == 0, result.output
        assert "10 processed" in result.output
        assert (tmp_path / "run" / "evaluations.jsonl").is_file()
        assert (tmp_path / "run" / "manifest.json").is_file()

    def test_rerun_byte_identical(self, runner, tmp_path):
        gen_colored_mnist(tmp_path / "ds", n_per_class=1, seed=1)
        config = write_scan_config(tmp_path, tmp_path / "ds")
        assert runner.invoke(main, ["scan", str(config)]).exit_code == 0
        first = (tmp_path / "run" / "evaluations.jsonl").read_bytes()
        assert runner.invoke(main, ["scan", str(config)]).exit_code == 0
        assert (tmp_path / "run" / "evaluations.jsonl").read_bytes() == first

    def test_unreadable_dataset_exits_2(self, runner, tmp_path):
        config = write_scan_config(tmp_path, tmp_path / "nowhere")
        result = runner.invoke(main, ["scan", str(config)])
        assert result.exit_code == 2

    def test_bad_config_exits_2(self, runner, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        assert runner.invoke(main, ["scan", str(path)]).exit_code == 2


class TestCofCommand:
    def test_share_mode_fixture(self, runner, tmp_path):
        run = watermark_mix_run(tmp_path)
        result = runner.invoke(main, ["cof", str(run), "--mode", "share"])
        assert result.exit_code == 0, result.output
        lines = result.output.splitlines()
        assert any("watermark" in l and "50.0%" in l for l in lines)
        assert sum("25.0%" in l for l in lines) == 2

    def test_conditional_min_support(self, runner, tmp_path):
        rows = [fixture_row(image_id=f"i{k}", label="rare") for k in range(19)]
        run = make_fixture_run(tmp_path / "run", rows)
        result = runner.invoke(
            main, ["cof", str(run), "--mode", "conditional", "--min-support", "20"]
        )
        assert result.exit_code == 1  # all rows dropped
        kept = runner.invoke(
            main, ["cof", str(run), "--mode", "conditional", "--min-support", "19"]
        )
        assert kept.exit_code == 0
        assert "100.0%" in kept.output

    def test_by_class_top_k(self, runner, tmp_path):
        rows = []
        idx = 0
        for label, n in (("car", 49), ("motorcycle", 24), ("truck", 18), ("tree", 2)):
            for _ in range(n):
                rows.append(fixture_row(image_id=f"i{idx}", label=label, orig="racing", edited="other"))
                idx += 1
        run = make_fixture_run(tmp_path / "run", rows)
        result = runner.invoke(
            main, ["cof", str(run), "--mode", "counts", "--by-class", "--top-k", "3", "--format", "json"]
        )
        assert result.exit_code == 0, result.output
        parsed = json.loads(result.output)
        rows_out = parsed["by_class"]["racing"]["rows"]
        assert [(r["label"], r["count"]) for r in rows_out] == [
            ("car", 49),
            ("motorcycle", 24),
            ("truck", 18),
        ]

    def test_by_position(self, runner, tmp_path):
        rows = [
            fixture_row(image_id=f"i{k}", label="watermark", pos=pos)
            for k, pos in enumerate(["top-left", "top-left", "bottom-right"])
        ]
        run = make_fixture_run(tmp_path / "run", rows)
        result = runner.invoke(main, ["cof", str(run), "--by-position", "watermark"])
        assert result.exit_code == 0
        assert "66.7%" in result.output and "33.3%" in result.output

    def test_corrected_only_without_gt_exits_2(self, runner, tmp_path):
        run = watermark_mix_run(tmp_path)
        result = runner.invoke(main, ["cof", str(run), "--corrected-only"])
        assert result.exit_code == 2
        assert "ground" in result.output.lower()

    def test_conflicting_flags_exit_2(self, runner, tmp_path):
        run = watermark_mix_run(tmp_path)
        result = runner.invoke(
            main, ["cof", str(run), "--by-class", "--by-position", "watermark"]
        )
        assert result.exit_code == 2

    def test_csv_output_to_file(self, runner, tmp_path):
        run = watermark_mix_run(tmp_path)
        out = tmp_path / "table.csv"
        result = runner.invoke(
            main, ["cof", str(run), "--format", "csv", "--output", str(out)]
        )
        assert result.exit_code == 0
        assert out.read_text().splitlines()[0] == "label,count,frequency,support"

    def test_cli_output_matches_library_exactly(self, runner, tmp_path):
        from cofscan import cof
        from cofscan.cfsearch import load_run

        run_dir = watermark_mix_run(tmp_path)
        result = runner.invoke(main, ["cof", str(run_dir), "--mode", "share", "--format", "json"])
        run = load_run(run_dir)
        table = cof.cof_table(
            run.evaluations,
            cof.CofQuery(mode="share"),
            total_images=run.population,
            flips_only=run.flips_only,
        )
        assert json.loads(result.output) == table.to_json_dict()


class TestExplainCommand:
    def test_triptych_output(self, runner, tmp_path):
        gen_colored_mnist(tmp_path / "ds", n_per_class=1, seed=0)
        config = write_scan_config(tmp_path, tmp_path / "ds")
        assert runner.invoke(main, ["scan", str(config)]).exit_code == 0
        result = runner.invoke(main, ["explain", str(tmp_path / "run"), "4_0000"])
        assert result.exit_code == 0, result.output
        assert "background: 4 -> 5" in result.output
        assert "original:" in result.output
        for line in result.output.splitlines():
            if ":" in line and ("original" in line or "overlay" in line or "edited" in line):
                path = Path(line.split(": ", 1)[1].strip())
                assert path.is_file(), line

    def test_no_counterfactuals_exits_1(self, runner, tmp_path):
        rows = [fixture_row(image_id="calm", edited="a", orig="a")]
        run = make_fixture_run(tmp_path / "run", rows)
        result = runner.invoke(main, ["explain", str(run), "calm"])
        assert result.exit_code == 1
        assert "no counterfactuals" in result.output

    def test_unknown_image_exits_2(self, runner, tmp_path):
        run = watermark_mix_run(tmp_path)
        assert runner.invoke(main, ["explain", str(run), "ghost"]).exit_code == 2

    def test_live_mode_runs_one_image(self, runner, tmp_path):
        gen_colored_mnist(tmp_path / "ds", n_per_class=1, seed=6)
        config = write_scan_config(tmp_path, tmp_path / "ds")
        result = runner.invoke(main, ["explain", str(config), "7_0000", "--live"])
        assert result.exit_code == 0, result.output
        assert "background: 7 -> 8" in result.output

    def test_scan_flips_only_flag(self, runner, tmp_path):
        gen_colored_mnist(tmp_path / "ds", n_per_class=1, seed=7)
        config = write_scan_config(tmp_path, tmp_path / "ds")
        result = runner.invoke(main, ["scan", str(config), "--flips-only"])
        assert result.exit_code == 0, result.output
        manifest = json.loads((tmp_path / "run" / "manifest.json").read_text())
        assert manifest["flips_only"] is True


class TestServeCommand:
    def test_bad_run_dir_exits_2(self, runner, tmp_path):
        result = runner.invoke(main, ["serve", str(tmp_path)])
        assert result.exit_code == 2

    def test_bad_bind_exits_2(self, runner, tmp_path):
        run = watermark_mix_run(tmp_path)
        result = runner.invoke(main, ["serve", str(run), "--bind", "nonsense"])
        assert result.exit_code == 2
