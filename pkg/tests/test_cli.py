import json

import pytest

from lisim.cli import COMMAND_KINDS, _resolve_config, build_parser, main
from lisim.harness import CSV_HEADER

TINY_YAML = """\
dims: {m: 16, n: 16, l: 8}
channels: {direct_paths: 16, lis_ap_paths: 16, user_lis_paths: 2}
t_d: 16
t_r: 60
sparsity: 0.3
snr_grid_db: [10]
trials: 1
base_seed: 7
"""


@pytest.fixture
def tiny_config_path(tmp_path):
    path = tmp_path / "tiny.yaml"
    path.write_text(TINY_YAML, encoding="utf-8")
    return path


class TestParser:
    def test_every_sweep_command_registered(self):
        parser = build_parser()
        for command in COMMAND_KINDS:
            args = parser.parse_args([command])
            assert args.command == command
            assert args.workers == 1

    def test_resolve_config_overrides(self, tiny_config_path):
        parser = build_parser()
        args = parser.parse_args(
            ["nmse-snr", "--config", str(tiny_config_path), "--seed", "99", "--trials", "3"]
        )
        config = _resolve_config(args)
        assert config.base_seed == 99
        assert config.trials == 3
        assert config.dims.m == 16

    def test_paper_scale_flag(self, tiny_config_path):
        parser = build_parser()
        args = parser.parse_args(["nmse-snr", "--config", str(tiny_config_path), "--paper-scale"])
        config = _resolve_config(args)
        assert config.dims.m == 64
        assert config.t_r == 500


class TestValidateCommand:
    def test_green_suite_exits_zero(self, capsys):
        assert main(["validate"]) == 0
        out = capsys.readouterr().out
        assert out.count("PASS") == 5
        assert "FAIL" not in out

    def test_seed_flag_changes_instances(self, capsys):
        main(["validate", "--seed", "5"])
        first = capsys.readouterr().out
        main(["validate", "--seed", "6"])
        second = capsys.readouterr().out
        assert first != second


class TestSweepCommands:
    def test_writes_csv_and_metadata(self, tiny_config_path, tmp_path, capsys):
        out_dir = tmp_path / "results"
        code = main(
            ["nmse-snr", "--config", str(tiny_config_path), "--out", str(out_dir)]
        )
        assert code == 0
        csv_text = (out_dir / "nmse_vs_snr.csv").read_text(encoding="utf-8")
        assert csv_text.startswith(CSV_HEADER + "\n")
        meta = json.loads((out_dir / "nmse_vs_snr.json").read_text(encoding="utf-8"))
        assert meta["experiment"] == "nmse_vs_snr"
        assert meta["config"]["base_seed"] == 7
        assert str(out_dir / "nmse_vs_snr.csv") in capsys.readouterr().out

    def test_worker_count_does_not_change_bytes(self, tiny_config_path, tmp_path):
        dir_a, dir_b = tmp_path / "a", tmp_path / "b"
        base = ["nmse-snr", "--config", str(tiny_config_path), "--trials", "2"]
        assert main(base + ["--out", str(dir_a), "--workers", "1"]) == 0
        assert main(base + ["--out", str(dir_b), "--workers", "2"]) == 0
        bytes_a = (dir_a / "nmse_vs_snr.csv").read_bytes()
        bytes_b = (dir_b / "nmse_vs_snr.csv").read_bytes()
        assert bytes_a == bytes_b

    def test_seed_changes_results(self, tiny_config_path, tmp_path):
        dir_a, dir_b = tmp_path / "a", tmp_path / "b"
        base = ["nmse-snr", "--config", str(tiny_config_path)]
        main(base + ["--out", str(dir_a)])
        main(base + ["--out", str(dir_b), "--seed", "8"])
        text_a = (dir_a / "nmse_vs_snr.csv").read_text(encoding="utf-8")
        text_b = (dir_b / "nmse_vs_snr.csv").read_text(encoding="utf-8")
        assert text_a != text_b


class TestErrorPaths:
    def test_unknown_config_key_exits_nonzero(self, tmp_path, capsys):
        bad = tmp_path / "bad.yaml"
        bad.write_text("trails: 5\n", encoding="utf-8")
        assert main(["nmse-snr", "--config", str(bad)]) == 2
        assert "trails" in capsys.readouterr().err

    def test_missing_config_file_exits_nonzero(self, tmp_path, capsys):
        assert main(["nmse-snr", "--config", str(tmp_path / "nope.yaml")]) == 2
        assert "error:" in capsys.readouterr().err

    def test_invalid_workers_exits_nonzero(self, tiny_config_path, tmp_path, capsys):
        code = main(
            [
                "nmse-snr",
                "--config",
                str(tiny_config_path),
                "--out",
                str(tmp_path / "w"),
                "--workers",
                "0",
            ]
        )
        assert code == 2
        assert "workers" in capsys.readouterr().err
