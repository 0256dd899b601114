"""
Tests for the debias-np command line.
"""

import json

import numpy as np
import pytest

from debias_np import __version__
from debias_np.cli import EXIT_CONFIG, EXIT_DATA, EXIT_ESTIMATION, EXIT_OK, build_parser, main
from debias_np.config import Mode


@pytest.fixture
def linear_csv(write_csv, rng):
    """Noiseless y = 1 + 2x on [0, 1]."""
    xs = np.concatenate([[0.0, 1.0], rng.uniform(0.0, 1.0, 98)])
    return write_csv(xs, 1.0 + 2.0 * xs)


def fit_args(path, *extra):
    return ["fit", "--data", str(path), "--reg", "linear", "--bandwidth", "fixed:0.3", "--degree", "1", *extra]


class TestParser:
    """Test argument parsing."""

    def test_help_lists_modes(self, capsys):
        """Test that --help names every mode and config key."""
        with pytest.raises(SystemExit) as exc_info:
            main(["--help"])

        assert exc_info.value.code == 0
        out = capsys.readouterr().out
        for mode in Mode:
            assert mode.value in out
        assert "sample_sizes" in out

    def test_version(self, capsys):
        """Test --version."""
        with pytest.raises(SystemExit) as exc_info:
            main(["--version"])

        assert exc_info.value.code == 0
        assert __version__ in capsys.readouterr().out

    def test_unknown_flag(self, capsys):
        """Test that an unknown flag exits with a usage error."""
        with pytest.raises(SystemExit) as exc_info:
            main(["fit", "--bandwidht", "fixed:0.2"])

        assert exc_info.value.code == EXIT_CONFIG
        assert "unrecognized arguments" in capsys.readouterr().err

    def test_subcommand_required(self):
        """Test that a subcommand is required."""
        with pytest.raises(SystemExit) as exc_info:
            main([])

        assert exc_info.value.code == 2

    def test_simulate_mode_choices(self):
        """Test that simulate rejects non-simulation modes at parse time."""
        with pytest.raises(SystemExit):
            build_parser().parse_args(["simulate", "--mode", "fit"])


class TestFit:
    """Test the fit subcommand."""

    def test_linear_exact(self, linear_csv, capsys):
        """Test that fit prints a report recovering the line."""
        code = main(fit_args(linear_csv, "--at", "0.25,0.5"))

        assert code == EXIT_OK
        report = json.loads(capsys.readouterr().out)
        assert report["records"][0]["ftilde"] == pytest.approx(1.5, abs=1e-9)
        assert report["records"][1]["ftilde"] == pytest.approx(2.0, abs=1e-9)
        assert report["meta"]["config"]["mode"] == "fit"

    def test_missing_bandwidth(self, linear_csv, caplog):
        """Test that a missing bandwidth exits with the config code and names the key."""
        code = main(["fit", "--data", str(linear_csv)])

        assert code == EXIT_CONFIG
        assert "'bandwidth'" in caplog.text

    def test_missing_data_file(self, tmp_path):
        """Test that an unreadable data file exits with the data code."""
        assert main(fit_args(tmp_path / "missing.csv")) == EXIT_DATA

    def test_insufficient_first_stage_data(self, write_csv):
        """Test that a first stage that cannot be fit exits with the data code."""
        path = write_csv(np.linspace(0.0, 1.0, 6), np.zeros(6))

        assert main(["fit", "--data", str(path), "--reg", "knn:50", "--bandwidth", "fixed:0.5", "--degree", "0"]) == EXIT_DATA

    def test_all_points_singular(self, write_csv, rng):
        """Test that a run with no estimable point exits with the estimation code."""
        xs = np.concatenate([[1.0], rng.uniform(0.0, 0.3, 99)])
        path = write_csv(xs, xs)

        assert main(fit_args(path, "--bandwidth", "fixed:0.05", "--at", "0.8,0.9")) == EXIT_ESTIMATION

    def test_singular_point_still_succeeds(self, write_csv, rng, capsys):
        """Test that one singular point is reported while the run succeeds."""
        xs = np.concatenate([[1.0], rng.uniform(0.0, 0.3, 99)])
        path = write_csv(xs, xs)

        assert main(fit_args(path, "--bandwidth", "fixed:0.05", "--at", "0.1,0.9")) == EXIT_OK
        records = json.loads(capsys.readouterr().out)["records"]
        assert [r["status"] for r in records] == ["ok", "singular_design"]

    def test_out_file(self, linear_csv, tmp_path, capsys):
        """Test that --out writes the report instead of stdout."""
        out = tmp_path / "report.json"

        assert main(fit_args(linear_csv, "--out", str(out))) == EXIT_OK
        assert capsys.readouterr().out == ""
        assert json.loads(out.read_text(encoding="utf-8"))["summary"]["succeeded"] == 1

    def test_deterministic(self, linear_csv, capsys):
        """Test that repeated runs print identical reports."""
        main(fit_args(linear_csv, "--reg", "knn:3", "--at", "0.3,0.6"))
        first = capsys.readouterr().out
        main(fit_args(linear_csv, "--reg", "knn:3", "--at", "0.3,0.6"))

        assert capsys.readouterr().out == first

    def test_config_file_with_override(self, linear_csv, tmp_path, capsys):
        """Test that flags override config file values."""
        config = tmp_path / "fit.toml"
        config.write_text(
            f'data = "{linear_csv.as_posix()}"\nbandwidth = "fixed:0.9"\ndegree = 1\n'
            'regressor = "linear"\nseed = 5\n',
            encoding="utf-8",
        )

        assert main(["fit", "--config", str(config), "--bandwidth", "fixed:0.3"]) == EXIT_OK
        report = json.loads(capsys.readouterr().out)
        assert report["meta"]["bandwidth"] == 0.3
        assert report["meta"]["seed"] == 5

    def test_unknown_config_key(self, linear_csv, tmp_path):
        """Test that a config file with an unknown key exits with the config code."""
        config = tmp_path / "fit.toml"
        config.write_text('bandwith = "fixed:0.3"\n', encoding="utf-8")

        assert main(["fit", "--config", str(config), "--data", str(linear_csv)]) == EXIT_CONFIG

    def test_degree_above_limit(self, linear_csv, caplog):
        """Test that a degree above the supported maximum exits with the config code."""
        assert main(fit_args(linear_csv, "--degree", "11")) == EXIT_CONFIG
        assert "'degree'" in caplog.text

    def test_negative_seed(self, linear_csv, caplog):
        """Test that a negative seed exits with the config code."""
        assert main(fit_args(linear_csv, "--seed", "-1")) == EXIT_CONFIG
        assert "'seed'" in caplog.text


class TestSimulate:
    """Test the simulate subcommand."""

    def sim_args(self, *extra):
        return [
            "simulate",
            "--mode",
            "rate",
            "--bandwidth",
            "fixed:0.3",
            "--degree",
            "1",
            "--reg",
            "oracle",
            "--noise",
            "gaussian:0",
            "--sample-sizes",
            "50,100",
            "--replications",
            "2",
            *extra,
        ]

    def test_rate(self, tmp_path):
        """Test a small rate run with report and cell CSV outputs."""
        out = tmp_path / "rate.json"
        cells = tmp_path / "cells.csv"

        assert main(self.sim_args("--out", str(out), "--cells-csv", str(cells))) == EXIT_OK
        report = json.loads(out.read_text(encoding="utf-8"))
        assert report["summary"]["kind"] == "rate"
        assert report["meta"]["config"]["sample_sizes"] == [50, 100]
        assert cells.read_text(encoding="utf-8").startswith("kind,")

    def test_missing_mode(self, caplog):
        """Test that simulate without a mode exits with the config code."""
        args = [a for a in self.sim_args() if a not in ("--mode", "rate")]

        assert main(args) == EXIT_CONFIG
        assert "'mode'" in caplog.text

    def test_fit_mode_in_config_file(self, tmp_path):
        """Test that a config file cannot turn simulate into fit."""
        config = tmp_path / "sim.toml"
        config.write_text('mode = "fit"\ndata = "d.csv"\n', encoding="utf-8")

        assert main(["simulate", "--config", str(config), "--bandwidth", "fixed:0.3", "--degree", "1"]) == EXIT_CONFIG

    def test_bad_sample_sizes(self):
        """Test that non-increasing sample sizes exit with the config code."""
        args = self.sim_args()
        args[args.index("50,100")] = "100,50"

        assert main(args) == EXIT_CONFIG

    def test_normality_degenerate(self):
        """Test that an all-excluded normality run exits with the estimation code."""
        args = self.sim_args()
        args[args.index("rate")] = "normality"

        assert main(args) == EXIT_ESTIMATION

    def test_degree_above_limit(self):
        """Test that simulate rejects a degree above the supported maximum with the config code."""
        args = self.sim_args()
        args[args.index("--degree") + 1] = "11"

        assert main(args) == EXIT_CONFIG
