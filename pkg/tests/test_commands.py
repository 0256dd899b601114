"""
Tests for the run implementations behind the CLI and MCP tools.
"""

import json

import numpy as np
import pandas as pd
import pytest

from debias_np import __version__
from debias_np.commands import (
    COVERAGE_BAND_95,
    check_band,
    cmd_fit,
    cmd_predict,
    cmd_simulate,
    emit_report,
    run_command,
    write_cells_csv,
)
from debias_np.config import ConfigError, build_config
from debias_np.dataset_io import dumps_report, read_report
from debias_np.debias import EstimationError


@pytest.fixture
def linear_csv(write_csv, rng):
    """Noiseless y = 1 + 2x with covariates spanning [0, 10]."""
    xs = np.concatenate([[0.0, 10.0], rng.uniform(0.0, 10.0, 198)])
    return write_csv(xs, 1.0 + 2.0 * xs)


@pytest.fixture
def noisy_csv(write_csv, rng):
    """Noisy sine data on [0, 1]."""
    xs = np.concatenate([[0.0, 1.0], rng.uniform(0.0, 1.0, 398)])
    return write_csv(xs, np.sin(2.0 * np.pi * xs) + rng.normal(0.0, 0.3, 400))


def fit_config(data, **extra):
    values = {"mode": "fit", "data": str(data), "bandwidth": "fixed:0.3", "degree": 1}
    values.update(extra)
    return build_config(values)


def sim_config(**extra):
    values = {
        "mode": "rate",
        "bandwidth": "fixed:0.3",
        "degree": 1,
        "regressor": "oracle",
        "noise": "gaussian:0",
        "sample_sizes": [50, 100],
        "replications": 3,
    }
    values.update(extra)
    return build_config(values)


class TestCheckBand:
    """Test thresholded verdicts."""

    def test_inside(self):
        """Test a value inside a closed band."""
        verdict = check_band("slope", -0.8, -1.0, -0.6)

        assert verdict.passed is True

    def test_boundary_included(self):
        """Test that band edges pass."""
        assert check_band("slope", -1.0, -1.0, -0.6).passed is True

    def test_outside(self):
        """Test a value outside the band."""
        assert check_band("slope", -0.4, -1.0, -0.6).passed is False

    def test_open_end(self):
        """Test a one-sided band."""
        assert check_band("ratio", 2.5, None, 3.0).passed is True

    @pytest.mark.parametrize("value", [None, float("nan")])
    def test_undefined(self, value):
        """Test that undefined values give no verdict."""
        verdict = check_band("slope", value, -1.0, -0.6)

        assert verdict.passed is None
        assert verdict.value is None


class TestCmdFit:
    """Test estimation on CSV data."""

    def test_linear_exact(self, linear_csv):
        """Test that a linear first stage on linear data recovers the line in original units."""
        report = cmd_fit(fit_config(linear_csv, regressor="linear", eval_points=[2.5, 5.0]))
        records = report["records"]

        assert [r["status"] for r in records] == ["ok", "ok"]
        assert records[0]["x0"] == 2.5
        assert records[0]["x0_scaled"] == pytest.approx(0.25)
        assert records[0]["ftilde"] == pytest.approx(6.0, abs=1e-9)
        assert records[1]["ftilde"] == pytest.approx(11.0, abs=1e-9)
        assert records[0]["var_hat"] == pytest.approx(0.0, abs=1e-18)
        assert records[0]["ci_lo"] <= records[0]["ftilde"] <= records[0]["ci_hi"]
        assert report["summary"] == {"succeeded": 2, "failed": 0}

    def test_meta(self, linear_csv):
        """Test the report metadata."""
        report = cmd_fit(fit_config(linear_csv, regressor="linear", eval_points=[5.0], seed=3))
        meta = report["meta"]

        assert meta["version"] == __version__
        assert meta["seed"] == 3
        assert meta["n"] == 200
        assert meta["m"] == 100
        assert meta["rescale"] == {"min": 0.0, "range": 10.0}
        assert meta["first_stage"]["regressor"] == "linear"
        assert meta["first_stage"]["slope"] == pytest.approx(20.0)
        assert meta["config"]["regressor"] == "linear"

    def test_bias_bound_with_smoothness(self, noisy_csv):
        """Test that a smoothness rule adds a bias bound per point."""
        report = cmd_fit(fit_config(noisy_csv, bandwidth="pointwise:s=2,alpha=1", degree=None))

        assert report["records"][0]["bias_bound"] > 0.0
        assert report["meta"]["degree"] == 2

    def test_singular_point_reported(self, write_csv, rng):
        """Test that a point with an empty window is listed with its reason."""
        xs = np.concatenate([[10.0], rng.uniform(0.0, 3.0, 99)])
        path = write_csv(xs, xs)
        report = cmd_fit(fit_config(path, bandwidth="fixed:0.05", eval_points=[1.0, 9.0]))
        failed = report["records"][1]

        assert report["records"][0]["status"] == "ok"
        assert failed["status"] == "singular_design"
        assert failed["ftilde"] is None
        assert failed["in_window_count"] == 0
        assert "var_hat" not in failed
        assert report["summary"] == {"succeeded": 1, "failed": 1}

    def test_all_points_singular(self, write_csv, rng):
        """Test that a run with no estimable point raises EstimationError."""
        xs = np.concatenate([[10.0], rng.uniform(0.0, 3.0, 99)])
        path = write_csv(xs, xs)

        with pytest.raises(EstimationError):
            cmd_fit(fit_config(path, bandwidth="fixed:0.05", eval_points=[8.0, 9.0]))

    def test_point_outside_range(self, linear_csv):
        """Test that evaluation points outside the data range are rejected."""
        with pytest.raises(ConfigError, match="eval_points"):
            cmd_fit(fit_config(linear_csv, eval_points=[12.0]))

    def test_crossfit(self, noisy_csv):
        """Test that cross-fitting runs and reports intervals."""
        report = cmd_fit(fit_config(noisy_csv, crossfit=True, eval_points=[0.25, 0.75]))

        assert all(r["var_hat"] > 0.0 for r in report["records"])

    def test_deterministic(self, noisy_csv):
        """Test that identical configs give identical reports."""
        config = fit_config(noisy_csv, regressor="knn:5", eval_points=[0.2, 0.4, 0.6])

        assert dumps_report(cmd_fit(config)) == dumps_report(cmd_fit(config))


class TestCmdPredict:
    """Test predictions on CSV data."""

    def test_predict(self, linear_csv):
        """Test point predictions without intervals."""
        report = cmd_predict(build_config(
            {"mode": "predict", "data": str(linear_csv), "bandwidth": "fixed:0.3", "degree": 1,
             "regressor": "linear", "eval_points": [7.5]}
        ))
        record = report["records"][0]

        assert record["ftilde"] == pytest.approx(16.0, abs=1e-9)
        assert "ci_lo" not in record


class TestCmdSimulate:
    """Test Monte Carlo runs and verdicts."""

    def test_rate_undefined_slope(self):
        """Test that a noiseless oracle run reports an undefined slope without failing."""
        report = cmd_simulate(sim_config())
        summary = report["summary"]

        assert summary["kind"] == "rate"
        assert summary["slope"]["slope"] is None
        assert summary["verdicts"][0]["passed"] is None
        assert summary["passed"] is True
        assert summary["low_confidence"] is True
        assert len(report["records"]) == 2
        assert len(report["replications"]) == 6

    def test_coverage_verdict_band(self):
        """Test the 95% coverage band and the summary coverage value."""
        report = cmd_simulate(
            sim_config(mode="coverage", bandwidth="normality:s=2,alpha=1", sample_sizes=[400], replications=5)
        )
        verdict = report["summary"]["verdicts"][0]

        assert report["summary"]["coverage"] == 1.0
        assert (verdict["lo"], verdict["hi"]) == COVERAGE_BAND_95
        assert verdict["passed"] is False

    def test_double_robustness_verdicts(self):
        """Test that noiseless double robustness passes both scenarios."""
        report = cmd_simulate(sim_config(mode="double_robustness", sample_sizes=[50, 100, 200]))
        checks = {v["check"]: v["passed"] for v in report["summary"]["verdicts"]}

        assert checks["broken_first_stage_abs_bias"] is True
        assert checks["broken_second_stage_abs_bias"] is True

    def test_rejects_fit_mode(self, linear_csv):
        """Test that estimation configs are not simulations."""
        with pytest.raises(ConfigError, match="not a simulation mode"):
            cmd_simulate(fit_config(linear_csv))

    def test_run_command_dispatch(self):
        """Test that run_command routes simulation modes."""
        assert run_command(sim_config())["summary"]["kind"] == "rate"


class TestReportOutput:
    """Test report emission."""

    def test_emit_to_text(self):
        """Test that no path returns the serialized report."""
        text = emit_report({"meta": {"seed": 1}, "records": []}, None)

        assert json.loads(text) == {"meta": {"seed": 1}, "records": []}

    def test_emit_to_file(self, tmp_path):
        """Test that a path writes the report."""
        path = tmp_path / "out.json"

        assert emit_report({"meta": {}, "records": [{"n": 4}]}, path) is None
        assert read_report(path)["records"] == [{"n": 4}]

    def test_cells_csv(self, tmp_path):
        """Test per-cell CSV output."""
        report = cmd_simulate(sim_config())
        path = tmp_path / "cells.csv"
        write_cells_csv(report, path)
        frame = pd.read_csv(path)

        assert list(frame["n"]) == [50, 100]
        assert {"kind", "mse", "bias", "variance", "x0"} <= set(frame.columns)
