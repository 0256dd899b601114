"""
Tests for the estimation and experiment MCP tools.

Tests the tool classes directly, without an MCP transport.
"""

from unittest.mock import patch

import numpy as np
import pytest

from debias_np.config import build_config
from debias_np.tools.estimation import EstimationTools
from debias_np.tools.experiments import ExperimentTools


@pytest.fixture
def estimation_tools():
    """Create EstimationTools with default settings."""
    return EstimationTools()


@pytest.fixture
def experiment_tools():
    """Create ExperimentTools with small limits."""
    return ExperimentTools(max_workers=2, max_replications=50)


@pytest.fixture
def linear_csv(write_csv, rng):
    """Noiseless y = 1 + 2x on [0, 1]."""
    xs = np.concatenate([[0.0, 1.0], rng.uniform(0.0, 1.0, 98)])
    return write_csv(xs, 1.0 + 2.0 * xs)


SIMULATION = {
    "mode": "rate",
    "bandwidth_rule": "fixed:0.3",
    "sample_sizes": [50, 100],
    "replications": 2,
    "regressor": "oracle",
    "degree": 1,
    "noise": "gaussian:0",
}


class TestDebiasedFit:
    """Test the debiased_fit tool."""

    @pytest.mark.asyncio
    async def test_success(self, estimation_tools, linear_csv):
        """Test a successful fit with intervals."""
        result = await estimation_tools.debiased_fit(
            str(linear_csv), "fixed:0.3", [0.25, 0.5], regressor="linear", degree=1
        )

        assert result["success"] is True
        assert result["message"] == "Estimated 2 of 2 points"
        records = result["report"]["records"]
        assert records[0]["ftilde"] == pytest.approx(1.5, abs=1e-9)
        assert records[0]["level"] == 0.95

    @pytest.mark.asyncio
    async def test_default_level(self, linear_csv):
        """Test that the tool's default level is used when none is given."""
        tools = EstimationTools(default_level=0.9)
        result = await tools.debiased_fit(str(linear_csv), "fixed:0.3", [0.5], degree=1)

        assert result["report"]["records"][0]["level"] == 0.9

    @pytest.mark.asyncio
    async def test_config_error(self, estimation_tools, linear_csv):
        """Test that a fixed rule without degree fails with the error type."""
        result = await estimation_tools.debiased_fit(str(linear_csv), "fixed:0.3", [0.5])

        assert result["success"] is False
        assert result["error_type"] == "ConfigError"
        assert "'degree'" in result["error"]

    @pytest.mark.asyncio
    async def test_degree_above_limit(self, estimation_tools, linear_csv):
        """Test that an unsupported degree fails as a config error instead of raising."""
        result = await estimation_tools.debiased_fit(str(linear_csv), "fixed:0.3", [0.5], degree=11)

        assert result["success"] is False
        assert result["error_type"] == "ConfigError"

    @pytest.mark.asyncio
    async def test_missing_file(self, estimation_tools, tmp_path):
        """Test that a missing data file fails with DatasetError."""
        result = await estimation_tools.debiased_fit(str(tmp_path / "nope.csv"), "fixed:0.3", [0.5], degree=1)

        assert result["success"] is False
        assert result["error_type"] == "DatasetError"

    @pytest.mark.asyncio
    async def test_partial_failure(self, estimation_tools, write_csv, rng):
        """Test that a singular point is reported inside a successful result."""
        xs = np.concatenate([[1.0], rng.uniform(0.0, 0.3, 99)])
        result = await estimation_tools.debiased_fit(
            str(write_csv(xs, xs)), "fixed:0.05", [0.1, 0.9], degree=1
        )

        assert result["success"] is True
        assert result["message"] == "Estimated 1 of 2 points"


class TestDebiasedPredict:
    """Test the debiased_predict tool."""

    @pytest.mark.asyncio
    async def test_success(self, estimation_tools, linear_csv):
        """Test predictions without intervals."""
        result = await estimation_tools.debiased_predict(
            str(linear_csv), "fixed:0.3", [0.75], regressor="linear", degree=1
        )

        assert result["success"] is True
        record = result["report"]["records"][0]
        assert record["ftilde"] == pytest.approx(2.5, abs=1e-9)
        assert "ci_lo" not in record


class TestComputeBandwidth:
    """Test the compute_bandwidth tool."""

    @pytest.mark.asyncio
    async def test_pointwise(self, estimation_tools):
        """Test 1024^(-1/5) = 0.25 with the default degree."""
        result = await estimation_tools.compute_bandwidth("pointwise:s=2,alpha=1", 1024)

        assert result["success"] is True
        assert result["bandwidth"] == pytest.approx(0.25)
        assert result["degree"] == 2
        assert result["rule"] == "pointwise:s=2.0,alpha=1.0,L=1.0"

    @pytest.mark.asyncio
    async def test_invalid_rule(self, estimation_tools):
        """Test that a bad rule fails."""
        result = await estimation_tools.compute_bandwidth("pointwise:alpha=1", 100)

        assert result["success"] is False
        assert "missing s" in result["error"]

    @pytest.mark.asyncio
    async def test_small_n(self, estimation_tools):
        """Test that n < 4 fails."""
        result = await estimation_tools.compute_bandwidth("fixed:0.2", 3, degree=0)

        assert result["success"] is False


class TestRunSimulation:
    """Test the run_simulation tool."""

    @pytest.mark.asyncio
    async def test_success(self, experiment_tools):
        """Test a small rate run."""
        result = await experiment_tools.run_simulation(**SIMULATION)

        assert result["success"] is True
        assert result["summary"]["kind"] == "rate"
        assert result["message"] == "rate: passed (1 checks)"
        assert len(result["records"]) == 2

    @pytest.mark.asyncio
    async def test_unknown_mode(self, experiment_tools):
        """Test that estimation modes are not accepted."""
        result = await experiment_tools.run_simulation(**{**SIMULATION, "mode": "fit"})

        assert result["success"] is False
        assert "Unknown mode" in result["error"]

    @pytest.mark.asyncio
    async def test_replication_limit(self, experiment_tools):
        """Test that oversized runs are refused."""
        result = await experiment_tools.run_simulation(**{**SIMULATION, "replications": 51})

        assert result["success"] is False
        assert "exceeds the limit" in result["error"]

    @pytest.mark.asyncio
    async def test_workers_capped(self, experiment_tools):
        """Test that requested workers are capped by max_workers."""
        with patch("debias_np.tools.experiments.build_config", wraps=build_config) as mock_build:
            await experiment_tools.run_simulation(**{**SIMULATION, "workers": 16})

        assert mock_build.call_args[0][0]["workers"] == 2

    @pytest.mark.asyncio
    async def test_negative_seed(self, experiment_tools):
        """Test that a negative seed fails as a config error instead of raising."""
        result = await experiment_tools.run_simulation(**{**SIMULATION, "seed": -1})

        assert result["success"] is False
        assert result["error_type"] == "ConfigError"

    @pytest.mark.asyncio
    async def test_simulation_error(self, experiment_tools):
        """Test that a degenerate harness run fails with its error type."""
        result = await experiment_tools.run_simulation(**{**SIMULATION, "mode": "normality"})

        assert result["success"] is False
        assert result["error_type"] == "SimulationError"

    @pytest.mark.asyncio
    async def test_writes_and_reads_report(self, experiment_tools, tmp_path):
        """Test that out writes a report that read_report returns."""
        path = tmp_path / "rate.json"
        await experiment_tools.run_simulation(**{**SIMULATION, "out": str(path)})

        result = await experiment_tools.read_report(str(path))
        assert result["success"] is True
        assert result["record_count"] == 2
        assert result["report"]["summary"]["kind"] == "rate"


class TestReadReport:
    """Test the read_report tool."""

    @pytest.mark.asyncio
    async def test_missing(self, experiment_tools, tmp_path):
        """Test that a missing report fails."""
        result = await experiment_tools.read_report(str(tmp_path / "missing.json"))

        assert result["success"] is False
