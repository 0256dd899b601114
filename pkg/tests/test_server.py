"""
Tests for the MCP server implementation.

Tests the DebiasMCPServer class including initialization, tool
definitions, dispatch and the entry point.
"""

from unittest.mock import AsyncMock, Mock, patch

import pytest

from debias_np.server import DebiasMCPServer, main, tool_definitions
from debias_np.tools.estimation import EstimationTools
from debias_np.tools.experiments import ExperimentTools


class TestDebiasMCPServerInitialization:
    """Test DebiasMCPServer initialization."""

    def test_init_creates_tool_classes(self):
        """Test that initialization creates both tool classes."""
        server = DebiasMCPServer()

        assert isinstance(server.estimation_tools, EstimationTools)
        assert isinstance(server.experiment_tools, ExperimentTools)
        assert server.server is not None

    def test_init_passes_max_workers(self):
        """Test that the worker cap reaches the experiment tools."""
        server = DebiasMCPServer(max_workers=7)

        assert server.experiment_tools.max_workers == 7

    def test_handlers_match_definitions(self):
        """Test that every defined tool has a handler and vice versa."""
        server = DebiasMCPServer()

        assert {tool.name for tool in tool_definitions()} == set(server.handlers)


class TestToolDefinitions:
    """Test the advertised tool schemas."""

    def test_names(self):
        """Test the exposed tool names."""
        names = [tool.name for tool in tool_definitions()]

        assert names == ["debiased_fit", "debiased_predict", "run_simulation", "compute_bandwidth", "read_report"]

    def test_required_fields(self):
        """Test required arguments of the estimation and simulation tools."""
        tools = {tool.name: tool for tool in tool_definitions()}

        assert tools["debiased_fit"].inputSchema["required"] == ["data", "bandwidth_rule", "eval_points"]
        assert "replications" in tools["run_simulation"].inputSchema["required"]

    def test_simulation_modes_enumerated(self):
        """Test that run_simulation lists every harness."""
        tools = {tool.name: tool for tool in tool_definitions()}
        modes = tools["run_simulation"].inputSchema["properties"]["mode"]["enum"]

        assert "double_robustness" in modes
        assert "fit" not in modes


class TestCall:
    """Test tool dispatch."""

    @pytest.mark.asyncio
    async def test_dispatch(self):
        """Test that call routes to the matching handler with its arguments."""
        server = DebiasMCPServer()
        handler = AsyncMock(return_value={"success": True})
        server.handlers["compute_bandwidth"] = handler

        result = await server.call("compute_bandwidth", {"bandwidth_rule": "fixed:0.2", "n": 10})

        handler.assert_awaited_once_with(bandwidth_rule="fixed:0.2", n=10)
        assert result == {"success": True}

    @pytest.mark.asyncio
    async def test_real_handler(self):
        """Test an end-to-end call on a real tool."""
        server = DebiasMCPServer()

        result = await server.call("compute_bandwidth", {"bandwidth_rule": "pointwise:s=2,alpha=1", "n": 1024})

        assert result["success"] is True
        assert result["bandwidth"] == pytest.approx(0.25)

    @pytest.mark.asyncio
    async def test_unknown_tool(self):
        """Test that an unknown tool name yields a failed result."""
        server = DebiasMCPServer()

        result = await server.call("bootstrap", {})

        assert result["success"] is False
        assert "Unknown tool" in result["error"]

    @pytest.mark.asyncio
    async def test_bad_arguments(self):
        """Test that unexpected arguments yield a failed result."""
        server = DebiasMCPServer()

        result = await server.call("compute_bandwidth", {"rule": "fixed:0.2"})

        assert result["success"] is False
        assert "Invalid arguments" in result["error"]

    @pytest.mark.asyncio
    async def test_no_arguments(self):
        """Test that missing arguments are reported rather than raised."""
        server = DebiasMCPServer()

        result = await server.call("read_report", None)

        assert result["success"] is False


class TestMain:
    """Test the server entry point."""

    def test_main_runs_serve(self):
        """Test that main starts serve with the requested worker cap."""
        with patch("sys.argv", ["debias-np-mcp", "--max-workers", "2"]), patch(
            "debias_np.server.serve", new=Mock(return_value="coroutine")
        ) as mock_serve, patch("debias_np.server.asyncio.run") as mock_run:
            main()

        mock_serve.assert_called_once_with(2)
        mock_run.assert_called_once_with("coroutine")

    def test_main_handles_keyboard_interrupt(self):
        """Test that a shutdown signal exits cleanly."""
        with patch("sys.argv", ["debias-np-mcp"]), patch("debias_np.server.serve", new=Mock()), patch(
            "debias_np.server.asyncio.run", side_effect=KeyboardInterrupt
        ):
            main()

    def test_main_reraises_errors(self):
        """Test that server errors propagate."""
        with patch("sys.argv", ["debias-np-mcp"]), patch("debias_np.server.serve", new=Mock()), patch(
            "debias_np.server.asyncio.run", side_effect=RuntimeError("boom")
        ):
            with pytest.raises(RuntimeError, match="boom"):
                main()
