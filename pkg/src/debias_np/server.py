"""
MCP server for debias-np.

Exposes the estimation and experiment tools to MCP clients over stdio.
"""

import argparse
import asyncio
import json
import logging
from typing import Any, Awaitable, Callable, Dict, List, Optional

from mcp import types
from mcp.server import Server
from mcp.server.stdio import stdio_server

from debias_np import __version__
from debias_np.tools.estimation import EstimationTools
from debias_np.tools.experiments import ExperimentTools

logger = logging.getLogger(__name__)

_POINTS = {"type": "array", "items": {"type": "number"}}
_ESTIMATION_PROPERTIES: Dict[str, Any] = {
    "data": {"type": "string", "description": "CSV file with a header row"},
    "bandwidth_rule": {
        "type": "string",
        "description": "pointwise|uniform|normality:s=<s>,alpha=<a>[,L=<L>] or fixed:<h>",
    },
    "eval_points": {**_POINTS, "description": "points in original covariate units"},
    "regressor": {"type": "string", "description": "zero, linear, knn:<k>, nw:<h>, biased:..."},
    "degree": {"type": "integer", "minimum": 0},
    "x_col": {"type": "string"},
    "y_col": {"type": "string"},
    "seed": {"type": "integer"},
    "crossfit": {"type": "boolean"},
}


def tool_definitions() -> List[types.Tool]:
    """Schemas of every tool the server exposes."""
    return [
        types.Tool(
            name="debiased_fit",
            description="Fit the debiased estimator on CSV data with confidence intervals",
            inputSchema={
                "type": "object",
                "properties": {
                    **_ESTIMATION_PROPERTIES,
                    "level": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                },
                "required": ["data", "bandwidth_rule", "eval_points"],
            },
        ),
        types.Tool(
            name="debiased_predict",
            description="Debiased predictions on CSV data at given covariate values",
            inputSchema={
                "type": "object",
                "properties": _ESTIMATION_PROPERTIES,
                "required": ["data", "bandwidth_rule", "eval_points"],
            },
        ),
        types.Tool(
            name="run_simulation",
            description="Run a seeded Monte Carlo harness and return cells and verdicts",
            inputSchema={
                "type": "object",
                "properties": {
                    "mode": {
                        "type": "string",
                        "enum": [
                            "rate",
                            "coverage",
                            "normality",
                            "uniform",
                            "shift",
                            "double_robustness",
                        ],
                    },
                    "bandwidth_rule": {"type": "string"},
                    "sample_sizes": {"type": "array", "items": {"type": "integer"}},
                    "replications": {"type": "integer", "minimum": 1},
                    "regressor": {"type": "string"},
                    "degree": {"type": "integer", "minimum": 0},
                    "eval_points": _POINTS,
                    "f0": {"type": "string", "enum": ["sine", "holder_kink", "linear"]},
                    "noise": {"type": "string"},
                    "covariates": {"type": "string"},
                    "train_covariates": {"type": "string"},
                    "test_covariates": {"type": "string"},
                    "grid_points": {"type": "integer", "minimum": 1},
                    "level": {"type": "number"},
                    "seed": {"type": "integer"},
                    "crossfit": {"type": "boolean"},
                    "workers": {"type": "integer", "minimum": 1},
                    "out": {"type": "string"},
                },
                "required": ["mode", "bandwidth_rule", "sample_sizes", "replications"],
            },
        ),
        types.Tool(
            name="compute_bandwidth",
            description="Evaluate a bandwidth rule at a sample size",
            inputSchema={
                "type": "object",
                "properties": {
                    "bandwidth_rule": {"type": "string"},
                    "n": {"type": "integer", "minimum": 4},
                    "degree": {"type": "integer", "minimum": 0},
                },
                "required": ["bandwidth_rule", "n"],
            },
        ),
        types.Tool(
            name="read_report",
            description="Read a report written by a previous run",
            inputSchema={
                "type": "object",
                "properties": {"path": {"type": "string"}},
                "required": ["path"],
            },
        ),
    ]


class DebiasMCPServer:
    """
    MCP server for debiased nonparametric regression.

    Manages tool registration and dispatch to the tool classes.
    """

    def __init__(self, max_workers: int = 4) -> None:
        """
        Initialize the server.

        Args:
            max_workers: Upper bound on replication threads per simulation
        """
        self.server = Server("debias-np")
        self.estimation_tools = EstimationTools()
        self.experiment_tools = ExperimentTools(max_workers=max_workers)
        self.handlers: Dict[str, Callable[..., Awaitable[Dict[str, Any]]]] = {
            "debiased_fit": self.estimation_tools.debiased_fit,
            "debiased_predict": self.estimation_tools.debiased_predict,
            "compute_bandwidth": self.estimation_tools.compute_bandwidth,
            "run_simulation": self.experiment_tools.run_simulation,
            "read_report": self.experiment_tools.read_report,
        }
        self._register_tools()
        logger.info(f"debias-np MCP server initialized with {len(self.handlers)} tools")

    async def call(self, name: str, arguments: Optional[Dict[str, Any]]) -> Dict[str, Any]:
        """Dispatch one tool call; unknown tools and bad arguments become failed results."""
        handler = self.handlers.get(name)
        if handler is None:
            return {"success": False, "error": f"Unknown tool '{name}'"}
        try:
            return await handler(**(arguments or {}))
        except TypeError as e:
            return {"success": False, "error": f"Invalid arguments for {name}: {e}"}

    def _register_tools(self) -> None:
        @self.server.list_tools()
        async def list_tools() -> List[types.Tool]:
            return tool_definitions()

        @self.server.call_tool()
        async def call_tool(name: str, arguments: Optional[Dict[str, Any]]) -> List[types.TextContent]:
            result = await self.call(name, arguments)
            return [types.TextContent(type="text", text=json.dumps(result, indent=2))]


async def serve(max_workers: int = 4) -> None:
    """
    Main async serve function for the MCP server.

    Runs the debias-np MCP server with stdio transport.
    """
    debias_server = DebiasMCPServer(max_workers=max_workers)

    async with stdio_server() as (read_stream, write_stream):
        await debias_server.server.run(
            read_stream,
            write_stream,
            debias_server.server.create_initialization_options(),
        )


def main() -> None:
    """
    Main entry point for the debias-np MCP server.

    Sets up logging and starts the server.
    """
    parser = argparse.ArgumentParser(prog="debias-np-mcp", description="debias-np MCP server (stdio)")
    parser.add_argument("--log-level", default="INFO", choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    parser.add_argument("--max-workers", type=int, default=4)
    args = parser.parse_args()

    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )

    logger.info("debias-np MCP - debiased nonparametric regression tools")
    logger.info(f"Version: {__version__}")

    try:
        asyncio.run(serve(args.max_workers))
    except KeyboardInterrupt:
        logger.info("Received shutdown signal")
    except Exception as e:
        logger.error(f"Server error: {e}", exc_info=True)
        raise


if __name__ == "__main__":
    main()
