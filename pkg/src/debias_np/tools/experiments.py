"""
Experiment MCP tools.

Provides tools for Monte Carlo experiments:
- Run a harness (rate, coverage, normality, uniform, shift, double robustness)
- Read a saved report
"""

import asyncio
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

from debias_np.commands import cmd_simulate
from debias_np.config import SIMULATION_MODES, ConfigError, build_config
from debias_np.dataset_io import DatasetError, dumps_report, read_report, write_report
from debias_np.debias import EstimationError
from debias_np.first_stage import RegressorError
from debias_np.simulation import SimulationError

logger = logging.getLogger(__name__)


class ExperimentTools:
    """
    Monte Carlo experiment tools.

    Runs are capped in size so a single tool call stays interactive.
    """

    def __init__(self, max_workers: int = 4, max_replications: int = 2000) -> None:
        """
        Initialize experiment tools.

        Args:
            max_workers: Upper bound on replication threads per run
            max_replications: Upper bound on replications per sample size
        """
        self.max_workers = max_workers
        self.max_replications = max_replications
        logger.info("Experiment tools initialized")

    async def run_simulation(
        self,
        mode: str,
        bandwidth_rule: str,
        sample_sizes: List[int],
        replications: int,
        regressor: str = "zero",
        degree: Optional[int] = None,
        eval_points: Optional[List[float]] = None,
        f0: str = "sine",
        noise: str = "gaussian:0.5",
        covariates: str = "uniform01",
        train_covariates: Optional[str] = None,
        test_covariates: Optional[str] = None,
        grid_points: int = 201,
        level: float = 0.95,
        seed: int = 0,
        crossfit: bool = False,
        workers: int = 1,
        out: Optional[str] = None,
    ) -> Dict[str, Any]:
        """
        Run one Monte Carlo harness.

        Args:
            mode: One of rate, coverage, normality, uniform, shift, double_robustness
            bandwidth_rule: Bandwidth rule text
            sample_sizes: Strictly increasing sample sizes
            replications: Replications per sample size
            out: Optional path to also write the report to

        Returns:
            Dictionary with the records and summary (verdicts included)

        Example:
            >>> result = await experiment_tools.run_simulation(
            ...     "rate", "pointwise:s=2,alpha=1", [250, 500, 1000, 2000], 100, degree=1
            ... )
            >>> # Returns: {"success": True, "summary": {"passed": True, ...}, ...}
        """
        if mode not in SIMULATION_MODES:
            return {
                "success": False,
                "error": f"Unknown mode '{mode}'; expected one of {', '.join(SIMULATION_MODES)}",
            }
        if replications > self.max_replications:
            return {
                "success": False,
                "error": f"{replications} replications exceeds the limit of {self.max_replications}",
            }

        values: Dict[str, Any] = {
            "mode": mode,
            "bandwidth": bandwidth_rule,
            "sample_sizes": sample_sizes,
            "replications": replications,
            "regressor": regressor,
            "degree": degree,
            "eval_points": eval_points if eval_points is not None else [0.5],
            "f0": f0,
            "noise": noise,
            "covariates": covariates,
            "train_covariates": train_covariates,
            "test_covariates": test_covariates,
            "grid_points": grid_points,
            "level": level,
            "seed": seed,
            "crossfit": crossfit,
            "workers": min(workers, self.max_workers),
            "out": out,
        }
        values = {key: value for key, value in values.items() if value is not None}
        try:
            config = build_config(values)
            report = await asyncio.to_thread(cmd_simulate, config)
            if config.out is not None:
                write_report(report, config.out)
        except (
            ConfigError,
            DatasetError,
            RegressorError,
            EstimationError,
            SimulationError,
            ValueError,
        ) as e:
            logger.warning(f"Simulation {mode} failed: {e}")
            return {"success": False, "error": str(e), "error_type": type(e).__name__}

        document = json.loads(dumps_report(report))
        summary = document["summary"]
        return {
            "success": True,
            "meta": document["meta"],
            "records": document["records"],
            "summary": summary,
            "message": f"{mode}: {'passed' if summary['passed'] else 'failed'} "
            f"({len(summary['verdicts'])} checks)",
        }

    async def read_report(self, path: str) -> Dict[str, Any]:
        """
        Read a report written by a previous run.

        Returns:
            Dictionary with the report contents
        """
        try:
            report = read_report(Path(path))
        except DatasetError as e:
            return {"success": False, "error": str(e)}
        return {
            "success": True,
            "report": report,
            "record_count": len(report.get("records", [])),
        }
