"""
Estimation MCP tools.

Provides tools for estimating on CSV data:
- Debiased fit with confidence intervals
- Debiased predictions at given covariate values
- Bandwidth rule evaluation
"""

import asyncio
import json
import logging
from typing import Any, Dict, List, Optional

from debias_np.commands import cmd_fit, cmd_predict
from debias_np.config import ConfigError, build_config
from debias_np.dataset_io import DatasetError, dumps_report
from debias_np.debias import BandwidthRule, EstimationError, resolve_config
from debias_np.first_stage import RegressorError
from debias_np.inference import InferenceError

logger = logging.getLogger(__name__)


def _failure(error: Exception) -> Dict[str, Any]:
    return {"success": False, "error": str(error), "error_type": type(error).__name__}


class EstimationTools:
    """
    Debiased estimation on user data.

    Each method validates its arguments through the experiment config
    layer and runs the estimator off the event loop.
    """

    def __init__(self, default_level: float = 0.95) -> None:
        """
        Initialize estimation tools.

        Args:
            default_level: Confidence level used when a call does not give one
        """
        self.default_level = default_level
        logger.info("Estimation tools initialized")

    def _values(
        self,
        mode: str,
        data: str,
        bandwidth_rule: str,
        eval_points: List[float],
        regressor: str,
        degree: Optional[int],
        x_col: str,
        y_col: str,
        seed: int,
        crossfit: bool,
        level: Optional[float],
    ) -> Dict[str, Any]:
        return {
            "mode": mode,
            "data": data,
            "bandwidth": bandwidth_rule,
            "eval_points": eval_points,
            "regressor": regressor,
            "degree": degree,
            "x_col": x_col,
            "y_col": y_col,
            "seed": seed,
            "crossfit": crossfit,
            "level": level if level is not None else self.default_level,
        }

    async def debiased_fit(
        self,
        data: str,
        bandwidth_rule: str,
        eval_points: List[float],
        regressor: str = "zero",
        degree: Optional[int] = None,
        x_col: str = "x",
        y_col: str = "y",
        seed: int = 0,
        crossfit: bool = False,
        level: Optional[float] = None,
    ) -> Dict[str, Any]:
        """
        Fit the debiased estimator on a CSV file.

        Args:
            data: Path to a CSV file with a header row
            bandwidth_rule: e.g. ``pointwise:s=2,alpha=1`` or ``fixed:0.2``
            eval_points: Evaluation points in original covariate units
            regressor: First-stage spec, e.g. ``knn:5``
            degree: Local polynomial degree (default floor(s))
            x_col: Covariate column
            y_col: Response column
            seed: Split seed
            crossfit: Average both fold assignments
            level: Confidence level

        Returns:
            Dictionary with the report (meta, records, summary)

        Example:
            >>> result = await estimation_tools.debiased_fit("d.csv", "fixed:0.3", [0.5], degree=1)
            >>> # Returns: {"success": True, "report": {...}, "message": "Estimated 1 of 1 points"}
        """
        values = self._values(
            "fit", data, bandwidth_rule, eval_points, regressor, degree, x_col, y_col, seed, crossfit, level
        )
        return await self._run(values, cmd_fit)

    async def debiased_predict(
        self,
        data: str,
        bandwidth_rule: str,
        eval_points: List[float],
        regressor: str = "zero",
        degree: Optional[int] = None,
        x_col: str = "x",
        y_col: str = "y",
        seed: int = 0,
        crossfit: bool = False,
    ) -> Dict[str, Any]:
        """
        Debiased predictions at covariate values given in original units.

        Returns:
            Dictionary with the report (meta, records, summary)
        """
        values = self._values(
            "predict", data, bandwidth_rule, eval_points, regressor, degree, x_col, y_col, seed, crossfit, None
        )
        return await self._run(values, cmd_predict)

    async def _run(self, values: Dict[str, Any], command: Any) -> Dict[str, Any]:
        try:
            config = build_config(values)
            report = await asyncio.to_thread(command, config)
        except (
            ConfigError,
            DatasetError,
            RegressorError,
            EstimationError,
            InferenceError,
            ValueError,
        ) as e:
            logger.warning(f"{values['mode']} failed: {e}")
            return _failure(e)

        summary = report["summary"]
        total = summary["succeeded"] + summary["failed"]
        return {
            "success": True,
            "report": json.loads(dumps_report(report)),
            "message": f"Estimated {summary['succeeded']} of {total} points",
        }

    async def compute_bandwidth(
        self, bandwidth_rule: str, n: int, degree: Optional[int] = None
    ) -> Dict[str, Any]:
        """
        Evaluate a bandwidth rule at sample size n.

        Args:
            bandwidth_rule: Rule text
            n: Sample size (at least 4)
            degree: Degree override (default floor(s))

        Returns:
            Dictionary with bandwidth and resolved degree

        Example:
            >>> result = await estimation_tools.compute_bandwidth("pointwise:s=2,alpha=1", 1000)
            >>> # Returns: {"success": True, "bandwidth": 0.251..., "degree": 2, ...}
        """
        try:
            rule = BandwidthRule.parse(bandwidth_rule)
            local = resolve_config(rule, n, degree)
        except ValueError as e:
            return _failure(e)

        return {
            "success": True,
            "bandwidth": local.bandwidth,
            "degree": local.degree,
            "rule": rule.to_text(),
            "n": n,
            "message": f"h = {local.bandwidth:.6g} at n = {n}",
        }
