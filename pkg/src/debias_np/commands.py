"""
Run implementations behind the CLI and MCP surfaces.

Each ``cmd_*`` takes a validated ExperimentConfig and returns a report
mapping with ``meta`` (version, seed, resolved config), ``records`` and
``summary``. Pass/fail verdicts against the documented thresholds are
computed here; the library modules only return raw numbers.
"""

import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np
import pandas as pd

from debias_np import __version__
from debias_np.config import ConfigError, ExperimentConfig, Mode
from debias_np.dataset_io import Dataset, DatasetError, dumps_report, load_csv, write_report
from debias_np.debias import DebiasedFit, estimate, estimate_crossfit
from debias_np.first_stage import describe
from debias_np.inference import bias_bound, confidence_intervals
from debias_np.simulation import (
    INTERIOR,
    McReport,
    run_coverage,
    run_double_robustness,
    run_normality,
    run_rate,
    run_shift,
    run_uniform,
)

logger = logging.getLogger(__name__)

RATE_SLOPE_BAND = (-1.0, -0.6)
UNIFORM_SLOPE_BAND = (-1.05, -0.55)
COVERAGE_BAND_95 = (0.90, 0.98)
COVERAGE_HALF_BAND = 0.08
KS_CRITICAL_1PCT = 1.63
NORMAL_MEAN_BAND = (-0.15, 0.15)
NORMAL_VARIANCE_BAND = (0.7, 1.3)
SHIFT_MAX_RATIO = 3.0
DR_MAX_ABS_BIAS = 0.05


@dataclass(frozen=True)
class Verdict:
    """Outcome of one thresholded check; ``passed`` is None when the value is undefined."""

    check: str
    value: Optional[float]
    lo: Optional[float]
    hi: Optional[float]
    passed: Optional[bool]
    low_confidence: bool = False
    n: Optional[int] = None


def check_band(
    check: str,
    value: Optional[float],
    lo: Optional[float] = None,
    hi: Optional[float] = None,
    low_confidence: bool = False,
    n: Optional[int] = None,
) -> Verdict:
    """Compare ``value`` against the closed band [lo, hi]; open ends are unbounded."""
    if value is None or not math.isfinite(value):
        return Verdict(check, None, lo, hi, None, low_confidence, n)
    passed = (lo is None or value >= lo) and (hi is None or value <= hi)
    return Verdict(check, float(value), lo, hi, bool(passed), low_confidence, n)


def _meta(config: ExperimentConfig, **extra: Any) -> Dict[str, Any]:
    return {"version": __version__, "seed": config.seed, "config": config.to_dict(), **extra}


def _estimate(config: ExperimentConfig, ds: Dataset) -> DebiasedFit:
    scaled = ds.rescale.apply(np.asarray(config.eval_points, dtype=float))
    if np.any((scaled < 0.0) | (scaled > 1.0)):
        raise ConfigError(
            f"'eval_points' {list(config.eval_points)} fall outside the observed covariate range"
        )
    runner = estimate_crossfit if config.crossfit else estimate
    return runner(ds, config.seed, config.regressor, config.bandwidth, scaled, config.degree)


def _point_records(config: ExperimentConfig, fit: DebiasedFit) -> List[Dict[str, Any]]:
    records = []
    for index, x0 in enumerate(config.eval_points):
        record: Dict[str, Any] = {
            "x0": float(x0),
            "x0_scaled": float(fit.eval_points[index]),
            "fhat": float(fit.fhat[index]),
        }
        failure = fit.failures.get(index)
        if failure is None:
            record.update(
                status="ok", bhat=float(fit.bhat[index]), ftilde=float(fit.ftilde[index])
            )
        else:
            record.update(
                status="singular_design",
                reason=failure.reason,
                in_window_count=failure.in_window_count,
                bhat=None,
                ftilde=None,
            )
        records.append(record)
    return records


def _fit_meta(config: ExperimentConfig, ds: Dataset, fit: DebiasedFit) -> Dict[str, Any]:
    assert fit.regressor is not None
    return _meta(
        config,
        n=ds.n,
        m=fit.m,
        bandwidth=fit.bandwidth,
        degree=fit.config.degree,
        rescale=ds.rescale.to_dict(),
        first_stage=describe(fit.regressor),
    )


def cmd_fit(config: ExperimentConfig) -> Dict[str, Any]:
    """
    Fit the debiased estimator on CSV data and report estimates with confidence intervals.

    Singular evaluation points are listed with their reason; the run
    succeeds as long as one point does.

    Raises:
        DatasetError: On unreadable data
        RegressorError: If the first stage cannot be fit
        EstimationError: If every evaluation point fails
    """
    assert config.data is not None
    ds = load_csv(config.data, config.x_col, config.y_col)
    fit = _estimate(config, ds)
    records = _point_records(config, fit)

    smoothness = config.bandwidth.smoothness
    for record, interval in zip(records, confidence_intervals(fit, config.level)):
        if interval is None:
            continue
        record.update(
            var_hat=interval.var_hat,
            v_hat=interval.v_hat,
            ci_lo=interval.ci_lo,
            ci_hi=interval.ci_hi,
            level=interval.level,
        )
        if smoothness is not None:
            record["bias_bound"] = bias_bound(fit, interval.x0, smoothness)

    logger.info(f"fit: {len(records) - len(fit.failures)} of {len(records)} points succeeded")
    return {
        "meta": _fit_meta(config, ds, fit),
        "records": records,
        "summary": {"succeeded": len(records) - len(fit.failures), "failed": len(fit.failures)},
    }


def cmd_predict(config: ExperimentConfig) -> Dict[str, Any]:
    """Fit on CSV data and report f_tilde at points given in original covariate units."""
    assert config.data is not None
    ds = load_csv(config.data, config.x_col, config.y_col)
    fit = _estimate(config, ds)
    records = _point_records(config, fit)
    return {
        "meta": _fit_meta(config, ds, fit),
        "records": records,
        "summary": {"succeeded": len(records) - len(fit.failures), "failed": len(fit.failures)},
    }


def _coverage_band(level: float) -> Tuple[float, float]:
    if math.isclose(level, 0.95):
        return COVERAGE_BAND_95
    return (max(level - COVERAGE_HALF_BAND, 0.0), min(level + COVERAGE_HALF_BAND, 1.0))


def _verdicts(report: McReport) -> List[Verdict]:
    low = bool(report.diagnostics.get("low_confidence", False))
    verdicts: List[Verdict] = []
    if report.kind == "rate":
        assert report.slope is not None
        verdicts.append(check_band("mse_slope", report.slope.slope, *RATE_SLOPE_BAND, low))
    elif report.kind == "coverage":
        lo, hi = _coverage_band(report.config.level)
        for cell in report.cells:
            verdicts.append(check_band("coverage", cell.coverage, lo, hi, low, cell.n))
    elif report.kind == "normality":
        for entry in report.diagnostics["ks"]:
            n, count = entry["n"], entry["count"]
            critical = KS_CRITICAL_1PCT / math.sqrt(count)
            verdicts.append(check_band("ks_statistic", entry["statistic"], None, critical, low, n))
            verdicts.append(check_band("standardized_mean", entry["mean"], *NORMAL_MEAN_BAND, low, n))
            verdicts.append(
                check_band("standardized_variance", entry["variance"], *NORMAL_VARIANCE_BAND, low, n)
            )
    elif report.kind == "uniform":
        assert report.slope is not None
        verdicts.append(check_band("sup2_slope", report.slope.slope, *UNIFORM_SLOPE_BAND, low))
        decreasing = report.diagnostics["sup_decreasing"]
        verdicts.append(Verdict("sup_decreasing", float(decreasing), None, None, decreasing, low))
    elif report.kind == "shift":
        for cell in report.cells:
            verdicts.append(check_band("shift_ratio", cell.ratio, None, SHIFT_MAX_RATIO, low, cell.n))
            verdicts.append(
                check_band("sup_bound_violations", cell.bound_violations, 0, 0, low, cell.n)
            )
    elif report.kind == "double_robustness":
        for name, scenario in report.diagnostics["scenarios"].items():
            last = scenario["abs_bias_by_n"][-1]
            n = report.config.sample_sizes[-1]
            verdicts.append(check_band(f"{name}_abs_bias", last, None, DR_MAX_ABS_BIAS, low, n))
            decreasing = scenario["decreasing"]
            verdicts.append(Verdict(f"{name}_decreasing", float(decreasing), None, None, decreasing, low))
    return verdicts


def _run_harness(config: ExperimentConfig) -> McReport:
    mc = config.mc_config()
    if config.mode is Mode.RATE:
        return run_rate(mc)
    if config.mode is Mode.COVERAGE:
        return run_coverage(mc)
    if config.mode is Mode.NORMALITY:
        return run_normality(mc)
    if config.mode is Mode.UNIFORM:
        return run_uniform(mc, np.linspace(INTERIOR[0], INTERIOR[1], config.grid_points))
    if config.mode is Mode.SHIFT:
        assert config.train_covariates is not None and config.test_covariates is not None
        return run_shift(mc, config.train_covariates, config.test_covariates)
    return run_double_robustness(mc)


def cmd_simulate(config: ExperimentConfig) -> Dict[str, Any]:
    """
    Run the Monte Carlo harness selected by ``config.mode``.

    The report carries per-cell records, per-replication values, the
    fitted slope (when the harness has one), diagnostics and verdicts.

    Raises:
        ConfigError: If ``config.mode`` is not a simulation mode
        SimulationError: If a harness run degenerates
    """
    if not config.mode.is_simulation:
        raise ConfigError(f"'mode' {config.mode.value} is not a simulation mode")
    logger.info(f"simulate: {config.mode.value} over n={list(config.sample_sizes)}")
    report = _run_harness(config)
    verdicts = _verdicts(report)

    summary: Dict[str, Any] = {
        "kind": report.kind,
        "slope": asdict(report.slope) if report.slope is not None else None,
        "diagnostics": report.diagnostics,
        "verdicts": [asdict(v) for v in verdicts],
        "passed": all(v.passed is not False for v in verdicts),
        "low_confidence": bool(report.diagnostics.get("low_confidence", False)),
    }
    if report.kind == "coverage":
        summary["coverage"] = report.cells[-1].coverage
    return {
        "meta": _meta(config),
        "records": report.records(),
        "replications": report.replications,
        "summary": summary,
    }


def run_command(config: ExperimentConfig) -> Dict[str, Any]:
    """Dispatch a validated config to cmd_fit, cmd_predict or cmd_simulate."""
    if config.mode is Mode.FIT:
        return cmd_fit(config)
    if config.mode is Mode.PREDICT:
        return cmd_predict(config)
    return cmd_simulate(config)


def emit_report(report: Mapping[str, Any], out: Optional[Path]) -> Optional[str]:
    """Write the report to ``out``; without a path, return the serialized text."""
    if out is None:
        return dumps_report(report)
    write_report(report, out)
    return None


def write_cells_csv(report: Mapping[str, Any], path: Union[str, Path]) -> None:
    """Write the report's per-cell records as CSV for external plotting."""
    path = Path(path)
    frame = pd.DataFrame.from_records(list(report.get("records", [])))
    try:
        frame.to_csv(path, index=False)
    except OSError as e:
        raise DatasetError(f"Failed to write cells CSV {path}: {e}") from e
    logger.info(f"Wrote {len(frame)} cells to {path}")
