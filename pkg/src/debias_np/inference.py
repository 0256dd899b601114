"""
Plug-in variance estimation and normal confidence intervals for f_tilde(x0).

The variance estimate is sum_i (w_h(X_i, x0)/m)^2 xi_i^2 with
xi_i = Y_i - f_hat(X_i) - b_hat(X_i), the second-stage residual at the
observation's own location.
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy import stats

from debias_np.debias import DebiasedFit, SmoothnessSpec
from debias_np.local_poly import WeightVector, lp_weight_matrix

logger = logging.getLogger(__name__)


class InferenceError(Exception):
    """Raised when inference is requested for a missing or failed point."""

    pass


@dataclass(frozen=True)
class InferenceResult:
    """Point estimate, variance estimate and confidence interval at x0."""

    x0: float
    ftilde: float
    var_hat: float
    v_hat: float
    ci_lo: float
    ci_hi: float
    level: float

    @property
    def half_width(self) -> float:
        return (self.ci_hi - self.ci_lo) / 2.0

    def contains(self, value: float) -> bool:
        return self.ci_lo <= value <= self.ci_hi

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class StandardizedErrors:
    """(f_tilde - f0)/sqrt(var_hat) per replication, with zero-variance exclusions counted."""

    values: np.ndarray
    excluded: int

    @property
    def total(self) -> int:
        return int(self.values.size) + self.excluded


def normal_quantile(p: float) -> float:
    """Standard normal quantile."""
    return float(stats.norm.ppf(p))


def plugin_variance(weights: WeightVector, xi: Sequence[float]) -> float:
    """sum_i W_i^2 xi_i^2 with normalized weights W_i = w_h(X_i, x0)/m."""
    w = weights.normalize().weights
    xi = np.asarray(xi, dtype=float)
    if xi.shape != w.shape:
        raise InferenceError(f"Residuals ({xi.size}) and weights ({w.size}) differ in length")
    return float(np.sum((w * xi) ** 2))


def _point_index(fit: DebiasedFit, x0: float) -> int:
    try:
        index = fit.index_of(x0)
    except KeyError as e:
        raise InferenceError(str(e)) from e
    if index in fit.failures:
        raise InferenceError(f"x0={x0} failed in the second stage: {fit.failures[index].reason}")
    return index


def second_stage_residuals(fit: DebiasedFit, indices: np.ndarray) -> np.ndarray:
    """
    xi_i = r_i - b_hat(X_i) for the given fold-2 observations.

    b_hat is refit at each X_i with the fit's second-stage config. Where
    that design is singular, b_hat at the nearest successful evaluation
    point stands in.
    """
    indices = np.asarray(indices, dtype=np.intp)
    if indices.size == 0:
        return np.zeros(0)
    locations = fit.fold2_xs[indices]
    batch = lp_weight_matrix(fit.fold2_xs, locations, fit.config)
    b_at = batch.apply(fit.residuals)
    if not batch.ok.all():
        ok_points = fit.eval_points[fit.ok]
        nearest = np.abs(locations[:, None] - ok_points[None, :]).argmin(axis=1)
        b_at = np.where(batch.ok, b_at, fit.bhat[fit.ok][nearest])
    return fit.residuals[indices] - b_at


def variance_estimates(fit: DebiasedFit) -> np.ndarray:
    """
    Plug-in variance at every evaluation point (NaN where the point failed).

    b_hat at fold-2 covariates is computed once for the union of all
    in-window observations.
    """
    if fit.is_crossfit:
        first, second = fit.halves
        return (variance_estimates(first) + variance_estimates(second)) / 4.0

    assert fit.weights is not None
    normalized = fit.weights.weights / fit.m
    needed = np.flatnonzero(np.any(normalized[fit.ok] != 0.0, axis=0))
    xi = np.zeros(fit.m)
    xi[needed] = second_stage_residuals(fit, needed)

    variances = np.sum((normalized * xi[None, :]) ** 2, axis=1)
    variances[~fit.ok] = np.nan
    return variances


def variance_estimate(fit: DebiasedFit, x0: float) -> float:
    """
    Plug-in estimate of Var(f_tilde(x0)).

    Raises:
        InferenceError: If x0 is not an evaluation point or failed
    """
    index = _point_index(fit, x0)
    if fit.is_crossfit:
        first, second = fit.halves
        return (variance_estimate(first, x0) + variance_estimate(second, x0)) / 4.0

    return float(variance_estimates(fit)[index])


def _interval(x0: float, ftilde: float, var_hat: float, n: int, h: float, level: float) -> InferenceResult:
    z = normal_quantile((1.0 + level) / 2.0)
    half = z * math.sqrt(var_hat)
    return InferenceResult(
        x0=float(x0),
        ftilde=float(ftilde),
        var_hat=float(var_hat),
        v_hat=float(n * h * var_hat),
        ci_lo=float(ftilde - half),
        ci_hi=float(ftilde + half),
        level=float(level),
    )


def _check_level(level: float) -> None:
    if not 0.0 < level < 1.0:
        raise InferenceError(f"Confidence level must be in (0, 1), got {level}")


def confidence_interval(fit: DebiasedFit, x0: float, level: float = 0.95) -> InferenceResult:
    """
    Normal confidence interval f_tilde(x0) +/- z * sqrt(var_hat).

    No bias correction is applied; intervals are only claimed valid under
    the undersmoothing (normality) bandwidth rule.

    Raises:
        InferenceError: On an invalid level or unavailable point
    """
    _check_level(level)
    index = _point_index(fit, x0)
    var_hat = variance_estimate(fit, x0)
    return _interval(x0, fit.ftilde[index], var_hat, fit.n, fit.bandwidth, level)


def confidence_intervals(fit: DebiasedFit, level: float = 0.95) -> List[Optional[InferenceResult]]:
    """Intervals at every evaluation point in order; None where the point failed."""
    _check_level(level)
    variances = variance_estimates(fit)
    results: List[Optional[InferenceResult]] = []
    for index, x0 in enumerate(fit.eval_points):
        if index in fit.failures:
            results.append(None)
            continue
        results.append(
            _interval(x0, fit.ftilde[index], variances[index], fit.n, fit.bandwidth, level)
        )
    return results


def standardize(
    estimates: Sequence[float], truths: Sequence[float], variances: Sequence[float]
) -> StandardizedErrors:
    """Standardize (estimate - truth)/sqrt(variance), excluding zero or missing variances."""
    est = np.asarray(estimates, dtype=float)
    truth = np.asarray(truths, dtype=float)
    var = np.asarray(variances, dtype=float)
    usable = np.isfinite(var) & (var > 0.0) & np.isfinite(est)
    excluded = int(est.size - usable.sum())
    if excluded:
        logger.debug(f"Excluded {excluded} replications with zero or missing variance")
    values = (est[usable] - truth[usable]) / np.sqrt(var[usable])
    return StandardizedErrors(values, excluded)


def standardized_errors(
    fits: Sequence[DebiasedFit], f0: Callable[[np.ndarray], np.ndarray], x0: float
) -> StandardizedErrors:
    """Standardized errors of replicated fits at x0 against the true function."""
    estimates, variances = [], []
    for fit in fits:
        index = _point_index(fit, x0)
        estimates.append(fit.ftilde[index])
        variances.append(variance_estimate(fit, x0))
    truth = float(np.asarray(f0(np.array([x0])))[0])
    return standardize(estimates, [truth] * len(estimates), variances)


def bias_bound(fit: DebiasedFit, x0: float, smoothness: SmoothnessSpec) -> float:
    """
    Upper bound on the conditional bias of f_tilde(x0).

    Given the fold-2 covariates and the first stage, if f0 - f_hat lies in
    the Holder class with exponent s and constant L, the bias is at most
    (L h^s / degree!) * (1/m) * sum_i |w_h(X_i, x0)|.
    """
    index = _point_index(fit, x0)
    if fit.is_crossfit:
        return max(bias_bound(half, x0, smoothness) for half in fit.halves)
    assert fit.weights is not None
    absolute_mass = float(np.sum(np.abs(fit.weights.row(index).weights))) / fit.m
    h = fit.bandwidth
    return smoothness.L * h**smoothness.s / math.factorial(fit.config.degree) * absolute_mass
