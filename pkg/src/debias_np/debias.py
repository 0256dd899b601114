"""
Three-stage debiased estimator.

Splits the data, fits the first stage on fold 1, fits the conditional
expected residual on fold 2 with local polynomial regression, and sums
the two: f_tilde(x0) = b_hat(x0) + f_hat(x0). Also hosts the bandwidth
rules tied to the smoothness of f0 - f_hat.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from debias_np.dataset_io import Dataset, Split, split_even
from debias_np.first_stage import FittedRegressor, RegressorSpec, TargetFunction, fit
from debias_np.local_poly import (
    MAX_DEGREE,
    LocalPolyConfig,
    SingularDesignError,
    WeightBatch,
    WeightVector,
    lp_weight_matrix,
)

logger = logging.getLogger(__name__)


class EstimationError(Exception):
    """Raised when no evaluation point can be estimated or inputs are out of range."""

    pass


@dataclass(frozen=True)
class SmoothnessSpec:
    """Holder exponent s, Holder constant L and bandwidth prefactor alpha."""

    s: float
    L: float = 1.0
    alpha: float = 1.0

    def __post_init__(self) -> None:
        for name in ("s", "L", "alpha"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"Smoothness parameter {name} must be positive, got {value}")
            object.__setattr__(self, name, float(value))

    @property
    def default_degree(self) -> int:
        """Polynomial degree floor(s), capped at the supported maximum."""
        return min(int(math.floor(self.s)), MAX_DEGREE)


class BandwidthRegime(str, Enum):
    """Bandwidth rules: rate-optimal pointwise, uniform, undersmoothed, or fixed."""

    POINTWISE = "pointwise"
    UNIFORM = "uniform"
    NORMALITY = "normality"
    FIXED = "fixed"


@dataclass(frozen=True)
class BandwidthRule:
    """A bandwidth regime plus its smoothness spec (or a fixed h)."""

    regime: BandwidthRegime
    smoothness: Optional[SmoothnessSpec] = None
    h: Optional[float] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "regime", BandwidthRegime(self.regime))
        if self.regime is BandwidthRegime.FIXED:
            if self.h is None or not (np.isfinite(self.h) and 0.0 < self.h <= 1.0):
                raise ValueError(f"Fixed bandwidth must be in (0, 1], got {self.h!r}")
            object.__setattr__(self, "h", float(self.h))
        elif self.smoothness is None:
            raise ValueError(f"Bandwidth regime '{self.regime.value}' needs a smoothness spec")

    @classmethod
    def fixed(cls, h: float) -> "BandwidthRule":
        return cls(BandwidthRegime.FIXED, h=h)

    @classmethod
    def parse(cls, text: str) -> "BandwidthRule":
        """
        Parse ``<regime>:s=<s>,alpha=<a>[,L=<L>]`` or ``fixed:<h>``.

        Raises:
            ValueError: On malformed text
        """
        head, _, rest = text.strip().partition(":")
        regime = BandwidthRegime(head.strip().lower())
        if regime is BandwidthRegime.FIXED:
            return cls.fixed(float(rest))
        params: Dict[str, float] = {}
        for item in filter(None, (part.strip() for part in rest.split(","))):
            key, sep, value = item.partition("=")
            if not sep or key.strip() not in ("s", "alpha", "L"):
                raise ValueError(f"Unknown bandwidth parameter {item!r}; expected s, alpha or L")
            params[key.strip()] = float(value)
        if "s" not in params:
            raise ValueError(f"Bandwidth rule {text!r} is missing s")
        return cls(regime, smoothness=SmoothnessSpec(**params))

    def to_text(self) -> str:
        if self.regime is BandwidthRegime.FIXED:
            return f"fixed:{self.h!r}"
        assert self.smoothness is not None
        sm = self.smoothness
        return f"{self.regime.value}:s={sm.s!r},alpha={sm.alpha!r},L={sm.L!r}"


def bandwidth(rule: BandwidthRule, n: int) -> float:
    """
    Evaluate a bandwidth rule at sample size n.

    - pointwise: alpha * n^(-1/(2s+1))
    - uniform: alpha * (ln n / n)^(1/(2s+1))
    - normality: alpha * n^(-1/(2s+1)) / ln n, which keeps n h -> inf
      while n h^(2s+1) -> 0
    - fixed: h as given

    Values above 1 are clamped to 1 with a warning.

    Raises:
        ValueError: If n < 4
    """
    if n < 4:
        raise ValueError(f"Bandwidth rules need n >= 4, got {n}")
    if rule.regime is BandwidthRegime.FIXED:
        assert rule.h is not None
        return rule.h

    assert rule.smoothness is not None
    s, alpha = rule.smoothness.s, rule.smoothness.alpha
    exponent = 1.0 / (2.0 * s + 1.0)
    if rule.regime is BandwidthRegime.POINTWISE:
        h = alpha * n ** (-exponent)
    elif rule.regime is BandwidthRegime.UNIFORM:
        h = alpha * (math.log(n) / n) ** exponent
    else:
        h = alpha * n ** (-exponent) / math.log(n)

    if h > 1.0:
        logger.warning(f"Bandwidth {h:.4g} from rule {rule.to_text()} at n={n} clamped to 1")
        return 1.0
    return h


def resolve_config(
    cfg: Union[LocalPolyConfig, BandwidthRule], n: int, degree: Optional[int] = None
) -> LocalPolyConfig:
    """
    Turn a bandwidth rule plus degree into a concrete second-stage config.

    A LocalPolyConfig passes through unchanged. The degree defaults to
    floor(s) when the rule carries a smoothness spec.
    """
    if isinstance(cfg, LocalPolyConfig):
        return cfg
    if degree is None:
        if cfg.smoothness is None:
            raise ValueError("A degree is required with a fixed bandwidth rule")
        degree = cfg.smoothness.default_degree
    return LocalPolyConfig(degree=degree, bandwidth=bandwidth(cfg, n))


@dataclass
class DebiasedFit:
    """
    Result of the debiased estimator at a set of evaluation points.

    Failed points (singular second-stage design) carry NaN in ``bhat`` and
    ``ftilde`` and are listed in ``failures``. A cross-fitted result keeps
    the two single-split fits in ``halves``.
    """

    eval_points: np.ndarray
    fhat: np.ndarray
    bhat: np.ndarray
    ftilde: np.ndarray
    config: LocalPolyConfig
    n: int
    m: int
    split: Split
    fold2_xs: np.ndarray
    residuals: np.ndarray
    weights: Optional[WeightBatch] = None
    failures: Dict[int, SingularDesignError] = field(default_factory=dict)
    regressor: Optional[FittedRegressor] = None
    halves: Tuple["DebiasedFit", ...] = ()

    @property
    def bandwidth(self) -> float:
        return self.config.bandwidth

    @property
    def ok(self) -> np.ndarray:
        mask = np.ones(self.eval_points.size, dtype=bool)
        mask[list(self.failures)] = False
        return mask

    @property
    def is_crossfit(self) -> bool:
        return bool(self.halves)

    def index_of(self, x0: float) -> int:
        """
        Return the position of ``x0`` among the evaluation points.

        Raises:
            KeyError: If x0 was not evaluated
        """
        hits = np.flatnonzero(np.isclose(self.eval_points, x0, rtol=0.0, atol=1e-12))
        if hits.size == 0:
            raise KeyError(f"x0={x0} is not an evaluation point of this fit")
        return int(hits[0])

    def weight_vector(self, x0: float) -> WeightVector:
        """Second-stage weights at x0; raises the point's SingularDesignError if it failed."""
        if self.weights is None:
            raise KeyError("Cross-fitted results keep weights in their halves")
        return self.weights.row(self.index_of(x0))

    def failure_records(self) -> List[Dict[str, Any]]:
        return [
            {
                "x0": float(self.eval_points[i]),
                "reason": err.reason,
                "in_window_count": err.in_window_count,
                "bandwidth": err.bandwidth,
            }
            for i, err in sorted(self.failures.items())
        ]


def _validate_points(eval_points: Sequence[float]) -> np.ndarray:
    points = np.atleast_1d(np.asarray(eval_points, dtype=float))
    if points.size == 0:
        raise EstimationError("No evaluation points given")
    if np.any(~np.isfinite(points)) or np.any((points < 0.0) | (points > 1.0)):
        raise EstimationError("Evaluation points must lie in [0, 1]")
    return points


def estimate(
    ds: Dataset,
    seed: int,
    reg: RegressorSpec,
    cfg: Union[LocalPolyConfig, BandwidthRule],
    eval_points: Sequence[float],
    degree: Optional[int] = None,
    f0: Optional[TargetFunction] = None,
    split: Optional[Split] = None,
) -> DebiasedFit:
    """
    Run the three-stage debiased estimator.

    1. Split the observations into two folds (``split_even(ds, seed)``
       unless ``split`` is given).
    2. Fit ``reg`` on fold 1.
    3. Fit the fold-2 residuals Y - f_hat(X) by local polynomial
       regression at every evaluation point and add f_hat.

    Args:
        ds: Observations
        seed: Split seed
        reg: First-stage regressor spec
        cfg: Second-stage config, or a bandwidth rule combined with ``degree``
        eval_points: Points x0 in [0, 1]
        degree: Polynomial degree when ``cfg`` is a rule
        f0: True regression function for oracle regressors
        split: Precomputed split (overrides ``seed``)

    Returns:
        DebiasedFit; singular points are reported per point

    Raises:
        EstimationError: If every point fails or points fall outside [0, 1]
        RegressorError: If the first stage cannot be fit on fold 1
    """
    points = _validate_points(eval_points)
    split = split if split is not None else split_even(ds, seed)
    local = resolve_config(cfg, ds.n, degree)

    model = fit(reg, ds.xs[split.fold1], ds.ys[split.fold1], f0)
    fold2_xs = ds.xs[split.fold2]
    residuals = ds.ys[split.fold2] - model.predict(fold2_xs)

    batch = lp_weight_matrix(fold2_xs, points, local)
    fhat = model.predict(points)
    bhat = batch.apply(residuals)
    ftilde = bhat + fhat

    for index, err in batch.failures.items():
        logger.warning(f"Evaluation point {points[index]:.6g} failed: {err.reason}")
    if len(batch.failures) == points.size:
        raise EstimationError(
            f"All {points.size} evaluation points failed (h={local.bandwidth:.4g}, "
            f"degree={local.degree}); widen the bandwidth or lower the degree"
        )

    return DebiasedFit(
        eval_points=points,
        fhat=fhat,
        bhat=bhat,
        ftilde=ftilde,
        config=local,
        n=ds.n,
        m=split.m,
        split=split,
        fold2_xs=fold2_xs,
        residuals=residuals,
        weights=batch,
        failures=dict(batch.failures),
        regressor=model,
    )


def estimate_crossfit(
    ds: Dataset,
    seed: int,
    reg: RegressorSpec,
    cfg: Union[LocalPolyConfig, BandwidthRule],
    eval_points: Sequence[float],
    degree: Optional[int] = None,
    f0: Optional[TargetFunction] = None,
) -> DebiasedFit:
    """
    Cross-fitted variant: run ``estimate`` with the folds in both roles and average.

    f_hat and b_hat are averaged separately and f_tilde is their sum. A
    point failing in either half is reported as failed.
    """
    split = split_even(ds, seed)
    halves = []
    for role in (split, split.swapped()):
        try:
            halves.append(estimate(ds, seed, reg, cfg, eval_points, degree, f0, split=role))
        except EstimationError as e:
            raise EstimationError(f"Cross-fit half failed: {e}") from e
    first, second = halves

    failures = dict(second.failures)
    failures.update(first.failures)
    if len(failures) == first.eval_points.size:
        raise EstimationError("Every evaluation point failed in at least one cross-fit half")

    fhat = (first.fhat + second.fhat) / 2.0
    bhat = (first.bhat + second.bhat) / 2.0
    bhat[list(failures)] = np.nan
    return DebiasedFit(
        eval_points=first.eval_points,
        fhat=fhat,
        bhat=bhat,
        ftilde=bhat + fhat,
        config=first.config,
        n=ds.n,
        m=split.m,
        split=split,
        fold2_xs=first.fold2_xs,
        residuals=first.residuals,
        weights=None,
        failures=failures,
        regressor=first.regressor,
        halves=(first, second),
    )
