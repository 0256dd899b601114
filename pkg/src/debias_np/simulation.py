"""
Seeded Monte Carlo harness for the debiased estimator.

Draws samples from known data-generating processes and measures how the
estimator behaves as n grows:
- pointwise MSE rates, bias and variance per (n, x0) cell
- confidence interval coverage and normality of standardized errors
- sup-norm (uniform) error rates over an interior grid
- robustness of the error to covariate shift
- double robustness under a broken first or second stage

Replication r at sample size n draws from a stream derived from
(seed, n, r), so cells never depend on which other cells are run.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
from scipy import stats

from debias_np.dataset_io import Dataset
from debias_np.debias import (
    BandwidthRegime,
    BandwidthRule,
    DebiasedFit,
    EstimationError,
    estimate,
    estimate_crossfit,
    resolve_config,
)
from debias_np.first_stage import (
    Offset,
    OffsetKind,
    RegressorKind,
    RegressorSpec,
    fit,
)
from debias_np.inference import normal_quantile, standardize, variance_estimates

logger = logging.getLogger(__name__)

INTERIOR = (0.05, 0.95)
MAX_EXCLUDED_FRACTION = 0.05
KS_CRITICAL = {0.10: 1.22, 0.05: 1.36, 0.01: 1.63}
LINEAR_SMOOTHNESS_CAP = 4.0

T = TypeVar("T")


class SimulationError(Exception):
    """Raised for invalid harness configurations or degenerate runs."""

    pass


class TargetKind(str, Enum):
    """True regression functions with their nominal smoothness."""

    SINE = "sine"
    HOLDER_KINK = "holder_kink"
    LINEAR = "linear"


_TARGETS: Dict[TargetKind, Tuple[Callable[[np.ndarray], np.ndarray], float]] = {
    TargetKind.SINE: (lambda x: np.sin(2.0 * np.pi * x), 2.0),
    TargetKind.HOLDER_KINK: (lambda x: np.abs(x - 0.5) ** 1.5, 1.5),
    TargetKind.LINEAR: (lambda x: 1.0 + 2.0 * x, LINEAR_SMOOTHNESS_CAP),
}


class NoiseKind(str, Enum):
    """Sub-Gaussian noise families."""

    GAUSSIAN = "gaussian"
    RADEMACHER = "rademacher"
    UNIFORM = "uniform"


_NOISE_ALIASES = {"scaled_rademacher": NoiseKind.RADEMACHER, "uniform_centered": NoiseKind.UNIFORM}


@dataclass(frozen=True)
class Noise:
    """Additive noise; ``scale`` is sigma (gaussian, rademacher) or the half-width (uniform)."""

    kind: NoiseKind
    scale: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        if not (np.isfinite(self.scale) and self.scale >= 0.0):
            raise SimulationError(f"Noise scale must be non-negative, got {self.scale}")
        object.__setattr__(self, "scale", float(self.scale))

    @property
    def variance(self) -> float:
        if self.kind is NoiseKind.UNIFORM:
            return self.scale**2 / 3.0
        return self.scale**2

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind is NoiseKind.GAUSSIAN:
            return self.scale * rng.standard_normal(n)
        if self.kind is NoiseKind.RADEMACHER:
            return self.scale * (2.0 * rng.integers(0, 2, size=n) - 1.0)
        return rng.uniform(-self.scale, self.scale, size=n)

    @classmethod
    def parse(cls, text: str) -> "Noise":
        """Parse ``gaussian:<sigma>``, ``rademacher:<sigma>`` or ``uniform:<halfwidth>``."""
        kind, _, value = text.strip().partition(":")
        try:
            name = kind.strip().lower()
            return cls(_NOISE_ALIASES.get(name) or NoiseKind(name), float(value))
        except ValueError as e:
            raise SimulationError(f"Invalid noise spec {text!r}: {e}") from e

    def to_text(self) -> str:
        return f"{self.kind.value}:{self.scale!r}"


class CovariateKind(str, Enum):
    """Covariate distributions on [0, 1]."""

    UNIFORM01 = "uniform01"
    BETA = "beta"


@dataclass(frozen=True)
class CovariateDist:
    """Uniform(0, 1) or Beta(a, b) covariates; both have bounded densities for a, b >= 1."""

    kind: CovariateKind = CovariateKind.UNIFORM01
    a: float = 1.0
    b: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", CovariateKind(self.kind))
        if not (self.a > 0 and self.b > 0):
            raise SimulationError(f"Beta parameters must be positive, got a={self.a}, b={self.b}")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind is CovariateKind.UNIFORM01:
            return rng.uniform(0.0, 1.0, size=n)
        return rng.beta(self.a, self.b, size=n)

    def pdf(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind is CovariateKind.UNIFORM01:
            return ((x >= 0.0) & (x <= 1.0)).astype(float)
        return stats.beta.pdf(x, self.a, self.b)

    @classmethod
    def parse(cls, text: str) -> "CovariateDist":
        """Parse ``uniform01`` or ``beta:<a>,<b>``."""
        head, _, rest = text.strip().partition(":")
        head = head.strip().lower()
        try:
            if head == CovariateKind.UNIFORM01.value and not rest:
                return cls()
            if head == CovariateKind.BETA.value:
                a, b = (float(part) for part in rest.split(","))
                return cls(CovariateKind.BETA, a, b)
        except ValueError as e:
            raise SimulationError(f"Invalid covariate spec {text!r}: {e}") from e
        raise SimulationError(f"Invalid covariate spec {text!r}; expected uniform01 or beta:<a>,<b>")

    def to_text(self) -> str:
        if self.kind is CovariateKind.UNIFORM01:
            return self.kind.value
        return f"beta:{self.a!r},{self.b!r}"


@dataclass(frozen=True)
class Dgp:
    """Data-generating process Y = f0(X) + noise, X ~ covariates."""

    f0: TargetKind = TargetKind.SINE
    noise: Noise = Noise(NoiseKind.GAUSSIAN, 0.5)
    covariates: CovariateDist = CovariateDist()

    def __post_init__(self) -> None:
        object.__setattr__(self, "f0", TargetKind(self.f0))

    def regression(self, x: np.ndarray) -> np.ndarray:
        """Evaluate the true regression function."""
        return _TARGETS[self.f0][0](np.asarray(x, dtype=float))

    @property
    def smoothness(self) -> float:
        """Nominal Holder exponent of f0."""
        return _TARGETS[self.f0][1]

    def with_covariates(self, covariates: CovariateDist) -> "Dgp":
        return replace(self, covariates=covariates)

    def to_dict(self) -> Dict[str, str]:
        return {
            "f0": self.f0.value,
            "noise": self.noise.to_text(),
            "covariates": self.covariates.to_text(),
        }


REFERENCE_DGP = Dgp()


@dataclass(frozen=True)
class McConfig:
    """Monte Carlo experiment: DGP, estimator settings, sample sizes and replications."""

    dgp: Dgp
    reg: RegressorSpec
    rule: BandwidthRule
    degree: int
    sample_sizes: Tuple[int, ...]
    replications: int
    eval_points: Tuple[float, ...] = (0.5,)
    seed: int = 0
    level: float = 0.95
    crossfit: bool = False
    workers: int = 1

    def __post_init__(self) -> None:
        sizes = tuple(int(n) for n in self.sample_sizes)
        points = tuple(float(x) for x in self.eval_points)
        object.__setattr__(self, "sample_sizes", sizes)
        object.__setattr__(self, "eval_points", points)
        if self.replications < 1:
            raise SimulationError(f"Need at least one replication, got {self.replications}")
        if not sizes:
            raise SimulationError("Need at least one sample size")
        if any(n < 4 for n in sizes):
            raise SimulationError(f"Sample sizes must be at least 4, got {list(sizes)}")
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise SimulationError(f"Sample sizes must be strictly increasing, got {list(sizes)}")
        if not points or any(not 0.0 <= x <= 1.0 for x in points):
            raise SimulationError(f"Evaluation points must lie in [0, 1], got {list(points)}")
        if not 0.0 < self.level < 1.0:
            raise SimulationError(f"Level must be in (0, 1), got {self.level}")
        if self.workers < 1:
            raise SimulationError(f"Workers must be at least 1, got {self.workers}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "dgp": self.dgp.to_dict(),
            "regressor": self.reg.to_text(),
            "bandwidth": self.rule.to_text(),
            "degree": self.degree,
            "sample_sizes": list(self.sample_sizes),
            "replications": self.replications,
            "eval_points": list(self.eval_points),
            "seed": self.seed,
            "level": self.level,
            "crossfit": self.crossfit,
        }


@dataclass(frozen=True)
class ReplicationResult:
    """Estimates of one replication at every evaluation point (NaN where failed)."""

    n: int
    replication: int
    bandwidth: float
    ftilde: np.ndarray
    var_hat: Optional[np.ndarray] = None

    @property
    def failed(self) -> int:
        return int(np.count_nonzero(~np.isfinite(self.ftilde)))


@dataclass(frozen=True)
class CellSummary:
    """Empirical bias, variance and MSE of f_tilde(x0) at one sample size."""

    scenario: str
    n: int
    x0: float
    bandwidth: float
    truth: float
    replications: int
    failures: int
    mean: float
    bias: float
    variance: float
    mse: float
    variance_nh: float
    bias_over_hs: float
    coverage: Optional[float] = None
    mean_var_hat: Optional[float] = None


@dataclass(frozen=True)
class SupNormCell:
    """Sup-norm and population errors at one sample size."""

    n: int
    bandwidth: float
    replications: int
    failed_points: int
    mean_sup: float
    mean_sup2: float
    integrated_mse: float


@dataclass(frozen=True)
class ShiftCell:
    """Covariate-shift comparison at one sample size."""

    n: int
    bandwidth: float
    replications: int
    shifted_mse: float
    unshifted_mse: float
    ratio: float
    mean_sup2: float
    bound_violations: int
    baseline_shifted_mse: float
    baseline_unshifted_mse: float
    baseline_ratio: float


@dataclass(frozen=True)
class SlopeFit:
    """Least-squares slope of log(y) on log(x); ``slope`` is None when undefined."""

    slope: Optional[float]
    stderr: Optional[float]
    intercept: Optional[float]
    points: int
    reason: Optional[str] = None

    @property
    def defined(self) -> bool:
        return self.slope is not None


@dataclass
class McReport:
    """Output of a Monte Carlo run."""

    kind: str
    config: McConfig
    cells: List[Any]
    slope: Optional[SlopeFit] = None
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    replications: List[Dict[str, Any]] = field(default_factory=list)

    def cell(self, n: int, x0: Optional[float] = None, scenario: str = "main") -> Any:
        """Return the cell for (scenario, n, x0)."""
        for cell in self.cells:
            if cell.n != n or getattr(cell, "scenario", "main") != scenario:
                continue
            if x0 is None or math.isclose(getattr(cell, "x0", x0), x0, abs_tol=1e-12):
                return cell
        raise KeyError(f"No cell for scenario={scenario}, n={n}, x0={x0}")

    def records(self) -> List[Dict[str, Any]]:
        return [{"kind": self.kind, **asdict(cell)} for cell in self.cells]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "config": self.config.to_dict(),
            "records": self.records(),
            "slope": asdict(self.slope) if self.slope is not None else None,
            "diagnostics": self.diagnostics,
            "replications": self.replications,
        }


def replication_streams(seed: int, n: int, replication: int) -> Tuple[np.random.Generator, int]:
    """
    Independent data generator and split seed for replication r at size n.

    Both derive from ``SeedSequence((seed, n, replication))``, so adding
    sample sizes or replications never perturbs existing cells.
    """
    data_seq, split_seq = np.random.SeedSequence((seed, n, replication)).spawn(2)
    return np.random.default_rng(data_seq), int(split_seq.generate_state(1, np.uint64)[0])


def draw_sample(dgp: Dgp, n: int, seed: Any) -> Dataset:
    """
    Draw n i.i.d. observations Y = f0(X) + noise from ``dgp``.

    Args:
        dgp: Data-generating process
        n: Sample size (at least 4)
        seed: Anything ``numpy.random.default_rng`` accepts, including a Generator

    Raises:
        SimulationError: If n < 4
    """
    if n < 4:
        raise SimulationError(f"Sample size must be at least 4, got {n}")
    rng = np.random.default_rng(seed)
    xs = dgp.covariates.sample(rng, n)
    ys = dgp.regression(xs) + dgp.noise.sample(rng, n)
    return Dataset(xs, ys)


def fit_log_slope(xs: Sequence[float], ys: Sequence[float]) -> SlopeFit:
    """Fit log(ys) = a + slope * log(xs) by least squares, with the slope's standard error."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    usable = np.isfinite(y) & (y > 0.0) & np.isfinite(x) & (x > 0.0)
    if usable.sum() < 2:
        return SlopeFit(None, None, None, int(usable.sum()), "fewer than 2 positive values")
    if usable.sum() < x.size:
        logger.warning(f"Slope fit dropped {x.size - usable.sum()} non-positive values")
    result = stats.linregress(np.log(x[usable]), np.log(y[usable]))
    stderr = float(result.stderr) if usable.sum() > 2 else None
    return SlopeFit(float(result.slope), stderr, float(result.intercept), int(usable.sum()))


def ks_normal(values: Sequence[float]) -> Dict[str, Any]:
    """
    One-sample Kolmogorov-Smirnov test of ``values`` against N(0, 1).

    Critical values use the asymptotic form c(alpha)/sqrt(R).
    """
    z = np.asarray(values, dtype=float)
    if z.size == 0:
        raise SimulationError("No standardized errors to test")
    result = stats.kstest(z, "norm")
    root = math.sqrt(z.size)
    critical = {f"{alpha:.2f}": c / root for alpha, c in KS_CRITICAL.items()}
    return {
        "statistic": float(result.statistic),
        "pvalue": float(result.pvalue),
        "critical": critical,
        "mean": math.fsum(z) / z.size,
        "variance": math.fsum((z - z.mean()) ** 2) / z.size,
        "count": int(z.size),
    }


def _run_parallel(task: Callable[[int], T], count: int, workers: int) -> List[T]:
    """Run task(0..count-1), in order, optionally on a thread pool."""
    if workers <= 1 or count <= 1:
        return [task(r) for r in range(count)]
    with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="mc-replication") as pool:
        return list(pool.map(task, range(count)))


def _estimate(
    cfg: McConfig,
    ds: Dataset,
    split_seed: int,
    reg: RegressorSpec,
    rule: BandwidthRule,
    points: Sequence[float],
    dgp: Dgp,
) -> Optional[DebiasedFit]:
    runner = estimate_crossfit if cfg.crossfit else estimate
    try:
        return runner(ds, split_seed, reg, rule, points, cfg.degree, dgp.regression)
    except EstimationError as e:
        logger.debug(f"Replication failed at n={ds.n}: {e}")
        return None


def _simulate_points(
    cfg: McConfig,
    n: int,
    *,
    reg: Optional[RegressorSpec] = None,
    rule: Optional[BandwidthRule] = None,
    eval_points: Optional[Sequence[float]] = None,
    inference: bool = False,
) -> List[ReplicationResult]:
    """Run every replication at sample size n and collect per-point estimates."""
    reg = reg or cfg.reg
    rule = rule or cfg.rule
    points = np.asarray(eval_points if eval_points is not None else cfg.eval_points, dtype=float)
    h = resolve_config(rule, n, cfg.degree).bandwidth

    def task(r: int) -> ReplicationResult:
        rng, split_seed = replication_streams(cfg.seed, n, r)
        ds = draw_sample(cfg.dgp, n, rng)
        result = _estimate(cfg, ds, split_seed, reg, rule, points, cfg.dgp)
        if result is None:
            nan = np.full(points.size, np.nan)
            return ReplicationResult(n, r, h, nan, nan if inference else None)
        var_hat = variance_estimates(result) if inference else None
        return ReplicationResult(n, r, h, result.ftilde, var_hat)

    return _run_parallel(task, cfg.replications, cfg.workers)


def _smoothness(cfg: McConfig, rule: BandwidthRule) -> float:
    if rule.smoothness is not None:
        return rule.smoothness.s
    return cfg.dgp.smoothness


def summarize_cell(
    values: Sequence[float],
    truth: float,
    *,
    scenario: str,
    n: int,
    x0: float,
    bandwidth: float,
    s: float,
    hits: Optional[Sequence[bool]] = None,
    var_hats: Optional[Sequence[float]] = None,
) -> CellSummary:
    """
    Aggregate replicated estimates at one (n, x0).

    Sums use ``math.fsum`` so results do not depend on replication order.
    Variance uses the 1/R normalization, which makes MSE = bias^2 + variance.

    Raises:
        SimulationError: If every replication failed
    """
    v = np.asarray(values, dtype=float)
    usable = np.isfinite(v)
    k = int(usable.sum())
    failures = int(v.size) - k
    if k == 0:
        raise SimulationError(f"All {v.size} replications failed at n={n}, x0={x0}")
    v = v[usable]
    mean = math.fsum(v) / k
    variance = math.fsum((v - mean) ** 2) / k
    mse = math.fsum((v - truth) ** 2) / k
    bias = mean - truth

    coverage = None
    if hits is not None:
        coverage = math.fsum(np.asarray(hits, dtype=float)[usable]) / k
    mean_var_hat = None
    if var_hats is not None:
        mean_var_hat = math.fsum(np.asarray(var_hats, dtype=float)[usable]) / k

    return CellSummary(
        scenario=scenario,
        n=n,
        x0=x0,
        bandwidth=bandwidth,
        truth=truth,
        replications=k,
        failures=failures,
        mean=mean,
        bias=bias,
        variance=variance,
        mse=mse,
        variance_nh=variance * n * bandwidth,
        bias_over_hs=abs(bias) / bandwidth**s,
        coverage=coverage,
        mean_var_hat=mean_var_hat,
    )


def _pointwise_cells(
    cfg: McConfig,
    *,
    scenario: str = "main",
    reg: Optional[RegressorSpec] = None,
    rule: Optional[BandwidthRule] = None,
    inference: bool = False,
) -> Tuple[List[CellSummary], List[Dict[str, Any]], Dict[int, List[ReplicationResult]]]:
    rule = rule or cfg.rule
    s = _smoothness(cfg, rule)
    points = np.asarray(cfg.eval_points)
    truths = cfg.dgp.regression(points)
    z = normal_quantile((1.0 + cfg.level) / 2.0)

    cells: List[CellSummary] = []
    records: List[Dict[str, Any]] = []
    by_n: Dict[int, List[ReplicationResult]] = {}
    for n in cfg.sample_sizes:
        logger.info(f"[{scenario}] n={n}: {cfg.replications} replications")
        results = _simulate_points(cfg, n, reg=reg, rule=rule, inference=inference)
        by_n[n] = results
        estimates = np.array([res.ftilde for res in results])
        variances = np.array([res.var_hat for res in results]) if inference else None
        hits = None
        if variances is not None:
            half = z * np.sqrt(variances)
            hits = (estimates - half <= truths) & (truths <= estimates + half)

        for j, x0 in enumerate(points):
            cells.append(
                summarize_cell(
                    estimates[:, j],
                    float(truths[j]),
                    scenario=scenario,
                    n=n,
                    x0=float(x0),
                    bandwidth=results[0].bandwidth,
                    s=s,
                    hits=hits[:, j] if hits is not None else None,
                    var_hats=variances[:, j] if variances is not None else None,
                )
            )
        for res_index, res in enumerate(results):
            record: Dict[str, Any] = {
                "scenario": scenario,
                "n": n,
                "replication": res.replication,
                "ftilde": res.ftilde,
            }
            if variances is not None and hits is not None:
                record["var_hat"] = variances[res_index]
                record["hit"] = hits[res_index]
            records.append(record)
    return cells, records, by_n


def _check_effort(kind: str, cfg: McConfig, min_sizes: int, min_replications: int) -> bool:
    """Warn about configurations too small for the intended check; return low-confidence flag."""
    low = len(cfg.sample_sizes) < min_sizes or cfg.replications < min_replications
    if low:
        logger.warning(
            f"{kind}: {len(cfg.sample_sizes)} sample sizes x {cfg.replications} replications "
            f"is below the recommended {min_sizes} x {min_replications}; results are low confidence"
        )
    return low


def _check_regime(kind: str, rule: BandwidthRule, expected: BandwidthRegime) -> None:
    if rule.regime is not expected:
        logger.warning(
            f"{kind} expects the {expected.value} bandwidth regime, got {rule.regime.value}"
        )


def run_rate(cfg: McConfig) -> McReport:
    """
    Empirical pointwise MSE per sample size and its log-log slope in n.

    The slope is fitted to the MSE averaged over evaluation points; it is
    undefined when any MSE is zero.
    """
    low = _check_effort("rate", cfg, 4, 100)
    cells, records, _ = _pointwise_cells(cfg)
    mse_by_n = [
        math.fsum(c.mse for c in cells if c.n == n) / len(cfg.eval_points)
        for n in cfg.sample_sizes
    ]
    slope = fit_log_slope(cfg.sample_sizes, mse_by_n)
    logger.info(f"rate: slope={slope.slope} over n={list(cfg.sample_sizes)}")
    return McReport(
        "rate",
        cfg,
        cells,
        slope,
        {"low_confidence": low, "mse_by_n": mse_by_n},
        records,
    )


def run_coverage(cfg: McConfig) -> McReport:
    """Fraction of replications whose level-``cfg.level`` interval contains f0(x0)."""
    _check_regime("coverage", cfg.rule, BandwidthRegime.NORMALITY)
    low = _check_effort("coverage", cfg, 1, 500)
    cells, records, _ = _pointwise_cells(cfg, inference=True)
    return McReport(
        "coverage",
        cfg,
        cells,
        None,
        {
            "low_confidence": low,
            "level": cfg.level,
            "coverage_by_n": [
                {"n": c.n, "x0": c.x0, "coverage": c.coverage} for c in cells
            ],
        },
        records,
    )


def run_normality(cfg: McConfig) -> McReport:
    """
    Kolmogorov-Smirnov test of standardized errors at the first evaluation point.

    Raises:
        SimulationError: If more than 5% of replications have zero variance
    """
    _check_regime("normality", cfg.rule, BandwidthRegime.NORMALITY)
    low = _check_effort("normality", cfg, 1, 1000)
    cells, records, by_n = _pointwise_cells(cfg, inference=True)
    x0 = cfg.eval_points[0]
    truth = float(cfg.dgp.regression(np.array([x0]))[0])

    per_n = []
    for n, results in by_n.items():
        errors = standardize(
            [res.ftilde[0] for res in results],
            [truth] * len(results),
            [res.var_hat[0] if res.var_hat is not None else np.nan for res in results],
        )
        if errors.excluded > MAX_EXCLUDED_FRACTION * errors.total:
            raise SimulationError(
                f"{errors.excluded} of {errors.total} replications at n={n} had zero or "
                f"missing variance (limit {MAX_EXCLUDED_FRACTION:.0%})"
            )
        per_n.append({"n": n, "x0": x0, "excluded": errors.excluded, **ks_normal(errors.values)})

    return McReport(
        "normality", cfg, cells, None, {"low_confidence": low, "ks": per_n}, records
    )


def _interior_grid(grid: Sequence[float]) -> np.ndarray:
    points = np.asarray(grid, dtype=float)
    lo, hi = INTERIOR
    if points.size == 0 or np.any((points < lo) | (points > hi)):
        raise SimulationError(f"Uniform-error grids must lie inside [{lo}, {hi}]")
    return points


def run_uniform(cfg: McConfig, grid: Sequence[float]) -> McReport:
    """
    Sup-norm error over an interior grid, per sample size.

    Reports mean sup^2 with its slope against n / ln n, and the population
    MSE over the grid weighted by the covariate density with its slope
    against n.
    """
    _check_regime("uniform", cfg.rule, BandwidthRegime.UNIFORM)
    low = _check_effort("uniform", cfg, 4, 100)
    points = _interior_grid(grid)
    truths = cfg.dgp.regression(points)
    density = cfg.dgp.covariates.pdf(points)
    middle = points.size // 2

    cells: List[SupNormCell] = []
    records: List[Dict[str, Any]] = []
    for n in cfg.sample_sizes:
        logger.info(f"[uniform] n={n}: {cfg.replications} replications on {points.size} points")
        results = _simulate_points(cfg, n, eval_points=points)
        sups, integrated, failed = [], [], 0
        for res in results:
            usable = np.isfinite(res.ftilde)
            failed += int((~usable).sum())
            if not usable.any():
                continue
            point_errors = np.abs(res.ftilde - truths)
            errors = point_errors[usable]
            sup = float(errors.max())
            weights = density[usable]
            mse = math.fsum(weights * errors**2) / math.fsum(weights)
            sups.append(sup)
            integrated.append(mse)
            records.append(
                {"n": n, "replication": res.replication, "sup_error": sup, "integrated_mse": mse,
                 "midpoint_error": float(point_errors[middle]), "failed_points": int((~usable).sum())}
            )
        if not sups:
            raise SimulationError(f"All replications failed at n={n}")
        cells.append(
            SupNormCell(
                n=n,
                bandwidth=results[0].bandwidth,
                replications=len(sups),
                failed_points=failed,
                mean_sup=math.fsum(sups) / len(sups),
                mean_sup2=math.fsum(s * s for s in sups) / len(sups),
                integrated_mse=math.fsum(integrated) / len(integrated),
            )
        )

    sizes = np.asarray(cfg.sample_sizes, dtype=float)
    slope = fit_log_slope(sizes / np.log(sizes), [c.mean_sup2 for c in cells])
    integrated_slope = fit_log_slope(sizes, [c.integrated_mse for c in cells])
    mean_sups = [c.mean_sup for c in cells]
    return McReport(
        "uniform",
        cfg,
        cells,
        slope,
        {
            "low_confidence": low,
            "grid_points": int(points.size),
            "integrated_slope": asdict(integrated_slope),
            "sup_decreasing": all(b < a for a, b in zip(mean_sups, mean_sups[1:])),
        },
        records,
    )


def run_shift(
    cfg: McConfig,
    train_dist: CovariateDist,
    test_dist: CovariateDist,
    nodes: int = 10_000,
    baseline: Optional[RegressorSpec] = None,
    slack: float = 1e-12,
) -> McReport:
    """
    Compare population MSE under training and shifted test covariate distributions.

    Each replication trains under ``train_dist`` and evaluates f_tilde on
    ``nodes`` midpoint-rule nodes over the interior window. Test and
    training MSEs weight the squared errors by the respective densities;
    the sup is taken over the same nodes, so MSE <= sup^2 holds up to
    ``slack``. A non-debiased wide-bandwidth first stage serves as baseline.
    """
    lo, hi = INTERIOR
    edges = np.linspace(lo, hi, nodes + 1)
    grid = (edges[:-1] + edges[1:]) / 2.0
    dgp = cfg.dgp.with_covariates(train_dist)
    shifted_cfg = replace(cfg, dgp=dgp)
    baseline = baseline or RegressorSpec(RegressorKind.NADARAYA_WATSON, bandwidth=0.25)
    truths = dgp.regression(grid)
    test_density = test_dist.pdf(grid)
    train_density = train_dist.pdf(grid)

    def weighted(errors2: np.ndarray, density: np.ndarray, usable: np.ndarray) -> float:
        w = density[usable]
        return math.fsum(w * errors2[usable]) / math.fsum(w)

    cells: List[ShiftCell] = []
    records: List[Dict[str, Any]] = []
    for n in cfg.sample_sizes:
        h = resolve_config(cfg.rule, n, cfg.degree).bandwidth
        logger.info(f"[shift] n={n}: {cfg.replications} replications on {nodes} nodes")

        def task(r: int) -> Optional[Dict[str, Any]]:
            rng, split_seed = replication_streams(cfg.seed, n, r)
            ds = draw_sample(dgp, n, rng)
            result = _estimate(shifted_cfg, ds, split_seed, cfg.reg, cfg.rule, grid, dgp)
            if result is None:
                return None
            usable = np.isfinite(result.ftilde)
            errors2 = (result.ftilde - truths) ** 2
            sup2 = float(errors2[usable].max())
            shifted = weighted(errors2, test_density, usable)
            plain = fit(baseline, ds.xs, ds.ys, dgp.regression).predict(grid)
            base2 = (plain - truths) ** 2
            every = np.ones(grid.size, dtype=bool)
            return {
                "n": n,
                "replication": r,
                "shifted_mse": shifted,
                "unshifted_mse": weighted(errors2, train_density, usable),
                "sup2": sup2,
                "bound_ok": bool(shifted <= sup2 + slack),
                "failed_points": int((~usable).sum()),
                "baseline_shifted_mse": weighted(base2, test_density, every),
                "baseline_unshifted_mse": weighted(base2, train_density, every),
            }

        outcomes = [o for o in _run_parallel(task, cfg.replications, cfg.workers) if o is not None]
        if not outcomes:
            raise SimulationError(f"All replications failed at n={n}")
        records.extend(outcomes)

        def mean(key: str) -> float:
            return math.fsum(o[key] for o in outcomes) / len(outcomes)

        shifted, unshifted = mean("shifted_mse"), mean("unshifted_mse")
        base_shifted, base_unshifted = mean("baseline_shifted_mse"), mean("baseline_unshifted_mse")
        cells.append(
            ShiftCell(
                n=n,
                bandwidth=h,
                replications=len(outcomes),
                shifted_mse=shifted,
                unshifted_mse=unshifted,
                ratio=shifted / unshifted if unshifted > 0 else math.nan,
                mean_sup2=mean("sup2"),
                bound_violations=sum(not o["bound_ok"] for o in outcomes),
                baseline_shifted_mse=base_shifted,
                baseline_unshifted_mse=base_unshifted,
                baseline_ratio=base_shifted / base_unshifted if base_unshifted > 0 else math.nan,
            )
        )

    return McReport(
        "shift",
        shifted_cfg,
        cells,
        None,
        {
            "train": train_dist.to_text(),
            "test": test_dist.to_text(),
            "nodes": nodes,
            "window": list(INTERIOR),
            "baseline": baseline.to_text(),
        },
        records,
    )


def decreasing_with_one_inversion(values: Sequence[float]) -> bool:
    """True when the sequence decreases except for at most one increase."""
    inversions = sum(b > a for a, b in zip(values, values[1:]))
    return inversions <= 1


def run_double_robustness(
    cfg: McConfig, offset: float = 1.0, fixed_bandwidth: float = 0.5
) -> McReport:
    """
    Consistency when only one stage is consistent.

    Scenario ``broken_first_stage``: f_hat = f0 + offset with the configured
    bandwidth rule. Scenario ``broken_second_stage``: f_hat = f0 with a
    fixed, non-vanishing bandwidth. ``cfg.reg`` is not used.
    """
    _check_effort("double_robustness", cfg, 2, 200)
    oracle = RegressorSpec(RegressorKind.ORACLE)
    scenarios = {
        "broken_first_stage": (
            RegressorSpec(
                RegressorKind.BIASED, base=oracle, offset=Offset(OffsetKind.CONSTANT, offset)
            ),
            cfg.rule,
        ),
        "broken_second_stage": (oracle, BandwidthRule.fixed(fixed_bandwidth)),
    }

    cells: List[CellSummary] = []
    records: List[Dict[str, Any]] = []
    summary: Dict[str, Any] = {}
    for name, (reg, rule) in scenarios.items():
        scenario_cells, scenario_records, _ = _pointwise_cells(cfg, scenario=name, reg=reg, rule=rule)
        cells.extend(scenario_cells)
        records.extend(scenario_records)
        first = cfg.eval_points[0]
        abs_bias = [abs(c.bias) for c in scenario_cells if c.x0 == first]
        summary[name] = {
            "regressor": reg.to_text(),
            "bandwidth": rule.to_text(),
            "abs_bias_by_n": abs_bias,
            "decreasing": decreasing_with_one_inversion(abs_bias),
        }
    return McReport("double_robustness", cfg, cells, None, {"scenarios": summary}, records)
