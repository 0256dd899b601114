"""
Experiment configuration.

A configuration is a flat TOML table (see ``CONFIG_KEYS``) merged with
command-line overrides; overrides win. ``build_config`` validates the
merged values into an immutable ``ExperimentConfig`` whose ``to_dict``
echo is written into every report.
"""

import logging
import sys
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

from debias_np.debias import BandwidthRule
from debias_np.first_stage import RegressorError, RegressorSpec
from debias_np.local_poly import MAX_DEGREE
from debias_np.simulation import (
    CovariateDist,
    Dgp,
    McConfig,
    Noise,
    SimulationError,
    TargetKind,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)


class ConfigError(Exception):
    """Raised for missing or invalid configuration values; names the offending key."""

    pass


class Mode(str, Enum):
    """What a run does: estimate on data, or one of the Monte Carlo harnesses."""

    FIT = "fit"
    PREDICT = "predict"
    RATE = "rate"
    COVERAGE = "coverage"
    NORMALITY = "normality"
    UNIFORM = "uniform"
    SHIFT = "shift"
    DOUBLE_ROBUSTNESS = "double_robustness"

    @property
    def is_simulation(self) -> bool:
        return self not in (Mode.FIT, Mode.PREDICT)


SIMULATION_MODES = tuple(mode.value for mode in Mode if mode.is_simulation)

CONFIG_KEYS: Dict[str, str] = {
    "mode": "fit, predict, " + ", ".join(SIMULATION_MODES),
    "seed": "master seed for splits and simulated data (default 0)",
    "regressor": "first stage: zero, linear, knn:<k>, nw:<h>, oracle, biased:<constant|sine>=<v>:<base>",
    "bandwidth": "pointwise|uniform|normality:s=<s>,alpha=<a>[,L=<L>] or fixed:<h> (required)",
    "degree": "local polynomial degree (default floor(s); required with fixed:<h>)",
    "level": "confidence level in (0, 1) (default 0.95)",
    "eval_points": "evaluation points; original covariate units in fit/predict (default 0.5)",
    "sample_sizes": "increasing sample sizes for simulation modes",
    "replications": "replications per sample size for simulation modes",
    "grid_points": "interior grid size for the uniform mode (default 201)",
    "f0": "true function for simulations: sine, holder_kink, linear (default sine)",
    "noise": "gaussian:<sigma>, rademacher:<sigma> or uniform:<halfwidth> (default gaussian:0.5)",
    "covariates": "uniform01 or beta:<a>,<b> (default uniform01)",
    "train_covariates": "training covariates for the shift mode (default: covariates)",
    "test_covariates": "test covariates for the shift mode (required there)",
    "crossfit": "average both fold assignments (default false)",
    "workers": "threads running replications (default 1)",
    "data": "CSV file for fit/predict",
    "x_col": "covariate column (default x)",
    "y_col": "response column (default y)",
    "out": "report path (default: stdout)",
}

DEFAULT_GRID_POINTS = 201


def _sequence(key: str, value: Any, kind: type) -> Tuple[Any, ...]:
    """Accept a TOML array, a scalar or a comma-separated string."""
    if isinstance(value, str):
        items = [part.strip() for part in value.split(",") if part.strip()]
    elif isinstance(value, (list, tuple)):
        items = list(value)
    else:
        items = [value]
    try:
        parsed = tuple(kind(item) for item in items)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid value for '{key}': {value!r} ({e})") from e
    if kind is int and any(isinstance(item, float) and not item.is_integer() for item in items):
        raise ConfigError(f"'{key}' must contain integers, got {value!r}")
    if not parsed:
        raise ConfigError(f"'{key}' must not be empty")
    return parsed


def _scalar(key: str, value: Any, kind: type) -> Any:
    if kind is bool:
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        raise ConfigError(f"'{key}' must be true or false, got {value!r}")
    try:
        parsed = kind(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid value for '{key}': {value!r} ({e})") from e
    if kind is int and isinstance(value, float) and not value.is_integer():
        raise ConfigError(f"'{key}' must be an integer, got {value!r}")
    return parsed


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated configuration of one run."""

    mode: Mode
    bandwidth: BandwidthRule
    degree: int
    regressor: RegressorSpec = RegressorSpec.parse("zero")
    seed: int = 0
    level: float = 0.95
    eval_points: Tuple[float, ...] = (0.5,)
    crossfit: bool = False
    workers: int = 1
    out: Optional[Path] = None
    data: Optional[Path] = None
    x_col: str = "x"
    y_col: str = "y"
    dgp: Dgp = Dgp()
    sample_sizes: Tuple[int, ...] = ()
    replications: int = 0
    grid_points: int = DEFAULT_GRID_POINTS
    train_covariates: Optional[CovariateDist] = None
    test_covariates: Optional[CovariateDist] = None

    def to_dict(self) -> Dict[str, Any]:
        """Resolved configuration in the same flat key space as the config file."""
        echo: Dict[str, Any] = {
            "mode": self.mode.value,
            "seed": self.seed,
            "regressor": self.regressor.to_text(),
            "bandwidth": self.bandwidth.to_text(),
            "degree": self.degree,
            "level": self.level,
            "eval_points": list(self.eval_points),
            "crossfit": self.crossfit,
            "out": str(self.out) if self.out is not None else None,
        }
        if not self.mode.is_simulation:
            echo.update(data=str(self.data), x_col=self.x_col, y_col=self.y_col)
            return echo
        echo.update(
            f0=self.dgp.f0.value,
            noise=self.dgp.noise.to_text(),
            covariates=self.dgp.covariates.to_text(),
            sample_sizes=list(self.sample_sizes),
            replications=self.replications,
            workers=self.workers,
        )
        if self.mode is Mode.UNIFORM:
            echo["grid_points"] = self.grid_points
        if self.mode is Mode.SHIFT:
            assert self.train_covariates is not None and self.test_covariates is not None
            echo["train_covariates"] = self.train_covariates.to_text()
            echo["test_covariates"] = self.test_covariates.to_text()
        return echo

    def mc_config(self) -> McConfig:
        """Monte Carlo settings for simulation modes."""
        try:
            return McConfig(
                dgp=self.dgp,
                reg=self.regressor,
                rule=self.bandwidth,
                degree=self.degree,
                sample_sizes=self.sample_sizes,
                replications=self.replications,
                eval_points=self.eval_points,
                seed=self.seed,
                level=self.level,
                crossfit=self.crossfit,
                workers=self.workers,
            )
        except SimulationError as e:
            raise ConfigError(str(e)) from e


def load_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """
    Read a flat TOML experiment file.

    Raises:
        ConfigError: If the file is missing, malformed, or has unknown keys
    """
    path = Path(path)
    try:
        with path.open("rb") as handle:
            values = tomllib.load(handle)
    except FileNotFoundError as e:
        raise ConfigError(f"Config file not found: {path}") from e
    except (OSError, tomllib.TOMLDecodeError) as e:
        raise ConfigError(f"Failed to read config file {path}: {e}") from e

    unknown = sorted(set(values) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"Unknown config key '{unknown[0]}' in {path}")
    logger.info(f"Loaded config file {path} ({len(values)} keys)")
    return values


def merge_overrides(values: Mapping[str, Any], overrides: Mapping[str, Any]) -> Dict[str, Any]:
    """Overlay flag values on file values; None means the flag was not given."""
    merged = dict(values)
    for key, value in overrides.items():
        if key not in CONFIG_KEYS:
            raise ConfigError(f"Unknown config key '{key}'")
        if value is not None:
            merged[key] = value
    return merged


def _parse(key: str, text: Any, parser: Any) -> Any:
    try:
        return parser(str(text))
    except (ValueError, RegressorError, SimulationError) as e:
        raise ConfigError(f"Invalid value for '{key}': {text!r} ({e})") from e


def _resolve_degree(values: Mapping[str, Any], rule: BandwidthRule) -> int:
    if values.get("degree") is not None:
        degree = _scalar("degree", values["degree"], int)
        if not 0 <= degree <= MAX_DEGREE:
            raise ConfigError(f"'degree' must be in [0, {MAX_DEGREE}], got {degree}")
        return degree
    if rule.smoothness is None:
        raise ConfigError("Missing required config key 'degree' (needed with a fixed bandwidth)")
    return rule.smoothness.default_degree


def build_config(values: Mapping[str, Any]) -> ExperimentConfig:
    """
    Validate merged values into an ExperimentConfig.

    Raises:
        ConfigError: Naming the first missing or invalid key
    """
    unknown = sorted(set(values) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"Unknown config key '{unknown[0]}'")
    if values.get("mode") is None:
        raise ConfigError("Missing required config key 'mode'")
    try:
        mode = Mode(str(values["mode"]).strip().lower())
    except ValueError as e:
        raise ConfigError(f"Invalid value for 'mode': {values['mode']!r}") from e

    if values.get("bandwidth") is None:
        raise ConfigError("Missing required config key 'bandwidth'")
    rule = _parse("bandwidth", values["bandwidth"], BandwidthRule.parse)
    degree = _resolve_degree(values, rule)
    regressor = _parse("regressor", values.get("regressor", "zero"), RegressorSpec.parse)

    level = _scalar("level", values.get("level", 0.95), float)
    if not 0.0 < level < 1.0:
        raise ConfigError(f"'level' must be in (0, 1), got {level}")
    seed = _scalar("seed", values.get("seed", 0), int)
    if seed < 0:
        raise ConfigError(f"'seed' must be non-negative, got {seed}")
    workers = _scalar("workers", values.get("workers", 1), int)
    if workers < 1:
        raise ConfigError(f"'workers' must be at least 1, got {workers}")

    common: Dict[str, Any] = dict(
        mode=mode,
        bandwidth=rule,
        degree=degree,
        regressor=regressor,
        seed=seed,
        level=level,
        eval_points=_sequence("eval_points", values.get("eval_points", 0.5), float),
        crossfit=_scalar("crossfit", values.get("crossfit", False), bool),
        workers=workers,
        out=Path(values["out"]) if values.get("out") is not None else None,
    )

    if not mode.is_simulation:
        if regressor.needs_oracle:
            raise ConfigError(f"'regressor' {regressor.to_text()} needs the true function; not allowed in {mode.value}")
        if values.get("data") is None:
            raise ConfigError(f"Missing required config key 'data' for mode {mode.value}")
        return ExperimentConfig(
            data=Path(values["data"]),
            x_col=str(values.get("x_col", "x")),
            y_col=str(values.get("y_col", "y")),
            **common,
        )

    for key in ("sample_sizes", "replications"):
        if values.get(key) is None:
            raise ConfigError(f"Missing required config key '{key}' for mode {mode.value}")
    dgp = Dgp(
        f0=_parse("f0", values.get("f0", "sine"), lambda text: TargetKind(text.strip().lower())),
        noise=_parse("noise", values.get("noise", "gaussian:0.5"), Noise.parse),
        covariates=_parse("covariates", values.get("covariates", "uniform01"), CovariateDist.parse),
    )
    train = test = None
    if mode is Mode.SHIFT:
        if values.get("test_covariates") is None:
            raise ConfigError("Missing required config key 'test_covariates' for mode shift")
        train = _parse(
            "train_covariates",
            values.get("train_covariates", dgp.covariates.to_text()),
            CovariateDist.parse,
        )
        test = _parse("test_covariates", values["test_covariates"], CovariateDist.parse)

    grid_points = _scalar("grid_points", values.get("grid_points", DEFAULT_GRID_POINTS), int)
    if grid_points < 1:
        raise ConfigError(f"'grid_points' must be positive, got {grid_points}")

    config = ExperimentConfig(
        dgp=dgp,
        sample_sizes=_sequence("sample_sizes", values["sample_sizes"], int),
        replications=_scalar("replications", values["replications"], int),
        grid_points=grid_points,
        train_covariates=train,
        test_covariates=test,
        **common,
    )
    config.mc_config()
    return config
