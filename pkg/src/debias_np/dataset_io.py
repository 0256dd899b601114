"""
Observation storage, validation, sample splitting and file I/O.

This module owns the immutable ``Dataset`` and ``Split`` value objects:
- CSV ingestion with covariate rescaling onto [0, 1]
- Deterministic random splitting into two folds
- JSON report emission and read-back
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

MIN_OBSERVATIONS = 2
MIN_SPLIT_OBSERVATIONS = 4


class DatasetError(Exception):
    """Raised when observations cannot be loaded, validated or split."""

    pass


def _frozen(values: Any) -> np.ndarray:
    array = np.array(values, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Rescale:
    """Affine map x -> (x - minimum) / span taking raw covariates onto [0, 1]."""

    minimum: float = 0.0
    span: float = 1.0

    def __post_init__(self) -> None:
        if not np.isfinite(self.span) or self.span <= 0.0:
            raise DatasetError(f"Rescale span must be positive and finite, got {self.span}")

    @property
    def is_identity(self) -> bool:
        return self.minimum == 0.0 and self.span == 1.0

    def apply(self, x: Any) -> np.ndarray:
        """Map raw covariate values onto the unit interval."""
        return (np.asarray(x, dtype=float) - self.minimum) / self.span

    def invert(self, u: Any) -> np.ndarray:
        """Map unit-interval values back to raw covariate units."""
        return np.asarray(u, dtype=float) * self.span + self.minimum

    def to_dict(self) -> Dict[str, float]:
        return {"min": self.minimum, "range": self.span}


@dataclass(frozen=True)
class Dataset:
    """
    Paired covariate/target observations with covariates on [0, 1].

    Arrays are copied and made read-only on construction, so a Dataset
    can be shared freely between threads.
    """

    xs: np.ndarray
    ys: np.ndarray
    rescale: Rescale = Rescale()

    def __post_init__(self) -> None:
        xs = _frozen(self.xs).ravel()
        ys = _frozen(self.ys).ravel()
        if xs.shape != ys.shape:
            raise DatasetError(
                f"Covariates and targets differ in length: {xs.size} vs {ys.size}"
            )
        if xs.size < MIN_OBSERVATIONS:
            raise DatasetError(
                f"Need at least {MIN_OBSERVATIONS} observations, got {xs.size}"
            )
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
            raise DatasetError("Observations must be finite (no NaN or infinity)")
        if xs.min() < 0.0 or xs.max() > 1.0:
            raise DatasetError(
                f"Covariates must lie in [0, 1] after rescaling, got "
                f"[{xs.min()}, {xs.max()}]"
            )
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    @classmethod
    def from_raw(cls, xs: Any, ys: Any) -> "Dataset":
        """
        Build a Dataset from raw covariates, rescaling onto [0, 1] if needed.

        Covariates already inside [0, 1] are kept as given (identity rescale).

        Raises:
            DatasetError: If the covariate column is constant (zero range,
                so no rescale is defined) or fails Dataset validation
        """
        raw = np.asarray(xs, dtype=float).ravel()
        if raw.size < MIN_OBSERVATIONS or not np.all(np.isfinite(raw)):
            return cls(raw, ys)
        span = float(raw.max() - raw.min())
        if span == 0.0:
            raise DatasetError("Covariate column is constant; rescale to [0, 1] is undefined")
        if raw.min() < 0.0 or raw.max() > 1.0:
            rescale = Rescale(minimum=float(raw.min()), span=span)
            logger.info(f"Rescaled covariates onto [0, 1] with min={rescale.minimum}, range={span}")
            # Endpoints may land a rounding error outside [0, 1]
            return cls(np.clip(rescale.apply(raw), 0.0, 1.0), ys, rescale)
        return cls(raw, ys)

    @property
    def n(self) -> int:
        return int(self.xs.size)

    def subset(self, indices: np.ndarray) -> "Dataset":
        """Return the observations at ``indices`` as a new Dataset."""
        return Dataset(self.xs[indices], self.ys[indices], self.rescale)


@dataclass(frozen=True)
class Split:
    """Partition of observation indices into fold 1 (first stage) and fold 2."""

    fold1: np.ndarray
    fold2: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "fold1", np.sort(np.asarray(self.fold1, dtype=np.intp)))
        object.__setattr__(self, "fold2", np.sort(np.asarray(self.fold2, dtype=np.intp)))
        self.fold1.setflags(write=False)
        self.fold2.setflags(write=False)
        if np.intersect1d(self.fold1, self.fold2).size:
            raise DatasetError("Folds overlap")

    @property
    def m(self) -> int:
        """Size of fold 2, the second-stage sample."""
        return int(self.fold2.size)

    @property
    def n(self) -> int:
        return int(self.fold1.size + self.fold2.size)

    def swapped(self) -> "Split":
        """Return the split with the roles of the two folds exchanged."""
        return Split(self.fold2, self.fold1, self.seed)


def split_even(ds: Dataset, seed: int) -> Split:
    """
    Randomly split a dataset into two folds of (nearly) equal size.

    The permutation comes from ``numpy.random.default_rng(seed)`` (PCG64
    seeded through SeedSequence), so the split is reproducible from
    ``(n, seed)`` on every platform. The first ``n // 2`` permuted indices
    form fold 1; for odd n, fold 2 holds the extra observation.

    Args:
        ds: Dataset to split
        seed: Non-negative integer seed

    Returns:
        Split with |fold1| = n // 2 and |fold2| = n - n // 2

    Raises:
        DatasetError: If n < 4 (each fold needs at least two points)
    """
    if ds.n < MIN_SPLIT_OBSERVATIONS:
        raise DatasetError(
            f"Need at least {MIN_SPLIT_OBSERVATIONS} observations to split, got {ds.n}"
        )
    permutation = np.random.default_rng(seed).permutation(ds.n)
    half = ds.n // 2
    return Split(permutation[:half], permutation[half:], seed)


def load_csv(
    path: Union[str, Path], x_col: str, y_col: str
) -> Dataset:
    """
    Load covariate/target columns from a comma-separated file with a header row.

    Args:
        path: CSV file path (UTF-8, comma delimiter, decimal point)
        x_col: Name of the covariate column
        y_col: Name of the target column

    Returns:
        Dataset with covariates rescaled onto [0, 1] when necessary

    Raises:
        DatasetError: On a missing file or column, an unparseable row
            (reported with its 1-based data row number), fewer than two
            rows or a constant out-of-range covariate column
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"Data file not found: {path}")

    try:
        frame = pd.read_csv(path, dtype=str, encoding="utf-8", skipinitialspace=True)
    except (pd.errors.ParserError, UnicodeDecodeError, pd.errors.EmptyDataError) as e:
        raise DatasetError(f"Failed to read {path}: {e}") from e

    missing = [col for col in (x_col, y_col) if col not in frame.columns]
    if missing:
        raise DatasetError(
            f"Missing column(s) {missing} in {path}; available: {list(frame.columns)}"
        )

    columns = {}
    for col in (x_col, y_col):
        parsed = pd.to_numeric(frame[col].str.strip(), errors="coerce")
        bad = parsed.isna().to_numpy().nonzero()[0]
        if bad.size:
            row = int(bad[0]) + 1
            raise DatasetError(
                f"Unparseable value {frame[col].iloc[bad[0]]!r} in column '{col}' at row {row}"
            )
        columns[col] = parsed.to_numpy(dtype=float)

    logger.info(f"Loaded {len(frame)} observations from {path}")
    return Dataset.from_raw(columns[x_col], columns[y_col])


def _json_default(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def _finite_or_none(value: Any) -> Any:
    """Replace non-finite floats with None so the report stays strict JSON."""
    if isinstance(value, float) or isinstance(value, np.floating):
        return float(value) if np.isfinite(value) else None
    if isinstance(value, Mapping):
        return {str(k): _finite_or_none(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite_or_none(v) for v in value]
    if isinstance(value, np.ndarray):
        return _finite_or_none(value.tolist())
    return value


def dumps_report(report: Mapping[str, Any]) -> str:
    """Serialize a report with sorted keys and shortest round-trip float repr."""
    document = {"meta": {}, "records": []}
    document.update(_finite_or_none(report))
    return json.dumps(document, indent=2, sort_keys=True, allow_nan=False, default=_json_default)


def write_report(report: Mapping[str, Any], path: Union[str, Path]) -> None:
    """
    Write a structured report as JSON with top-level ``meta`` and ``records``.

    Floats are written with Python's shortest round-trip representation,
    so reading the file back reproduces every stored value exactly.
    Non-finite floats are written as ``null``.

    Args:
        report: Mapping with at least ``meta`` and ``records`` (missing
            keys default to empty)
        path: Destination file path

    Raises:
        DatasetError: If the file cannot be written
    """
    path = Path(path)
    try:
        path.write_text(dumps_report(report) + "\n", encoding="utf-8")
    except OSError as e:
        raise DatasetError(f"Failed to write report {path}: {e}") from e
    logger.info(f"Report written to {path}")


def read_report(path: Union[str, Path]) -> Dict[str, Any]:
    """Read a report previously written by ``write_report``."""
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise DatasetError(f"Failed to read report {path}: {e}") from e
