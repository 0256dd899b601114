"""
First-stage regressors.

Any regression method can serve as the first stage as long as its error
f0 - f_hat is smooth. This module defines the regressor contract and a set
of simple, auditable implementations:
- zero, linear, k-nearest-neighbours and boxcar Nadaraya-Watson fits
- an oracle passthrough of the true regression function (simulation only)
- a wrapper that adds a smooth, deliberately inconsistent offset
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Dict, Optional, Union

import numpy as np

logger = logging.getLogger(__name__)

MAX_BIASED_DEPTH = 2

# Rows of the (queries x training points) distance array per chunk
_KNN_CHUNK = 512

TargetFunction = Callable[[np.ndarray], np.ndarray]


class RegressorError(Exception):
    """Raised for invalid regressor specs, insufficient data or bad queries."""

    pass


class RegressorKind(str, Enum):
    """Available first-stage regressors."""

    ZERO = "zero"
    LINEAR = "linear"
    KNN = "knn"
    NADARAYA_WATSON = "nw"
    ORACLE = "oracle"
    BIASED = "biased"


class OffsetKind(str, Enum):
    """Offsets added by the biased wrapper."""

    CONSTANT = "constant"
    SMOOTH_SINE = "sine"


@dataclass(frozen=True)
class Offset:
    """delta(x) = c (constant) or amplitude * sin(2 pi x) (smooth_sine)."""

    kind: OffsetKind
    value: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", OffsetKind(self.kind))
        object.__setattr__(self, "value", float(self.value))
        if not np.isfinite(self.value):
            raise RegressorError(f"Offset value must be finite, got {self.value}")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind is OffsetKind.CONSTANT:
            return np.full_like(x, self.value)
        return self.value * np.sin(2.0 * np.pi * x)


@dataclass(frozen=True)
class RegressorSpec:
    """
    Identity of a first-stage regressor.

    Only the fields relevant to ``kind`` are set: ``k`` for knn,
    ``bandwidth`` for nw, ``base`` and ``offset`` for biased.
    """

    kind: RegressorKind
    k: Optional[int] = None
    bandwidth: Optional[float] = None
    base: Optional["RegressorSpec"] = None
    offset: Optional[Offset] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", RegressorKind(self.kind))
        if self.kind is RegressorKind.KNN:
            if self.k is None or int(self.k) != self.k or self.k < 1:
                raise RegressorError(f"knn needs an integer k >= 1, got {self.k!r}")
            object.__setattr__(self, "k", int(self.k))
        if self.kind is RegressorKind.NADARAYA_WATSON:
            if self.bandwidth is None or not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
                raise RegressorError(f"nw needs a positive bandwidth, got {self.bandwidth!r}")
        if self.kind is RegressorKind.BIASED:
            if self.base is None or self.offset is None:
                raise RegressorError("biased needs a base spec and an offset")
            if self.depth > MAX_BIASED_DEPTH:
                raise RegressorError(
                    f"biased wrappers nest at most {MAX_BIASED_DEPTH} deep, got {self.depth}"
                )

    @property
    def depth(self) -> int:
        """Number of biased wrappers around the innermost regressor."""
        if self.kind is RegressorKind.BIASED and self.base is not None:
            return 1 + self.base.depth
        return 0

    @property
    def needs_oracle(self) -> bool:
        if self.kind is RegressorKind.ORACLE:
            return True
        return self.base is not None and self.base.needs_oracle

    @classmethod
    def parse(cls, text: str) -> "RegressorSpec":
        """
        Parse the text form of a regressor spec.

        Grammar: ``zero``, ``linear``, ``knn:<k>``, ``nw:<h>``
        (or ``nadaraya_watson:<h>``), ``oracle``,
        ``biased:constant=<c>:<base>``, ``biased:sine=<a>:<base>``.

        Raises:
            RegressorError: On malformed text
        """
        text = text.strip()
        head, _, rest = text.partition(":")
        head = head.strip().lower()
        try:
            if head in ("zero", "linear", "oracle") and not rest:
                return cls(RegressorKind(head))
            if head == "knn":
                return cls(RegressorKind.KNN, k=int(rest))
            if head in ("nw", "nadaraya_watson"):
                return cls(RegressorKind.NADARAYA_WATSON, bandwidth=float(rest))
            if head == "biased":
                offset_text, _, base_text = rest.partition(":")
                kind, _, value = offset_text.partition("=")
                offset = Offset(OffsetKind(kind.strip().lower()), float(value))
                return cls(RegressorKind.BIASED, base=cls.parse(base_text), offset=offset)
        except ValueError as e:
            raise RegressorError(f"Invalid regressor spec {text!r}: {e}") from e
        raise RegressorError(
            f"Invalid regressor spec {text!r}; expected zero, linear, knn:<k>, nw:<h>, "
            f"oracle or biased:<constant|sine>=<value>:<base>"
        )

    def to_text(self) -> str:
        """Inverse of ``parse``."""
        if self.kind is RegressorKind.KNN:
            return f"knn:{self.k}"
        if self.kind is RegressorKind.NADARAYA_WATSON:
            return f"nw:{self.bandwidth!r}"
        if self.kind is RegressorKind.BIASED:
            assert self.base is not None and self.offset is not None
            return f"biased:{self.offset.kind.value}={self.offset.value!r}:{self.base.to_text()}"
        return self.kind.value


class FittedRegressor(ABC):
    """
    A first-stage fit, immutable once constructed.

    Implementations keep their own copy of the fold-1 data only, so
    nothing in a fitted regressor can observe fold 2.
    """

    def __init__(self, spec: RegressorSpec) -> None:
        self.spec = spec

    @abstractmethod
    def _predict(self, x: np.ndarray) -> np.ndarray:
        """Predict at validated points in [0, 1]."""

    def predict(self, x: Union[float, np.ndarray]) -> Any:
        """
        Evaluate the fitted function.

        Args:
            x: Scalar or array of points in [0, 1]

        Returns:
            Float for scalar input, array otherwise

        Raises:
            RegressorError: If any point lies outside [0, 1]
        """
        points = np.asarray(x, dtype=float)
        if np.any(~np.isfinite(points)) or np.any((points < 0.0) | (points > 1.0)):
            raise RegressorError("Prediction points must lie in [0, 1]")
        values = self._predict(np.atleast_1d(points)).reshape(points.shape)
        if points.ndim == 0:
            return float(values)
        return values


def _training_copy(values: np.ndarray) -> np.ndarray:
    copy = np.array(values, dtype=float)
    copy.setflags(write=False)
    return copy


class ZeroRegressor(FittedRegressor):
    """f_hat = 0."""

    def _predict(self, x: np.ndarray) -> np.ndarray:
        return np.zeros_like(x)


class LinearRegressor(FittedRegressor):
    """Ordinary least squares line through the fold-1 data."""

    def __init__(self, spec: RegressorSpec, xs: np.ndarray, ys: np.ndarray) -> None:
        super().__init__(spec)
        if np.unique(xs).size < 2:
            raise RegressorError("linear needs at least 2 distinct covariates")
        design = np.column_stack([np.ones_like(xs), xs])
        coefficients, *_ = np.linalg.lstsq(design, ys, rcond=None)
        self.intercept = float(coefficients[0])
        self.slope = float(coefficients[1])

    def _predict(self, x: np.ndarray) -> np.ndarray:
        return self.intercept + self.slope * x


class KnnRegressor(FittedRegressor):
    """Mean of the k nearest fold-1 targets; distance ties go to the lower index."""

    def __init__(self, spec: RegressorSpec, xs: np.ndarray, ys: np.ndarray) -> None:
        super().__init__(spec)
        assert spec.k is not None
        if xs.size < max(2, spec.k):
            raise RegressorError(f"knn:{spec.k} needs at least {max(2, spec.k)} points, got {xs.size}")
        self.k = spec.k
        self.xs = _training_copy(xs)
        self.ys = _training_copy(ys)

    def _predict(self, x: np.ndarray) -> np.ndarray:
        out = np.empty_like(x)
        for start in range(0, x.size, _KNN_CHUNK):
            block = x[start:start + _KNN_CHUNK]
            distances = np.abs(block[:, None] - self.xs[None, :])
            nearest = np.argsort(distances, axis=1, kind="stable")[:, : self.k]
            out[start:start + _KNN_CHUNK] = self.ys[nearest].mean(axis=1)
        return out


class NadarayaWatsonRegressor(FittedRegressor):
    """Boxcar-kernel weighted mean; falls back to the fold mean on an empty window."""

    def __init__(self, spec: RegressorSpec, xs: np.ndarray, ys: np.ndarray) -> None:
        super().__init__(spec)
        assert spec.bandwidth is not None
        self.bandwidth = float(spec.bandwidth)
        self.xs = _training_copy(xs)
        self.ys = _training_copy(ys)
        self.fallback = float(np.mean(ys))

    def _predict(self, x: np.ndarray) -> np.ndarray:
        out = np.empty_like(x)
        for start in range(0, x.size, _KNN_CHUNK):
            block = x[start:start + _KNN_CHUNK]
            window = np.abs(block[:, None] - self.xs[None, :]) <= self.bandwidth
            counts = window.sum(axis=1)
            sums = window @ self.ys
            out[start:start + _KNN_CHUNK] = np.where(
                counts > 0, sums / np.maximum(counts, 1), self.fallback
            )
        return out


class OracleRegressor(FittedRegressor):
    """Passthrough of the true regression function; only meaningful in simulations."""

    def __init__(self, spec: RegressorSpec, f0: TargetFunction) -> None:
        super().__init__(spec)
        self.f0 = f0

    def _predict(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.f0(x), dtype=float)


class BiasedRegressor(FittedRegressor):
    """Base predictions plus a smooth offset delta(x)."""

    def __init__(self, spec: RegressorSpec, base: FittedRegressor, offset: Offset) -> None:
        super().__init__(spec)
        self.base = base
        self.offset = offset

    def _predict(self, x: np.ndarray) -> np.ndarray:
        return self.base._predict(x) + self.offset(x)


def fit(
    spec: RegressorSpec,
    xs: np.ndarray,
    ys: np.ndarray,
    f0: Optional[TargetFunction] = None,
) -> FittedRegressor:
    """
    Fit a first-stage regressor on fold-1 data only.

    Args:
        spec: Regressor to fit
        xs: Fold-1 covariates in [0, 1]
        ys: Fold-1 targets
        f0: True regression function, required by oracle specs

    Returns:
        Immutable fitted regressor

    Raises:
        RegressorError: On insufficient data for the requested kind or
            an oracle spec without ``f0``
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape:
        raise RegressorError(f"Fold covariates ({xs.size}) and targets ({ys.size}) differ in length")

    if spec.kind is RegressorKind.ZERO:
        return ZeroRegressor(spec)
    if spec.kind is RegressorKind.LINEAR:
        if xs.size < 2:
            raise RegressorError(f"linear needs at least 2 points, got {xs.size}")
        return LinearRegressor(spec, xs, ys)
    if spec.kind is RegressorKind.KNN:
        return KnnRegressor(spec, xs, ys)
    if spec.kind is RegressorKind.NADARAYA_WATSON:
        if xs.size < 1:
            raise RegressorError("nw needs at least 1 point")
        return NadarayaWatsonRegressor(spec, xs, ys)
    if spec.kind is RegressorKind.ORACLE:
        if f0 is None:
            raise RegressorError("oracle regressor needs the true regression function")
        return OracleRegressor(spec, f0)

    assert spec.base is not None and spec.offset is not None
    return make_biased(fit(spec.base, xs, ys, f0), spec.offset)


def predict(model: FittedRegressor, x: Union[float, np.ndarray]) -> Any:
    """Evaluate a fitted regressor; see ``FittedRegressor.predict``."""
    return model.predict(x)


def make_biased(base: FittedRegressor, offset: Offset) -> FittedRegressor:
    """Wrap ``base`` so its predictions gain the offset delta(x)."""
    spec = RegressorSpec(RegressorKind.BIASED, base=base.spec, offset=offset)
    logger.debug(f"Biased first stage: {spec.to_text()}")
    return BiasedRegressor(spec, base, offset)


def describe(model: FittedRegressor) -> Dict[str, Any]:
    """Summary of a fitted regressor for reports."""
    summary: Dict[str, Any] = {"regressor": model.spec.to_text()}
    if isinstance(model, LinearRegressor):
        summary.update(intercept=model.intercept, slope=model.slope)
    return summary
