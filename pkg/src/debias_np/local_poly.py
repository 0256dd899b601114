"""
Local polynomial machinery for the second-stage residual fit.

Provides the scaled polynomial basis, the kernel, the local design matrix,
closed-form equivalent-kernel weights and the weighted residual average,
plus an independent weighted least squares path used as a test oracle.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

logger = logging.getLogger(__name__)

MAX_DEGREE = 10
SINGULAR_RTOL = 1e-10

# Upper bound on elements of the (points x observations x basis) work array
_CHUNK_ELEMENTS = 4_000_000


class Kernel(str, Enum):
    """Second-stage kernels. Each is supported on |u| <= 1."""

    BOXCAR = "boxcar"


class SingularDesignError(Exception):
    """
    Raised when the local design matrix at an evaluation point is singular.

    Carries enough context for callers to widen the bandwidth or lower
    the polynomial degree.
    """

    def __init__(self, x0: float, bandwidth: float, in_window_count: int, reason: str) -> None:
        self.x0 = float(x0)
        self.bandwidth = float(bandwidth)
        self.in_window_count = int(in_window_count)
        self.reason = reason
        super().__init__(
            f"Singular design at x0={self.x0:.6g} (h={self.bandwidth:.6g}, "
            f"{self.in_window_count} points in window): {reason}"
        )


@dataclass(frozen=True)
class LocalPolyConfig:
    """Degree, bandwidth and kernel of the second-stage smoother."""

    degree: int
    bandwidth: float
    kernel: Kernel = Kernel.BOXCAR

    def __post_init__(self) -> None:
        if isinstance(self.degree, bool) or int(self.degree) != self.degree:
            raise ValueError(f"Degree must be an integer, got {self.degree!r}")
        if not 0 <= self.degree <= MAX_DEGREE:
            raise ValueError(f"Degree must be in [0, {MAX_DEGREE}], got {self.degree}")
        if not (np.isfinite(self.bandwidth) and 0.0 < self.bandwidth <= 1.0):
            raise ValueError(f"Bandwidth must be in (0, 1], got {self.bandwidth}")
        object.__setattr__(self, "degree", int(self.degree))
        object.__setattr__(self, "bandwidth", float(self.bandwidth))
        object.__setattr__(self, "kernel", Kernel(self.kernel))

    @property
    def n_coefficients(self) -> int:
        return self.degree + 1


@dataclass(frozen=True)
class DesignMatrix:
    """Local design matrix B(x0) = (1/(m h)) sum rho(u_i) rho(u_i)^T K(u_i)."""

    entries: np.ndarray
    x0: float
    in_window_count: int

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.entries)

    def singular_reason(self) -> Optional[str]:
        """Return why the matrix counts as singular, or None if it is usable."""
        return _singular_reason(self.eigenvalues, self.in_window_count, self.entries.shape[0])


@dataclass(frozen=True)
class WeightVector:
    """
    Equivalent-kernel weights of the fold-2 observations at one point.

    Unnormalized weights are w_h(X_i, x0); normalized weights are
    W_i = w_h(X_i, x0) / m and sum to one.
    """

    weights: np.ndarray
    x0: float
    m: int
    normalized: bool = False

    def normalize(self) -> "WeightVector":
        if self.normalized:
            return self
        return WeightVector(self.weights / self.m, self.x0, self.m, normalized=True)


@dataclass(frozen=True)
class WeightBatch:
    """Weights for many evaluation points; rows of failed points are zero."""

    x0s: np.ndarray
    weights: np.ndarray
    in_window: np.ndarray
    m: int
    failures: Dict[int, SingularDesignError] = field(default_factory=dict)

    @property
    def ok(self) -> np.ndarray:
        mask = np.ones(self.x0s.size, dtype=bool)
        mask[list(self.failures)] = False
        return mask

    def row(self, index: int) -> WeightVector:
        """Return the weights at the index-th point, raising its failure if any."""
        if index in self.failures:
            raise self.failures[index]
        return WeightVector(self.weights[index], float(self.x0s[index]), self.m)

    def apply(self, residuals: np.ndarray) -> np.ndarray:
        """Weighted residual averages (1/m) sum r_i w_h(X_i, x0) per point, NaN where failed."""
        values = self.weights @ np.asarray(residuals, dtype=float) / self.m
        values[~self.ok] = np.nan
        return values


def poly_basis(u: Union[float, np.ndarray], degree: int) -> np.ndarray:
    """
    Evaluate rho(u) = (1, u, u^2/2!, ..., u^degree/degree!).

    Args:
        u: Scalar or array of scaled offsets
        degree: Polynomial degree

    Returns:
        Array of shape ``np.shape(u) + (degree + 1,)``
    """
    if not 0 <= degree <= MAX_DEGREE:
        raise ValueError(f"Degree must be in [0, {MAX_DEGREE}], got {degree}")
    u = np.asarray(u, dtype=float)
    terms = np.empty(u.shape + (degree + 1,))
    terms[..., 0] = 1.0
    for k in range(1, degree + 1):
        terms[..., k] = terms[..., k - 1] * u / k
    return terms


def kernel_eval(u: Union[float, np.ndarray], kernel: Kernel = Kernel.BOXCAR) -> Any:
    """Evaluate the kernel on a pre-scaled argument; the boxcar is 1[|u| <= 1]."""
    kernel = Kernel(kernel)
    values = (np.abs(np.asarray(u, dtype=float)) <= 1.0).astype(float)
    if values.ndim == 0:
        return float(values)
    return values


def _singular_reason(eigenvalues: np.ndarray, in_window_count: int, size: int) -> Optional[str]:
    if in_window_count < size:
        return f"{in_window_count} points in window, need at least {size}"
    largest = eigenvalues[-1]
    if largest <= 0.0 or eigenvalues[0] < SINGULAR_RTOL * largest:
        return (
            f"smallest eigenvalue {eigenvalues[0]:.3g} below {SINGULAR_RTOL:g} x "
            f"largest {largest:.3g} (fewer than {size} distinct covariates?)"
        )
    return None


def _local_terms(
    xs: np.ndarray, x0s: np.ndarray, cfg: LocalPolyConfig
) -> Tuple[np.ndarray, np.ndarray]:
    """Basis rows and kernel values for every (point, observation) pair."""
    offsets = xs[None, :] - x0s[:, None]
    kernel = kernel_eval(offsets / cfg.bandwidth, cfg.kernel)
    # Support test on raw distances keeps w = 0 exactly when |x - x0| > h
    kernel = kernel * (np.abs(offsets) <= cfg.bandwidth)
    return poly_basis(offsets / cfg.bandwidth, cfg.degree), kernel


def design_matrix(xs_fold2: Sequence[float], x0: float, cfg: LocalPolyConfig) -> DesignMatrix:
    """
    Evaluate the local design matrix at ``x0`` over the fold-2 covariates.

    Singularity is not checked here; see ``lp_weights``.
    """
    xs = np.asarray(xs_fold2, dtype=float)
    if xs.size < 1:
        raise ValueError("Design matrix needs at least one observation")
    basis, kernel = _local_terms(xs, np.array([x0], dtype=float), cfg)
    entries = np.einsum("qip,qir,qi->qpr", basis, basis, kernel)[0]
    entries /= xs.size * cfg.bandwidth
    return DesignMatrix(entries, float(x0), int(np.count_nonzero(kernel)))


def lp_weight_matrix(
    xs_fold2: Sequence[float], x0s: Sequence[float], cfg: LocalPolyConfig
) -> WeightBatch:
    """
    Compute equivalent-kernel weights for many evaluation points at once.

    For each x0 the weights are
    w_h(X_i, x0) = (1/h) rho(0)^T B(x0)^{-1} rho((X_i - x0)/h) K((X_i - x0)/h),
    obtained by solving the stacked symmetric systems B(x0) v = rho(0);
    no inverse is formed. Points are processed in chunks to bound memory.

    Args:
        xs_fold2: Fold-2 covariates (m values)
        x0s: Evaluation points
        cfg: Second-stage configuration

    Returns:
        WeightBatch whose failures map point index -> SingularDesignError
    """
    xs = np.asarray(xs_fold2, dtype=float)
    points = np.atleast_1d(np.asarray(x0s, dtype=float))
    m = xs.size
    if m < 1:
        raise ValueError("Need at least one fold-2 observation")

    size = cfg.n_coefficients
    weights = np.zeros((points.size, m))
    counts = np.zeros(points.size, dtype=int)
    failures: Dict[int, SingularDesignError] = {}
    rhs = poly_basis(0.0, cfg.degree)
    chunk = max(1, _CHUNK_ELEMENTS // (m * size))

    for start in range(0, points.size, chunk):
        stop = min(start + chunk, points.size)
        basis, kernel = _local_terms(xs, points[start:stop], cfg)
        entries = np.einsum("qip,qir,qi->qpr", basis, basis, kernel) / (m * cfg.bandwidth)
        in_window = np.count_nonzero(kernel, axis=1)
        counts[start:stop] = in_window
        eigenvalues = np.linalg.eigvalsh(entries)

        usable = np.ones(stop - start, dtype=bool)
        for offset in range(stop - start):
            reason = _singular_reason(eigenvalues[offset], int(in_window[offset]), size)
            if reason is not None:
                index = start + offset
                usable[offset] = False
                failures[index] = SingularDesignError(
                    points[index], cfg.bandwidth, int(in_window[offset]), reason
                )
                logger.debug(f"Point {index} failed: {failures[index]}")

        if not usable.any():
            continue
        stacked_rhs = np.broadcast_to(rhs, (int(usable.sum()), size))[..., None]
        solution = np.linalg.solve(entries[usable], stacked_rhs)[..., 0]
        rows = np.einsum("qip,qp->qi", basis[usable], solution) * kernel[usable]
        weights[np.arange(start, stop)[usable]] = rows / cfg.bandwidth

    return WeightBatch(points, weights, counts, m, failures)


def lp_weights(xs_fold2: Sequence[float], x0: float, cfg: LocalPolyConfig) -> WeightVector:
    """
    Compute equivalent-kernel weights at a single evaluation point.

    Raises:
        SingularDesignError: If fewer than degree + 1 covariates fall in the
            window or the smallest eigenvalue of B(x0) is below
            SINGULAR_RTOL times the largest
    """
    return lp_weight_matrix(xs_fold2, [x0], cfg).row(0)


def residual_fit(
    residuals: Sequence[float], w: WeightVector, m: Optional[int] = None
) -> float:
    """
    Weighted residual average b(x0) = (1/m) sum_i r_i w_h(X_i, x0).

    Args:
        residuals: Fold-2 residuals aligned with ``w``
        w: Weights at x0 (normalized or not)
        m: Fold-2 size; defaults to ``w.m``

    Raises:
        ValueError: On a length mismatch
    """
    r = np.asarray(residuals, dtype=float)
    if r.shape != w.weights.shape:
        raise ValueError(
            f"Residuals ({r.size}) and weights ({w.weights.size}) differ in length"
        )
    if w.normalized:
        return float(np.dot(r, w.weights))
    return float(np.dot(r, w.weights)) / (w.m if m is None else m)


def wls_oracle(
    xs: Sequence[float], rs: Sequence[float], x0: float, cfg: LocalPolyConfig
) -> np.ndarray:
    """
    Solve the kernel-weighted least squares problem at ``x0`` directly.

    Forms the normal equations over in-window points only and solves them
    by Cholesky factorization. This path shares nothing with
    ``lp_weights`` beyond the basis, so it serves as a reference.

    Returns:
        Coefficients (beta_0, ..., beta_degree); beta_0 estimates b(x0)

    Raises:
        SingularDesignError: If the weighted design is rank deficient
    """
    x = np.asarray(xs, dtype=float)
    r = np.asarray(rs, dtype=float)
    size = cfg.n_coefficients
    inside = np.abs(x - x0) <= cfg.bandwidth
    count = int(inside.sum())
    distinct = np.unique(x[inside]).size
    if distinct < size:
        raise SingularDesignError(
            x0, cfg.bandwidth, count, f"{distinct} distinct covariates in window, need {size}"
        )

    u = (x[inside] - x0) / cfg.bandwidth
    design = poly_basis(u, cfg.degree)
    kernel = kernel_eval(u, cfg.kernel)
    normal = design.T @ (design * kernel[:, None])
    eigenvalues = np.linalg.eigvalsh(normal)
    if eigenvalues[0] < SINGULAR_RTOL * eigenvalues[-1]:
        raise SingularDesignError(x0, cfg.bandwidth, count, "ill-conditioned normal equations")
    try:
        factor = linalg.cho_factor(normal)
    except linalg.LinAlgError as e:
        raise SingularDesignError(x0, cfg.bandwidth, count, str(e)) from e
    return linalg.cho_solve(factor, design.T @ (kernel * r[inside]))
