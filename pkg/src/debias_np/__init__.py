"""
debias-np - Debiased nonparametric regression

Corrects any first-stage regressor with a local polynomial fit of its
residuals on held-out data, with plug-in confidence intervals and a
seeded Monte Carlo harness.
"""

try:
    from debias_np._version import __version__
except ImportError:
    # Fallback for development without a git tag
    __version__ = "0.0.0.dev0"

__author__ = "Raibid Labs"
__license__ = "MIT"

from debias_np.cli import main
from debias_np.debias import estimate, estimate_crossfit
from debias_np.inference import confidence_interval, variance_estimate

__all__ = [
    "main",
    "estimate",
    "estimate_crossfit",
    "confidence_interval",
    "variance_estimate",
    "__version__",
]
