"""
MCP tool implementations for debias-np.

- estimation: debiased fits and predictions on CSV data, bandwidth rules
- experiments: Monte Carlo harness runs and saved reports
"""

from debias_np.tools.estimation import EstimationTools
from debias_np.tools.experiments import ExperimentTools

__all__ = ["EstimationTools", "ExperimentTools"]
