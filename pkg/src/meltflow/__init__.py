"""meltflow: snowmelt-driven streamflow forecasting toolkit.

Four regression architectures (epsilon-SVR, LSTM, Transformer encoder,
TCN) with a shared autodiff core, a hydrological skill-metric suite and
a nested cross-validation hyperparameter-search harness, driven by a
CLI over daily CSV time series.
"""

__version__ = "0.1.0"

from .errors import (
    ConvergenceError,
    DataError,
    DimensionError,
    NumericsError,
    ParameterError,
    ResultLookupError,
    ToolkitError,
    UndefinedMetricError,
)

__all__ = [
    "ConvergenceError",
    "DataError",
    "DimensionError",
    "NumericsError",
    "ParameterError",
    "ResultLookupError",
    "ToolkitError",
    "UndefinedMetricError",
    "__version__",
]
