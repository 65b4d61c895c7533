"""Causal temporal convolutional networks for second-by-second VO2 estimation.

The package bundles a small numpy autodiff engine, the TCN model, a synthetic
cardiorespiratory simulator with PRBS and ramp protocols, training and grid
search, and the agreement/classification evaluation used to report results.
"""

__version__ = "0.1.0"

from .errors import ConfigError, DataError, NumericError, ShapeError, Vo2TcnError  # noqa: E402
from .model import TcnConfig, build_model, param_count, receptive_field  # noqa: E402

__all__ = [
    "ConfigError", "DataError", "NumericError", "ShapeError", "Vo2TcnError",
    "TcnConfig", "build_model", "param_count", "receptive_field", "__version__",
]
