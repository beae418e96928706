"""Unpaired nighttime-thermal to daytime-color image translation.

Trainable translation model with a top-down guided attention module,
attention/edge-alignment losses, an edge-consistency metric, and a CLI.
"""

__version__ = "0.1.0"

from .errors import ConfigError, DataError, CheckpointError, DivergenceError

__all__ = [
    "ConfigError",
    "DataError",
    "CheckpointError",
    "DivergenceError",
    "__version__",
]
