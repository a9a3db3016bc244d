"""Two-stage baseline: transformer regressor over tabular treatment features."""

from .config import (
    TabularConfig,
    tabular_param_count,
    tabular_param_shapes,
)
from .network import init_tabular_params, tabular_forward

__all__ = [
    "TabularConfig",
    "tabular_param_count",
    "tabular_param_shapes",
    "init_tabular_params",
    "tabular_forward",
]
