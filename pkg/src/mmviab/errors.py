"""Shared exception types, mapped onto CLI exit codes in mmviab.cli."""


class ShapeError(ValueError):
    """Tensor operands have incompatible shapes."""


class ConfigError(ValueError):
    """A configuration value violates its contract."""


class DataError(ValueError):
    """A dataset file or record is missing, malformed, or inconsistent."""


class ContractError(ValueError):
    """An input was supplied for a disabled modality or missing for an enabled one."""


class NumericsError(ArithmeticError):
    """Non-finite values where finite ones are required (divergence, bad gradients)."""


class UndefinedMetricError(ValueError):
    """A metric is undefined for the given inputs (e.g. single-class AUC)."""
