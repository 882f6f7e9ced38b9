"""Exception types shared across the package."""


class HybridDepthError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(HybridDepthError, ValueError):
    """Operand shapes are incompatible for the requested operation."""


class ConfigError(HybridDepthError, ValueError):
    """A configuration value violates a structural constraint."""


class ContractError(HybridDepthError, ValueError):
    """A caller violated an operation precondition."""


class DataError(HybridDepthError, ValueError):
    """Input data is invalid (e.g. non-positive ground-truth depth)."""


class DegenerateInputError(HybridDepthError, ValueError):
    """Input is numerically degenerate (e.g. near-zero variance)."""


class NumericError(HybridDepthError, RuntimeError):
    """A computation produced non-finite values."""
