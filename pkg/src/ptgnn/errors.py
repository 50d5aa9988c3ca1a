"""Exception types shared across the package."""


class PTGNNError(Exception):
    """Base class for package-specific errors."""


class DimensionError(PTGNNError, ValueError):
    """Shapes or axes incompatible with an operation's contract."""


class ContractError(PTGNNError, ValueError):
    """A call violated an operation precondition."""


class ConfigError(PTGNNError, ValueError):
    """Invalid or inconsistent run configuration."""


class DataError(PTGNNError, ValueError):
    """Malformed or insufficient input data."""


class SchemaError(DataError):
    """Recording does not match the expected stream schema."""


class NumericError(PTGNNError, ArithmeticError):
    """Non-finite values or numerical divergence."""


class CheckpointError(PTGNNError, RuntimeError):
    """Checkpoint missing, corrupt, or incompatible."""
