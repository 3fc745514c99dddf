"""Exception taxonomy; the CLI maps these onto exit codes."""


class ClientError(Exception):
    """Base for all library errors."""


class ShapeError(ClientError):
    """Tensor/operand dimension mismatch."""


class ConfigError(ClientError):
    """Invalid or inconsistent configuration (CLI exit 1)."""


class DataError(ClientError):
    """Bad input data, split too short, checkpoint/data mismatch (CLI exit 2)."""


class CheckpointError(DataError):
    """Corrupt or incompatible checkpoint file."""


class NumericError(ClientError):
    """Non-finite loss/gradient, divergence (CLI exit 3)."""
