"""Error types shared across the library, mapped to CLI exit codes."""


class ConfigError(ValueError):
    """Invalid configuration or hyperparameters (exit code 2)."""

    exit_code = 2


class DataError(ValueError):
    """Malformed dataset file or schema violation (exit code 3)."""

    exit_code = 3


class NumericError(RuntimeError):
    """Non-finite loss or other numeric failure during training (exit code 4)."""

    exit_code = 4


class VerificationError(RuntimeError):
    """A verification command found errors above tolerance (exit code 5)."""

    exit_code = 5
