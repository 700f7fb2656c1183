"""Custom exceptions for uses-se with exit codes and helpful messages."""

from __future__ import annotations


class UsesError(Exception):
    """Base exception for uses-se errors.

    Attributes:
        exit_code: The exit code to return when this exception is raised.
        message: The error message to display.
    """

    exit_code: int = 1

    def __init__(self, message: str) -> None:
        self.message = message
        super().__init__(message)


class ConfigError(UsesError):
    """Configuration is missing or invalid.

    Exit code 2 indicates a configuration problem that the user needs to fix
    before the command can run.
    """

    exit_code = 2


class ValidationError(UsesError):
    """Input validation failed (bad arguments, shapes or preconditions)."""

    exit_code = 2


class DimensionError(ValidationError):
    """Tensor shapes do not agree, or an operation would produce an empty extent."""

    pass


class ContractError(ValidationError):
    """A documented precondition of an operation was violated."""

    pass


class UnsupportedRateError(ValidationError):
    """Sampling rate cannot be framed with the fixed-duration STFT."""

    pass


class FFTLengthError(ValidationError):
    """FFT length has a prime factor other than 2 or 3."""

    def __init__(self, message: str, factor: int) -> None:
        self.factor = factor
        super().__init__(message)


class ConditioningError(ValidationError):
    """Memory state was produced for a different conditioning mode."""

    pass


class StorageError(UsesError):
    """Reading or writing a file failed.

    Exit code 3 covers every filesystem and file-format failure.
    """

    exit_code = 3


class WavFormatError(StorageError):
    """WAV file is corrupt or uses an unsupported encoding."""

    pass


class CheckpointError(StorageError):
    """Checkpoint is corrupt or does not match the expected configuration."""

    pass


class ManifestError(StorageError):
    """Manifest is missing, unreadable or references invalid records."""

    pass


class NumericError(UsesError):
    """Non-finite values were detected.

    Exit code 4 signals a numeric failure rather than a user mistake.
    """

    exit_code = 4


class UndefinedReferenceError(NumericError):
    """Metric reference signal is all zeros."""

    pass


class DivergenceError(NumericError):
    """Training loss became non-finite."""

    pass
