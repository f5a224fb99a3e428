"""Exception types shared across the package."""


class TencaError(Exception):
    """Base class for all package errors."""


class ConfigError(TencaError):
    """Invalid configuration value, shape request, or CLI argument."""


class DataError(TencaError):
    """Input data violates a documented precondition."""


class ContractError(TencaError):
    """API misuse between modules (mismatched tape/params, list lengths, ...)."""


class NumericError(TencaError):
    """A non-finite value was produced during computation."""

    def __init__(self, message, step=None):
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)
        self.step = step


class EpochAbortedError(TencaError):
    """Too many cases failed within one training epoch."""


# Dataset / checkpoint file errors; kept distinct so callers can tell a stale
# format from a corrupted file.

class PayloadVersionError(DataError):
    """File magic or format version does not match this build."""


class TruncatedPayloadError(DataError):
    """File is shorter than its header promises."""


class ChecksumError(DataError):
    """Stored CRC does not match the file contents."""
