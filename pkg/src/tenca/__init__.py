"""Temporal neural cellular automata: training and inference on sparse frame sequences."""

__version__ = "0.1.0"

from .core import CellGrid, ModelParams, init_state, param_count, rollout, update_step
from .errors import (
    ChecksumError,
    ConfigError,
    ContractError,
    DataError,
    EpochAbortedError,
    NumericError,
    PayloadVersionError,
    TencaError,
    TruncatedPayloadError,
)

__all__ = [
    "CellGrid",
    "ModelParams",
    "init_state",
    "param_count",
    "rollout",
    "update_step",
    "ChecksumError",
    "ConfigError",
    "ContractError",
    "DataError",
    "EpochAbortedError",
    "NumericError",
    "PayloadVersionError",
    "TencaError",
    "TruncatedPayloadError",
    "__version__",
]
