"""Learned compressive sensing for EEG, trained jointly with seizure
prediction and signal reconstruction."""

from .compression import CompressionMatrix, compressed_length, parse_ratio
from .errors import (
    ConfigError,
    ContractError,
    DimensionError,
    FormatError,
    NumericalError,
    SeizureCSError,
    StateError,
    UnsupportedFileError,
)
from .prediction import PredictionConfig, PredictionNet
from .reconstruction import ReconstructionConfig, ReconstructionNet
from .tensor import Tensor, backward
from .training import ModelBundle, TrainConfig, cross_validate, train_fold

__version__ = "0.1.0"

__all__ = [
    "CompressionMatrix",
    "ConfigError",
    "ContractError",
    "DimensionError",
    "FormatError",
    "ModelBundle",
    "NumericalError",
    "PredictionConfig",
    "PredictionNet",
    "ReconstructionConfig",
    "ReconstructionNet",
    "SeizureCSError",
    "StateError",
    "Tensor",
    "TrainConfig",
    "UnsupportedFileError",
    "backward",
    "compressed_length",
    "cross_validate",
    "parse_ratio",
    "train_fold",
]
