"""Simulator for federated conditional-GAN training with partial (discriminator-only) sharing."""

from .errors import (
    ConfigurationError,
    DataError,
    DecodeError,
    DesyncError,
    ProtocolError,
    PSFedGANError,
    ShapeError,
    UndefinedMetricError,
)
from .config import FederationConfig, DataSpec, GanSpec, RoundConfig, ChannelSpec
from .data import LabeledDataset, SplitSpec
from .protocol import Federation, run_federation, replay

__version__ = "0.1.0"

__all__ = [
    "ChannelSpec", "ConfigurationError", "DataError", "DataSpec", "DecodeError", "DesyncError",
    "Federation", "FederationConfig", "GanSpec", "LabeledDataset", "ProtocolError", "PSFedGANError",
    "RoundConfig", "ShapeError", "SplitSpec", "UndefinedMetricError", "replay", "run_federation",
]
