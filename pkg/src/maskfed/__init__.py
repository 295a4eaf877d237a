"""Deterministic federated simulator for masked feature adapters trained
over frozen embedding banks."""

from .config import ExperimentConfig, OptimizerConfig, SyntheticSpec, TrainConfig
from .datastore import EmbeddingBank, SplitSpec
from .fl_client import ClientData, ClientState
from .fl_server import ExperimentResult, ServerState, run_experiment
from .masked_layers import FeatureAdapter, LocalClassifier, MaskedLinear
from .wire_codec import WirePacket, pack, unpack

__version__ = "0.1.0"

__all__ = [
    "ClientData",
    "ClientState",
    "EmbeddingBank",
    "ExperimentConfig",
    "ExperimentResult",
    "FeatureAdapter",
    "LocalClassifier",
    "MaskedLinear",
    "OptimizerConfig",
    "ServerState",
    "SplitSpec",
    "SyntheticSpec",
    "TrainConfig",
    "WirePacket",
    "pack",
    "run_experiment",
    "unpack",
    "__version__",
]
