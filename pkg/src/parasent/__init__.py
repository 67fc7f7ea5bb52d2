"""Paraphrastic sentence embeddings with averaging, LSTM and gated recurrent averaging encoders."""

__version__ = "0.1.0"

from .encoders import EncoderConfig, SentenceEncoder
from .estimators import ParaphraseEmbedder, SimilarityRegressor
from .exceptions import (
    ConfigError,
    DegenerateVectorError,
    DimensionError,
    FormatError,
    NumericalError,
    ParasentError,
)
from .model import ParaphraseModel
from .numeric import RandomSource
from .training import TrainConfig
from .vocab import EmbeddingTable, load_embeddings

__all__ = [
    "ConfigError",
    "DegenerateVectorError",
    "DimensionError",
    "EmbeddingTable",
    "EncoderConfig",
    "FormatError",
    "NumericalError",
    "ParaphraseEmbedder",
    "ParaphraseModel",
    "ParasentError",
    "RandomSource",
    "SentenceEncoder",
    "SimilarityRegressor",
    "TrainConfig",
    "load_embeddings",
]
