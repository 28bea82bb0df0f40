"""Algorithm selection for constraint-model/solver portfolios from instance text."""

from .kernels import BACKEND
from .portfolio import (
    AlgorithmId,
    CompetitivenessLabels,
    DataError,
    PerformanceMatrix,
    competitiveness_labels,
    ingest_runtimes,
    par10,
    portfolio_stats,
    single_best,
    vbs,
)
from .text_encoder import EncoderConfig, FeatureVector, encode, import_embeddings, tokenize

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "AlgorithmId",
    "CompetitivenessLabels",
    "DataError",
    "EncoderConfig",
    "FeatureVector",
    "PerformanceMatrix",
    "competitiveness_labels",
    "encode",
    "import_embeddings",
    "ingest_runtimes",
    "par10",
    "portfolio_stats",
    "single_best",
    "tokenize",
    "vbs",
]
