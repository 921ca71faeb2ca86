"""Forensic flow-classification pipeline: ingest, preserve, tune, train, report.

The package ingests labeled network-flow CSVs (or synthesizes stand-in
data), records SHA-256 digests of every input, min-max normalizes features,
trains a class-weighted deep perceptron, and tunes its batch size, epoch
count and learning rate with sequential particle swarms maximizing
validation AUC. A FastAPI service exposes each stage over HTTP and the
``swarmflow`` command drives it.
"""

__version__ = "1.0.0"

from .errors import ConfigError, DataError, NumericError, SwarmflowError

__all__ = [
    "ConfigError",
    "DataError",
    "NumericError",
    "SwarmflowError",
    "__version__",
]
