"""Sparsity-based binary heartbeat classification with learned dictionaries."""

from sparsebeat.pursuit import (
    Algorithm,
    AtomicDecomposition,
    Dictionary,
    PursuitConfig,
    approximate_to_prdn,
    mp,
    omp,
    oomp,
    prdn,
    reconstruct,
)

__version__ = "0.1.0"

__all__ = [
    "Algorithm",
    "AtomicDecomposition",
    "Dictionary",
    "PursuitConfig",
    "approximate_to_prdn",
    "mp",
    "omp",
    "oomp",
    "prdn",
    "reconstruct",
]
